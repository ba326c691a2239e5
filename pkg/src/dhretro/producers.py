"""Producer efficiency curves, specific investment cost fits and the solar thermal unit.

Fit coefficients come from the bundled ``data/parameters.json``; every function
accepts an optional ``params`` mapping with the same layout to override them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InactiveUnit, InputError, NegativeCapacity, NonPositiveLift, OutOfValidityRange
from .network import load_parameters
from .physics import hx_conductance

_DEFAULT = load_parameters()


def _p(params):
    return _DEFAULT if params is None else params


def _clamp(x, lo, hi, what, clamp, warn):
    x = np.asarray(x, dtype=float)
    outside = (x < lo) | (x > hi)
    if warn and np.any(outside):
        warnings.warn(
            f"{what} outside the fitted range [{lo}, {hi}]", OutOfValidityRange, stacklevel=3
        )
    if clamp:
        return np.clip(x, lo, hi), ~outside
    return x, np.ones_like(x, dtype=bool)


# --------------------------------------------------------------------------
# efficiencies


def eta_gb(T_return, *, clamp=False, warn=True, params=None, derivative=False):
    """Gas boiler efficiency as a cubic in the return temperature (degC).

    Outside the fitted 20-70 degC window an :class:`OutOfValidityRange`
    warning is emitted. By default the cubic is evaluated as is; ``clamp=True``
    (used inside the cost model) evaluates it at the nearest window edge.

    With ``derivative=True`` returns ``(eta, d eta / d T_return)``.
    """
    c = _p(params)["efficiency"]["GB"]
    lo, hi = c["valid_return_degC"]
    T, inside = _clamp(T_return, lo, hi, "boiler return temperature", clamp, warn)
    eta = ((c["a"] * T + c["b"]) * T + c["c"]) * T + c["d"]
    if not derivative:
        return eta[()] if eta.ndim == 0 else eta
    deta = (3.0 * c["a"] * T + 2.0 * c["b"]) * T + c["c"]
    deta = np.where(inside, deta, 0.0)
    return eta, deta


def eta_hp(T_supply, T_air, *, clamp=False, warn=True, params=None, derivative=False):
    """Heat pump COP as a quadratic in the lift ``T_supply - T_air`` (K).

    Raises :class:`NonPositiveLift` when the lift is not positive. Lifts
    outside 20-75 K warn; ``clamp=True`` evaluates at the window edge.

    With ``derivative=True`` returns ``(cop, d cop / d lift)``.
    """
    lift = np.asarray(T_supply, dtype=float) - np.asarray(T_air, dtype=float)
    if np.any(~(lift > 0)):
        raise NonPositiveLift(f"heat pump lift must be > 0 K, got {np.min(lift)}")
    c = _p(params)["efficiency"]["HP"]
    lo, hi = c["valid_lift_K"]
    L, inside = _clamp(lift, lo, hi, "heat pump lift", clamp, warn)
    cop = (c["a"] * L + c["b"]) * L + c["c"]
    if not derivative:
        return cop[()] if cop.ndim == 0 else cop
    dcop = np.where(inside, 2.0 * c["a"] * L + c["b"], 0.0)
    return cop, dcop


def eta_eb(*, params=None) -> float:
    """Electric boiler efficiency (constant)."""
    return float(_p(params)["efficiency"]["EB"]["a"])


# --------------------------------------------------------------------------
# investment cost


def specific_capex(tech: str, installed, *, params=None, derivative=False):
    """Specific investment cost: EUR/W for GB, HP and EB, EUR/m2 for ST.

    Parameters
    ----------
    tech : {"GB", "HP", "EB", "ST"}
    installed : float or array
        Installed capacity in W (collector area in m2 for ST).
    derivative : bool
        Also return the derivative with respect to ``installed``.
    """
    x = np.asarray(installed, dtype=float)
    if np.any(x < 0):
        raise NegativeCapacity(f"{tech}: installed capacity must be >= 0")
    fits = _p(params)["capex"]
    if tech not in fits:
        raise InputError(f"unknown technology {tech!r}")
    fit = fits[tech]
    if tech == "ST":
        a, b, c, d = fit["cubic"]
        val = ((a * x + b) * x + c) * x + d
        dval = (3 * a * x + 2 * b) * x + c
    else:
        val = np.zeros_like(x)
        dval = np.zeros_like(x)
        for amp, rate in zip(fit["amplitudes"], fit["rates"]):
            e = amp * np.exp(rate * x)
            val = val + e
            dval = dval + rate * e
    if derivative:
        return val, dval
    return val[()] if val.ndim == 0 else val


# --------------------------------------------------------------------------
# solar thermal


def collector_efficiency(t_star, g_irr, *, params=None):
    """Steady-state collector efficiency ``eta0 - a1 T* - a2 G T*^2``.

    ``t_star`` is the reduced temperature ``(T_m - T_air) / G`` in m2 K/W.
    """
    s = _p(params)["solar"]
    t_star = np.asarray(t_star, dtype=float)
    return s["eta0"] - s["a1"] * t_star - s["a2"] * np.asarray(g_irr, dtype=float) * t_star**2


def _fit6(coef, g, t):
    a, b, c, d, e, f = coef
    return a + b * g + c * t + d * g * g + e * g * t + f * t * t


@dataclass(frozen=True)
class SolarUnitState:
    """Per-period operating point of a solar collector field.

    Temperatures in degC, ``q_sec`` in m3/s and ``q_solar`` in W.
    ``c_sec`` is the collector loop heat capacity rate (W/K).
    """

    g_irr: float
    t_air: float
    active: bool
    eta: float
    t_hot: float
    t_cold: float
    t_m: float
    q_sec: float
    q_solar: float
    c_sec: float
    area: float

    def scaled(self, factor: float) -> "SolarUnitState":
        """The same operating point for a field ``factor`` times larger."""
        return SolarUnitState(
            self.g_irr, self.t_air, self.active, self.eta, self.t_hot, self.t_cold, self.t_m,
            self.q_sec * factor, self.q_solar * factor, self.c_sec * factor, self.area * factor,
        )


def solar_preprocess(
    G_irr: float,
    T_air: float,
    phi: float = 1.0,
    A_max: float = 1.0,
    *,
    params=None,
    min_irradiance: float = 50.0,
    min_efficiency: float = 0.05,
) -> SolarUnitState:
    """Collector temperatures, efficiency, available heat and loop flow for one period.

    The unit is inactive (all flows and heat exactly zero) below
    ``min_irradiance`` W/m2 or when the efficiency drops below ``min_efficiency``.
    Temperatures and efficiency are still reported for an inactive unit when
    the irradiance is positive.
    """
    if G_irr < 0:
        raise InputError("irradiance must be >= 0")
    s = _p(params)["solar"]
    area = float(phi) * float(A_max)
    t_hot = float(_fit6(s["hot_fit"], G_irr, T_air))
    t_cold = float(_fit6(s["cold_fit"], G_irr, T_air))
    t_m = 0.5 * (t_hot + t_cold)
    if G_irr > 0:
        eta = float(collector_efficiency((t_m - T_air) / G_irr, G_irr, params=params))
    else:
        eta = 0.0
    active = G_irr >= min_irradiance and eta >= min_efficiency and t_hot > t_cold
    if not active:
        return SolarUnitState(G_irr, T_air, False, eta, t_hot, t_cold, t_m, 0.0, 0.0, 0.0, area)
    q_solar = G_irr * eta * area
    c_sec = q_solar / (t_hot - t_cold)
    q_sec = c_sec / (s["rho_sec"] * s["cp_sec"])
    return SolarUnitState(G_irr, T_air, True, eta, t_hot, t_cold, t_m, q_sec, q_solar, c_sec, area)


def solar_hx_heat(
    state: SolarUnitState,
    T_return_network: float,
    UA: float,
    q_network: float | None = None,
    *,
    rho: float = 983.0,
    cp: float = 4185.0,
) -> float:
    """Heat (W) passed from the collector loop to the network through a counter-flow exchanger.

    The collector side enters at ``state.t_hot`` with capacity rate
    ``state.c_sec``; the network side enters at ``T_return_network`` with flow
    ``q_network`` (m3/s). Without ``q_network`` both sides carry the same
    capacity rate.
    """
    if not state.active:
        raise InactiveUnit("solar unit is inactive in this period")
    if not UA > 0:
        raise InputError("UA must be > 0")
    c_net = state.c_sec if q_network is None else rho * cp * abs(q_network)
    if np.isinf(UA):
        H = min(c_net, state.c_sec)
    else:
        H = float(hx_conductance(UA, c_net, state.c_sec)[0])
    return H * (state.t_hot - T_return_network)
