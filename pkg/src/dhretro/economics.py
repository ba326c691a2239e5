"""Discounted lifetime cost of a producer retrofit and derived reporting metrics.

Prices are in EUR/kWh and emission factors in kg/kWh; powers in W times hours
per year give Wh, hence the ``/ 1000`` conversions below.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NegativePumpLift, ZeroHeat
from .network import CARRIER, DesignVector, NetworkGraph, Scenario
from .producers import eta_eb, eta_gb, eta_hp, specific_capex

WH_PER_KWH = 1000.0


def discount_factor(e: float, A: int) -> float:
    """Present value of one unit paid at the end of each of ``A`` years at rate ``e``."""
    if A < 0:
        raise InputError("horizon must be >= 0")
    if A == 0:
        return 0.0
    k = np.arange(1, int(A) + 1)
    return float(np.sum((1.0 + e) ** -k))


def producer_capex(tech: str, phi, capacity, *, params=None, derivative=False):
    """Investment cost ``x * c(x)`` of ``x = phi * capacity`` (W, or m2 for ST).

    With ``derivative=True`` also returns the derivative with respect to ``phi``.
    """
    phi = np.asarray(phi, dtype=float)
    x = phi * capacity
    c, dc = specific_capex(tech, x, params=params, derivative=True)
    val = x * c
    if derivative:
        return val, capacity * (c + x * dc)
    return val[()] if np.ndim(val) == 0 else val


def _thermal_cost(q, dtheta, eta, price, K, rho, cp):
    return rho * cp * np.asarray(q, float) * np.asarray(dtheta, float) / np.asarray(eta, float) * K * price / WH_PER_KWH


def producer_opex(tech, q, dtheta, eta, price, K, *, rho=983.0, cp=4185.0, dp_sec=1e5, eta_pump=0.81):
    """Annual energy purchase cost (EUR/yr).

    For GB, HP and EB ``q`` is the network flow (m3/s), ``dtheta`` the
    temperature rise (K) and ``eta`` the efficiency or COP. For ST ``q`` is the
    collector loop flow and the cost is the loop pumping electricity
    ``K / eta_pump * dp_sec * q``; ``dtheta`` and ``eta`` are ignored.
    """
    if tech == "ST":
        return K / eta_pump * dp_sec * np.asarray(q, float) * price / WH_PER_KWH
    return _thermal_cost(q, dtheta, eta, price, K, rho, cp)


def co2_cost(tech, q, dtheta, eta, EF, C_CO2, K, *, rho=983.0, cp=4185.0, dp_sec=1e5, eta_pump=0.81):
    """Annual cost of the priced emissions (EUR/yr); arguments as :func:`producer_opex`."""
    return producer_opex(tech, q, dtheta, eta, EF * C_CO2, K, rho=rho, cp=cp, dp_sec=dp_sec, eta_pump=eta_pump)


def pumping_cost(q, p_in, p_out, C_elec, K, eta_pump=0.81, *, allow_negative=False):
    """Annual electricity cost (EUR/yr) of a producer's circulation pump."""
    lift = np.asarray(p_out, float) - np.asarray(p_in, float)
    if not allow_negative and np.any(lift < 0):
        raise NegativePumpLift("producer pumps only raise pressure")
    return K / eta_pump * np.asarray(q, float) * lift * C_elec / WH_PER_KWH


# --------------------------------------------------------------------------
# assembly on the network model


@dataclass
class PeriodCost:
    """Per-producer annual operating terms of one period (EUR/yr, unweighted)."""

    opex: np.ndarray
    co2: np.ndarray
    pump_opex: np.ndarray
    pump_co2: np.ndarray
    heat: np.ndarray  # W delivered to the network per producer
    fuel: np.ndarray  # W of purchased energy per producer (incl. collector pumps)
    pump_power: np.ndarray  # W of electricity for circulation pumps
    grad_x: np.ndarray | None = None  # d(sum of terms)/d state
    grad_d: np.ndarray | None = None  # d(sum of terms)/d [phi|alpha|gamma|tau]

    @property
    def total(self) -> float:
        return float(np.sum(self.opex + self.co2 + self.pump_opex + self.pump_co2))


def period_cost(graph: NetworkGraph, ds, x, ctx, scenario: Scenario, K: float, jac: bool = False) -> PeriodCost:
    """Operating terms of every producer in one period, with gradients if ``jac``."""
    E, N = graph.n_edges, graph.n_nodes
    n_p, n_c, n_tc = graph.n_producers, graph.n_consumers, graph.n_temp_controlled
    q = x[:E]
    p = x[E:E + N]
    th = x[E + N:E + 2 * N]
    te = x[E + 2 * N:]
    rc = ctx.rho * ctx.cp
    params = scenario.parameters
    ep = scenario.eta_pump
    el = scenario.prices["electricity"]
    el_co2 = scenario.emission_factors["electricity"] * scenario.co2_price
    zeros = lambda: np.zeros(n_p)  # noqa: E731
    opex, co2, popex, pco2, heat, fuel, ppow = (zeros() for _ in range(7))
    gx = np.zeros(2 * E + 2 * N) if jac else None
    gd = np.zeros(2 * n_p + n_c + n_tc) if jac else None
    pump_coef = K / ep * (el + el_co2) / WH_PER_KWH
    solar_pos = {int(k): j for j, k in enumerate(graph.solar)}

    for k, e in enumerate(graph.producers):
        tech = graph.producer_tech[k]
        i, j = graph.src[e], graph.dst[e]
        price = scenario.price(tech)
        ef = scenario.emission_factor(tech) * scenario.co2_price
        lift = p[j] - p[i]
        popex[k] = K / ep * q[e] * lift * el / WH_PER_KWH
        pco2[k] = K / ep * q[e] * lift * el_co2 / WH_PER_KWH
        ppow[k] = q[e] * lift / ep
        if jac:
            gx[e] += pump_coef * lift
            gx[E + j] += pump_coef * q[e]
            gx[E + i] -= pump_coef * q[e]
        dth = te[e] - th[i]
        heat[k] = rc * q[e] * dth
        if tech == "ST":
            unit = ctx.solar[solar_pos[k]]
            qsec = unit.q_sec * ds.phi[k]
            opex[k] = producer_opex("ST", qsec, 0, 1, price, K, dp_sec=scenario.dp_sec, eta_pump=ep)
            co2[k] = producer_opex("ST", qsec, 0, 1, ef, K, dp_sec=scenario.dp_sec, eta_pump=ep)
            fuel[k] = scenario.dp_sec * qsec / ep
            if jac:
                gd[k] += K / ep * scenario.dp_sec * unit.q_sec * (price + ef) / WH_PER_KWH
            continue
        if tech == "GB":
            eta, deta_dthi = eta_gb(th[i] + ctx.t_air, clamp=True, warn=False, params=params, derivative=True)
            deta_dte = 0.0
        elif tech == "HP":
            eta, deta_dte = eta_hp(te[e] + ctx.t_air, ctx.t_air, clamp=True, warn=False, params=params, derivative=True)
            deta_dthi = 0.0
        else:
            eta, deta_dthi, deta_dte = eta_eb(params=params), 0.0, 0.0
        eta, deta_dthi, deta_dte = float(eta), float(deta_dthi), float(deta_dte)
        a = rc * K / WH_PER_KWH
        opex[k] = a * price * q[e] * dth / eta
        co2[k] = a * ef * q[e] * dth / eta
        fuel[k] = heat[k] / eta
        if jac:
            c = a * (price + ef)
            gx[e] += c * dth / eta
            gx[E + 2 * N + e] += c * q[e] * (1.0 / eta - dth * deta_dte / eta**2)
            gx[E + N + i] += c * q[e] * (-1.0 / eta - dth * deta_dthi / eta**2)
    return PeriodCost(opex, co2, popex, pco2, heat, fuel, ppow, gx, gd)


def capex_vector(graph: NetworkGraph, phi, params=None, derivative=False):
    """Investment cost per producer (EUR) and optionally d/d phi."""
    vals, ders = np.zeros(graph.n_producers), np.zeros(graph.n_producers)
    for k, tech in enumerate(graph.producer_tech):
        edge = graph.producer_edge(k)
        cap = edge.a_max if tech == "ST" else edge.p_max
        vals[k], ders[k] = producer_capex(tech, phi[k], cap, params=params, derivative=True)
    return (vals, ders) if derivative else vals


def installed_capacity(graph: NetworkGraph, phi) -> np.ndarray:
    """Installed size per producer: W for GB/HP/EB, m2 of collector for ST."""
    cap = [graph.producer_edge(k).a_max if t == "ST" else graph.producer_edge(k).p_max
           for k, t in enumerate(graph.producer_tech)]
    return np.asarray(phi, float) * np.array(cap, float)


@dataclass
class CostBreakdown:
    """Cost components of a design.

    Per-producer arrays follow graph producer order; per-period arrays have
    shape ``(periods, producers)`` and hold unweighted annual values.
    """

    producer_ids: tuple
    capex: np.ndarray
    opex: np.ndarray
    co2_cost: np.ndarray
    pump_opex: np.ndarray
    pump_co2: np.ndarray
    heat: np.ndarray
    fuel: np.ndarray
    pump_power: np.ndarray
    weights: np.ndarray
    f_op: float
    hours: float
    total: float
    delivered_heat: float  # kWh/yr to consumers
    emissions: float  # kg/yr
    lcoh: float = float("nan")
    specific_emissions: float = float("nan")
    extra: dict = field(default_factory=dict)

    def recompute_total(self) -> float:
        w = self.weights[:, None]
        ops = self.opex + self.co2_cost + self.pump_opex + self.pump_co2
        return float(np.sum(self.capex) + self.f_op * np.sum(w * ops))

    def heat_shares(self) -> np.ndarray:
        """Annual (weighted) heat share per producer; zeros when no heat is produced."""
        annual = np.sum(self.weights[:, None] * np.maximum(self.heat, 0.0), axis=0)
        tot = annual.sum()
        return annual / tot if tot > 0 else np.zeros_like(annual)

    def period_heat_shares(self) -> np.ndarray:
        h = np.maximum(self.heat, 0.0)
        tot = h.sum(axis=1, keepdims=True)
        return np.divide(h, tot, out=np.zeros_like(h), where=tot > 0)


def total_objective(graph: NetworkGraph, design: DesignVector, states, periods, scenario: Scenario, contexts=None):
    """Discounted lifetime cost ``J`` and its breakdown.

    ``J = sum(capex) + f_OP * sum_t w_t * sum_producers (opex + co2 + pump_opex + pump_co2)``.
    """
    from .forward import prepare_periods

    if contexts is None:
        contexts = prepare_periods(graph, periods, scenario)
    K = scenario.hours_per_year if scenario.hours_per_year is not None else periods.hours
    f_op = discount_factor(scenario.discount_rate, scenario.horizon)
    weights = np.array([c.env.weight for c in contexts])
    terms = []
    for t, ctx in enumerate(contexts):
        x = states[t].to_flat() if hasattr(states[t], "to_flat") else np.asarray(states[t])
        terms.append(period_cost(graph, design.period(t), x, ctx, scenario, K))
    stack = lambda name: np.array([getattr(c, name) for c in terms])  # noqa: E731
    capex = capex_vector(graph, design.phi, scenario.parameters)
    bd = CostBreakdown(
        graph.producer_ids, capex, stack("opex"), stack("co2"), stack("pump_opex"), stack("pump_co2"),
        stack("heat"), stack("fuel"), stack("pump_power"), weights, f_op, K, 0.0,
        delivered_heat=float(K * np.sum(weights * np.array([c.demand.sum() for c in contexts])) / WH_PER_KWH),
        emissions=0.0,
    )
    bd.total = bd.recompute_total()
    bd.extra["installed"] = installed_capacity(graph, design.phi)
    ef = np.array([scenario.emission_factors[CARRIER[t]] for t in graph.producer_tech])
    fuel_kwh = K * np.sum(weights[:, None] * bd.fuel, axis=0) / WH_PER_KWH
    pump_kwh = K * np.sum(weights[:, None] * bd.pump_power, axis=0) / WH_PER_KWH
    bd.emissions = float(np.sum(fuel_kwh * ef) + np.sum(pump_kwh) * scenario.emission_factors["electricity"])
    if bd.delivered_heat > 0:
        bd.lcoh = lcoh(bd, bd.delivered_heat)
        bd.specific_emissions = bd.emissions / bd.delivered_heat
    return bd.total, bd


def lcoh(breakdown: CostBreakdown, annual_heat: float) -> float:
    """Levelised cost of heat: ``J`` over the heat delivered across the horizon, discounted alike."""
    if not annual_heat > 0:
        raise ZeroHeat("annual delivered heat must be > 0")
    return breakdown.total / (breakdown.f_op * annual_heat)
