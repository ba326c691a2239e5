"""Smooth closures shared by the network model: pipe friction and counter-flow exchangers."""

from __future__ import annotations

import numpy as np

RE_LAMINAR = 2000.0
RE_TURBULENT = 3000.0
_LN10 = np.log(10.0)


def pipe_pressure_drop(q, length, diameter, roughness, rho, mu):
    """Darcy-Weisbach pressure drop along the flow direction and its derivative.

    Laminar friction ``64/Re`` below Re = 2000, Haaland above Re = 3000, joined
    by a smoothstep in Re so that the drop is C1 in the flow.

    Parameters
    ----------
    q : array_like
        Volumetric flow (m3/s), signed.
    length, diameter, roughness : array_like
        Pipe geometry in m.
    rho, mu : float
        Density (kg/m3) and dynamic viscosity (Pa s).

    Returns
    -------
    dp : ndarray
        ``sign(q) F(|q|)`` in Pa.
    ddp : ndarray
        ``F'(|q|)``, the derivative of ``dp`` with respect to ``q``.
    """
    q = np.asarray(q, dtype=float)
    length = np.asarray(length, dtype=float)
    d = np.asarray(diameter, dtype=float)
    area = 0.25 * np.pi * d**2
    a = np.abs(q)
    k_re = rho * d / (area * mu)  # Re per unit flow
    re = k_re * a

    # laminar: 32 mu L v / d^2
    c_lam = 32.0 * mu * length / (area * d**2)
    f_lam, df_lam = c_lam * a, c_lam * np.ones_like(a)

    # Haaland, evaluated at Re >= RE_LAMINAR only
    re_s = np.maximum(re, RE_LAMINAR)
    a_s = re_s / k_re
    x = (np.asarray(roughness) / d / 3.7) ** 1.11 + 6.9 / re_s
    s = -1.8 * np.log10(x)
    fric = s**-2
    dx = -6.9 / (re_s * a_s)
    ds = -1.8 / (x * _LN10) * dx
    dfric = -2.0 * s**-3 * ds
    c_t = length / d * rho / (2.0 * area**2)
    f_tur = fric * c_t * a_s**2
    df_tur = dfric * c_t * a_s**2 + 2.0 * fric * c_t * a_s

    sb = np.clip((re - RE_LAMINAR) / (RE_TURBULENT - RE_LAMINAR), 0.0, 1.0)
    w = sb * sb * (3.0 - 2.0 * sb)
    dw = 6.0 * sb * (1.0 - sb) * k_re / (RE_TURBULENT - RE_LAMINAR)

    F = np.where(re <= RE_LAMINAR, f_lam, (1.0 - w) * f_lam + w * f_tur)
    dF = np.where(
        re <= RE_LAMINAR,
        df_lam,
        (1.0 - w) * df_lam + w * df_tur + dw * (f_tur - f_lam),
    )
    return np.sign(q) * F, dF


def _g(x):
    """``g(x) = x / (1 - exp(-x))`` and its derivative for ``x <= 0``."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-5
    xs = np.where(small, -1.0, x)
    t = np.exp(xs)
    em1 = np.expm1(xs)
    g = np.where(small, 1.0 + x / 2.0 + x * x / 12.0, xs * t / em1)
    dg = np.where(small, 0.5 + x / 6.0, t * (em1 - xs) / em1**2)
    return g, dg


def hx_from_ntu(ua, n1, n2):
    """Counter-flow exchanger conductance ``H = eps * C_min`` from NTU per side.

    With ``n_k = UA / C_k`` the conductance is ``UA / (g(-|n1 - n2|) + max(n1, n2))``,
    which is symmetric in the two sides and smooth through balanced flow.

    Returns
    -------
    H, dH_dua, dH_dn1, dH_dn2 : ndarray
        Derivatives are partials at fixed other arguments.
    """
    ua = np.asarray(ua, dtype=float)
    n1 = np.asarray(n1, dtype=float)
    n2 = np.asarray(n2, dtype=float)
    first = n1 >= n2
    m = np.where(first, n1, n2)
    delta = -np.abs(n1 - n2)
    g, dg = _g(delta)
    D = g + m
    dD1 = np.where(first, 1.0 - dg, dg)
    dD2 = np.where(first, dg, 1.0 - dg)
    H = ua / D
    return H, 1.0 / D, -ua / D**2 * dD1, -ua / D**2 * dD2


def hx_conductance(ua, c1, c2):
    """Counter-flow conductance ``H`` (W/K) and partials with respect to ``ua, c1, c2``.

    ``H * (T_hot_in - T_cold_in)`` is the transferred heat; ``H / C_min`` is the
    effectiveness.
    """
    ua = np.asarray(ua, dtype=float)
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    n1, n2 = ua / c1, ua / c2
    H, h_ua, h_n1, h_n2 = hx_from_ntu(ua, n1, n2)
    dH_dua = h_ua + h_n1 / c1 + h_n2 / c2
    dH_dc1 = -h_n1 * n1 / c1
    dH_dc2 = -h_n2 * n2 / c2
    return H, dH_dua, dH_dc1, dH_dc2


def counterflow_effectiveness(ntu, c_ratio):
    """Textbook counter-flow effectiveness, used as an independent reference."""
    ntu = np.asarray(ntu, dtype=float)
    c_ratio = np.asarray(c_ratio, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        e = np.exp(-ntu * (1.0 - c_ratio))
        eps = (1.0 - e) / (1.0 - c_ratio * e)
    return np.where(np.isclose(c_ratio, 1.0), ntu / (1.0 + ntu), eps)
