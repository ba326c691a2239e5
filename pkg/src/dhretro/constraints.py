"""Technological constraints: demand, solar integration, pump lift and capacity.

Equalities ``g = 0``:

* demand per consumer and period, ``(Q_d - Q) / Q_d`` (dropped where ``Q_d = 0``);
* full solar integration per ST producer and period, ``(Q_solar - Q_hx) / P_ref``.

Inequalities ``h <= 0``:

* pump lift per producer and period, ``((p_j - p_i) - dp_max) / dp_max``;
* capacity per GB/HP/EB producer and period, ``Q / P_max - phi``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InputError


# --------------------------------------------------------------------------
# scalar residuals


def demand_residual(Q_demand, Q_delivered):
    """Normalised demand shortfall ``(Q_d - Q) / Q_d``.

    Entries with zero demand carry no constraint and come back as NaN.
    """
    qd = np.asarray(Q_demand, dtype=float)
    q = np.asarray(Q_delivered, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(qd > 0, (qd - q) / np.where(qd > 0, qd, 1.0), np.nan)
    return r[()] if r.ndim == 0 else r


def solar_integration_residual(Q_solar, Q_hx, P_ref):
    """Normalised mismatch between available and integrated solar heat."""
    if np.any(np.asarray(P_ref) <= 0):
        raise InputError("reference power must be > 0")
    return (np.asarray(Q_solar, float) - np.asarray(Q_hx, float)) / np.asarray(P_ref, float)


def pressure_residual(p_in, p_out, dp_max):
    """Normalised pump lift excess; ``<= 0`` when satisfied."""
    return ((np.asarray(p_out, float) - np.asarray(p_in, float)) - dp_max) / dp_max


def capacity_residual(q, dtheta, phi, P_max, *, rho=983.0, cp=4185.0):
    """Supplied heat as a share of the full capacity minus the built share ``phi``."""
    return rho * cp * np.asarray(q, float) * np.asarray(dtheta, float) / P_max - np.asarray(phi, float)


# --------------------------------------------------------------------------
# consumer temperature requirements


@dataclass(frozen=True)
class ConsumerRequirement:
    """Secondary supply/return temperatures (degC) and demand (W), shape (periods, consumers)."""

    t_hot: np.ndarray
    t_cold: np.ndarray
    demand: np.ndarray

    def table(self, consumer_ids=None) -> list[dict]:
        n_t, n_c = self.demand.shape
        ids = consumer_ids or [str(k) for k in range(n_c)]
        return [
            {"period": t, "consumer": ids[c], "demand_W": float(self.demand[t, c]),
             "t_hot_degC": float(self.t_hot[t, c]), "t_cold_degC": float(self.t_cold[t, c])}
            for t in range(n_t) for c in range(n_c)
        ]


def radiator_temperatures(ratio, *, exponent=1.3, room=20.0, hot=55.0, cold=35.0):
    """Secondary supply/return temperatures at a part-load ``ratio`` of the design heat.

    The secondary flow stays at its design value, so the temperature drop
    scales with the load, and the radiator emission follows
    ``ratio = (dT_lm / dT_lm_design) ** exponent`` with the log-mean excess
    over the room temperature.

    Returns
    -------
    t_hot, t_cold : ndarray
    """
    ratio = np.asarray(ratio, dtype=float)
    if np.any(ratio < 0):
        raise InputError("load ratio must be >= 0")
    dh, dc = hot - room, cold - room
    lm_design = (dh - dc) / np.log(dh / dc)
    lm = lm_design * ratio ** (1.0 / exponent)
    drop = (hot - cold) * ratio
    on = ratio > 0
    # solve drop / ln(1 + drop / x) = lm for the return excess x
    x = np.where(on, np.maximum(lm - drop / 2.0, 1e-9), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        for _ in range(60):
            u = np.where(on, drop / np.where(on, x, 1.0), 0.0)
            lg = np.log1p(u)
            r = np.where(on, drop / np.where(on, lg, 1.0) - lm, 0.0)
            dr = np.where(on, drop * u / (np.where(on, x, 1.0) * (1.0 + u) * np.where(on, lg, 1.0) ** 2), 1.0)
            step = r / dr
            x = np.where(on, np.maximum(x - step, 0.5 * x), 0.0)
            if np.all(np.abs(step) < 1e-13 * np.maximum(1.0, x)):
                break
    t_cold = room + x
    return t_cold + drop, t_cold


def radiator_requirements(demands, peak=None, *, exponent=1.3, room=20.0, hot=55.0, cold=35.0):
    """Required secondary temperatures for every consumer and period.

    Parameters
    ----------
    demands : array_like, shape (periods, consumers)
        Heat demand in W.
    peak : array_like, optional
        Design (peak) demand per consumer; defaults to the column maxima.
    """
    d = np.atleast_2d(np.asarray(demands, dtype=float))
    pk = d.max(axis=0) if peak is None else np.asarray(peak, dtype=float)
    ratio = np.divide(d, pk, out=np.zeros_like(d), where=pk > 0)
    t_hot, t_cold = radiator_temperatures(ratio, exponent=exponent, room=room, hot=hot, cold=cold)
    return ConsumerRequirement(t_hot, t_cold, d)


# --------------------------------------------------------------------------
# assembly on the network state


@dataclass
class PeriodConstraints:
    """Constraint values of one period with optional sparse Jacobians.

    Jacobian columns: the flat state for ``*_x``; ``[phi | alpha | gamma | tau]``
    of the period's design slice for ``*_d``.
    """

    g: np.ndarray
    h: np.ndarray
    g_kind: list
    h_kind: list
    g_x: sp.csr_matrix | None = None
    g_d: sp.csr_matrix | None = None
    h_x: sp.csr_matrix | None = None
    h_d: sp.csr_matrix | None = None


def period_constraints(graph, ds, x, ctx, dp_max: float, jac: bool = False) -> PeriodConstraints:
    """Equality and inequality constraints of one period on a converged state."""
    E, N = graph.n_edges, graph.n_nodes
    n_x = 2 * E + 2 * N
    n_p, n_c, n_tc = graph.n_producers, graph.n_consumers, graph.n_temp_controlled
    n_d = 2 * n_p + n_c + n_tc
    q = x[:E]
    p = x[E:E + N]
    th = x[E + N:E + 2 * N]
    te = x[E + 2 * N:]
    rc = ctx.rho * ctx.cp
    src, dst = graph.src, graph.dst
    iq, ip, ith, ite = 0, E, E + N, E + 2 * N

    g, gk, gr, gc, gv, gdr, gdc, gdv = [], [], [], [], [], [], [], []
    row = 0
    # demand
    for k, e in enumerate(graph.consumers):
        qd = float(ctx.demand[k])
        if qd <= 0:
            continue
        up = src[e] if q[e] >= 0 else dst[e]
        dT = th[up] - te[e]
        g.append((qd - rc * q[e] * dT) / qd)
        gk.append(("demand", graph.edges[e].id))
        if jac:
            gr += [row] * 3
            gc += [iq + e, ith + up, ite + e]
            gv += [-rc * dT / qd, -rc * q[e] / qd, rc * q[e] / qd]
        row += 1
    # solar integration
    for j, kprod in enumerate(graph.solar):
        e = graph.producers[kprod]
        unit = ctx.solar[j]
        pref = graph.edges[e].p_max
        i = src[e]
        qhx = rc * q[e] * (te[e] - th[i])
        g.append((unit.q_solar * ds.phi[kprod] - qhx) / pref)
        gk.append(("solar", graph.edges[e].id))
        if jac:
            gr += [row] * 3
            gc += [iq + e, ite + e, ith + i]
            gv += [-rc * (te[e] - th[i]) / pref, -rc * q[e] / pref, rc * q[e] / pref]
            gdr.append(row)
            gdc.append(kprod)
            gdv.append(unit.q_solar / pref)
        row += 1

    h, hk, hr, hc, hv, hdr, hdc, hdv = [], [], [], [], [], [], [], []
    row = 0
    for kprod, e in enumerate(graph.producers):
        i, j = src[e], dst[e]
        h.append(((p[j] - p[i]) - dp_max) / dp_max)
        hk.append(("pressure", graph.edges[e].id))
        if jac:
            hr += [row, row]
            hc += [ip + j, ip + i]
            hv += [1.0 / dp_max, -1.0 / dp_max]
        row += 1
    for kprod in graph.temp_controlled:
        e = graph.producers[kprod]
        i = src[e]
        pmax = graph.edges[e].p_max
        h.append(rc * q[e] * (te[e] - th[i]) / pmax - ds.phi[kprod])
        hk.append(("capacity", graph.edges[e].id))
        if jac:
            hr += [row] * 3
            hc += [iq + e, ite + e, ith + i]
            hv += [rc * (te[e] - th[i]) / pmax, rc * q[e] / pmax, -rc * q[e] / pmax]
            hdr.append(row)
            hdc.append(kprod)
            hdv.append(-1.0)
        row += 1

    out = PeriodConstraints(np.array(g, float), np.array(h, float), gk, hk)
    if jac:
        ng, nh = len(g), len(h)
        out.g_x = sp.csr_matrix((gv, (gr, gc)), shape=(ng, n_x))
        out.g_d = sp.csr_matrix((gdv, (gdr, gdc)), shape=(ng, n_d))
        out.h_x = sp.csr_matrix((hv, (hr, hc)), shape=(nh, n_x))
        out.h_d = sp.csr_matrix((hdv, (hdr, hdc)), shape=(nh, n_d))
    return out
