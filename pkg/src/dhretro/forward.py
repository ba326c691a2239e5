"""Steady-state thermo-hydraulic network model and its Newton solver.

State layout per period: ``[q (edges), p (nodes), theta_node (nodes), theta_exit (edges)]``
with temperatures expressed above the outdoor temperature.

Residual rows, in the same order:

* edge rows -- momentum for pipes and consumers, ``(dp_model - (p_i - p_j)) / P_S``;
  imposed inflow ``(q - gamma) / Q_S`` for producers;
* node rows -- mass balance ``(B q) / Q_S``; the reference node row pins its
  pressure instead;
* node energy rows -- flow-weighted mixing ``(sum_in w (theta_n - theta_exit)) / Q_S``;
* edge exit rows -- exit temperature of each edge (K).

Hydraulics do not depend on temperatures (constant properties), so the
system is block lower-triangular: the flows and pressures are found by a damped
Newton iteration and the temperatures by one linear solve.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import MaxIterationsExceeded, NonFinite, ShapeMismatch, SingularJacobian
from .network import DesignSlice, DesignVector, NetworkGraph, Scenario, StateSlice, StateVector
from .periods import PeriodEnvironment, PeriodSet
from .physics import hx_conductance, hx_from_ntu, pipe_pressure_drop
from .constraints import radiator_temperatures
from .producers import SolarUnitState, solar_preprocess

P_S = 1e5  # Pa
Q_S = 1e-2  # m3/s
Q_FLOOR = 1e-9  # m3/s, thermal regularisation of vanishing flows
Q_LIN = 1e-6  # m3/s, keeps the valve law differentiable at zero flow
MIX_REG = 1e-14  # m3/s, keeps node temperatures defined without inflow
C_SEC_FLOOR = 1e-3  # W/K, secondary capacity of consumers without demand

TOL_FORWARD = 1e-8
MAX_ITER = 50


def default_threads() -> int:
    """Thread budget from ``DHRETRO_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("DHRETRO_THREADS", "1")))
    except ValueError:
        return 1


# --------------------------------------------------------------------------
# per-period context


@dataclass(frozen=True)
class PeriodContext:
    """Boundary data of one period, preprocessed for the network model.

    Consumer arrays follow graph consumer order; solar arrays follow the graph's
    ST producer order (``graph.solar``).
    """

    env: PeriodEnvironment
    t_air: float
    demand: np.ndarray
    t_sec_hot: np.ndarray
    t_sec_cold: np.ndarray
    c_sec: np.ndarray
    solar: tuple[SolarUnitState, ...]  # full-size units (phi = 1)
    solar_ua: np.ndarray  # W/K at phi = 1
    rho: float
    cp: float
    mu: float
    p_ref: float

    @property
    def theta_sec_cold(self) -> np.ndarray:
        return self.t_sec_cold - self.t_air

    @property
    def solar_active(self) -> np.ndarray:
        return np.array([s.active for s in self.solar], dtype=bool)


def solar_ua_per_area(graph: NetworkGraph, periods: PeriodSet, scenario: Scenario) -> float:
    """Exchanger UA per collector area.

    Scenario value when given; otherwise sized for a ``scenario.solar_approach`` K
    approach of a balanced exchanger at the most heavily weighted active period.
    """
    if scenario.solar_ua_per_area is not None:
        return float(scenario.solar_ua_per_area)
    best = None
    for env in periods:
        s = solar_preprocess(
            env.g_irr, env.t_air, 1.0, 1.0, params=scenario.parameters,
            min_irradiance=scenario.solar_min_irradiance,
            min_efficiency=scenario.solar_min_efficiency,
        )
        if s.active:
            key = (env.weight, env.g_irr)
            if best is None or key > best[0]:
                best = (key, s)
    if best is None:
        return 1.0
    return best[1].q_solar / scenario.solar_approach


def prepare_periods(graph: NetworkGraph, periods: PeriodSet, scenario: Scenario) -> list[PeriodContext]:
    """Consumer temperature requirements and solar operating points for every period."""
    peak = periods.peak_demand()
    ua_area = solar_ua_per_area(graph, periods, scenario)
    out = []
    for env in periods:
        if env.demand.size != graph.n_consumers:
            raise ShapeMismatch(
                f"period demand has {env.demand.size} entries, network has "
                f"{graph.n_consumers} consumers"
            )
        ratio = np.divide(env.demand, peak, out=np.zeros_like(env.demand), where=peak > 0)
        hot, cold = radiator_temperatures(
            ratio, exponent=scenario.radiator_exponent, room=scenario.room_temperature,
            hot=scenario.design_hot, cold=scenario.design_cold,
        )
        spread = hot - cold
        c_sec = np.where(
            env.demand > 0,
            np.divide(env.demand, spread, out=np.zeros_like(spread), where=spread > 0),
            C_SEC_FLOOR,
        )
        c_sec = np.maximum(c_sec, C_SEC_FLOOR)
        solar, ua = [], []
        for k in graph.solar:
            a_max = graph.producer_edge(k).a_max
            solar.append(solar_preprocess(
                env.g_irr, env.t_air, 1.0, a_max, params=scenario.parameters,
                min_irradiance=scenario.solar_min_irradiance,
                min_efficiency=scenario.solar_min_efficiency,
            ))
            ua.append(ua_area * a_max)
        out.append(PeriodContext(
            env, float(env.t_air), env.demand, hot, cold, c_sec, tuple(solar), np.array(ua),
            scenario.rho, scenario.cp, scenario.viscosity, scenario.p_ref,
        ))
    return out


# --------------------------------------------------------------------------
# residual and Jacobians


@dataclass
class ModelResiduals:
    """Residual blocks of one period (scaled units, see module docstring)."""

    momentum: np.ndarray
    mass: np.ndarray
    energy_node: np.ndarray
    energy_exit: np.ndarray

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.momentum, self.mass, self.energy_node, self.energy_exit])

    @property
    def energy(self) -> np.ndarray:
        return np.concatenate([self.energy_node, self.energy_exit])

    def norm(self) -> float:
        return float(np.max(np.abs(self.vector))) if self.vector.size else 0.0


class _CscBlock:
    """Precomputed CSC layout of a coordinate-format block with repeated entries.

    ``build(vals)`` sums duplicates into a CSC matrix without the generic
    coordinate conversion, which dominates small-matrix assembly time.
    """

    def __init__(self, rows, cols, shape):
        n_r, n_c = shape
        keys = np.asarray(cols, np.int64) * n_r + np.asarray(rows, np.int64)
        self.order = np.argsort(keys, kind="stable")
        uniq, self.starts = np.unique(keys[self.order], return_index=True)
        self.indices = (uniq % n_r).astype(np.int32)
        self.indptr = np.searchsorted(uniq // n_r, np.arange(n_c + 1)).astype(np.int32)
        self.shape = shape

    def build(self, vals) -> sp.csc_matrix:
        data = np.add.reduceat(np.asarray(vals, float)[self.order], self.starts) if self.starts.size else np.zeros(0)
        return sp.csc_matrix((data, self.indices, self.indptr), shape=self.shape)


class _Pattern:
    """Fixed sparsity pattern of the model Jacobian for one graph."""

    def __init__(self, g: NetworkGraph):
        E, N = g.n_edges, g.n_nodes
        self.E, self.N = E, N
        e = np.arange(E)
        nonprod = np.flatnonzero(g.kind != 2)
        ref = g.reference_node()
        self.ref = ref
        r, c = [], []
        # momentum / inflow rows
        r += [e, nonprod, nonprod]
        c += [e, E + g.src[nonprod], E + g.dst[nonprod]]
        # mass rows (reference row replaced)
        keep_d = g.dst != ref
        keep_s = g.src != ref
        r += [E + g.dst[keep_d], E + g.src[keep_s], np.array([E + ref])]
        c += [e[keep_d], e[keep_s], np.array([E + ref])]
        # node energy rows
        n = np.arange(N)
        r += [E + N + n, E + N + g.dst, E + N + g.src, E + N + g.dst, E + N + g.src]
        c += [E + N + n, E + 2 * N + e, E + 2 * N + e, e, e]
        # exit rows
        r += [E + 2 * N + e, E + 2 * N + e, E + 2 * N + e, E + 2 * N + e]
        c += [E + 2 * N + e, E + N + g.src, E + N + g.dst, e]
        self.rows = np.concatenate(r).astype(np.int64)
        self.cols = np.concatenate(c).astype(np.int64)
        self.keep_d, self.keep_s = keep_d, keep_s
        self.size = 2 * E + 2 * N
        nh = E + N
        self.full = _CscBlock(self.rows, self.cols, (self.size, self.size))
        self.hmask = (self.rows < nh) & (self.cols < nh)
        self.hyd = _CscBlock(self.rows[self.hmask], self.cols[self.hmask], (nh, nh))
        self.tmask = (self.rows >= nh) & (self.cols >= nh)
        self.thermal = _CscBlock(self.rows[self.tmask] - nh, self.cols[self.tmask] - nh,
                                 (self.size - nh, self.size - nh))


def _pattern(g: NetworkGraph) -> _Pattern:
    # kept on the graph itself so the pattern lives exactly as long as the graph
    pat = g.__dict__.get("_jacobian_pattern")
    if pat is None:
        pat = _Pattern(g)
        g.__dict__["_jacobian_pattern"] = pat
    return pat


def _heaviside(x):
    return np.where(x > 0, 1.0, np.where(x < 0, 0.0, 0.5))


@dataclass
class _Eval:
    F: np.ndarray
    vals: np.ndarray | None
    # pieces reused by the design partials
    hyd_alpha: np.ndarray
    st_dphi: np.ndarray


def _evaluate(g: NetworkGraph, ds: DesignSlice, x: np.ndarray, ctx: PeriodContext, jac: bool) -> _Eval:
    pat = _pattern(g)
    E, N = g.n_edges, g.n_nodes
    q = x[:E]
    p = x[E:E + N]
    th = x[E + N:E + 2 * N]
    te = x[E + 2 * N:]
    src, dst = g.src, g.dst
    rho, cp = ctx.rho, ctx.cp
    F = np.empty(pat.size)

    # ---- hydraulics
    drop = p[src] - p[dst]
    hyd = np.empty(E)
    dhyd = np.empty(E)
    P, C, R = g.pipes, g.consumers, g.producers
    dp, ddp = pipe_pressure_drop(q[P], g.length[P], g.diameter[P], g.roughness[P], rho, ctx.mu)
    hyd[P] = (dp - drop[P]) / P_S
    dhyd[P] = ddp / P_S
    av = 0.25 * np.pi * g.valve_diameter[C] ** 2
    kv = rho / (2.0 * av**2)
    qc = q[C]
    valve = kv * qc * (np.abs(qc) + Q_LIN)
    hyd[C] = (ds.alpha * valve - drop[C]) / P_S
    dhyd[C] = ds.alpha * kv * (2.0 * np.abs(qc) + Q_LIN) / P_S
    hyd[R] = (q[R] - ds.gamma) / Q_S
    dhyd[R] = 1.0 / Q_S
    F[:E] = hyd

    # ---- mass
    mass = np.zeros(N)
    np.add.at(mass, dst, q)
    np.subtract.at(mass, src, q)
    mass /= Q_S
    mass[pat.ref] = (p[pat.ref] - ctx.p_ref) / P_S
    F[E:E + N] = mass

    # ---- node mixing
    w_d = np.maximum(q, 0.0)
    w_s = np.maximum(-q, 0.0)
    wsum = np.zeros(N)
    np.add.at(wsum, dst, w_d)
    np.add.at(wsum, src, w_s)
    acc = np.zeros(N)
    np.add.at(acc, dst, w_d * te)
    np.add.at(acc, src, w_s * te)
    F[E + N:E + 2 * N] = ((MIX_REG + wsum) * th - acc) / Q_S

    # ---- exit temperatures
    fwd = q >= 0
    up = np.where(fwd, src, dst)
    thu = th[up]
    sgn = np.where(fwd, 1.0, -1.0)
    aq = np.abs(q)
    big = aq > Q_FLOOR
    qreg = np.maximum(aq, Q_FLOOR)
    ex = np.empty(E)
    d_up = np.zeros(E)
    d_q = np.zeros(E)

    # pipes
    a = g.u_loss[P] * g.length[P] / (rho * cp)
    k = np.exp(-a / qreg[P])
    ex[P] = te[P] - thu[P] * k
    d_up[P] = -k
    d_q[P] = np.where(big[P], -thu[P] * k * a / qreg[P] ** 2 * sgn[P], 0.0)

    # consumers
    cn = rho * cp * qreg[C]
    H, _, dH_dcn, _ = hx_conductance(g.ua[C], cn, ctx.c_sec)
    eps = H / cn
    dT = thu[C] - ctx.theta_sec_cold
    ex[C] = te[C] - thu[C] + eps * dT
    d_up[C] = -1.0 + eps
    deps = (dH_dcn * cn - H) / cn**2
    d_q[C] = np.where(big[C], dT * deps * rho * cp * sgn[C], 0.0)

    # temperature-controlled producers
    tc = R[g.temp_controlled]
    ex[tc] = te[tc] - (ds.tau - ctx.t_air)
    d_up[tc] = 0.0
    d_q[tc] = 0.0

    # solar producers
    st_dphi = np.zeros(len(g.solar))
    for j, kprod in enumerate(g.solar):
        ei = R[kprod]
        unit = ctx.solar[j]
        phi = ds.phi[kprod]
        if not unit.active:
            ex[ei] = te[ei] - thu[ei]
            d_up[ei] = -1.0
            d_q[ei] = 0.0
            continue
        U = ctx.solar_ua[j]
        cnet = rho * cp * qreg[ei]
        n1 = phi * U / cnet
        n2 = U / unit.c_sec
        Hs, h_ua, h_n1, _ = hx_from_ntu(phi * U, n1, n2)
        Hs, h_ua, h_n1 = float(Hs), float(h_ua), float(h_n1)
        e_s = Hs / cnet
        th_hot = unit.t_hot - ctx.t_air
        drive = th_hot - thu[ei]
        ex[ei] = te[ei] - thu[ei] - e_s * drive
        d_up[ei] = -1.0 + e_s
        dH_dc = -h_n1 * n1 / cnet
        de_dc = (dH_dc * cnet - Hs) / cnet**2
        d_q[ei] = -drive * de_dc * rho * cp * sgn[ei] if big[ei] else 0.0
        st_dphi[j] = -drive * (h_ua * U + h_n1 * U / cnet) / cnet
    F[E + 2 * N:] = ex

    if not np.all(np.isfinite(F)):
        raise NonFinite("non-finite model residual")

    vals = None
    if jac:
        nonprod = np.flatnonzero(g.kind != 2)
        pd_d = _heaviside(q)
        pd_s = _heaviside(-q)
        vals = np.concatenate([
            dhyd,
            np.full(nonprod.size, -1.0 / P_S),
            np.full(nonprod.size, 1.0 / P_S),
            np.full(int(pat.keep_d.sum()), 1.0 / Q_S),
            np.full(int(pat.keep_s.sum()), -1.0 / Q_S),
            np.array([1.0 / P_S]),
            (MIX_REG + wsum) / Q_S,
            -w_d / Q_S,
            -w_s / Q_S,
            pd_d * (th[dst] - te) / Q_S,
            -pd_s * (th[src] - te) / Q_S,
            np.ones(E),
            np.where(fwd, d_up, 0.0),
            np.where(fwd, 0.0, d_up),
            d_q,
        ])
    return _Eval(F, vals, valve / P_S, st_dphi)


def residual(graph: NetworkGraph, design_slice: DesignSlice, state_slice, env: PeriodContext) -> ModelResiduals:
    """Model residuals of one period.

    ``state_slice`` is a :class:`StateSlice` or flat state array; ``env`` a
    :class:`PeriodContext` from :func:`prepare_periods`.
    """
    x = state_slice.to_flat() if isinstance(state_slice, StateSlice) else np.asarray(state_slice, float)
    for name in ("phi", "alpha", "gamma", "tau"):
        if not np.all(np.isfinite(getattr(design_slice, name))):
            raise NonFinite(f"non-finite design entries in {name}")
    if not np.all(np.isfinite(x)):
        raise NonFinite("non-finite state entries")
    F = _evaluate(graph, design_slice, x, env, jac=False).F
    E, N = graph.n_edges, graph.n_nodes
    return ModelResiduals(F[:E], F[E:E + N], F[E + N:E + 2 * N], F[E + 2 * N:])


def state_jacobian(graph, design_slice, x, ctx) -> sp.csc_matrix:
    """Sparse Jacobian of the scaled residual with respect to the flat state."""
    pat = _pattern(graph)
    ev = _evaluate(graph, design_slice, np.asarray(x, float), ctx, jac=True)
    return pat.full.build(ev.vals)


def design_jacobian(graph: NetworkGraph, design_slice: DesignSlice, x, ctx) -> sp.csr_matrix:
    """Partial of the residual with respect to the period's design variables.

    Columns follow ``[phi | alpha | gamma | tau]``.
    """
    E, N = graph.n_edges, graph.n_nodes
    ev = _evaluate(graph, design_slice, np.asarray(x, float), ctx, jac=False)
    n_p, n_c, n_tc = graph.n_producers, graph.n_consumers, graph.n_temp_controlled
    R = graph.producers
    rows = np.concatenate([
        E + 2 * N + R[graph.solar], graph.consumers, R, E + 2 * N + R[graph.temp_controlled],
    ])
    cols = np.concatenate([
        graph.solar, n_p + np.arange(n_c), n_p + n_c + np.arange(n_p),
        n_p + n_c + n_p + np.arange(n_tc),
    ])
    vals = np.concatenate([ev.st_dphi, ev.hyd_alpha, np.full(n_p, -1.0 / Q_S), -np.ones(n_tc)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(2 * E + 2 * N, n_p + n_c + n_p + n_tc))


# --------------------------------------------------------------------------
# solver


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    residual_norm: float
    wall_time: float
    period: int | None = None
    message: str = ""


def _factor(J):
    try:
        lu = splu(J if sp.isspmatrix_csc(J) else sp.csc_matrix(J))
    except RuntimeError as exc:
        raise SingularJacobian(str(exc)) from exc
    return lu


def cold_start(graph: NetworkGraph, ds: DesignSlice, ctx: PeriodContext) -> np.ndarray:
    """Initial state: linearised-resistance hydraulics and a uniform 40 K temperature."""
    E, N = graph.n_edges, graph.n_nodes
    src, dst = graph.src, graph.dst
    R = graph.producers
    inj = np.zeros(N)
    np.add.at(inj, dst[R], ds.gamma)
    np.subtract.at(inj, src[R], ds.gamma)
    net = np.flatnonzero(graph.kind != 2)
    q_nom = max(float(np.sum(np.abs(ds.gamma))) / max(graph.n_consumers, 1), 1e-4)
    qe = np.full(E, q_nom)
    ref = graph.reference_node()
    p = np.full(N, ctx.p_ref)
    x = np.zeros(2 * E + 2 * N)
    for _ in range(6):
        x[:E] = qe
        ev = _evaluate(graph, ds, np.concatenate([qe, p, np.zeros(N), np.zeros(E)]), ctx, jac=False)
        dp_model = ev.F[:E] * P_S + (p[src] - p[dst])
        cond = np.abs(qe[net]) / np.maximum(np.abs(dp_model[net]), 1e-12)
        cond = np.where(np.isfinite(cond) & (cond > 0), cond, 1e-12)
        L = sp.coo_matrix(
            (np.concatenate([cond, cond, -cond, -cond]),
             (np.concatenate([src[net], dst[net], src[net], dst[net]]),
              np.concatenate([src[net], dst[net], dst[net], src[net]]))),
            shape=(N, N),
        ).tolil()
        ground = 1e-12 * float(np.mean(cond))
        for n in range(N):
            L[n, n] += ground
        L[ref, :] = 0.0
        L[ref, ref] = 1.0
        b = inj.copy()
        b[ref] = 0.0
        dpot = splu(sp.csc_matrix(L)).solve(b)
        p = ctx.p_ref + dpot
        qn = cond * (p[src[net]] - p[dst[net]])
        qe = qe.copy()
        qe[net] = np.where(np.abs(qn) > 1e-12, qn, 1e-12)
        qe[R] = ds.gamma
    x[:E] = qe
    x[E:E + N] = p
    x[E + N:] = 40.0
    return x


def solve_period(
    graph: NetworkGraph,
    design_slice: DesignSlice,
    env: PeriodContext,
    init: StateSlice | np.ndarray | None = None,
    *,
    tol: float = TOL_FORWARD,
    max_iter: int = MAX_ITER,
    raise_on_failure: bool = False,
    period: int | None = None,
) -> tuple[StateSlice, SolveReport]:
    """Newton solve of one period.

    Returns the state and a report; ``converged=False`` flags failure
    (``raise_on_failure`` raises the corresponding solver error instead).
    """
    t0 = time.perf_counter()
    E, N = graph.n_edges, graph.n_nodes
    nh = E + N
    ds = design_slice
    try:
        for name in ("phi", "alpha", "gamma", "tau"):
            if not np.all(np.isfinite(getattr(ds, name))):
                raise NonFinite(f"non-finite design entries in {name}")
        if init is None:
            x = cold_start(graph, ds, env)
        else:
            x = (init.to_flat() if isinstance(init, StateSlice) else np.array(init, float)).copy()
        pat = _pattern(graph)

        def hyd(xx, jac):
            ev = _evaluate(graph, ds, xx, env, jac)
            if not jac:
                return ev.F[:nh], None, ev
            return ev.F[:nh], pat.hyd.build(ev.vals[pat.hmask]), ev

        # hydraulics: damped Newton with Armijo backtracking on |F|^2
        Fh, J, _ = hyd(x, True)
        norm = float(np.max(np.abs(Fh)))
        it = 0
        while norm > tol and it < max_iter:
            it += 1
            dx = _factor(J).solve(-Fh)
            f0 = float(Fh @ Fh)
            lam = 1.0
            for _ in range(40):
                xt = x.copy()
                xt[:nh] += lam * dx
                Ft, _, _ = hyd(xt, False)
                if float(Ft @ Ft) <= (1.0 - 2e-4 * lam) * f0:
                    break
                lam *= 0.5
            x = xt
            Fh, J, _ = hyd(x, True)
            norm = float(np.max(np.abs(Fh)))
        # polishing: full steps while they still reduce the residual
        if norm <= tol:
            for _ in range(3):
                if norm <= 1e-15:
                    break
                xt = x.copy()
                xt[:nh] += _factor(J).solve(-Fh)
                Ft, Jt_, _ = hyd(xt, True)
                nt = float(np.max(np.abs(Ft)))
                if not nt < norm:
                    break
                x, Fh, J, norm = xt, Ft, Jt_, nt
        if norm > tol:
            raise MaxIterationsExceeded(
                f"hydraulics not converged after {it} iterations (|F| = {norm:.3e})"
            )

        # temperatures: linear given the flows; one solve plus one refinement
        for _ in range(2):
            ev = _evaluate(graph, ds, x, env, True)
            Jt = pat.thermal.build(ev.vals[pat.tmask])
            x[nh:] += _factor(Jt).solve(-ev.F[nh:])
        F = _evaluate(graph, ds, x, env, False).F
        norm = float(np.max(np.abs(F)))
        converged = norm <= tol
        msg = "" if converged else f"residual {norm:.3e} above tolerance"
        if not converged and raise_on_failure:
            raise MaxIterationsExceeded(msg)
        rep = SolveReport(converged, it, norm, time.perf_counter() - t0, period, msg)
        return StateSlice.from_flat(x, graph), rep
    except (MaxIterationsExceeded, SingularJacobian, NonFinite) as exc:
        if raise_on_failure:
            raise
        xs = x if "x" in locals() and np.all(np.isfinite(x)) else np.zeros(graph.state_size)
        rep = SolveReport(False, locals().get("it", 0), float("nan"), time.perf_counter() - t0,
                          period, f"{type(exc).__name__}: {exc}")
        return StateSlice.from_flat(xs, graph), rep


def solve_all_periods(
    graph: NetworkGraph,
    design: DesignVector,
    periods: PeriodSet | list[PeriodContext],
    scenario: Scenario | None = None,
    *,
    init: StateVector | None = None,
    threads: int | None = None,
    tol: float = TOL_FORWARD,
) -> tuple[StateVector, list[SolveReport]]:
    """Solve every period independently; a report per period flags failures.

    ``periods`` is a :class:`PeriodSet` (preprocessed with ``scenario``) or a
    list of contexts from :func:`prepare_periods`.
    """
    if isinstance(periods, PeriodSet):
        contexts = prepare_periods(graph, periods, scenario or Scenario())
    else:
        contexts = list(periods)
    threads = default_threads() if threads is None else threads

    def one(t):
        start = None if init is None else init[t]
        return solve_period(graph, design.period(t), contexts[t], start, tol=tol, period=t)

    idx = range(len(contexts))
    if threads > 1 and len(contexts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, idx))
    else:
        results = [one(t) for t in idx]
    return StateVector([r[0] for r in results]), [r[1] for r in results]


def failed_periods(reports) -> list[int]:
    return [k for k, r in enumerate(reports) if not r.converged]
