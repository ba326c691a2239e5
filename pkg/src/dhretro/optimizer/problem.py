"""The multi-period retrofit problem in scaled design variables.

Scaled variables ``z``:

* capacity shares ``phi`` as they are, in ``[0, 1]``;
* valve settings ``alpha`` on a log scale, ``z = log(alpha / a_lo) / log(a_hi / a_lo)``;
* producer inflows ``gamma`` relative to a nominal flow (total peak demand at a 30 K rise);
* supply temperatures ``tau`` mapped affinely from their bounds to ``[0, 1]``.

Disabled technologies, pinned capacities and valves of consumers without demand
are fixed by equal lower and upper bounds.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from ..constraints import period_constraints
from ..economics import capex_vector, discount_factor, period_cost
from ..errors import InputError, MaxIterationsExceeded
from ..forward import default_threads, prepare_periods, solve_period
from ..network import NetworkGraph, Scenario, design_size, unpack_design
from ..periods import PeriodSet
from .adjoint import period_functional_gradient, slice_indices, state_sensitivity

GAMMA_SPAN = 3.0  # upper inflow bound in nominal flows
NOMINAL_RISE = 30.0  # K


class ForwardFailure(MaxIterationsExceeded):
    """The network model could not be solved for a trial design."""


@dataclass
class Evaluation:
    z: np.ndarray
    J: float
    value: float  # augmented objective (scaled)
    grad: np.ndarray | None
    g: list  # per period equality residuals
    h: list  # per period inequality residuals
    states: list
    costs: list

    @property
    def g_all(self) -> np.ndarray:
        return np.concatenate(self.g) if self.g else np.zeros(0)

    @property
    def h_all(self) -> np.ndarray:
        return np.concatenate(self.h) if self.h else np.zeros(0)

    def violation(self) -> float:
        g, h = self.g_all, self.h_all
        v = 0.0
        if g.size:
            v = max(v, float(np.max(np.abs(g))))
        if h.size:
            v = max(v, float(np.max(h, initial=0.0)))
        return v


class RetrofitProblem:
    """Objective, constraints and adjoint gradients of one scenario.

    Parameters
    ----------
    graph, periods, scenario
        Network, representative periods and economic settings.
    threads : int, optional
        Periods solved concurrently (defaults to ``DHRETRO_THREADS``).
    """

    def __init__(self, graph: NetworkGraph, periods: PeriodSet, scenario: Scenario, threads: int | None = None):
        self.graph = graph
        self.periods = periods
        self.scenario = scenario
        self.contexts = prepare_periods(graph, periods, scenario)
        self.n_t = len(periods)
        self.K = scenario.hours_per_year if scenario.hours_per_year is not None else periods.hours
        self.f_op = discount_factor(scenario.discount_rate, scenario.horizon)
        self.threads = default_threads() if threads is None else threads
        self.n = design_size(graph, self.n_t)
        self.j_scale = 1.0
        self._warm: list | None = None
        self._build_bounds()

    # ------------------------------------------------------------------ layout
    def _build_bounds(self):
        g, sc = self.graph, self.scenario
        n_p, n_c, n_tc = g.n_producers, g.n_consumers, g.n_temp_controlled
        peak = self.periods.peak_demand()
        self.gamma_nom = max(float(np.sum(peak)) / (sc.rho * sc.cp * NOMINAL_RISE), 1e-6)
        a_lo, a_hi = sc.alpha_bounds
        self.log_alpha = (np.log(a_lo), np.log(a_hi / a_lo))
        enabled = np.array([t in sc.enabled for t in g.producer_tech])
        self.enabled = enabled

        lb = np.zeros(self.n)
        ub = np.zeros(self.n)
        kind = np.empty(self.n, dtype="<U5")
        lb[:n_p] = 0.0
        ub[:n_p] = np.where(enabled, 1.0, 0.0)
        for pid, val in sc.fixed_phi.items():
            k = self._producer(pid)
            lb[k] = ub[k] = float(val)
        kind[:n_p] = "phi"
        t_lo = np.array([g.producer_edge(k).t_min for k in g.temp_controlled], float)
        t_hi = np.array([g.producer_edge(k).t_max for k in g.temp_controlled], float)
        self.t_lo, self.t_hi = t_lo, t_hi
        tc_enabled = enabled[g.temp_controlled]
        per = n_c + n_p + n_tc
        for t, ctx in enumerate(self.contexts):
            base = n_p + t * per
            zero_demand = ctx.demand <= 0
            lb[base:base + n_c] = np.where(zero_demand, 1.0, 0.0)
            ub[base:base + n_c] = 1.0
            kind[base:base + n_c] = "alpha"
            gl = base + n_c
            ub[gl:gl + n_p] = np.where(enabled, GAMMA_SPAN, 0.0)
            # an inactive collector field carries no flow (it would only act as a bypass)
            for j, k in enumerate(g.solar):
                if not ctx.solar[j].active:
                    ub[gl + k] = 0.0
            kind[gl:gl + n_p] = "gamma"
            tl = gl + n_p
            # temperatures of disabled producers are irrelevant; pin them
            lb[tl:tl + n_tc] = np.where(tc_enabled, 0.0, 1.0)
            ub[tl:tl + n_tc] = 1.0
            kind[tl:tl + n_tc] = "tau"
            for pid, val in sc.fixed_tau.items():
                k = self._producer(pid)
                if k not in g.temp_controlled:
                    raise InputError(f"producer {pid!r} has no supply temperature to fix")
                m = int(np.flatnonzero(g.temp_controlled == k)[0])
                if not t_lo[m] <= float(val) <= t_hi[m]:
                    raise InputError(f"fixed supply temperature of {pid!r} outside [{t_lo[m]}, {t_hi[m]}]")
                lb[tl + m] = ub[tl + m] = (float(val) - t_lo[m]) / (t_hi[m] - t_lo[m])
        self.lb, self.ub, self.kind = lb, ub, kind

    def _producer(self, pid) -> int:
        try:
            return self.graph.producer_ids.index(pid)
        except ValueError:
            raise InputError(f"unknown producer {pid!r} in the scenario") from None

    def index(self, t: int) -> np.ndarray:
        return slice_indices(self.graph, self.n_t, t)

    def to_physical(self, z):
        """Flat physical design from scaled variables."""
        z = np.asarray(z, float)
        d = z.copy()
        a0, span = self.log_alpha
        m = self.kind == "alpha"
        d[m] = np.exp(a0 + span * z[m])
        m = self.kind == "gamma"
        d[m] = self.gamma_nom * z[m]
        m = self.kind == "tau"
        lo = np.tile(self.t_lo, self.n_t)
        hi = np.tile(self.t_hi, self.n_t)
        d[m] = lo + (hi - lo) * z[m]
        return d

    def to_scaled(self, d):
        d = np.asarray(d, float)
        z = d.copy()
        a0, span = self.log_alpha
        m = self.kind == "alpha"
        z[m] = (np.log(d[m]) - a0) / span
        m = self.kind == "gamma"
        z[m] = d[m] / self.gamma_nom
        m = self.kind == "tau"
        lo = np.tile(self.t_lo, self.n_t)
        hi = np.tile(self.t_hi, self.n_t)
        z[m] = (d[m] - lo) / (hi - lo)
        return z

    def chain(self, z) -> np.ndarray:
        """Diagonal ``d(physical)/d(scaled)``."""
        z = np.asarray(z, float)
        c = np.ones_like(z)
        a0, span = self.log_alpha
        m = self.kind == "alpha"
        c[m] = span * np.exp(a0 + span * z[m])
        c[self.kind == "gamma"] = self.gamma_nom
        m = self.kind == "tau"
        c[m] = np.tile(self.t_hi - self.t_lo, self.n_t)
        return c

    def design(self, z):
        return unpack_design(self.to_physical(z), self.graph, self.n_t)

    # --------------------------------------------------------------- forward
    def solve(self, z, warm: bool = True):
        """Converged states of every period; raises :class:`ForwardFailure`."""
        design = self.design(z)

        def one(t):
            init = self._warm[t] if (warm and self._warm is not None) else None
            x, rep = solve_period(self.graph, design.period(t), self.contexts[t], init, period=t)
            if not rep.converged and init is not None:
                x, rep = solve_period(self.graph, design.period(t), self.contexts[t], None, period=t)
            return x, rep

        if self.threads > 1 and self.n_t > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                out = list(pool.map(one, range(self.n_t)))
        else:
            out = [one(t) for t in range(self.n_t)]
        bad = [rep for _, rep in out if not rep.converged]
        if bad:
            raise ForwardFailure(f"period {bad[0].period}: {bad[0].message}")
        states = [x for x, _ in out]
        self._warm = [s.copy() for s in states]
        return design, states

    def evaluate(self, z, lam=None, mu=None, rho: float = 0.0, grad: bool = True) -> Evaluation:
        """Augmented objective ``J/J_s + sum lam g + rho/2 |g|^2 + PHR(h)`` and its gradient in ``z``.

        ``lam`` and ``mu`` are per-period lists of multipliers (zeros when omitted).
        """
        design, states = self.solve(z)
        g, sc = self.graph, self.scenario
        capex, dcap = capex_vector(g, design.phi, sc.parameters, derivative=True)

        def one(t):
            ctx = self.contexts[t]
            x = states[t].to_flat()
            ds = design.period(t)
            cons = period_constraints(g, ds, x, ctx, sc.dp_max)
            lt = np.zeros(cons.g.size) if lam is None else lam[t]
            mt = np.zeros(cons.h.size) if mu is None else mu[t]
            wg = lt + rho * cons.g
            wh = np.maximum(0.0, mt + rho * cons.h) if rho > 0 else mt.copy()
            coef = self.f_op * ctx.env.weight / self.j_scale
            if grad:
                gs, cost, _ = period_functional_gradient(g, ds, x, ctx, sc, self.K, coef, wg, wh)
            else:
                gs, cost = None, period_cost(g, ds, x, ctx, sc, self.K)
            return gs, cost, cons, lt, mt

        if self.threads > 1 and self.n_t > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                out = list(pool.map(one, range(self.n_t)))
        else:
            out = [one(t) for t in range(self.n_t)]

        J = float(np.sum(capex))
        value = 0.0
        gvals, hvals, costs = [], [], []
        grad_d = np.zeros(self.n) if grad else None
        for t, (gs, cost, cons, lt, mt) in enumerate(out):
            J += self.f_op * self.contexts[t].env.weight * cost.total
            value += float(lt @ cons.g) + 0.5 * rho * float(cons.g @ cons.g)
            if rho > 0:
                value += float(np.sum(np.maximum(0.0, mt + rho * cons.h) ** 2 - mt**2)) / (2.0 * rho)
            else:
                value += float(mt @ cons.h)
            gvals.append(cons.g)
            hvals.append(cons.h)
            costs.append(cost)
            if grad:
                grad_d[self.index(t)] += gs
        value += J / self.j_scale
        gz = None
        if grad:
            grad_d[:g.n_producers] += dcap / self.j_scale
            gz = grad_d * self.chain(z)
        return Evaluation(np.asarray(z, float).copy(), J, value, gz, gvals, hvals, states, costs)

    def multiplier_shapes(self, z):
        ev = self.evaluate(z, grad=False)
        return [np.zeros(v.size) for v in ev.g], [np.zeros(v.size) for v in ev.h]

    # -------------------------------------------------------- initialisation
    def initial_design(self, rng: np.random.Generator | None = None) -> np.ndarray:
        """Starting point: half capacities, mid temperatures, demand-matching inflows.

        With ``rng`` the capacities and temperatures are drawn at random instead.
        Valves and inflow levels then come from :meth:`feasibility_presolve`.
        """
        g, sc = self.graph, self.scenario
        z = np.zeros(self.n)
        n_p, n_c, n_tc = g.n_producers, g.n_consumers, g.n_temp_controlled
        free_phi = self.lb[:n_p] < self.ub[:n_p]
        phi = np.where(free_phi, 0.5, self.lb[:n_p])
        if rng is not None:
            phi = np.where(free_phi, rng.uniform(0.05, 0.95, n_p), phi)
        z[:n_p] = phi
        per = n_c + n_p + n_tc
        heat_tech = self.enabled & np.array([t != "ST" for t in g.producer_tech])
        n_heat = max(int(heat_tech.sum()), 1)
        for t, ctx in enumerate(self.contexts):
            base = n_p + t * per
            z[base:base + n_c] = np.where(ctx.demand > 0, 0.3, 1.0)
            tz = np.full(n_tc, 0.5)
            if rng is not None:
                tz = rng.uniform(0.1, 0.9, n_tc)
            tl = base + n_c + n_p
            z[tl:tl + n_tc] = np.clip(tz, self.lb[tl:tl + n_tc], self.ub[tl:tl + n_tc])
            total = float(np.sum(ctx.demand)) / (sc.rho * sc.cp * 25.0)
            gz = np.where(heat_tech, total / n_heat / self.gamma_nom, 0.0)
            for j, k in enumerate(g.solar):
                unit = ctx.solar[j]
                if self.enabled[k] and unit.active:
                    gz[k] = phi[k] * unit.q_solar / (sc.rho * sc.cp * 10.0) / self.gamma_nom
                elif self.enabled[k]:
                    gz[k] = 1e-4
            gl = base + n_c
            z[gl:gl + n_p] = np.clip(gz, self.lb[gl:gl + n_p], self.ub[gl:gl + n_p])
        z = np.clip(z, self.lb, self.ub)
        return self.feasibility_presolve(z)

    def feasibility_presolve(self, z, max_nfev: int = 60) -> np.ndarray:
        """Adjust valves, the overall inflow level and solar inflows to meet demands.

        Per period a bounded least-squares problem is solved on the demand and
        solar-integration residuals with direct-sensitivity Jacobians.
        """
        g, sc = self.graph, self.scenario
        z = np.clip(np.asarray(z, float).copy(), self.lb, self.ub)
        n_p, n_c = g.n_producers, g.n_consumers
        for t, ctx in enumerate(self.contexts):
            idx = self.index(t)
            a_pos = idx[n_p:n_p + n_c]
            g_pos = idx[n_p + n_c:n_p + n_c + n_p]
            a_free = a_pos[self.lb[a_pos] < self.ub[a_pos]]
            heat = np.array([self.ub[p] > 0 and g.producer_tech[k] != "ST" for k, p in enumerate(g_pos)])
            solar = np.array([self.ub[p] > 0 and g.producer_tech[k] == "ST" for k, p in enumerate(g_pos)])
            g_heat0 = z[g_pos].copy()
            st_pos = g_pos[solar]

            def unpack(v):
                zz = z.copy()
                zz[a_free] = v[:a_free.size]
                s = v[a_free.size]
                zz[g_pos[heat]] = g_heat0[heat] * s
                zz[st_pos] = v[a_free.size + 1:]
                return zz

            def residuals(v, jac=False):
                zz = unpack(v)
                design = self.design(zz)
                ds = design.period(t)
                x, rep = solve_period(g, ds, ctx, None)
                if not rep.converged:
                    raise ForwardFailure(rep.message)
                cons = period_constraints(g, ds, x.to_flat(), ctx, sc.dp_max, jac=jac)
                if not jac:
                    return cons.g
                dxdd = state_sensitivity(g, ds, x.to_flat(), ctx)
                dgdd = cons.g_x @ dxdd + cons.g_d.toarray()
                dgdz = dgdd * self.chain(zz)[idx]
                cols = np.zeros((idx.size, v.size))
                pos = {int(p): c for c, p in enumerate(idx)}
                for c, p in enumerate(a_free):
                    cols[pos[int(p)], c] = 1.0
                for p in g_pos[heat]:
                    cols[pos[int(p)], a_free.size] = g_heat0[list(g_pos).index(p)]
                for c, p in enumerate(st_pos):
                    cols[pos[int(p)], a_free.size + 1 + c] = 1.0
                return dgdz @ cols

            if not np.any(heat) or (a_free.size == 0 and st_pos.size == 0):
                continue
            v0 = np.concatenate([z[a_free], [1.0], z[st_pos]])
            g_ub = self.ub[g_pos[heat]]
            s_hi = float(np.min(g_ub / np.maximum(g_heat0[heat], 1e-12)))
            lo = np.concatenate([np.zeros(a_free.size), [1e-3], np.zeros(st_pos.size)])
            hi = np.concatenate([np.ones(a_free.size), [max(s_hi, 1.0 + 1e-9)], self.ub[st_pos]])
            v0 = np.clip(v0, lo, hi)
            try:
                sol = least_squares(
                    residuals, v0, jac=lambda v: residuals(v, jac=True), bounds=(lo, hi),
                    method="trf", max_nfev=max_nfev, xtol=1e-12, ftol=1e-12, gtol=1e-12,
                )
                z = unpack(sol.x)
            except ForwardFailure:
                pass
        self._warm = None
        return np.clip(z, self.lb, self.ub)
