"""Augmented Lagrangian outer loop, multi-start driver and CO2-price sweeps."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from ..economics import CostBreakdown, total_objective
from ..errors import StalledProgress
from ..network import DesignVector, Scenario
from .lbfgs import inner_solve, projected_gradient
from .problem import ForwardFailure, RetrofitProblem

log = logging.getLogger(__name__)


@dataclass
class AugLagState:
    """Multipliers (per period), penalty and inner tolerance of the outer loop."""

    lam: list
    mu: list
    rho: float = 10.0
    inner_tol: float = 1e-2
    outer_iterations: int = 0
    inner_iterations: int = 0


@dataclass
class AugLagOptions:
    rho0: float = 10.0
    rho_factor: float = 5.0
    rho_max: float = 1e8
    required_decrease: float = 0.25
    inner_tol0: float = 1e-2
    inner_tol_factor: float = 0.1
    inner_tol_min: float = 1e-6
    inner_max_iter: int = 400
    max_outer: int = 40
    feas_tol: float = 1e-6
    opt_tol: float = 1e-5
    comp_tol: float = 1e-6


@dataclass
class TraceRecord:
    iteration: int
    J: float
    violation: float
    complementarity: float
    projected_gradient: float
    rho: float
    inner_iterations: int
    step_norm: float
    seconds: float

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)


@dataclass
class OuterResult:
    z: np.ndarray
    design: DesignVector
    states: list
    breakdown: CostBreakdown
    J: float
    violation: float
    complementarity: float
    projected_gradient: float
    converged: bool
    trace: list = field(default_factory=list)
    lam: list = field(default_factory=list)
    mu: list = field(default_factory=list)
    message: str = ""
    start: int = 0

    def summary(self) -> dict:
        return {
            "J": self.J, "violation": self.violation, "complementarity": self.complementarity,
            "projected_gradient": self.projected_gradient, "converged": self.converged,
            "outer_iterations": len(self.trace), "message": self.message,
        }


def _complementarity(mu, h) -> float:
    vals = [np.abs(m * v) for m, v in zip(mu, h) if v.size]
    return float(max((np.max(v) for v in vals), default=0.0))


def outer_solve(problem: RetrofitProblem, z0, options: AugLagOptions | None = None,
                state: AugLagState | None = None, raise_on_stall: bool = False,
                j_scale: float | None = None) -> OuterResult:
    """Augmented Lagrangian solve of the retrofit problem from scaled start ``z0``.

    Multipliers follow ``lam <- lam + rho g`` and ``mu <- max(0, mu + rho h)``;
    the penalty grows by ``rho_factor`` whenever the violation fails to drop
    to ``required_decrease`` of its previous value. Converged when the
    violation, the projected Lagrangian gradient and the complementarity all
    meet their tolerances.
    """
    opt = options or AugLagOptions()
    t0 = time.perf_counter()
    z = np.clip(np.asarray(z0, float), problem.lb, problem.ub)
    ev0 = problem.evaluate(z, grad=False)
    problem.j_scale = j_scale if j_scale is not None else max(abs(ev0.J), 1.0)
    if state is None:
        state = AugLagState([np.zeros(v.size) for v in ev0.g], [np.zeros(v.size) for v in ev0.h],
                            opt.rho0, opt.inner_tol0)
    prev_viol = ev0.violation()
    trace: list[TraceRecord] = []
    converged = False
    msg = ""
    ev = ev0
    best = None

    for k in range(opt.max_outer):
        lam, mu, rho = state.lam, state.mu, state.rho

        def fun(zz):
            e = problem.evaluate(zz, lam, mu, rho)
            return e.value, e.grad

        res = inner_solve(fun, z, problem.lb, problem.ub, tol=state.inner_tol, max_iter=opt.inner_max_iter)
        step = float(np.max(np.abs(res.x - z)))
        z = res.x
        ev = problem.evaluate(z, lam, mu, rho, grad=False)
        viol = ev.violation()
        # first-order multiplier update
        state.lam = [l + rho * g for l, g in zip(lam, ev.g)]
        state.mu = [np.maximum(0.0, m + rho * h) for m, h in zip(mu, ev.h)]
        comp = _complementarity(state.mu, ev.h)
        # with the updated multipliers the Lagrangian gradient equals the inner gradient
        pg = float(np.max(np.abs(projected_gradient(z, res.g, problem.lb, problem.ub)), initial=0.0))
        state.outer_iterations += 1
        state.inner_iterations += res.iterations
        rec = TraceRecord(k, ev.J, viol, comp, pg, rho, res.iterations, step, time.perf_counter() - t0)
        trace.append(rec)
        log.debug(rec.to_json())
        if viol <= opt.feas_tol and comp <= opt.comp_tol and (best is None or ev.J < best[1]):
            best = (z.copy(), ev.J)
        if viol <= opt.feas_tol and pg <= opt.opt_tol and comp <= opt.comp_tol:
            converged = True
            break
        if viol > opt.required_decrease * prev_viol and viol > opt.feas_tol:
            state.rho = min(state.rho * opt.rho_factor, opt.rho_max)
        prev_viol = min(prev_viol, viol) if viol > opt.feas_tol else viol
        state.inner_tol = max(state.inner_tol * opt.inner_tol_factor, opt.inner_tol_min)
        if pg <= opt.opt_tol and viol <= opt.feas_tol:
            state.inner_tol = opt.inner_tol_min
    else:
        msg = "outer iteration limit reached"
        if raise_on_stall:
            raise StalledProgress(msg + "; see trace")

    design = problem.design(z)
    _, states = problem.solve(z)
    J, bd = total_objective(problem.graph, design, states, problem.periods, problem.scenario, problem.contexts)
    return OuterResult(z, design, states, bd, J, viol, comp, pg, converged, trace, state.lam, state.mu, msg)


def optimize(graph, periods, scenario: Scenario, *, starts: int = 3, seed: int = 0,
             init=None, options: AugLagOptions | None = None, threads: int | None = None,
             problem: RetrofitProblem | None = None) -> OuterResult:
    """Multi-start optimisation; keeps the converged result of lowest cost.

    The first start is the deterministic default (or ``init``, a scaled
    design); the remaining ``starts - 1`` use seeded random capacities and
    temperatures.
    """
    problem = problem or RetrofitProblem(graph, periods, scenario, threads=threads)
    rng = np.random.default_rng(seed)
    candidates = []
    if init is not None:
        candidates.append(problem.feasibility_presolve(np.asarray(init, float)))
    candidates.append(problem.initial_design())
    while len(candidates) < starts + (1 if init is not None else 0):
        candidates.append(problem.initial_design(rng))
    results = []
    j_scale = None
    for s, z0 in enumerate(candidates):
        try:
            r = outer_solve(problem, z0, options, j_scale=j_scale)
        except ForwardFailure as exc:
            log.warning("start %d failed: %s", s, exc)
            continue
        j_scale = problem.j_scale
        r.start = s
        results.append(r)
    if not results:
        raise StalledProgress("no start produced a solvable design")
    feasible = [r for r in results if r.converged]
    pool = feasible or results
    return min(pool, key=lambda r: r.J)


def sweep(graph, periods, scenario: Scenario, co2_prices, *, starts: int = 3, seed: int = 0,
          options: AugLagOptions | None = None, threads: int | None = None) -> list[OuterResult]:
    """Optimise for each CO2 price; each point is also warm-started from its predecessor."""
    out = []
    prev = None
    for c in co2_prices:
        sc = replace(scenario, co2_price=float(c))
        init = None if prev is None else prev.z
        r = optimize(graph, periods, sc, starts=starts, seed=seed, init=init, options=options, threads=threads)
        out.append(r)
        prev = r
    return out
