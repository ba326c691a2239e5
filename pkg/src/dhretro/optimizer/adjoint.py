"""Reduced gradients through the network model by per-period adjoint solves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ..constraints import period_constraints
from ..economics import capex_vector, period_cost
from ..errors import SingularJacobian
from ..forward import design_jacobian, state_jacobian


@dataclass
class AdjointSolution:
    """Adjoint multipliers of one period and the reduced gradient of its design slice."""

    psi: np.ndarray
    gradient: np.ndarray


def _lu(A):
    try:
        return splu(sp.csc_matrix(A))
    except RuntimeError as exc:
        raise SingularJacobian(str(exc)) from exc


def solve_adjoint(graph, ds, x, ctx, l_x, l_d) -> AdjointSolution:
    """Reduced gradient ``l_d - psi^T dF/dd`` with ``(dF/dx)^T psi = l_x``."""
    lu = _lu(state_jacobian(graph, ds, x, ctx))
    psi = lu.solve(np.asarray(l_x, float), trans="T")
    Fd = design_jacobian(graph, ds, x, ctx)
    return AdjointSolution(psi, np.asarray(l_d, float) - Fd.T @ psi)


def state_sensitivity(graph, ds, x, ctx) -> np.ndarray:
    """Dense ``dx/dd`` of one period (direct method), columns ``[phi|alpha|gamma|tau]``."""
    lu = _lu(state_jacobian(graph, ds, x, ctx))
    Fd = design_jacobian(graph, ds, x, ctx).toarray()
    return -lu.solve(Fd)


def period_functional_gradient(graph, ds, x, ctx, scenario, K, cost_coef, wg, wh, *, dp_max=None):
    """Gradient of ``cost_coef * cost_t + wg . g_t + wh . h_t`` for one period.

    Returns the reduced gradient over the slice ``[phi|alpha|gamma|tau]``
    together with the cost and constraint evaluations.
    """
    dp_max = scenario.dp_max if dp_max is None else dp_max
    cost = period_cost(graph, ds, x, ctx, scenario, K, jac=True)
    cons = period_constraints(graph, ds, x, ctx, dp_max, jac=True)
    l_x = cost_coef * cost.grad_x
    l_d = cost_coef * cost.grad_d
    if cons.g.size:
        l_x = l_x + cons.g_x.T @ wg
        l_d = l_d + cons.g_d.T @ wg
    if cons.h.size:
        l_x = l_x + cons.h_x.T @ wh
        l_d = l_d + cons.h_d.T @ wh
    sol = solve_adjoint(graph, ds, x, ctx, l_x, l_d)
    return sol.gradient, cost, cons


def slice_indices(graph, n_periods: int, t: int) -> np.ndarray:
    """Flat design positions of period ``t``'s slice ``[phi|alpha|gamma|tau]``."""
    n_p = graph.n_producers
    per = graph.n_consumers + n_p + graph.n_temp_controlled
    return np.concatenate([np.arange(n_p), n_p + t * per + np.arange(per)])


def adjoint_gradient(graph, design, states, contexts, scenario, K, f_op, *, cost_weight=1.0,
                     g_weights=None, h_weights=None):
    """Gradient of ``cost_weight * J + sum g_weights . g + sum h_weights . h`` w.r.t. the flat design.

    ``g_weights`` and ``h_weights`` are per-period lists (``None`` for zeros).
    The capacity block accumulates over periods in period order.
    """
    n_t = len(contexts)
    grad = np.zeros(design.to_flat().size)
    for t, ctx in enumerate(contexts):
        x = states[t].to_flat() if hasattr(states[t], "to_flat") else np.asarray(states[t])
        ds = design.period(t)
        cons0 = period_constraints(graph, ds, x, ctx, scenario.dp_max)
        wg = np.zeros(cons0.g.size) if g_weights is None else np.asarray(g_weights[t], float)
        wh = np.zeros(cons0.h.size) if h_weights is None else np.asarray(h_weights[t], float)
        coef = cost_weight * f_op * ctx.env.weight
        gs, _, _ = period_functional_gradient(graph, ds, x, ctx, scenario, K, coef, wg, wh)
        grad[slice_indices(graph, n_t, t)] += gs
    _, dcap = capex_vector(graph, design.phi, scenario.parameters, derivative=True)
    grad[:graph.n_producers] += cost_weight * dcap
    return grad
