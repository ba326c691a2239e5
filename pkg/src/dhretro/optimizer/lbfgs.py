"""Bound-constrained limited-memory quasi-Newton method with gradient projection.

Variables at a bound whose gradient pushes outward are held fixed; the
remaining free variables take an L-BFGS step (two-loop recursion restricted to
the free set) and the trial point is projected back onto the box. A projected
Armijo backtracking search guards every step; objective failures (``inf`` or
an exception from the callback) count as rejected trial points.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import LineSearchFailure


@dataclass
class InnerResult:
    x: np.ndarray
    f: float
    g: np.ndarray
    iterations: int
    evaluations: int
    projected_gradient: float
    converged: bool
    message: str = ""
    history: list = field(default_factory=list)


def projected_gradient(x, g, lb, ub) -> np.ndarray:
    """``P(x - g) - x``: zero exactly at first-order stationary points of the box problem."""
    return np.clip(x - g, lb, ub) - x


def _two_loop(g, S, Y, free):
    q = g[free].copy()
    alphas = []
    rhos = []
    for s, y in zip(reversed(S), reversed(Y)):
        sf, yf = s[free], y[free]
        sy = sf @ yf
        if sy <= 1e-12 * np.linalg.norm(sf) * np.linalg.norm(yf) or sy <= 0:
            alphas.append(None)
            rhos.append(None)
            continue
        rho = 1.0 / sy
        a = rho * (sf @ q)
        q -= a * yf
        alphas.append(a)
        rhos.append(rho)
    gamma = 1.0
    for s, y in zip(reversed(S), reversed(Y)):
        sf, yf = s[free], y[free]
        sy, yy = sf @ yf, yf @ yf
        if sy > 1e-12 * np.linalg.norm(sf) * np.linalg.norm(yf) and sy > 0 and yy > 0:
            gamma = sy / yy
            break
    r = gamma * q
    for (s, y), a, rho in zip(zip(S, Y), reversed(alphas), reversed(rhos)):
        if a is None:
            continue
        b = rho * (y[free] @ r)
        r += s[free] * (a - b)
    return -r


def _acceptable(f, g, x, xt, ft, gt, lb, ub, pg, c1):
    """Projected Armijo test; near round-off level changes in ``f`` fall back to
    requiring a smaller projected gradient."""
    if not np.isfinite(ft):
        return False
    if ft <= f + c1 * (g @ (xt - x)):
        return True
    noise = 64.0 * np.finfo(float).eps * max(1.0, abs(f))
    if f - noise <= ft <= f:
        pgt = float(np.max(np.abs(projected_gradient(xt, gt, lb, ub)), initial=0.0))
        return pgt < 0.5 * pg
    return False


def inner_solve(
    fun: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0,
    lb,
    ub,
    *,
    tol: float = 1e-6,
    max_iter: int = 500,
    memory: int = 10,
    c1: float = 1e-4,
    raise_on_failure: bool = False,
    callback: Callable | None = None,
) -> InnerResult:
    """Minimise ``fun`` over the box ``[lb, ub]``.

    Parameters
    ----------
    fun : callable
        Returns ``(f, grad)``. May return ``f = inf`` or raise to reject a point.
    tol : float
        Stop when ``|P(x - g) - x|_inf <= tol``.

    Returns
    -------
    InnerResult
        ``converged=False`` with a message on iteration cap or line-search
        failure; the best iterate is always returned.
    """
    lb = np.asarray(lb, float)
    ub = np.asarray(ub, float)
    x = np.clip(np.asarray(x0, float), lb, ub)

    def safe(z):
        try:
            f, g = fun(z)
        except Exception:  # noqa: BLE001 - any model failure rejects the point
            return np.inf, None
        if not np.isfinite(f) or g is None or not np.all(np.isfinite(g)):
            return np.inf, None
        return float(f), np.asarray(g, float)

    f, g = safe(x)
    nfev = 1
    if not np.isfinite(f):
        raise LineSearchFailure("objective undefined at the starting point")
    S: deque = deque(maxlen=memory)
    Y: deque = deque(maxlen=memory)
    history = [f]
    pg = float(np.max(np.abs(projected_gradient(x, g, lb, ub)), initial=0.0))
    it = 0
    msg = ""
    while pg > tol and it < max_iter:
        it += 1
        span = ub - lb
        eps = np.minimum(1e-10 * np.maximum(span, 1.0), 0.5 * span)
        at_lo = (x <= lb + eps) & (g > 0)
        at_hi = (x >= ub - eps) & (g < 0)
        free = ~(at_lo | at_hi)
        d = np.zeros_like(x)
        if np.any(free):
            d[free] = _two_loop(g, list(S), list(Y), free) if S else -g[free]
            if g[free] @ d[free] >= -1e-16 * (g[free] @ g[free]):
                S.clear()
                Y.clear()
                d[free] = -g[free]
        if not S:
            # first step (or after a reset): unit-less scaling of steepest descent
            nd = np.max(np.abs(d)) if d.size else 0.0
            if nd > 0:
                d *= min(1.0, 0.1 / nd)
        step = 1.0
        accepted = False
        for _ in range(40):
            xt = np.clip(x + step * d, lb, ub)
            if np.array_equal(xt, x):
                break
            ft, gt = safe(xt)
            nfev += 1
            if _acceptable(f, g, x, xt, ft, gt, lb, ub, pg, c1):
                accepted = True
                break
            step *= 0.5 if np.isfinite(ft) else 0.25
        if not accepted:
            if S:
                # drop the curvature pairs and retry along the projected gradient
                S.clear()
                Y.clear()
                d = projected_gradient(x, g, lb, ub)
                nd = np.max(np.abs(d))
                d = d * min(1.0, 0.1 / nd) if nd > 0 else d
                step = 1.0
                for _ in range(50):
                    xt = np.clip(x + step * d, lb, ub)
                    ft, gt = safe(xt)
                    nfev += 1
                    if _acceptable(f, g, x, xt, ft, gt, lb, ub, pg, c1):
                        accepted = True
                        break
                    step *= 0.5
            if not accepted:
                msg = "line search failed"
                if raise_on_failure:
                    raise LineSearchFailure(msg)
                break
        s = xt - x
        y = gt - g
        if s @ y > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
        x, f, g = xt, ft, gt
        history.append(f)
        pg = float(np.max(np.abs(projected_gradient(x, g, lb, ub)), initial=0.0))
        if callback is not None:
            callback(x, f, pg)
    converged = pg <= tol
    if not converged and not msg:
        msg = "iteration limit reached"
    return InnerResult(x, f, g, it, nfev, pg, converged, msg, history)
