"""Aggregation of hourly year-long series into representative periods.

Each time step is one sample with features ``(demand per consumer, T_air,
G_irr)``, min-max normalised per attribute. Samples are grouped with
k-medoids (partitioning around medoids); for long series CLARA-style
subsampling keeps the distance matrices small. Every medoid becomes a
period weighted by its cluster size, and a zero-weight peak period built
from the worst case of each attribute is appended.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSeries, InputError, ShapeMismatch
from .periods import PeriodEnvironment, PeriodSet

HOURS_PER_YEAR = 8760
SUMMER_THRESHOLD = 1e-3  # share of the annual peak below which the network has no demand


@dataclass(frozen=True)
class TimeSeries:
    """Hourly boundary conditions.

    Attributes
    ----------
    demand : ndarray, shape (T, C)
        Heat demand per consumer in W.
    t_air : ndarray, shape (T,)
        Outdoor temperature in degC.
    g_irr : ndarray, shape (T,)
        Global irradiance in W/m2.
    consumers : tuple of str
        Consumer ids, column order of ``demand``.
    """

    demand: np.ndarray
    t_air: np.ndarray
    g_irr: np.ndarray
    consumers: tuple = ()

    def __post_init__(self):
        d = np.atleast_2d(np.asarray(self.demand, float))
        t = np.asarray(self.t_air, float).reshape(-1)
        g = np.asarray(self.g_irr, float).reshape(-1)
        if d.shape[0] != t.size or g.size != t.size:
            raise ShapeMismatch("demand, t_air and g_irr need the same number of time steps")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(t)) and np.all(np.isfinite(g))):
            raise InputError("time series contain non-finite values")
        if np.any(d < 0) or np.any(g < 0):
            raise InputError("demands and irradiance must be >= 0")
        names = tuple(self.consumers) or tuple(f"C{j + 1}" for j in range(d.shape[1]))
        if len(names) != d.shape[1]:
            raise ShapeMismatch("one consumer id per demand column expected")
        for name, arr in (("demand", d), ("t_air", t), ("g_irr", g)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "consumers", names)

    def __len__(self):
        return self.t_air.size

    def take(self, idx) -> "TimeSeries":
        return TimeSeries(self.demand[idx], self.t_air[idx], self.g_irr[idx], self.consumers)

    def features(self) -> np.ndarray:
        """Min-max normalised ``[demand..., T_air, G_irr]`` per time step."""
        x = np.column_stack([self.demand, self.t_air, self.g_irr])
        lo, hi = x.min(axis=0), x.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        return (x - lo) / span


# --------------------------------------------------------------------------
# summer exclusion


def exclude_summer(series: TimeSeries, threshold: float = SUMMER_THRESHOLD):
    """Remove the longest consecutive stretch without network heat demand.

    A step counts as demand-free when the total network demand is below
    ``threshold`` times the annual peak of the total.

    Returns
    -------
    (TimeSeries, float)
        The trimmed series and the excluded share of the time steps.

    Raises
    ------
    DegenerateSeries
        If no step carries demand.
    """
    total = series.demand.sum(axis=1)
    peak = float(total.max(initial=0.0))
    if peak <= 0:
        raise DegenerateSeries("the series has no heat demand at all")
    idle = total < threshold * peak
    best_len, best_start, run, start = 0, 0, 0, 0
    for i, v in enumerate(idle):
        if v:
            if run == 0:
                start = i
            run += 1
            if run > best_len:
                best_len, best_start = run, start
        else:
            run = 0
    if best_len == 0:
        return series, 0.0
    keep = np.ones(len(series), bool)
    keep[best_start:best_start + best_len] = False
    return series.take(np.flatnonzero(keep)), best_len / len(series)


def active_hours(excluded_fraction: float) -> int:
    """Active hours per year ``K = round(8760 (1 - excluded fraction))``."""
    if not 0 <= excluded_fraction < 1:
        raise InputError("excluded fraction must lie in [0, 1)")
    return int(round(HOURS_PER_YEAR * (1.0 - excluded_fraction)))


# --------------------------------------------------------------------------
# k-medoids


def _pairwise(x, y) -> np.ndarray:
    d2 = (x * x).sum(1)[:, None] + (y * y).sum(1)[None, :] - 2.0 * x @ y.T
    return np.sqrt(np.maximum(d2, 0.0))


def pam(dist: np.ndarray, k: int, max_swaps: int = 1000) -> np.ndarray:
    """Partitioning around medoids on a full distance matrix.

    Greedy BUILD followed by best-improvement SWAP until no swap lowers the
    total distance. Deterministic: ties resolve to the lowest index.

    Returns
    -------
    ndarray of int
        Sorted medoid indices.
    """
    n = dist.shape[0]
    if not 1 <= k <= n:
        raise InputError(f"cannot pick {k} medoids from {n} samples")
    med = [int(np.argmin(dist.sum(axis=1)))]
    near = dist[med[0]].copy()
    while len(med) < k:
        gain = np.maximum(near[None, :] - dist, 0.0).sum(axis=1)
        gain[med] = -1.0
        c = int(np.argmax(gain))
        med.append(c)
        near = np.minimum(near, dist[c])
    med = np.array(med)
    for _ in range(max_swaps):
        dm = dist[med]  # (k, n)
        order = np.argsort(dm, axis=0, kind="stable")
        d1 = dm[order[0], np.arange(n)]
        d2 = dm[order[1], np.arange(n)] if k > 1 else np.full(n, np.inf)
        best = (0.0, -1, -1)
        is_med = np.zeros(n, bool)
        is_med[med] = True
        for i in range(k):
            # distance of each point if medoid i is removed
            without = np.where(order[0] == i, d2, d1)
            # cost change of replacing medoid i by each candidate h
            delta = np.minimum(without[None, :], dist).sum(axis=1) - d1.sum()
            delta[is_med] = np.inf
            h = int(np.argmin(delta))
            if delta[h] < best[0] - 1e-12 * max(d1.sum(), 1.0):
                best = (float(delta[h]), i, h)
        if best[1] < 0:
            break
        med[best[1]] = best[2]
    return np.sort(med)


def kmedoids(x: np.ndarray, k: int, *, seed: int = 0, exact_limit: int = 2000,
             samples: int = 5, sample_size: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """k-medoids of the rows of ``x``.

    Exact PAM up to ``exact_limit`` rows; beyond that CLARA: PAM on
    ``samples`` seeded subsamples, keeping the medoids with the lowest total
    distance over all rows.

    Returns
    -------
    (medoids, labels)
        Row indices of the medoids and the medoid position of every row.
    """
    x = np.asarray(x, float)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise InputError(f"n_clusters={k} must lie in [1, {n}]")
    if n <= exact_limit:
        med = pam(_pairwise(x, x), k)
    else:
        rng = np.random.default_rng(seed)
        m = min(n, sample_size or max(40 + 2 * k, exact_limit // 2))
        best_cost, med = np.inf, None
        for _ in range(samples):
            sub = np.sort(rng.choice(n, m, replace=False))
            cand = sub[pam(_pairwise(x[sub], x[sub]), k)]
            cost = _pairwise(x, x[cand]).min(axis=1).sum()
            if cost < best_cost:
                best_cost, med = cost, np.sort(cand)
    labels = np.argmin(_pairwise(x, x[med]), axis=1)
    return med, labels


# --------------------------------------------------------------------------
# periods


def cluster_periods(series: TimeSeries, n_clusters: int, *, seed: int = 0) -> list[PeriodEnvironment]:
    """Representative periods (medoid time steps) weighted by cluster size.

    Periods are ordered by decreasing weight; weights sum to one.
    """
    n = len(series)
    if n_clusters > n:
        raise InputError(f"n_clusters={n_clusters} exceeds the {n} available samples")
    med, labels = kmedoids(series.features(), n_clusters, seed=seed)
    counts = np.bincount(labels, minlength=med.size)
    order = sorted(range(med.size), key=lambda i: (-counts[i], med[i]))
    out = []
    for rank, i in enumerate(order):
        s = int(med[i])
        out.append(PeriodEnvironment(
            float(series.t_air[s]), float(series.g_irr[s]), series.demand[s].copy(),
            float(counts[i] / n), label=f"P{rank + 1}",
        ))
    return out


def synthesize_peak(series: TimeSeries) -> PeriodEnvironment:
    """Worst case of every attribute: each consumer's own maximum demand,
    the minimum outdoor temperature and the minimum irradiance; weight 0."""
    return PeriodEnvironment(
        float(series.t_air.min()), float(series.g_irr.min()), series.demand.max(axis=0),
        0.0, label="peak",
    )


def aggregate(series: TimeSeries, n_clusters: int, *, seed: int = 0,
              threshold: float = SUMMER_THRESHOLD) -> PeriodSet:
    """Summer exclusion, clustering and peak synthesis in one step."""
    trimmed, frac = exclude_summer(series, threshold)
    periods = cluster_periods(trimmed, n_clusters, seed=seed)
    periods.append(synthesize_peak(series))
    return PeriodSet(
        tuple(periods), len(periods) - 1, float(active_hours(frac)), frac,
        meta={"consumers": list(series.consumers), "seed": seed, "n_clusters": n_clusters},
    )
