"""Representative operating periods."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class PeriodEnvironment:
    """Boundary conditions of one steady-state period.

    Attributes
    ----------
    t_air : float
        Outdoor temperature in degC.
    g_irr : float
        Global irradiance in W/m2.
    demand : ndarray
        Heat demand per consumer in W, in graph consumer order.
    weight : float
        Share of the active hours represented by this period.
    """

    t_air: float
    g_irr: float
    demand: np.ndarray
    weight: float
    label: str = ""

    def __post_init__(self):
        d = np.asarray(self.demand, dtype=float).reshape(-1)
        d.setflags(write=False)
        object.__setattr__(self, "demand", d)
        if np.any(d < 0) or not np.all(np.isfinite(d)):
            raise InputError("demands must be finite and >= 0")
        if self.g_irr < 0:
            raise InputError("irradiance must be >= 0")
        if self.weight < 0:
            raise InputError("period weight must be >= 0")


@dataclass(frozen=True)
class PeriodSet:
    """Representative periods plus an optional zero-weight peak period.

    ``hours`` is the number of active hours per year (K) and
    ``excluded_fraction`` the share of the year removed as heating-free.
    """

    periods: tuple[PeriodEnvironment, ...]
    peak_index: int | None = None
    hours: float = 8760.0
    excluded_fraction: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "periods", tuple(self.periods))
        if self.peak_index is not None and self.periods[self.peak_index].weight != 0:
            raise InputError("the peak period must carry zero weight")
        if not 0 < self.hours <= 8760:
            raise InputError("active hours per year must lie in (0, 8760]")

    def __len__(self):
        return len(self.periods)

    def __iter__(self):
        return iter(self.periods)

    def __getitem__(self, t) -> PeriodEnvironment:
        return self.periods[t]

    @property
    def weights(self) -> np.ndarray:
        return np.array([p.weight for p in self.periods])

    @property
    def n_consumers(self) -> int:
        return self.periods[0].demand.size if self.periods else 0

    def peak_demand(self) -> np.ndarray:
        """Per-consumer maximum demand over all periods (the sizing reference)."""
        return np.max(np.stack([p.demand for p in self.periods]), axis=0)

    def reorder(self, order) -> "PeriodSet":
        order = list(order)
        peak = None if self.peak_index is None else order.index(self.peak_index)
        return PeriodSet(
            tuple(self.periods[k] for k in order), peak, self.hours, self.excluded_fraction,
            dict(self.meta),
        )
