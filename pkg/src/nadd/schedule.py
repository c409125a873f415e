"""Time discretisation for the sigma(t) = t diffusion schedule."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    """Ascending diffusion times ``t_1 < ... < t_N`` with ``sigma(t) = t``."""

    times: np.ndarray
    rho: float = 7.0

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("a grid needs at least two times")
        if not np.all(np.diff(times) > 0):
            raise ValueError("grid times must be strictly increasing")
        if times[0] <= 0:
            raise ValueError("grid times must be positive")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)

    @property
    def n_steps(self) -> int:
        return int(self.times.size)

    @property
    def t_min(self) -> float:
        return float(self.times[0])

    @property
    def t_max(self) -> float:
        return float(self.times[-1])

    @staticmethod
    def sigma(t):
        return t

    def index_of(self, t: float) -> int:
        """Index of ``t`` in the grid; raises if ``t`` is not a grid time."""
        hits = np.flatnonzero(self.times == t)
        if hits.size == 0:
            raise ValueError(f"time {t!r} is not on the grid")
        return int(hits[0])

    def snap_index(self, t: float) -> int:
        """Index of the largest grid time <= ``t``."""
        if t < self.t_min:
            raise ValueError(f"time {t!r} lies below the grid minimum {self.t_min}")
        return int(np.searchsorted(self.times, t, side="right") - 1)

    def gap_bound(self) -> float:
        return gap_bound(self)


def build_grid(n_steps: int, t_min: float, t_max: float, rho: float = 7.0) -> TimeGrid:
    """Rho-power spaced grid between ``t_min`` and ``t_max``.

    ``rho = 1`` gives uniform spacing; larger values concentrate points near
    ``t_min``.
    """
    if n_steps < 2:
        raise ValueError("n_steps must be at least 2")
    if not t_min > 0:
        raise ValueError("t_min must be positive")
    if not t_max > t_min:
        raise ValueError("t_max must exceed t_min")
    if rho < 1:
        raise ValueError("rho must be >= 1")
    i = np.arange(1, n_steps + 1)
    lo, hi = t_min ** (1.0 / rho), t_max ** (1.0 / rho)
    times = (hi + (n_steps - i) / (n_steps - 1) * (lo - hi)) ** rho
    # pin endpoints against pow round-off
    times[0], times[-1] = t_min, t_max
    return TimeGrid(times=times, rho=float(rho))


def gap_bound(grid: TimeGrid) -> float:
    """Smallest ``D`` with ``t_{i+1} - t_i <= D * T / N`` for every gap."""
    return float(np.max(np.diff(grid.times)) * grid.n_steps / grid.t_max)
