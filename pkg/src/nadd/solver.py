"""Probability-flow ODE update functions for sigma(t) = t."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

METHODS = ("euler", "heun")


@dataclass(frozen=True)
class UpdateFn:
    """Slope ``dx/dt`` estimator built on a denoiser.

    ``t_min`` marks the final step: Heun falls back to Euler when the step
    lands at or below it.
    """

    method: str
    denoiser: Callable
    t_min: float = 0.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown solver {self.method!r}; choose from {METHODS}")


def _slope(denoiser, x, t):
    return (x - denoiser(x, t)) / t


def phi(u: UpdateFn, x, t_hi: float, t_lo: float):
    if not t_hi > t_lo >= 0:
        raise ValueError(f"invalid times t_hi={t_hi}, t_lo={t_lo}")
    d1 = _slope(u.denoiser, x, t_hi)
    if u.method == "euler" or t_lo <= u.t_min:
        return d1
    x_pred = x + (t_lo - t_hi) * d1
    d2 = _slope(u.denoiser, x_pred, t_lo)
    return 0.5 * (d1 + d2)


def reverse_step(u: UpdateFn, x, t_hi: float, t_lo: float):
    return x + (t_lo - t_hi) * phi(u, x, t_hi, t_lo)


def integrate(u: UpdateFn, x, times):
    """Plain reverse chain over descending ``times`` (no noise, no correction)."""
    times = np.asarray(times, dtype=np.float64)
    for t_hi, t_lo in zip(times[:-1], times[1:]):
        x = reverse_step(u, x, float(t_hi), float(t_lo))
    return x
