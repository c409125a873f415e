"""Noise-amplified purification: forward noising, ring-target correction and
stochastic churn in the reverse pass.

Every operation is vectorised over leading batch axes of the sample array.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace

import numpy as np

from .schedule import TimeGrid
from .solver import UpdateFn, phi

MAX_GAMMA = math.sqrt(2.0) - 1.0


@dataclass(frozen=True)
class NaddConfig:
    """Purification knobs; defaults are the CIFAR-10 l_inf settings."""

    t_prime: float = 16.0
    t_stop: float = 0.585
    beta: float = 0.03
    kappa_min: float = 0.75
    kappa_max: float = 1.0
    s_churn: float = 2.0
    s_min: float = 0.0
    # unbounded churn window; "inf" in config files
    s_max: float = sys.float_info.max
    s_noise: float = 1.0
    # constant correction weight above the cutoff instead of the power law
    weight_override: float | None = None
    # multiply ring radii by sqrt(d)
    kappa_sqrt_d: bool = False

    def problems(self, grid: TimeGrid | None = None) -> list[tuple[str, str]]:
        """``(field, message)`` for every violated invariant."""
        out = []
        # t_stop = 0 is allowed: correction then runs down to t_1
        if not self.t_stop >= 0:
            out.append(("t_stop", "correction cutoff must be non-negative"))
        if not self.t_stop < self.t_prime:
            out.append(("t_stop", "requirement t_stop < t_prime <= T violated: t_stop >= t_prime"))
        if grid is not None:
            if self.t_prime > grid.t_max:
                out.append(("t_prime", f"t_prime exceeds the grid maximum T={grid.t_max}"))
            if self.t_prime < grid.t_min:
                out.append(("t_prime", f"t_prime below the grid minimum {grid.t_min}"))
        if not 0.0 <= self.beta <= 1.0:
            out.append(("beta", "beta must lie in [0, 1]"))
        if self.kappa_min < 0:
            out.append(("kappa_min", "kappa_min must be non-negative"))
        if self.kappa_min > self.kappa_max:
            out.append(("kappa_min", "kappa_min must not exceed kappa_max"))
        if self.s_churn < 0:
            out.append(("s_churn", "s_churn must be non-negative"))
        if not self.s_noise > 0:
            out.append(("s_noise", "s_noise must be positive"))
        if self.s_min > self.s_max:
            out.append(("s_min", "s_min must not exceed s_max"))
        if self.weight_override is not None and not 0.0 <= self.weight_override <= 1.0:
            out.append(("weight_override", "weight_override must lie in [0, 1]"))
        return out

    def validate(self, grid: TimeGrid | None = None) -> None:
        issues = self.problems(grid)
        if issues:
            raise ValueError("; ".join(f"{k}: {m}" for k, m in issues))

    def replace(self, **changes) -> "NaddConfig":
        return replace(self, **changes)


@dataclass
class RingTarget:
    base: np.ndarray
    offset: np.ndarray
    target: np.ndarray
    radius: np.ndarray


@dataclass
class Trajectory:
    forward_times: np.ndarray
    forward: np.ndarray          # (n_fwd, ..., d), starts at the input
    reverse_times: np.ndarray
    reverse: np.ndarray          # (n_rev, ..., d), starts at the forward endpoint
    purified: np.ndarray
    cutoff_state: np.ndarray     # state after the last corrected step
    cutoff_time: float
    target: RingTarget
    weights_used: list = field(default_factory=list)
    gammas_used: list = field(default_factory=list)


def forward_noise(x, grid: TimeGrid, t_prime: float, rng, closed_form: bool = False):
    """Diffuse ``x`` from ``t_1`` up to the grid time ``t_prime``.

    Returns ``(noisy, path)`` where ``path`` stacks the states at every grid
    time up to ``t_prime``. ``closed_form`` draws the endpoint in one shot
    with the same total variance ``t_prime^2 - t_1^2``.
    """
    k = grid.index_of(t_prime)
    x = np.asarray(x, dtype=np.float64)
    times = grid.times
    if closed_form:
        z = rng.standard_normal(x.shape)
        noisy = x + math.sqrt(times[k] ** 2 - times[0] ** 2) * z
        return noisy, np.stack([x, noisy])
    path = [x]
    cur = x
    for i in range(1, k + 1):
        z = rng.standard_normal(x.shape)
        cur = cur + math.sqrt(times[i] ** 2 - times[i - 1] ** 2) * z
        path.append(cur)
    return cur, np.stack(path)


def _pin_norms(u, lo, hi):
    """Nudge rows of ``u`` by single ulps until ``lo <= ||u|| <= hi`` holds in floats."""
    down, up = np.nextafter(1.0, 0.0), np.nextafter(1.0, 2.0)
    for _ in range(64):
        n = np.linalg.norm(u, axis=-1)
        big, small = n > hi, n < lo
        if not (np.any(big) or np.any(small)):
            break
        u = np.where(big[..., None], u * down, u)
        u = np.where(small[..., None], u * up, u)
    return u


def make_ring_target(x, kappa_min: float, kappa_max: float, rng) -> RingTarget:
    """Offset ``u = r v / ||v||`` with ``v ~ N(0, I)`` and ``r ~ U[kappa_min, kappa_max]``."""
    if kappa_min > kappa_max:
        raise ValueError("kappa_min must not exceed kappa_max")
    x = np.asarray(x, dtype=np.float64)
    v = rng.standard_normal(x.shape)
    norms = np.linalg.norm(v, axis=-1)
    while np.any(norms == 0):
        bad = norms == 0
        v[bad] = rng.standard_normal(v[bad].shape)
        norms = np.linalg.norm(v, axis=-1)
    r = rng.uniform(kappa_min, kappa_max, size=x.shape[:-1])
    r = np.clip(r, kappa_min, kappa_max)
    u = _pin_norms(r[..., None] * v / norms[..., None], kappa_min, kappa_max)
    return RingTarget(base=x, offset=u, target=x + u, radius=np.asarray(r))


def correction_weight(t: float, grid: TimeGrid, t_stop: float, beta: float) -> float:
    """Power-law correction weight ``((t - t_1) / t_N)^beta``, zero at or below ``t_stop``."""
    if t <= t_stop:
        return 0.0
    return float(((t - grid.t_min) / grid.t_max) ** beta)


def correction_slope(target: RingTarget, x_cur, t_lo: float, t_hi: float):
    """Slope that carries ``x_cur`` onto the ring target over ``t_hi -> t_lo``."""
    if t_lo == t_hi:
        raise ZeroDivisionError("correction slope needs distinct times")
    return (target.target - x_cur) / (t_lo - t_hi)


def gamma_schedule(t: float, n_steps: int, s_churn: float, s_min: float, s_max: float) -> float:
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if s_churn == 0 or not s_min <= t <= s_max:
        return 0.0
    return min(s_churn / n_steps, MAX_GAMMA)


def stochastic_inflate(x, t: float, gamma: float, s_noise: float, rng):
    """Raise the noise level of ``x`` from ``t`` to ``t (1 + gamma)``."""
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    t_hat = t * (1.0 + gamma)
    if gamma == 0:
        return x, t_hat
    z = s_noise * rng.standard_normal(np.shape(x))
    return x + math.sqrt(t_hat**2 - t**2) * z, t_hat


def ring_radii(cfg: NaddConfig, dim: int) -> tuple[float, float]:
    scale = math.sqrt(dim) if cfg.kappa_sqrt_d else 1.0
    return cfg.kappa_min * scale, cfg.kappa_max * scale


def purify(x, cfg: NaddConfig, grid: TimeGrid, u: UpdateFn, rng, record: bool = True) -> Trajectory:
    """Run the full purification pass on ``x`` (shape ``(d,)`` or ``(..., d)``).

    ``t_prime`` is snapped down to the nearest grid time. The ring target is
    drawn once from the clean input. With ``record=False`` only the
    endpoints are kept.
    """
    cfg.validate(grid)
    x = np.asarray(x, dtype=np.float64)
    times = grid.times
    k = grid.snap_index(cfg.t_prime)

    noisy, path = forward_noise(x, grid, float(times[k]), rng)
    if not record:
        path = path[[0, -1]]
    kmin, kmax = ring_radii(cfg, x.shape[-1])
    ring = make_ring_target(x, kmin, kmax, rng)

    xh = noisy
    rev_times, rev = [float(times[k])], [xh]
    cutoff_state, cutoff_time = xh, float(times[k])
    weights, gammas = [], []
    for i in range(k - 1, -1, -1):
        t_hi, t_lo = float(times[i + 1]), float(times[i])
        gamma = gamma_schedule(t_lo, grid.n_steps, cfg.s_churn, cfg.s_min, cfg.s_max)
        x_infl, _ = stochastic_inflate(xh, t_hi, gamma, cfg.s_noise, rng)
        d = phi(u, x_infl, t_hi, t_lo)
        w = 0.0
        if cfg.t_stop < t_lo:
            if cfg.weight_override is None:
                w = correction_weight(t_lo, grid, cfg.t_stop, cfg.beta)
            else:
                w = float(cfg.weight_override)
            if w != 0.0:
                c = correction_slope(ring, xh, t_lo, t_hi)
                d = d * (1.0 - w) + c * w
        xh = xh + (t_lo - t_hi) * d
        if cfg.t_stop < t_lo:
            cutoff_state, cutoff_time = xh, t_lo
        weights.append(w)
        gammas.append(gamma)
        if record or i == 0:
            rev_times.append(t_lo)
            rev.append(xh)

    return Trajectory(
        forward_times=times[: k + 1].copy() if record else times[[0, k]].copy(),
        forward=path,
        reverse_times=np.asarray(rev_times),
        reverse=np.stack(rev),
        purified=xh,
        cutoff_state=cutoff_state,
        cutoff_time=cutoff_time,
        target=ring,
        weights_used=weights,
        gammas_used=gammas,
    )


@dataclass(frozen=True)
class Purifier:
    """Callable bundle of config, grid and solver: ``purifier(x, rng) -> purified``."""

    cfg: NaddConfig
    grid: TimeGrid
    update: UpdateFn

    def __call__(self, x, rng):
        return purify(x, self.cfg, self.grid, self.update, rng, record=False).purified

    def trajectory(self, x, rng) -> Trajectory:
        return purify(x, self.cfg, self.grid, self.update, rng)
