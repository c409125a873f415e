"""Return-probability estimates for corrected denoising and their Monte Carlo checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .distributions import GaussianMixture
from .purify import NaddConfig, purify
from .schedule import TimeGrid, gap_bound
from .solver import UpdateFn
from .stats import wilson_interval


class InsufficientTrialsError(ValueError):
    pass


@dataclass(frozen=True)
class TheoremParams:
    n_steps: int
    horizon: float
    gap: float
    delta_star: float = 0.1
    kappa_max: float = 1.0
    kappa_min: float = 0.0

    def __post_init__(self):
        if not 0 < self.delta_star < 1:
            raise ValueError("delta_star must lie in (0, 1)")
        if self.n_steps < 1 or not self.horizon > 0 or not self.gap > 0:
            raise ValueError("n_steps, horizon and gap must be positive")

    @classmethod
    def from_grid(cls, grid: TimeGrid, **kw) -> "TheoremParams":
        return cls(n_steps=grid.n_steps, horizon=grid.t_max, gap=gap_bound(grid), **kw)

    @property
    def lam(self) -> float:
        return math.sqrt(math.log(2 * self.n_steps / self.delta_star))


@dataclass(frozen=True)
class WeightBound:
    value: float
    raw: float
    vacuous: bool


def weight_lower_bound(p: TheoremParams) -> WeightBound:
    """Smallest constant correction weight for which the upper estimate applies.

    A negative raw value means any weight works; it is clamped to 0.
    """
    raw = 1.0 - p.kappa_max / (2.0 * p.lam * math.sqrt(2.0 * p.gap) * p.horizon)
    return WeightBound(value=min(max(raw, 0.0), np.nextafter(1.0, 0.0)), raw=raw, vacuous=raw < 0)


def kappa_min_threshold(n_steps: int) -> float:
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    return 1.0 / (2.0 * math.sqrt(2.0 * math.pi) * n_steps)


@dataclass
class RecursionTrace:
    times: np.ndarray      # 0, t_1, ..., t_N
    lambdas: np.ndarray    # one per step (t_j -> t_{j+1})
    epsilons: np.ndarray   # index 0..N, epsilons[N] = 0
    deltas: np.ndarray     # index 0..N, deltas[N] = 0

    @property
    def epsilon0(self) -> float:
        return float(self.epsilons[0])

    @property
    def delta0(self) -> float:
        return float(self.deltas[0])


def run_recursion(grid: TimeGrid, weights, lambda_scale: float) -> RecursionTrace:
    """Backward recursion for the failure radius and probability.

    The chain starts at ``t_0 = 0`` so an ``N``-point grid gives ``N`` steps;
    ``weights[j]`` is applied on the step that lands at ``t_j``. Step ``j``
    uses ``lambda_j = 2 lambda sqrt(t_{j+1}^2 - t_j^2)``.
    """
    w = np.asarray(weights, dtype=np.float64)
    n = grid.n_steps
    if w.shape != (n,):
        raise ValueError(f"need {n} weights, got {w.shape}")
    tau = np.concatenate([[0.0], grid.times])
    var = tau[1:] ** 2 - tau[:-1] ** 2
    lambdas = 2.0 * lambda_scale * np.sqrt(var)
    eps = np.zeros(n + 1)
    delta = np.zeros(n + 1)
    for j in range(n - 1, -1, -1):
        eps[j] = (eps[j + 1] + lambdas[j]) * (1.0 - w[j])
        delta[j] = delta[j + 1] + 2.0 * math.exp(-lambdas[j] ** 2 / (4.0 * var[j]))
    closed = 2.0 * n * math.exp(-lambda_scale**2)
    if abs(delta[0] - closed) > 1e-12 * max(1.0, closed):
        raise AssertionError(f"delta_0 {delta[0]} != 2N exp(-lambda^2) = {closed}")
    return RecursionTrace(times=tau, lambdas=lambdas, epsilons=eps, deltas=delta)


def crude_epsilon_bound(p: TheoremParams, weight: float) -> float:
    """``2 lambda sqrt(2 Delta) T (1 - w)``, the closed-form cap on ``epsilon_0``."""
    return 2.0 * p.lam * math.sqrt(2.0 * p.gap) * p.horizon * (1.0 - weight)


@dataclass
class MonteCarloResult:
    probability: float
    successes: int
    trials: int
    ci_low: float
    ci_high: float
    bound: float
    passed: bool
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"probability": self.probability, "successes": self.successes,
                "trials": self.trials, "ci_low": self.ci_low, "ci_high": self.ci_high,
                "bound": self.bound, "passed": self.passed, **self.details}


def _theorem_config(cfg: NaddConfig, weight: float | None) -> NaddConfig:
    # the estimate is about returning to x itself: zero ring offset
    changes = {"kappa_min": 0.0, "kappa_max": 0.0, "kappa_sqrt_d": False}
    if weight is not None:
        changes["weight_override"] = float(weight)
    return replace(cfg, **changes)


def _min_active_weight(cfg: NaddConfig, grid: TimeGrid) -> float:
    if cfg.weight_override is not None:
        return cfg.weight_override
    k = grid.snap_index(cfg.t_prime)
    active = [((t - grid.t_min) / grid.t_max) ** cfg.beta for t in grid.times[:k] if t > cfg.t_stop]
    return min(active) if active else 0.0


def _cutoff_distances(x, cfg, grid, u, trials, seed):
    x = np.asarray(x, dtype=np.float64)
    batch = np.broadcast_to(x, (trials, x.size)).copy()
    traj = purify(batch, cfg, grid, u, np.random.default_rng(seed), record=False)
    cutoff = np.linalg.norm(traj.cutoff_state - x, axis=-1)
    final = np.linalg.norm(traj.purified - x, axis=-1)
    return cutoff, final, traj.cutoff_time


def monte_carlo_upper(mix: GaussianMixture, cfg: NaddConfig, grid: TimeGrid, u: UpdateFn,
                      p: TheoremParams, trials: int, seed: int, x=None,
                      weight: float | None = None, enforce_bound: bool = True,
                      use_schedule: bool = False) -> MonteCarloResult:
    """Empirical ``Pr[||x - x_cutoff|| <= kappa_max]`` against ``1 - delta*``.

    ``weight`` sets a constant correction weight; by default the weight bound
    itself is used. ``use_schedule`` keeps the power-law weights of ``cfg``
    instead. The ring offset is zero so the correction aims at ``x``.
    """
    if trials < 100:
        raise InsufficientTrialsError("need at least 100 trials")
    bound = weight_lower_bound(p)
    w = weight
    if w is None and cfg.weight_override is None and not use_schedule:
        w = bound.value
    run_cfg = _theorem_config(cfg, w)
    w_min = _min_active_weight(run_cfg, grid)
    if enforce_bound and w_min < bound.value:
        raise ValueError(f"weights {w_min} fall below the required {bound.value}")
    x = mix.means[0] if x is None else x
    cutoff, final, t_cut = _cutoff_distances(x, run_cfg, grid, u, trials, seed)
    hits = int(np.sum(cutoff <= p.kappa_max))
    lo, hi = wilson_interval(hits, trials)
    target = 1.0 - p.delta_star
    return MonteCarloResult(
        probability=hits / trials, successes=hits, trials=trials, ci_low=lo, ci_high=hi,
        bound=target, passed=lo >= target,
        details={"weight": float(w_min), "weight_bound": bound.value, "weight_bound_raw": bound.raw,
                 "vacuous": bound.vacuous, "cutoff_time": t_cut,
                 "tail_probability": float(np.mean(final <= p.kappa_max)),
                 "median_cutoff_distance": float(np.median(cutoff))},
    )


def monte_carlo_lower(mix: GaussianMixture, cfg: NaddConfig, grid: TimeGrid, u: UpdateFn,
                      p: TheoremParams, trials: int, seed: int, x=None,
                      weight: float | None = None, meta_trials: int = 200,
                      max_blocks: int = 20) -> MonteCarloResult:
    """Empirical ``Pr[||x - x_cutoff|| >= kappa_min]`` against ``1/(2 sqrt(2 pi) N)``.

    Also replays independent runs until the first success ``meta_trials``
    times and reports the mean run count next to ``5 N``. Rows still open
    after ``max_blocks`` blocks of ``5 N`` runs are censored; their count is
    then a lower bound and the check fails.
    """
    if trials < 100:
        raise InsufficientTrialsError("need at least 100 trials")
    threshold = kappa_min_threshold(p.n_steps)
    if not p.kappa_min < threshold:
        raise ValueError(f"kappa_min {p.kappa_min} must lie below {threshold}")
    run_cfg = _theorem_config(cfg, weight)
    x = mix.means[0] if x is None else x
    cutoff, _, t_cut = _cutoff_distances(x, run_cfg, grid, u, trials, seed)
    hits = int(np.sum(cutoff >= p.kappa_min))
    lo, hi = wilson_interval(hits, trials)

    rng_seed = np.random.SeedSequence([seed, 1])
    counts = np.zeros(meta_trials, dtype=np.int64)
    open_rows = np.ones(meta_trials, dtype=bool)
    block = 0
    chunk = 5 * p.n_steps
    while np.any(open_rows) and block < max_blocks:
        child = rng_seed.spawn(1)[0]
        d, _, _ = _cutoff_distances(x, run_cfg, grid, u, meta_trials * chunk, child)
        ok = (d >= p.kappa_min).reshape(meta_trials, chunk)
        first = np.where(ok.any(axis=1), ok.argmax(axis=1) + 1, chunk)
        counts[open_rows] += first[open_rows]
        open_rows &= ~ok.any(axis=1)
        block += 1
    mean_runs = float(counts.mean())
    censored = int(open_rows.sum())
    return MonteCarloResult(
        probability=hits / trials, successes=hits, trials=trials, ci_low=lo, ci_high=hi,
        bound=threshold, passed=bool(lo >= threshold and not censored
                    and mean_runs <= 5 * p.n_steps),
        details={"weight": _min_active_weight(run_cfg, grid), "cutoff_time": t_cut,
                 "mean_runs_to_success": mean_runs, "run_budget": 5 * p.n_steps,
                 "censored_rows": censored,
                 "kappa_min": p.kappa_min, "kappa_min_threshold": threshold},
    )
