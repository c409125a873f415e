"""Small statistical helpers shared by the experiments and the acceptance suite."""
from __future__ import annotations

import numpy as np
from scipy.stats import binomtest
from statsmodels.stats.proportion import proportions_ztest


def wilson_interval(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    ci = binomtest(int(successes), int(trials)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def two_proportion_greater(k1: int, n1: int, k2: int, n2: int, alpha: float = 0.05) -> dict:
    """One-sided z-test of ``p1 > p2``; pooled variance."""
    p1, p2 = k1 / n1, k2 / n2
    if k1 + k2 in (0, n1 + n2):
        # both samples all-fail or all-pass: no evidence either way
        return {"p1": p1, "p2": p2, "z": 0.0, "p_value": 1.0, "passed": False}
    z, p = proportions_ztest([k1, k2], [n1, n2], alternative="larger")
    return {"p1": p1, "p2": p2, "z": float(z), "p_value": float(p), "passed": bool(p < alpha)}


def interior_maximum(successes, trials, alpha: float = 0.05) -> dict:
    """Does a sweep of success counts peak strictly inside the range?

    The argmax must be an interior point and beat both endpoints with a
    one-sided two-proportion test at level ``alpha``.
    """
    k = np.asarray(successes, dtype=int)
    n = np.broadcast_to(np.asarray(trials, dtype=int), k.shape)
    if k.size < 3:
        raise ValueError("need at least three sweep points")
    rates = k / n
    i = int(np.argmax(rates))
    interior = 0 < i < k.size - 1
    left = two_proportion_greater(k[i], n[i], k[0], n[0], alpha)
    right = two_proportion_greater(k[i], n[i], k[-1], n[-1], alpha)
    return {"argmax": i, "interior": interior, "vs_first": left, "vs_last": right,
            "passed": bool(interior and left["passed"] and right["passed"])}
