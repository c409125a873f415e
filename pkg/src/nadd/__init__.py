"""Noise-amplified diffusion purification at toy scale.

Exact-score diffusion on Gaussian mixtures, ring-proximity-corrected
reverse sampling with stochastic churn, PGD/EOT attacks and Monte Carlo
checks of the return-probability bounds.
"""
from .adversarial import AttackConfig, SmoothClassifier, evaluate_robustness, pgd_attack
from .denoiser import ExactDenoiser, LearnedDenoiser, train
from .distributions import GaussianMixture, LabeledMixture, bimodal, exact_denoiser
from .purify import NaddConfig, Purifier, purify
from .schedule import TimeGrid, build_grid
from .solver import UpdateFn

__version__ = "0.1.0"

__all__ = [
    "AttackConfig", "SmoothClassifier", "evaluate_robustness", "pgd_attack",
    "ExactDenoiser", "LearnedDenoiser", "train",
    "GaussianMixture", "LabeledMixture", "bimodal", "exact_denoiser",
    "NaddConfig", "Purifier", "purify", "TimeGrid", "build_grid", "UpdateFn",
]
