"""PGD (l_inf / l2) with EOT against a smooth Bayes classifier, optionally
through a stochastic purifier, plus robustness evaluation."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import log_softmax, softmax

from . import distributions
from .distributions import LabeledMixture

NORMS = ("l_inf", "l2")
TARGETS = ("classifier_only", "full_pipeline_bpda")
GRADIENTS = ("bpda", "full")


@dataclass(frozen=True)
class AttackConfig:
    norm: str = "l_inf"
    budget: float = 0.3
    step_size: float = 0.05
    iterations: int = 20
    eot_samples: int = 1
    attack_target: str = "full_pipeline_bpda"
    attack_gradient: str = "bpda"
    clamp: tuple[float, float] | None = None
    fd_step: float = 1e-4

    def problems(self) -> list[tuple[str, str]]:
        out = []
        if self.norm not in NORMS:
            out.append(("norm", f"norm must be one of {NORMS}"))
        if not self.budget > 0:
            out.append(("budget", "budget must be positive"))
        if not self.step_size > 0:
            out.append(("step_size", "step_size must be positive"))
        if self.iterations < 1:
            out.append(("iterations", "iterations must be >= 1"))
        if self.eot_samples < 1:
            out.append(("eot_samples", "eot_samples must be >= 1"))
        if self.attack_target not in TARGETS:
            out.append(("attack_target", f"attack_target must be one of {TARGETS}"))
        if self.attack_gradient not in GRADIENTS:
            out.append(("attack_gradient", f"attack_gradient must be one of {GRADIENTS}"))
        if self.clamp is not None and not self.clamp[0] < self.clamp[1]:
            out.append(("clamp", "clamp must be an increasing pair"))
        return out

    def validate(self):
        issues = self.problems()
        if issues:
            raise ValueError("; ".join(f"{k}: {m}" for k, m in issues))


class SmoothClassifier:
    """Softmax over class log-densities divided by ``temperature``."""

    def __init__(self, lmix: LabeledMixture, temperature: float = 1.0):
        if not temperature > 0:
            raise ValueError("temperature must be positive")
        self.lmix = lmix
        self.temperature = float(temperature)

    @property
    def n_classes(self) -> int:
        return self.lmix.n_classes

    def logits(self, x):
        return distributions.class_log_densities(self.lmix, x) / self.temperature

    def log_probs(self, x):
        return log_softmax(self.logits(x), axis=-1)

    def predict(self, x):
        return np.argmax(self.logits(x), axis=-1)

    def logit_grads(self, x):
        """Gradient of every class logit; shape ``(..., C, d)``."""
        mix = self.lmix.mixture
        terms, diff, var = distributions._component_terms(mix, x, 0.0)
        comp_grad = -diff / var  # (..., K, d)
        out = []
        for c in range(self.n_classes):
            members = self.lmix.labels == c
            t = terms[..., members]
            r = softmax(t, axis=-1)
            out.append(np.sum(r[..., None] * comp_grad[..., members, :], axis=-2))
        return np.stack(out, axis=-2) / self.temperature

    def loss(self, x, label):
        """Cross-entropy of the true ``label``."""
        lp = self.log_probs(x)
        return -np.take_along_axis(lp, np.asarray(label)[..., None], axis=-1)[..., 0]

    def loss_grad(self, x, label):
        p = np.exp(self.log_probs(x))
        onehot = np.eye(self.n_classes)[np.asarray(label)]
        return np.einsum("...c,...cd->...d", p - onehot, self.logit_grads(x))


def project(delta, norm: str, budget: float):
    """Project perturbations back into the ``norm`` ball of radius ``budget``."""
    if norm == "l_inf":
        return np.clip(delta, -budget, budget)
    n = np.linalg.norm(delta, axis=-1, keepdims=True)
    scale = np.where(n > budget, budget / np.where(n > 0, n, 1.0), 1.0)
    delta = delta * scale
    # radial rescaling can overshoot by an ulp
    down = np.nextafter(1.0, 0.0)
    for _ in range(8):
        over = np.linalg.norm(delta, axis=-1) > budget
        if not np.any(over):
            break
        delta = np.where(over[..., None], delta * down, delta)
    return delta


def perturbation_norm(delta, norm: str):
    if norm == "l_inf":
        return np.max(np.abs(delta), axis=-1)
    return np.linalg.norm(delta, axis=-1)


def _attack_gradient(x_adv, label, clf: SmoothClassifier, cfg: AttackConfig, pipeline, rng):
    if cfg.attack_target == "classifier_only" or pipeline is None:
        return clf.loss_grad(x_adv, label)
    grads = np.zeros_like(x_adv)
    for _ in range(cfg.eot_samples):
        if cfg.attack_gradient == "bpda":
            purified = pipeline(x_adv, rng)
            grads += clf.loss_grad(purified, label)
        else:
            grads += _finite_difference_grad(x_adv, label, clf, pipeline, rng, cfg.fd_step)
    return grads / cfg.eot_samples


def _finite_difference_grad(x, label, clf, pipeline, rng, h):
    """Central differences of the pipeline loss with shared noise draws."""
    d = x.shape[-1]
    state = copy.deepcopy(rng)
    grad = np.zeros_like(x)
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        plus = clf.loss(pipeline(x + e, copy.deepcopy(state)), label)
        minus = clf.loss(pipeline(x - e, copy.deepcopy(state)), label)
        grad[..., j] = (plus - minus) / (2 * h)
    # advance the caller's stream exactly once per EOT draw
    pipeline(x, rng)
    return grad


def pgd_attack(x, label, clf: SmoothClassifier, cfg: AttackConfig, pipeline: Callable | None = None,
               rng=None, history: list | None = None):
    """Untargeted PGD from ``x``; returns ``x + delta`` with ``delta`` in the budget ball.

    ``pipeline(x, rng)`` is the (stochastic) purifier. Under BPDA the
    forward pass runs the purifier and the backward pass treats it as the
    identity; ``attack_gradient = "full"`` differentiates through it.
    """
    cfg.validate()
    rng = np.random.default_rng(rng)
    x = np.asarray(x, dtype=np.float64)
    label = np.asarray(label)
    delta = np.zeros_like(x)
    for _ in range(cfg.iterations):
        x_adv = x + delta
        g = _attack_gradient(x_adv, label, clf, cfg, pipeline, rng)
        if cfg.norm == "l_inf":
            step = cfg.step_size * np.sign(g)
        else:
            gn = np.linalg.norm(g, axis=-1, keepdims=True)
            step = cfg.step_size * g / np.where(gn > 0, gn, 1.0)
        delta = project(delta + step, cfg.norm, cfg.budget)
        if cfg.clamp is not None:
            delta = np.clip(x + delta, *cfg.clamp) - x
            delta = project(delta, cfg.norm, cfg.budget)
        if history is not None:
            history.append(delta.copy())
    return x + delta


@dataclass
class RobustnessReport:
    standard_accuracy: float
    robust_accuracy: float
    trials: int
    seed: int
    records: dict = field(default_factory=dict)

    @property
    def robust_correct(self) -> int:
        return int(np.sum(self.records["pred_purified"] == self.records["label"]))

    @property
    def standard_correct(self) -> int:
        return int(np.sum(self.records["pred_clean_purified"] == self.records["label"]))


def block_rng(seed: int, block: int, stream: int) -> np.random.Generator:
    """Independent generator for trial block ``block`` and sub-stream ``stream``."""
    return np.random.default_rng([int(seed), int(block), int(stream)])


def evaluate_robustness(lmix: LabeledMixture, clf: SmoothClassifier, purifier: Callable | None,
                        attack: AttackConfig, n_trials: int, seed: int,
                        block_size: int = 250) -> RobustnessReport:
    """Standard and robust accuracy over ``n_trials`` labelled draws.

    Trials are processed in fixed blocks, each with its own generators, so
    the result depends only on ``(seed, n_trials, block_size)``.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    cols = {k: [] for k in ("label", "pred_clean", "pred_adv", "pred_clean_purified",
                            "pred_purified", "l2_dist_purified_to_clean")}
    inputs, advs, purifieds = [], [], []
    n_blocks = -(-n_trials // block_size)
    for b in range(n_blocks):
        count = min(block_size, n_trials - b * block_size)
        x, comp = distributions.sample(lmix.mixture, block_rng(seed, b, 0), count,
                                       return_components=True)
        label = lmix.labels[comp]
        x_adv = pgd_attack(x, label, clf, attack, purifier, block_rng(seed, b, 1))
        if purifier is None:
            clean_out, adv_out = x, x_adv
        else:
            clean_out = purifier(x, block_rng(seed, b, 2))
            adv_out = purifier(x_adv, block_rng(seed, b, 3))
        cols["label"].append(label)
        cols["pred_clean"].append(clf.predict(x))
        cols["pred_clean_purified"].append(clf.predict(clean_out))
        cols["pred_adv"].append(clf.predict(x_adv))
        cols["pred_purified"].append(clf.predict(adv_out))
        cols["l2_dist_purified_to_clean"].append(np.linalg.norm(adv_out - x, axis=-1))
        inputs.append(x)
        advs.append(x_adv)
        purifieds.append(adv_out)
    records = {k: np.concatenate(v) for k, v in cols.items()}
    records["trial"] = np.arange(n_trials)
    records["input"] = np.concatenate(inputs)
    records["adversarial"] = np.concatenate(advs)
    records["purified"] = np.concatenate(purifieds)
    std = float(np.mean(records["pred_clean_purified"] == records["label"]))
    rob = float(np.mean(records["pred_purified"] == records["label"]))
    return RobustnessReport(std, rob, n_trials, seed, records)
