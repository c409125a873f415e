"""Diagonal Gaussian mixtures with exact noisy scores and posterior means.

All functions accept a single sample of shape ``(d,)`` or a batch of shape
``(..., d)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import logsumexp


class DimensionTooLargeError(ValueError):
    pass


@dataclass(frozen=True)
class GaussianMixture:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        mu = np.asarray(self.means, dtype=np.float64)
        if mu.ndim == 1:
            mu = mu[:, None]
        var = np.asarray(self.variances, dtype=np.float64)
        if var.ndim == 0:
            var = np.full_like(mu, float(var))
        elif var.ndim == 1:
            # one isotropic variance per component
            var = np.repeat(var[:, None], mu.shape[1], axis=1)
        if w.shape[0] != mu.shape[0] or var.shape != mu.shape:
            raise ValueError("weights, means and variances disagree in shape")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be non-negative and sum to 1")
        if np.any(var <= 0):
            raise ValueError("component variances must be strictly positive")
        for arr in (w, mu, var):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)

    @property
    def dim(self) -> int:
        return int(self.means.shape[1])

    @property
    def n_components(self) -> int:
        return int(self.means.shape[0])


@dataclass(frozen=True)
class LabeledMixture:
    mixture: GaussianMixture
    labels: np.ndarray = field(default=None)

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.shape != (self.mixture.n_components,):
            raise ValueError("need exactly one label per component")
        if np.any(labels < 0):
            raise ValueError("labels must be non-negative class indices")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1


def bimodal(separation: float = 1.0, variance: float = 0.05, dim: int = 1) -> LabeledMixture:
    """Two equal-weight modes at ``-separation`` and ``+separation`` along axis 0."""
    means = np.zeros((2, dim))
    means[0, 0], means[1, 0] = -separation, separation
    mix = GaussianMixture(weights=[0.5, 0.5], means=means, variances=[variance, variance])
    return LabeledMixture(mix, labels=[0, 1])


def sample(mix: GaussianMixture, rng_seed, count: int, return_components: bool = False):
    """I.i.d. draws; ``rng_seed`` may be an int, a seed sequence or a Generator."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(rng_seed)
    comp = rng.choice(mix.n_components, size=count, p=mix.weights)
    z = rng.standard_normal((count, mix.dim))
    x = mix.means[comp] + np.sqrt(mix.variances[comp]) * z
    if return_components:
        return x, comp
    return x


def _component_terms(mix: GaussianMixture, x, sigma):
    """Per-component log-weights + log-densities and total variances."""
    x = np.asarray(x, dtype=np.float64)
    var = mix.variances + float(sigma) ** 2  # (K, d)
    diff = x[..., None, :] - mix.means  # (..., K, d)
    log_n = -0.5 * np.sum(diff**2 / var + np.log(2.0 * np.pi * var), axis=-1)
    with np.errstate(divide="ignore"):
        log_w = np.log(mix.weights)
    return log_w + log_n, diff, var


def log_density(mix: GaussianMixture, x, sigma: float = 0.0):
    """log of the data density convolved with N(0, sigma^2 I)."""
    terms, _, _ = _component_terms(mix, x, sigma)
    return logsumexp(terms, axis=-1)


def responsibilities(mix: GaussianMixture, x, sigma: float):
    terms, _, _ = _component_terms(mix, x, sigma)
    return np.exp(terms - logsumexp(terms, axis=-1, keepdims=True))


def score(mix: GaussianMixture, x, sigma: float):
    """Gradient of ``log_density(mix, x, sigma)`` with respect to ``x``."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    terms, diff, var = _component_terms(mix, x, sigma)
    resp = np.exp(terms - logsumexp(terms, axis=-1, keepdims=True))
    return np.sum(resp[..., None] * (-diff / var), axis=-2)


def exact_denoiser(mix: GaussianMixture, x, sigma: float):
    """Posterior mean ``E[x_0 | x_sigma = x]``, i.e. ``x + sigma^2 * score``."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    x = np.asarray(x, dtype=np.float64)
    if sigma == 0:
        return x.copy()
    return x + float(sigma) ** 2 * score(mix, x, sigma)


def quadrature_oracle(mix: GaussianMixture, x, sigma: float, grid_points: int = 2001):
    """Posterior mean by brute-force trapezoidal integration (d <= 2).

    Integrates ``x0 * w_k N(x0; mu_k, s_k^2) N(x; x0, sigma^2)`` one component
    at a time on a tensor grid spanning twelve widths around the peak of that
    component's integrand, then combines components in log space so tiny
    ``sigma`` neither under-resolves nor underflows.
    """
    d = mix.dim
    if d > 2:
        raise DimensionTooLargeError(f"quadrature oracle supports d <= 2, got {d}")
    if grid_points < 1000:
        raise ValueError("grid_points must be >= 1000")
    if sigma <= 0:
        raise ValueError("the oracle needs sigma > 0")
    x = np.asarray(x, dtype=np.float64).reshape(d)
    v = sigma**2
    s2 = mix.variances
    # only the box placement uses the product-of-Gaussians shape
    centre = (v * mix.means + s2 * x) / (s2 + v)
    width = np.sqrt(s2 * v / (s2 + v))

    def log_gauss(u, mean, var):
        return -0.5 * (u - mean) ** 2 / var - 0.5 * np.log(2 * np.pi * var)

    log_mass = np.empty(mix.n_components)
    means = np.empty((mix.n_components, d))
    for k in range(mix.n_components):
        axes = [np.linspace(centre[k, j] - 12 * width[k, j], centre[k, j] + 12 * width[k, j], grid_points)
                for j in range(d)]
        logs = [log_gauss(ax, mix.means[k, j], s2[k, j]) + log_gauss(x[j], ax, v)
                for j, ax in enumerate(axes)]
        peak = sum(float(l.max()) for l in logs)
        f = np.exp(logs[0] - logs[0].max())
        for l in logs[1:]:
            f = np.multiply.outer(f, np.exp(l - l.max()))
        total = f
        for ax in reversed(axes):
            total = trapezoid(total, ax, axis=-1)
        for j in range(d):
            coord = np.expand_dims(axes[j], tuple(i for i in range(d) if i != j))
            moment = f * coord
            for ax in reversed(axes):
                moment = trapezoid(moment, ax, axis=-1)
            means[k, j] = moment / total
        log_mass[k] = np.log(mix.weights[k]) + peak + np.log(total) if mix.weights[k] > 0 else -np.inf
    post = np.exp(log_mass - log_mass.max())
    return post @ means / post.sum()


def bayes_classifier(lmix: LabeledMixture, x):
    """Maximum a-posteriori class; ties go to the lowest class index."""
    return np.argmax(class_log_densities(lmix, x), axis=-1)


def class_log_densities(lmix: LabeledMixture, x, sigma: float = 0.0):
    """``log sum_{k in c} w_k N(x; mu_k, s_k^2)`` for every class ``c``."""
    terms, _, _ = _component_terms(lmix.mixture, x, sigma)
    out = []
    for c in range(lmix.n_classes):
        members = lmix.labels == c
        if not np.any(members):
            out.append(np.full(terms.shape[:-1], -np.inf))
        else:
            out.append(logsumexp(terms[..., members], axis=-1))
    return np.stack(out, axis=-1)
