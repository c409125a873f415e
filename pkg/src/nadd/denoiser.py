"""Denoisers ``D(x; sigma)``: the exact mixture posterior mean, or a small
preconditioned network trained on the denoising loss."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import distributions
from .distributions import GaussianMixture
from .schedule import TimeGrid


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExactDenoiser:
    mixture: GaussianMixture
    kind: str = field(default="exact", init=False)

    @property
    def dim(self) -> int:
        return self.mixture.dim

    def __call__(self, x, sigma: float):
        return distributions.exact_denoiser(self.mixture, x, sigma)


@dataclass(frozen=True)
class Preconditioning:
    sigma_data: float = 0.5

    def c_skip(self, sigma):
        return self.sigma_data**2 / (np.square(sigma) + self.sigma_data**2)

    def c_out(self, sigma):
        return sigma * self.sigma_data / np.sqrt(np.square(sigma) + self.sigma_data**2)

    def c_in(self, sigma):
        return 1.0 / np.sqrt(np.square(sigma) + self.sigma_data**2)

    @staticmethod
    def c_noise(sigma):
        # log(0) is never fed through the network: c_out(0) = 0 short-circuits it
        with np.errstate(divide="ignore"):
            return np.log(sigma) / 4.0


class MiniNetwork:
    """Fully connected tanh network ``R^(d+1) -> R^d`` stored as one flat vector."""

    def __init__(self, dim: int, widths=(32, 32), seed: int = 0, params=None):
        self.dim = int(dim)
        self.widths = tuple(int(w) for w in widths)
        self.seed = int(seed)
        sizes = [self.dim + 1, *self.widths, self.dim]
        self._shapes = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            self._shapes += [(fan_in, fan_out), (fan_out,)]
        n_params = sum(int(np.prod(s)) for s in self._shapes)
        if params is None:
            rng = np.random.default_rng(seed)
            chunks = []
            for shape in self._shapes:
                if len(shape) == 2:
                    chunks.append(rng.standard_normal(shape).ravel() / np.sqrt(shape[0]))
                else:
                    chunks.append(np.zeros(shape))
            params = np.concatenate(chunks)
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (n_params,):
            raise ValueError(f"expected {n_params} parameters, got {params.shape}")
        self.params = params

    @property
    def n_params(self) -> int:
        return int(self.params.size)

    def _unpack(self, params):
        out, pos = [], 0
        for shape in self._shapes:
            size = int(np.prod(shape))
            out.append(params[pos:pos + size].reshape(shape))
            pos += size
        return out

    def forward(self, inputs, params=None, keep=False):
        layers = self._unpack(self.params if params is None else params)
        h = inputs
        cache = [h]
        n_layers = len(layers) // 2
        for j in range(n_layers):
            W, b = layers[2 * j], layers[2 * j + 1]
            h = h @ W + b
            if j < n_layers - 1:
                h = np.tanh(h)
            cache.append(h)
        return (h, cache) if keep else h

    def backward(self, cache, grad_out, params=None):
        """Gradient of ``sum(grad_out * output)`` with respect to the flat parameters."""
        layers = self._unpack(self.params if params is None else params)
        n_layers = len(layers) // 2
        grads = [None] * len(layers)
        g = grad_out
        for j in reversed(range(n_layers)):
            if j < n_layers - 1:
                g = g * (1.0 - cache[j + 1] ** 2)
            grads[2 * j] = cache[j].T @ g
            grads[2 * j + 1] = g.sum(axis=0)
            g = g @ layers[2 * j].T
        return np.concatenate([gr.ravel() for gr in grads])


@dataclass
class LearnedDenoiser:
    network: MiniNetwork
    precond: Preconditioning = field(default_factory=Preconditioning)
    final_loss: float = float("nan")
    kind: str = field(default="learned", init=False)

    @property
    def dim(self) -> int:
        return self.network.dim

    def _inputs(self, x, sigma):
        sig = np.broadcast_to(np.asarray(sigma, dtype=np.float64), x.shape[:-1])
        return np.concatenate([x * self.precond.c_in(sig)[..., None],
                               self.precond.c_noise(sig)[..., None]], axis=-1), sig

    def __call__(self, x, sigma: float, params=None):
        if np.any(np.asarray(sigma) < 0):
            raise ValueError("sigma must be non-negative")
        x = np.asarray(x, dtype=np.float64)
        if np.all(np.asarray(sigma) == 0):
            return x.copy()
        squeeze = x.ndim == 1
        xb = np.atleast_2d(x)
        inputs, sig = self._inputs(xb, sigma)
        flat = inputs.reshape(-1, inputs.shape[-1])
        f = self.network.forward(flat, params).reshape(xb.shape)
        out = self.precond.c_skip(sig)[..., None] * xb + self.precond.c_out(sig)[..., None] * f
        return out[0] if squeeze else out

    def loss_and_grad(self, x0, sigma, noise, params=None):
        """Denoising loss ``mean(lambda(sigma) * ||D(x0 + sigma n) - x0||^2)`` and its gradient.

        ``lambda = 1 / c_out^2`` equalises the per-sigma target scale.
        """
        pc = self.precond
        xt = x0 + sigma[:, None] * noise
        inputs, _ = self._inputs(xt, sigma)
        f, cache = self.network.forward(inputs, params, keep=True)
        target = (x0 - pc.c_skip(sigma)[:, None] * xt) / pc.c_out(sigma)[:, None]
        resid = f - target
        n = x0.shape[0]
        loss = float(np.sum(resid**2) / n)
        grad = self.network.backward(cache, 2.0 * resid / n, params)
        return loss, grad


def sample_training_sigmas(rng, count: int, t_min: float, t_max: float):
    """Log-uniform noise levels on ``[t_min, t_max]``."""
    return np.exp(rng.uniform(np.log(t_min), np.log(t_max), size=count))


def train(mix: GaussianMixture, grid: TimeGrid, widths=(32, 32), steps: int = 4000,
          seed: int = 0, batch_size: int = 512, learning_rate: float = 0.05,
          sigma_data: float = 0.5, log_every: int = 0) -> LearnedDenoiser:
    """Plain fixed-step SGD on the preconditioned denoising loss."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    rng = np.random.default_rng(seed)
    den = LearnedDenoiser(MiniNetwork(mix.dim, widths, seed), Preconditioning(sigma_data))
    loss = float("nan")
    for step in range(steps):
        x0 = distributions.sample(mix, rng, batch_size)
        sigma = sample_training_sigmas(rng, batch_size, grid.t_min, grid.t_max)
        noise = rng.standard_normal(x0.shape)
        loss, grad = den.loss_and_grad(x0, sigma, noise)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise TrainingError(f"training diverged at step {step}")
        den.network.params -= learning_rate * grad
        if log_every and step % log_every == 0:
            print(f"step {step:6d} loss {loss:.5f}")
    den.final_loss = loss
    return den


_MAGIC = b"NADDNET1"


def save_network(den: LearnedDenoiser, path) -> None:
    """Flat little-endian float64 parameters after a JSON header (dim, widths, seed)."""
    net = den.network
    header = json.dumps({"dim": net.dim, "widths": list(net.widths), "seed": net.seed,
                         "sigma_data": den.precond.sigma_data,
                         "n_params": net.n_params}).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(net.params.astype("<f8").tobytes())


def load_network(path) -> LearnedDenoiser:
    raw = Path(path).read_bytes()
    if raw[:8] != _MAGIC:
        raise ValueError(f"{path} is not a saved network")
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12:12 + hlen])
    params = np.frombuffer(raw[12 + hlen:], dtype="<f8").astype(np.float64)
    net = MiniNetwork(header["dim"], header["widths"], header["seed"], params=params)
    return LearnedDenoiser(net, Preconditioning(header["sigma_data"]))
