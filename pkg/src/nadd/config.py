"""Experiment configuration: YAML file <-> ``ExperimentConfig``.

File grammar (all sections optional except ``experiment``)::

    experiment: fig1-bimodal        # registry name, see ``nadd list-experiments``
    seed: 0
    trials: 1000
    solver: heun                    # euler | heun
    output_dir: fig1                # relative to $NADD_OUTPUT_ROOT (default ./runs)
    mixture:
      kind: bimodal                 # bimodal | gaussian | explicit
      separation: 1.0
      variance: 0.05
      dim: 1
    grid: {n_steps: 29, t_min: 0.002, t_max: 16.0, rho: 7.0}
    nadd:
      sigma_t_prime: 16.0
      sigma_t_stop: 0.585
      beta: 0.03
      kappa_min: 0.75
      kappa_max: 1.0
      s_churn: 2.0
      s_min: 0.0
      s_max: inf
      s_noise: 1.0
    attack: {norm: l_inf, budget: 0.3, step_size: 0.05, iterations: 20, eot_samples: 1}
    denoiser: {kind: exact}
    params: {}                      # experiment-specific knobs

Unknown keys are reported, never silently dropped.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .adversarial import AttackConfig
from .distributions import GaussianMixture, LabeledMixture, bimodal
from .purify import NaddConfig
from .schedule import build_grid, TimeGrid
from .solver import METHODS

# file key -> NaddConfig attribute
NADD_KEYS = {
    "sigma_t_prime": "t_prime",
    "sigma_t_stop": "t_stop",
    "beta": "beta",
    "kappa_min": "kappa_min",
    "kappa_max": "kappa_max",
    "s_churn": "s_churn",
    "s_min": "s_min",
    "s_max": "s_max",
    "s_noise": "s_noise",
    "weight_override": "weight_override",
    "kappa_sqrt_d": "kappa_sqrt_d",
}
ATTACK_KEYS = tuple(f.name for f in fields(AttackConfig))
MIXTURE_KINDS = ("bimodal", "gaussian", "explicit")
DENOISER_KINDS = ("exact", "learned")


class ConfigError(ValueError):
    """Config could not be parsed or validated.

    ``diagnostics`` holds ``(field_path, message)`` pairs.
    """

    def __init__(self, diagnostics: list[tuple[str, str]]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(f"{k}: {m}" for k, m in diagnostics))


@dataclass(frozen=True)
class MixtureSpec:
    kind: str = "bimodal"
    separation: float = 1.0
    variance: float = 0.05
    dim: int = 1
    # explicit components (kind == "explicit")
    weights: tuple = ()
    means: tuple = ()
    variances: tuple = ()
    labels: tuple = ()

    def problems(self) -> list[tuple[str, str]]:
        out = []
        if self.kind not in MIXTURE_KINDS:
            out.append(("mixture.kind", f"unknown kind {self.kind!r}; expected one of {MIXTURE_KINDS}"))
            return out
        if self.kind in ("bimodal", "gaussian"):
            if not self.variance > 0:
                out.append(("mixture.variance", "variance must be positive"))
            if int(self.dim) < 1:
                out.append(("mixture.dim", "dim must be >= 1"))
        else:
            try:
                self.build()
            except (ValueError, TypeError) as exc:
                out.append(("mixture", str(exc)))
        return out

    def build(self) -> LabeledMixture:
        if self.kind == "bimodal":
            return bimodal(self.separation, self.variance, int(self.dim))
        if self.kind == "gaussian":
            d = int(self.dim)
            mix = GaussianMixture([1.0], np.zeros((1, d)), np.full((1, d), self.variance))
            return LabeledMixture(mix, [0])
        mix = GaussianMixture(self.weights, self.means, self.variances)
        labels = self.labels if self.labels else range(mix.n_components)
        return LabeledMixture(mix, list(labels))


@dataclass(frozen=True)
class GridSpec:
    n_steps: int = 29
    t_min: float = 0.002
    t_max: float = 16.0
    rho: float = 7.0

    def build(self) -> TimeGrid:
        return build_grid(int(self.n_steps), self.t_min, self.t_max, self.rho)


@dataclass(frozen=True)
class DenoiserSpec:
    kind: str = "exact"
    widths: tuple = (32, 32)
    train_steps: int = 3000
    batch_size: int = 512
    learning_rate: float = 0.05
    sigma_data: float = 0.5


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int = 0
    trials: int = 500
    solver: str = "heun"
    output_dir: str = ""
    mixture: MixtureSpec = field(default_factory=MixtureSpec)
    grid: GridSpec = field(default_factory=GridSpec)
    nadd: NaddConfig = field(default_factory=NaddConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    denoiser: DenoiserSpec = field(default_factory=DenoiserSpec)
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        nadd = {k: getattr(self.nadd, a) for k, a in NADD_KEYS.items()}
        nadd["s_max"] = _dump_real(nadd["s_max"])
        mixture = asdict(self.mixture)
        if self.mixture.kind != "explicit":
            for k in ("weights", "means", "variances", "labels"):
                mixture.pop(k)
        else:
            for k in ("weights", "means", "variances", "labels"):
                mixture[k] = _plain(mixture[k])
        den = asdict(self.denoiser)
        den["widths"] = list(den["widths"])
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "trials": self.trials,
            "solver": self.solver,
            "output_dir": self.output_dir,
            "mixture": mixture,
            "grid": asdict(self.grid),
            "nadd": nadd,
            "attack": _plain(asdict(self.attack)),
            "denoiser": den,
            "params": _plain(copy.deepcopy(self.params)),
        }

    def digest(self) -> str:
        """sha256 of the canonical JSON form (output_dir excluded)."""
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def _plain(v):
    if isinstance(v, (tuple, list)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, float) and v >= sys.float_info.max:
        return "inf"
    return v


def _dump_real(v):
    return "inf" if v is not None and v >= sys.float_info.max else v


def _real(v):
    if isinstance(v, str) and v.strip().lower() in ("inf", "+inf", ".inf", "infinity"):
        return sys.float_info.max
    if isinstance(v, bool):
        raise TypeError("expected a real number, got a boolean")
    v = float(v)
    if math.isinf(v) and v > 0:
        return sys.float_info.max
    return v


def _section(raw, name, allowed, diags) -> dict:
    sec = raw.get(name, {}) or {}
    if not isinstance(sec, dict):
        diags.append((name, "expected a mapping"))
        return {}
    for k in sec:
        if k not in allowed:
            diags.append((f"{name}.{k}", "unknown key"))
    return {k: v for k, v in sec.items() if k in allowed}


def _coerce(sec: dict, prefix: str, kinds: dict, diags) -> dict:
    out = {}
    for k, v in sec.items():
        conv = kinds.get(k)
        if conv is None or v is None:
            out[k] = v
            continue
        try:
            out[k] = conv(v)
        except (TypeError, ValueError) as exc:
            diags.append((f"{prefix}.{k}", f"bad value {v!r}: {exc}"))
    return out


def _pair(v):
    lo, hi = v
    return (_real(lo), _real(hi))


def _int(v):
    if isinstance(v, bool) or float(v) != int(v):
        raise ValueError("expected an integer")
    return int(v)


def _bool(v):
    if not isinstance(v, bool):
        raise ValueError("expected true or false")
    return v


def from_dict(raw: dict) -> ExperimentConfig:
    """Build and fully validate a config; raises ``ConfigError``."""
    diags: list[tuple[str, str]] = []
    if not isinstance(raw, dict):
        raise ConfigError([("<root>", "config must be a mapping")])
    top = {"experiment", "seed", "trials", "solver", "output_dir", "mixture", "grid",
           "nadd", "attack", "denoiser", "params"}
    for k in raw:
        if k not in top:
            diags.append((str(k), "unknown key"))
    if "experiment" not in raw:
        diags.append(("experiment", "missing required key"))

    mix = _coerce(_section(raw, "mixture", {f.name for f in fields(MixtureSpec)}, diags), "mixture",
                  {"separation": _real, "variance": _real, "dim": _int}, diags)
    for k in ("weights", "means", "variances", "labels"):
        if k in mix:
            mix[k] = tuple(mix[k]) if isinstance(mix[k], list) else mix[k]
    grid = _coerce(_section(raw, "grid", {f.name for f in fields(GridSpec)}, diags), "grid",
                   {"n_steps": _int, "t_min": _real, "t_max": _real, "rho": _real}, diags)
    nadd_raw = _section(raw, "nadd", set(NADD_KEYS), diags)
    nadd_kinds = {k: _real for k in NADD_KEYS}
    nadd_kinds["kappa_sqrt_d"] = _bool
    nadd = {NADD_KEYS[k]: v for k, v in _coerce(nadd_raw, "nadd", nadd_kinds, diags).items()}
    attack = _coerce(_section(raw, "attack", set(ATTACK_KEYS), diags), "attack",
                     {"budget": _real, "step_size": _real, "iterations": _int,
                      "eot_samples": _int, "fd_step": _real, "clamp": _pair}, diags)
    den = _coerce(_section(raw, "denoiser", {f.name for f in fields(DenoiserSpec)}, diags), "denoiser",
                  {"train_steps": _int, "batch_size": _int, "learning_rate": _real,
                   "sigma_data": _real}, diags)
    if "widths" in den:
        try:
            den["widths"] = tuple(_int(w) for w in den["widths"])
        except (TypeError, ValueError):
            diags.append(("denoiser.widths", "expected a list of integers"))
            den.pop("widths")
    params = raw.get("params", {}) or {}
    if not isinstance(params, dict):
        diags.append(("params", "expected a mapping"))
        params = {}
    scalars = _coerce({k: raw[k] for k in ("seed", "trials") if k in raw}, "", {"seed": _int, "trials": _int}, diags)
    if diags:
        raise ConfigError([(k.lstrip("."), m) for k, m in diags])

    cfg = ExperimentConfig(
        experiment=str(raw["experiment"]),
        seed=scalars.get("seed", 0),
        trials=scalars.get("trials", 500),
        solver=str(raw.get("solver", "heun")),
        output_dir=str(raw.get("output_dir", "") or ""),
        mixture=MixtureSpec(**mix),
        grid=GridSpec(**grid),
        nadd=NaddConfig(**nadd),
        attack=AttackConfig(**attack),
        denoiser=DenoiserSpec(**den),
        params=params,
    )
    issues = problems(cfg)
    if issues:
        raise ConfigError(issues)
    return cfg


def problems(cfg: ExperimentConfig) -> list[tuple[str, str]]:
    """Every violated invariant as ``(field_path, message)``."""
    from .experiments import EXPERIMENTS

    out = []
    exp = EXPERIMENTS.get(cfg.experiment)
    if exp is None:
        out.append(("experiment", f"unknown experiment {cfg.experiment!r}; "
                                  f"known: {', '.join(sorted(EXPERIMENTS))}"))
    if cfg.trials < 1:
        out.append(("trials", "trials must be >= 1"))
    if cfg.seed < 0:
        out.append(("seed", "seed must be non-negative"))
    if cfg.solver not in METHODS:
        out.append(("solver", f"solver must be one of {METHODS}"))
    out += cfg.mixture.problems()
    grid = None
    g = cfg.grid
    if g.n_steps < 2:
        out.append(("grid.n_steps", "n_steps must be >= 2"))
    if not g.t_min > 0:
        out.append(("grid.t_min", "t_min must be positive"))
    if not g.t_max > g.t_min:
        out.append(("grid.t_max", "t_max must exceed t_min"))
    if not g.rho >= 1:
        out.append(("grid.rho", "rho must be >= 1"))
    if not any(k.startswith("grid.") for k, _ in out):
        grid = g.build()
    inv = {a: k for k, a in NADD_KEYS.items()}
    for k, m in cfg.nadd.problems(grid):
        out.append((f"nadd.{inv.get(k, k)}", m))
    # stricter than the purifier itself: an empty ring is a degenerate setting
    if cfg.nadd.kappa_min >= cfg.nadd.kappa_max and cfg.nadd.kappa_max > 0:
        out.append(("nadd.kappa_min", "kappa_min must be strictly below kappa_max"))
    for k, m in cfg.attack.problems():
        out.append((f"attack.{k}", m))
    d = cfg.denoiser
    if d.kind not in DENOISER_KINDS:
        out.append(("denoiser.kind", f"kind must be one of {DENOISER_KINDS}"))
    if d.train_steps < 1:
        out.append(("denoiser.train_steps", "train_steps must be >= 1"))
    if d.batch_size < 1:
        out.append(("denoiser.batch_size", "batch_size must be >= 1"))
    if not d.learning_rate > 0:
        out.append(("denoiser.learning_rate", "learning_rate must be positive"))
    if not d.sigma_data > 0:
        out.append(("denoiser.sigma_data", "sigma_data must be positive"))
    if not d.widths or any(w < 1 for w in d.widths):
        out.append(("denoiser.widths", "widths must be positive integers"))
    if exp is not None and not out:
        out += exp.problems(cfg)
    return out


def parse(text: str, source: str = "<string>") -> dict:
    """YAML text -> raw mapping; parse errors carry line and column."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError([(f"{source}:{where}", f"parse error: {problem}")]) from None
    if raw is None:
        raw = {}
    return raw


def load(path) -> ExperimentConfig:
    path = Path(path)
    return from_dict(parse(path.read_text(), str(path)))


def loads(text: str) -> ExperimentConfig:
    return from_dict(parse(text))


def dumps(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)


def validate_config(path) -> list[tuple[str, str]]:
    """Diagnostics for a config file; an empty list means clean."""
    path = Path(path)
    if not path.exists():
        return [(str(path), "file not found")]
    try:
        load(path)
    except ConfigError as exc:
        return exc.diagnostics
    return []
