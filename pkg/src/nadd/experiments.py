"""Experiment registry and runner.

Each experiment maps an ``ExperimentConfig`` to tables (written as CSV), a
summary (written as JSON) and a list of checks. A check marked ``hard``
that fails makes the run exit with the assertion status.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import denoiser as den_mod
from .adversarial import SmoothClassifier, evaluate_robustness
from .distributions import bayes_classifier, exact_denoiser
from .purify import NaddConfig, Purifier, purify
from .schedule import TimeGrid
from .solver import UpdateFn
from .stats import interior_maximum, two_proportion_greater, wilson_interval
from .theory import (TheoremParams, kappa_min_threshold, monte_carlo_lower, monte_carlo_upper,
                     run_recursion, weight_lower_bound)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
OUTPUT_ROOT_ENV = "NADD_OUTPUT_ROOT"

# stable CSV layouts; plot scripts address columns by name
COLUMNS = {
    "flips": ["setting", "trial", "start_mode", "end_mode", "flipped"],
    "trajectories": ["setting", "trial", "phase", "step", "t", "x0", "x1"],
    "sweep": ["knob", "value", "t_stop_used", "trials", "standard_accuracy", "standard_ci_low",
              "standard_ci_high", "robust_accuracy", "robust_ci_low", "robust_ci_high", "robust_correct"],
    "robustness": ["budget", "defence", "trials", "standard_accuracy", "robust_accuracy",
                   "robust_ci_low", "robust_ci_high", "robust_correct"],
    "theorem": ["check", "probability", "successes", "trials", "ci_low", "ci_high", "bound", "passed"],
    "denoiser_gap": ["x", "sigma", "exact", "learned", "sq_gap"],
    "endpoints": ["trial", "label", "pred_purified", "l2_dist_purified_to_clean"],
}


class ExperimentFailure(RuntimeError):
    """The experiment could not complete (as opposed to a failed check)."""


@dataclass
class Result:
    tables: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)

    def check(self, name: str, passed: bool, hard: bool = True, **detail):
        self.checks.append({"name": name, "passed": bool(passed), "hard": hard, **_jsonable(detail)})


@dataclass(frozen=True)
class Experiment:
    name: str
    run: Callable
    description: str
    defaults: dict = field(default_factory=dict)
    plot_kind: str = "sweep"
    check_params: Callable | None = None

    def params(self, cfg) -> dict:
        return {**self.defaults, **cfg.params}

    def problems(self, cfg) -> list[tuple[str, str]]:
        out = [(f"params.{k}", "unknown parameter") for k in cfg.params if k not in self.defaults]
        if self.check_params is not None and not out:
            out += self.check_params(cfg, self.params(cfg))
        return out


@dataclass
class RunRecord:
    config_hash: str
    input_hash: str
    run_dir: Path
    csv_paths: dict
    summary_path: Path
    duration: float
    status: str


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    return v


def _update(cfg, mixture, grid: TimeGrid, run_dir: Path | None = None) -> UpdateFn:
    if cfg.denoiser.kind == "exact":
        d = den_mod.ExactDenoiser(mixture)
    else:
        d = _train(cfg, mixture, grid)
        if run_dir is not None:
            den_mod.save_network(d, run_dir / "denoiser.bin")
    return UpdateFn(cfg.solver, d)


def _train(cfg, mixture, grid):
    s = cfg.denoiser
    return den_mod.train(mixture, grid, widths=s.widths, steps=s.train_steps, seed=cfg.seed,
                         batch_size=s.batch_size, learning_rate=s.learning_rate,
                         sigma_data=s.sigma_data)


def _no_correction(nadd: NaddConfig, grid: TimeGrid) -> NaddConfig:
    """Move the cutoff just below t' so no reverse step is corrected."""
    k = grid.snap_index(nadd.t_prime)
    return nadd.replace(t_stop=float(grid.times[k - 1]))


def _trajectory_rows(setting, trial, traj):
    rows = []
    for phase, times, states in (("forward", traj.forward_times, traj.forward),
                                 ("reverse", traj.reverse_times, traj.reverse)):
        for step, (t, x) in enumerate(zip(times, states)):
            x = np.atleast_1d(x)
            rows.append({"setting": setting, "trial": trial, "phase": phase, "step": step,
                         "t": float(t), "x0": float(x[0]),
                         "x1": float(x[1]) if x.size > 1 else ""})
    return rows


def _check_grid_time(name, value, grid):
    if not grid.t_min < value <= grid.t_max:
        return [(f"params.{name}", f"{value} lies outside the grid ({grid.t_min}, {grid.t_max}]")]
    return []


# fig1-bimodal

def run_fig1(cfg, params, run_dir) -> Result:
    lmix = cfg.mixture.build()
    mix = lmix.mixture
    grid = cfg.grid.build()
    u = _update(cfg, mix, grid, run_dir)
    comp = int(params["start_component"])
    start_mode = int(lmix.labels[comp])
    n = cfg.trials
    rng = np.random.default_rng([cfg.seed, 0])
    x = mix.means[comp] + np.sqrt(mix.variances[comp]) * rng.standard_normal((n, mix.dim))

    scale = float(params["kappa_scale"])
    corrected = cfg.nadd.replace(kappa_min=cfg.nadd.kappa_min * scale,
                                 kappa_max=cfg.nadd.kappa_max * scale)
    settings = {"uncorrected": _no_correction(cfg.nadd, grid), "corrected": corrected}
    if scale != 1.0:
        settings["corrected_unscaled_ring"] = cfg.nadd

    res = Result()
    flips = {}
    rows = []
    for s, (name, ncfg) in enumerate(settings.items()):
        out = purify(x, ncfg, grid, u, np.random.default_rng([cfg.seed, 1, s]), record=False).purified
        end = bayes_classifier(lmix, out)
        flipped = end != start_mode
        flips[name] = int(flipped.sum())
        rows += [{"setting": name, "trial": i, "start_mode": start_mode, "end_mode": int(end[i]),
                  "flipped": int(flipped[i])} for i in range(n)]
    traj_rows = []
    for s, name in enumerate(("uncorrected", "corrected")):
        trng = np.random.default_rng([cfg.seed, 2, s])
        for i in range(int(params["trajectories"])):
            traj = purify(x[i], settings[name], grid, u, trng)
            traj_rows += _trajectory_rows(name, i, traj)
    res.tables = {"flips": rows, "trajectories": traj_rows}

    rates = {k: v / n for k, v in flips.items()}
    test = two_proportion_greater(flips["uncorrected"], n, flips["corrected"], n)
    res.summary = {"trials": n, "start_mode": start_mode, "flip_counts": flips, "flip_rates": rates,
                   "kappa_scale": scale, "z_test": test}
    res.check("uncorrected_flip_rate_exceeds_corrected", test["passed"], p_value=test["p_value"])
    res.check("corrected_flip_rate_below_5pct", rates["corrected"] < 0.05, hard=False,
              value=rates["corrected"])
    return res


# robustness and ablations

def _robustness(cfg, params, nadd: NaddConfig | None, attack=None, grid=None, u=None):
    lmix = cfg.mixture.build()
    clf = SmoothClassifier(lmix, float(params.get("temperature", 1.0)))
    grid = grid or cfg.grid.build()
    purifier = None
    if nadd is not None:
        u = u or _update(cfg, lmix.mixture, grid)
        purifier = Purifier(nadd, grid, u)
    return evaluate_robustness(lmix, clf, purifier, attack or cfg.attack, cfg.trials, cfg.seed)


def _acc_row(rep):
    k, n = rep.robust_correct, rep.trials
    lo, hi = wilson_interval(k, n)
    slo, shi = wilson_interval(rep.standard_correct, n)
    return {"trials": n, "standard_accuracy": rep.standard_accuracy, "standard_ci_low": slo,
            "standard_ci_high": shi, "robust_accuracy": rep.robust_accuracy,
            "robust_ci_low": lo, "robust_ci_high": hi, "robust_correct": k}


def run_robustness_sweep(cfg, params, run_dir) -> Result:
    lmix = cfg.mixture.build()
    grid = cfg.grid.build()
    u = _update(cfg, lmix.mixture, grid, run_dir)
    res = Result()
    rows = []
    for b in params["budgets"]:
        attack = replace(cfg.attack, budget=float(b), step_size=float(b) * params["step_fraction"])
        base = _robustness(cfg, params, None, attack, grid)
        nadd = _robustness(cfg, params, cfg.nadd, attack, grid, u)
        for name, rep in (("none", base), ("nadd", nadd)):
            r = _acc_row(rep)
            rows.append({"budget": float(b), "defence": name, **{k: r[k] for k in COLUMNS["robustness"] if k in r}})
        test = two_proportion_greater(nadd.robust_correct, nadd.trials, base.robust_correct, base.trials)
        res.check(f"nadd_beats_undefended_at_{b}", test["passed"], p_value=test["p_value"])
    res.tables = {"robustness": rows}
    res.summary = {"budgets": list(map(float, params["budgets"])),
                   "robust_accuracy": {f"{r['defence']}@{r['budget']}": r["robust_accuracy"] for r in rows}}
    return res


def _sweep(cfg, params, run_dir, knob: str, make: Callable) -> tuple[Result, list]:
    lmix = cfg.mixture.build()
    grid = cfg.grid.build()
    u = _update(cfg, lmix.mixture, grid, run_dir)
    rows = []
    for v in params["values"]:
        nadd = make(float(v), grid)
        rep = _robustness(cfg, params, nadd, None, grid, u)
        rows.append({"knob": knob, "value": float(v), "t_stop_used": nadd.t_stop, **_acc_row(rep)})
        log.info("%s=%g robust=%.3f", knob, v, rep.robust_accuracy)
    res = Result(tables={"sweep": rows})
    res.summary = {"knob": knob, "values": [r["value"] for r in rows],
                   "robust_accuracy": [r["robust_accuracy"] for r in rows],
                   "standard_accuracy": [r["standard_accuracy"] for r in rows]}
    return res, rows


def run_ablation_tprime(cfg, params, run_dir) -> Result:
    def make(v, grid):
        nadd = cfg.nadd.replace(t_prime=v)
        # sweep points at or below the cutoff run without correction
        if grid.times[grid.snap_index(v)] <= cfg.nadd.t_stop:
            nadd = _no_correction(nadd, grid)
        return nadd

    res, rows = _sweep(cfg, params, run_dir, "t_prime", make)
    test = interior_maximum([r["robust_correct"] for r in rows], [r["trials"] for r in rows])
    res.summary["interior_maximum"] = _jsonable(test)
    res.check("robust_accuracy_interior_maximum_in_t_prime", test["passed"], argmax=test["argmax"],
              p_first=test["vs_first"]["p_value"], p_last=test["vs_last"]["p_value"])
    return res


def _pair_check(res, rows, better, worse, name):
    by = {r["value"]: r for r in rows}
    hi, lo = by[float(better)], by[float(worse)]
    test = two_proportion_greater(hi["robust_correct"], hi["trials"], lo["robust_correct"], lo["trials"])
    res.summary[name] = test
    res.check(name, test["passed"], p_value=test["p_value"], better=hi["robust_accuracy"],
              worse=lo["robust_accuracy"])


def run_ablation_tstop(cfg, params, run_dir) -> Result:
    res, rows = _sweep(cfg, params, run_dir, "t_stop", lambda v, g: cfg.nadd.replace(t_stop=v))
    _pair_check(res, rows, params["tuned"], 0.0, "tuned_t_stop_beats_zero")
    return res


def run_ablation_churn(cfg, params, run_dir) -> Result:
    res, rows = _sweep(cfg, params, run_dir, "s_churn", lambda v, g: cfg.nadd.replace(s_churn=v))
    _pair_check(res, rows, params["tuned"], 0.0, "positive_churn_beats_zero")
    return res


def run_ablation_ring(cfg, params, run_dir) -> Result:
    def make(v, grid):
        return cfg.nadd.replace(kappa_min=cfg.nadd.kappa_min * v, kappa_max=cfg.nadd.kappa_max * v)

    res, _ = _sweep(cfg, params, run_dir, "kappa_scale", make)
    return res


def _sweep_params(kind):
    def check(cfg, params):
        vals = params["values"]
        if not isinstance(vals, list) or len(vals) < (5 if kind == "t_prime" else 2):
            return [("params.values", "expected a list of sweep values"
                     + (" with at least 5 points" if kind == "t_prime" else ""))]
        grid = cfg.grid.build()
        out = []
        for v in vals:
            trial = {"t_prime": lambda: cfg.nadd.replace(t_prime=float(v)),
                     "t_stop": lambda: cfg.nadd.replace(t_stop=float(v)),
                     "s_churn": lambda: cfg.nadd.replace(s_churn=float(v)),
                     "kappa_scale": lambda: cfg.nadd.replace(kappa_min=cfg.nadd.kappa_min * float(v),
                                                             kappa_max=cfg.nadd.kappa_max * float(v))}[kind]()
            if kind == "t_prime":
                out += _check_grid_time("values", float(v), grid)
                continue
            out += [(f"params.values[{v}]", m) for _, m in trial.problems(grid)]
        if "tuned" in params:
            if float(params["tuned"]) not in [float(v) for v in vals]:
                out.append(("params.tuned", "tuned value must appear in params.values"))
            if 0.0 not in [float(v) for v in vals]:
                out.append(("params.values", "sweep must include 0"))
        return out
    return check


# theorem

def run_theorem(cfg, params, run_dir) -> Result:
    lmix = cfg.mixture.build()
    mix = lmix.mixture
    grid = cfg.grid.build()
    u = UpdateFn(cfg.solver, den_mod.ExactDenoiser(mix))
    ds = float(params["delta_star"])
    p_up = TheoremParams.from_grid(grid, delta_star=ds, kappa_max=float(params["kappa_max"]))
    bound = weight_lower_bound(p_up)
    nadd = cfg.nadd.replace(t_prime=grid.t_max, t_stop=float(params["t_stop"]), s_churn=0.0)
    x = mix.means[0]
    res = Result()
    rows = []

    def record(name, r, hard=True):
        d = r.as_dict()
        rows.append({"check": name, **{k: d[k] for k in COLUMNS["theorem"] if k in d}})
        res.summary[name] = _jsonable(d)
        if hard is not None:
            res.check(name, r.passed, hard=hard, ci_low=r.ci_low, bound=r.bound)

    trace = run_recursion(grid, [bound.value] * grid.n_steps, p_up.lam)
    res.summary["weight_bound"] = {"value": bound.value, "raw": bound.raw, "vacuous": bound.vacuous}
    res.summary["recursion"] = {"epsilon0": trace.epsilon0, "delta0": trace.delta0,
                                "delta0_closed_form": 2 * grid.n_steps * np.exp(-p_up.lam**2)}
    up = monte_carlo_upper(mix, nadd, grid, u, p_up, cfg.trials, cfg.seed, x=x, weight=bound.value)
    record("upper_bound", up)

    # weights far below the bound with a tight radius must break the guarantee
    p_tight = replace(p_up, kappa_max=float(params["tight_kappa_max"]))
    loose = monte_carlo_upper(mix, nadd, grid, u, p_tight, cfg.trials, cfg.seed + 1, x=x,
                              weight=0.0, enforce_bound=False)
    record("upper_bound_non_vacuous", loose, hard=None)
    res.check("upper_bound_non_vacuous", loose.probability < 1 - ds, probability=loose.probability)

    # production power-law schedule whose smallest active weight meets the bound
    power = nadd.replace(beta=float(params["power_beta"]), t_stop=float(grid.times[0]))
    pw = monte_carlo_upper(mix, power, grid, u, p_up, cfg.trials, cfg.seed + 2, x=x, use_schedule=True)
    record("upper_bound_power_law", pw, hard=False)

    churn = nadd.replace(s_churn=float(params["churn"]))
    ch = monte_carlo_upper(mix, churn, grid, u, p_up, cfg.trials, cfg.seed + 3, x=x, weight=bound.value)
    record("upper_bound_with_churn", ch, hard=False)

    p_lo = replace(p_up, kappa_min=float(params["kappa_min"]))
    lo = monte_carlo_lower(mix, nadd, grid, u, p_lo, cfg.trials, cfg.seed + 4, x=x,
                           weight=float(params["lower_weight"]), meta_trials=int(params["meta_trials"]))
    record("lower_bound", lo)
    res.summary["kappa_min_threshold"] = kappa_min_threshold(grid.n_steps)
    res.tables = {"theorem": rows}
    return res


def _theorem_params(cfg, params):
    out = []
    if cfg.mixture.build().mixture.n_components != 1:
        out.append(("mixture", "theorem checks expect single-Gaussian data"))
    if not 0 < float(params["delta_star"]) < 1:
        out.append(("params.delta_star", "delta_star must lie in (0, 1)"))
    if not float(params["kappa_min"]) < kappa_min_threshold(cfg.grid.n_steps):
        out.append(("params.kappa_min", "kappa_min must lie below 1/(2 sqrt(2 pi) N)"))
    if not 0 <= float(params["lower_weight"]) <= 1:
        out.append(("params.lower_weight", "lower_weight must lie in [0, 1]"))
    if cfg.trials < 100:
        out.append(("trials", "theorem checks need at least 100 trials"))
    return out


# denoiser training

def run_train_denoiser(cfg, params, run_dir) -> Result:
    lmix = cfg.mixture.build()
    mix = lmix.mixture
    grid = cfg.grid.build()
    learned = _train(cfg, mix, grid)
    if run_dir is not None:
        den_mod.save_network(learned, run_dir / "denoiser.bin")
    xs = np.linspace(-params["probe_half_width"], params["probe_half_width"], int(params["probe_points"]))
    rows = []
    gaps = []
    for s in grid.times:
        probe = xs[:, None] * np.ones((1, mix.dim))
        ex = exact_denoiser(mix, probe, float(s))
        le = learned(probe, float(s))
        g = np.sum((ex - le) ** 2, axis=-1)
        gaps.append(g)
        rows += [{"x": float(a), "sigma": float(s), "exact": float(e[0]), "learned": float(l[0]),
                  "sq_gap": float(q)} for a, e, l, q in zip(xs, ex, le, g)]
    mean_gap = float(np.mean(np.concatenate(gaps)))
    res = Result(tables={"denoiser_gap": rows})
    res.summary = {"mean_squared_gap": mean_gap, "final_loss": learned.final_loss,
                   "train_steps": cfg.denoiser.train_steps, "n_params": learned.network.n_params}
    res.check("mean_squared_gap_within_budget", mean_gap <= params["max_gap"], value=mean_gap,
              limit=params["max_gap"])
    return res


# purify demo

def run_purify_demo(cfg, params, run_dir) -> Result:
    lmix = cfg.mixture.build()
    grid = cfg.grid.build()
    u = _update(cfg, lmix.mixture, grid, run_dir)
    from .distributions import sample
    x, comp = sample(lmix.mixture, np.random.default_rng([cfg.seed, 0]), cfg.trials, return_components=True)
    label = lmix.labels[comp]
    out = purify(x, cfg.nadd, grid, u, np.random.default_rng([cfg.seed, 1]), record=False).purified
    pred = bayes_classifier(lmix, out)
    dist = np.linalg.norm(out - x, axis=-1)
    traj_rows = []
    trng = np.random.default_rng([cfg.seed, 2])
    for i in range(min(int(params["trajectories"]), cfg.trials)):
        traj_rows += _trajectory_rows("nadd", i, purify(x[i], cfg.nadd, grid, u, trng))
    res = Result(tables={
        "endpoints": [{"trial": i, "label": int(label[i]), "pred_purified": int(pred[i]),
                       "l2_dist_purified_to_clean": float(dist[i])} for i in range(cfg.trials)],
        "trajectories": traj_rows,
    })
    res.summary = {"label_agreement": float(np.mean(pred == label)),
                   "mean_l2_dist": float(dist.mean()), "median_l2_dist": float(np.median(dist))}
    return res


_SWEEP_DEFAULTS = {"temperature": 1.0}

EXPERIMENTS = {e.name: e for e in [
    Experiment("fig1-bimodal", run_fig1, "class-flip rate of purification with and without correction",
               {"start_component": 1, "kappa_scale": 0.5, "trajectories": 5}, "trajectory"),
    Experiment("purify-demo", run_purify_demo, "purify mixture samples and record trajectories",
               {"trajectories": 3}, "trajectory"),
    Experiment("robustness-sweep", run_robustness_sweep, "standard/robust accuracy vs attack budget",
               {**_SWEEP_DEFAULTS, "budgets": [0.2, 0.3, 0.5], "step_fraction": 0.25}, "robustness"),
    Experiment("theorem-verify", run_theorem, "Monte Carlo check of both return-probability bounds",
               {"delta_star": 0.1, "kappa_max": 1.0, "kappa_min": 0.01, "lower_weight": 0.3,
                "t_stop": 0.05, "meta_trials": 200, "tight_kappa_max": 0.1, "power_beta": 0.07,
                "churn": 2.0}, "theorem", _theorem_params),
    Experiment("ablation-tprime", run_ablation_tprime, "robust accuracy vs forward noise level t'",
               {**_SWEEP_DEFAULTS, "values": [0.1, 0.5, 4.0, 16.0, 80.0]}, "sweep", _sweep_params("t_prime")),
    Experiment("ablation-tstop", run_ablation_tstop, "robust accuracy vs correction cutoff",
               {**_SWEEP_DEFAULTS, "values": [0.0, 0.01, 0.1, 0.585, 2.0], "tuned": 0.585}, "sweep",
               _sweep_params("t_stop")),
    Experiment("ablation-churn", run_ablation_churn, "robust accuracy vs S_churn",
               {**_SWEEP_DEFAULTS, "values": [0.0, 2.0, 8.0, 18.0], "tuned": 2.0}, "sweep",
               _sweep_params("s_churn")),
    Experiment("ablation-ring", run_ablation_ring, "robust accuracy vs ring radius scale",
               {**_SWEEP_DEFAULTS, "values": [0.0, 0.25, 0.5, 1.0, 2.0]}, "sweep", _sweep_params("kappa_scale")),
    Experiment("train-denoiser", run_train_denoiser, "train the mini denoiser and measure its gap",
               {"probe_half_width": 2.0, "probe_points": 41, "max_gap": 0.05}, "gap"),
]}


def _write_csv(path: Path, name: str, rows: list):
    cols = COLUMNS[name]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in cols})


def git_blob_hash(data: bytes) -> str:
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def output_root(override=None) -> Path:
    if override is not None:
        return Path(override)
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def run_experiment(cfg, root=None, source_bytes: bytes | None = None) -> RunRecord:
    """Run ``cfg`` (an ``ExperimentConfig``) and persist its outputs."""
    from .config import dumps

    exp = EXPERIMENTS[cfg.experiment]
    run_dir = output_root(root) / (cfg.output_dir or cfg.experiment)
    run_dir.mkdir(parents=True, exist_ok=True)
    text = dumps(cfg)
    (run_dir / "config.yaml").write_text(text)

    start = time.perf_counter()
    try:
        result = exp.run(cfg, exp.params(cfg), run_dir)
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        raise ExperimentFailure(f"{cfg.experiment} failed: {exc}") from exc
    duration = time.perf_counter() - start

    csv_paths = {}
    for name, rows in result.tables.items():
        path = run_dir / f"{name}.csv"
        _write_csv(path, name, rows)
        csv_paths[name] = path
    hard = [c for c in result.checks if c["hard"]]
    status = "PASS" if all(c["passed"] for c in hard) else "FAIL"
    if not hard:
        status = "INFO"
    summary = {
        "schema_version": SCHEMA_VERSION,
        "experiment": cfg.experiment,
        "plot_kind": exp.plot_kind,
        "config_hash": cfg.digest(),
        "config": {k: v for k, v in cfg.to_dict().items() if k != "output_dir"},
        "params": _jsonable(exp.params(cfg)),
        "tables": {name: {"file": f"{name}.csv", "columns": COLUMNS[name], "rows": len(rows)}
                   for name, rows in result.tables.items()},
        "results": _jsonable(result.summary),
        "checks": result.checks,
        "status": status,
    }
    summary_path = run_dir / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    record = RunRecord(cfg.digest(), git_blob_hash(source_bytes if source_bytes is not None else text.encode()),
                       run_dir, csv_paths, summary_path, duration, status)
    (run_dir / "run.json").write_text(json.dumps({
        "config_hash": record.config_hash, "input_hash": record.input_hash,
        "csv": {k: str(v.name) for k, v in csv_paths.items()}, "summary": summary_path.name,
        "duration_seconds": duration, "status": status}, indent=2) + "\n")
    return record
