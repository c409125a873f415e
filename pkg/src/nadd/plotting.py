"""Emit standalone matplotlib scripts for finished runs.

The generated script reads the run's CSV files by column name, so it keeps
working as long as the summary's schema version does not change.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path


class PlotError(RuntimeError):
    pass


_HEADER = '''"""Plot for run {experiment!s} (generated; edit freely)."""
import csv
import sys
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = Path(__file__).resolve().parent


def read(name):
    path = HERE / name
    if not path.exists():
        sys.exit(f"missing data file {{path}}")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        sys.exit(f"refusing to plot: {{path}} has no rows")
    return rows

'''

_TRAJECTORY = '''
rows = read("trajectories.csv")
settings = sorted({r["setting"] for r in rows})
fig, axes = plt.subplots(1, len(settings), figsize=(5 * len(settings), 4), squeeze=False)
for ax, setting in zip(axes[0], settings):
    sel = [r for r in rows if r["setting"] == setting]
    for trial in sorted({int(r["trial"]) for r in sel}):
        for phase, colour in (("forward", "red"), ("reverse", "pink")):
            pts = [r for r in sel if int(r["trial"]) == trial and r["phase"] == phase]
            ax.plot([float(r["t"]) for r in pts], [float(r["x0"]) for r in pts], color=colour,
                    lw=1, label=phase if trial == 0 else None)
    ax.set_xscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("x[0]")
    ax.set_title(setting)
    ax.legend()
fig.tight_layout()
fig.savefig(HERE / "trajectories.png", dpi=120)
'''

_SWEEP = '''
rows = read("sweep.csv")
v = [float(r["value"]) for r in rows]
fig, ax = plt.subplots(figsize=(5, 4))
for key, colour in (("robust", "C0"), ("standard", "C1")):
    acc = [float(r[key + "_accuracy"]) for r in rows]
    lo = [float(r[key + "_ci_low"]) for r in rows]
    hi = [float(r[key + "_ci_high"]) for r in rows]
    ax.plot(v, acc, "o-", color=colour, label=key)
    ax.fill_between(v, lo, hi, color=colour, alpha=0.25)
ax.set_xlabel(rows[0]["knob"])
ax.set_ylabel("accuracy (95% CI)")
ax.set_ylim(0, 1)
ax.legend()
fig.tight_layout()
fig.savefig(HERE / "sweep.png", dpi=120)
'''

_ROBUSTNESS = '''
rows = read("robustness.csv")
fig, ax = plt.subplots(figsize=(5, 4))
for defence, colour in (("none", "C3"), ("nadd", "C0")):
    sel = [r for r in rows if r["defence"] == defence]
    b = [float(r["budget"]) for r in sel]
    ax.plot(b, [float(r["robust_accuracy"]) for r in sel], "o-", color=colour, label=defence)
    ax.fill_between(b, [float(r["robust_ci_low"]) for r in sel],
                    [float(r["robust_ci_high"]) for r in sel], color=colour, alpha=0.25)
ax.set_xlabel("attack budget")
ax.set_ylabel("robust accuracy (95% CI)")
ax.set_ylim(0, 1)
ax.legend()
fig.tight_layout()
fig.savefig(HERE / "robustness.png", dpi=120)
'''

_THEOREM = '''
rows = read("theorem.csv")
fig, ax = plt.subplots(figsize=(6, 4))
names = [r["check"] for r in rows]
p = [float(r["probability"]) for r in rows]
err = [[pi - float(r["ci_low"]) for pi, r in zip(p, rows)],
       [float(r["ci_high"]) - pi for pi, r in zip(p, rows)]]
ax.bar(names, p, yerr=err, color="C0", capsize=4)
ax.scatter(names, [float(r["bound"]) for r in rows], color="k", marker="_", s=400, label="bound")
ax.set_ylabel("empirical probability")
ax.tick_params(axis="x", rotation=30)
ax.legend()
fig.tight_layout()
fig.savefig(HERE / "theorem.png", dpi=120)
'''

_GAP = '''
rows = read("denoiser_gap.csv")
sig = sorted({float(r["sigma"]) for r in rows})
gap = [sum(float(r["sq_gap"]) for r in rows if float(r["sigma"]) == s) /
       sum(1 for r in rows if float(r["sigma"]) == s) for s in sig]
fig, ax = plt.subplots(figsize=(5, 4))
ax.loglog(sig, gap, "o-")
ax.set_xlabel("sigma")
ax.set_ylabel("mean squared gap to exact denoiser")
fig.tight_layout()
fig.savefig(HERE / "denoiser_gap.png", dpi=120)
'''

BODIES = {"trajectory": (_TRAJECTORY, "trajectories.csv"), "sweep": (_SWEEP, "sweep.csv"),
          "robustness": (_ROBUSTNESS, "robustness.csv"), "theorem": (_THEOREM, "theorem.csv"),
          "gap": (_GAP, "denoiser_gap.csv")}


def emit_plot_script(run_dir) -> Path:
    """Write ``plot.py`` into ``run_dir`` and return its path."""
    run_dir = Path(run_dir)
    summary_path = run_dir / "summary.json"
    if not summary_path.exists():
        raise PlotError(f"{run_dir} has no summary.json; run the experiment first")
    summary = json.loads(summary_path.read_text())
    kind = summary.get("plot_kind")
    if kind not in BODIES:
        raise PlotError(f"no plot template for kind {kind!r}")
    body, data = BODIES[kind]
    csv_path = run_dir / data
    if not csv_path.exists():
        raise PlotError(f"missing CSV {csv_path}")
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        if next(reader, None) is None:
            raise PlotError(f"refusing to plot: {csv_path} has no rows")
    script = run_dir / "plot.py"
    script.write_text(_HEADER.format(experiment=summary.get("experiment")) + body)
    return script
