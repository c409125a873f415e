"""Command line entry point: ``nadd run|validate|plot|list-experiments``.

Exit codes: 0 success, 1 invalid config, 2 experiment failure,
3 a theorem or ablation assertion failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import config
from .experiments import EXPERIMENTS, ExperimentFailure, run_experiment
from .plotting import PlotError, emit_plot_script

EXIT_OK, EXIT_INVALID, EXIT_FAILED, EXIT_ASSERT = 0, 1, 2, 3


def _print_diagnostics(diags, out=None):
    for path, msg in diags:
        print(f"  {path}: {msg}", file=out or sys.stderr)


def cmd_run(args) -> int:
    path = Path(args.config)
    try:
        if not path.exists():
            raise config.ConfigError([(str(path), "file not found")])
        source = path.read_bytes()
        cfg = config.from_dict(config.parse(source.decode(), str(path)))
    except config.ConfigError as exc:
        print(f"invalid config {path}:", file=sys.stderr)
        _print_diagnostics(exc.diagnostics)
        return EXIT_INVALID
    try:
        rec = run_experiment(cfg, args.output_root, source)
    except ExperimentFailure as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_FAILED
    print(f"{cfg.experiment}: {rec.status} ({rec.duration:.1f} s) -> {rec.run_dir}")
    for c in json.loads(rec.summary_path.read_text())["checks"]:
        tag = "PASS" if c["passed"] else "FAIL"
        print(f"  [{tag}] {c['name']}{'' if c['hard'] else ' (informational)'}")
    return EXIT_ASSERT if rec.status == "FAIL" else EXIT_OK


def cmd_validate(args) -> int:
    diags = config.validate_config(args.config)
    if diags:
        print(f"{args.config}: {len(diags)} problem(s)")
        _print_diagnostics(diags, sys.stdout)
        return EXIT_INVALID
    print(f"{args.config}: ok")
    return EXIT_OK


def cmd_plot(args) -> int:
    try:
        script = emit_plot_script(args.run_dir)
    except PlotError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_FAILED
    print(f"wrote {script}; render with: python {script}")
    return EXIT_OK


def cmd_list(args) -> int:
    for name in sorted(EXPERIMENTS):
        print(f"{name:18s} {EXPERIMENTS[name].description}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nadd", description="Noise-amplified diffusion purification experiments")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment described by a config file")
    r.add_argument("config")
    r.add_argument("--output-root", default=None,
                   help="directory for run outputs (default: $NADD_OUTPUT_ROOT or ./runs)")
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("validate", help="check a config file without running it")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    pl = sub.add_parser("plot", help="write a matplotlib script for a finished run")
    pl.add_argument("run_dir")
    pl.set_defaults(func=cmd_plot)
    ls = sub.add_parser("list-experiments", help="list registered experiments")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
