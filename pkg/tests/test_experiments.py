import csv
import json
import subprocess
import sys

import pytest

from nadd import cli, config
from nadd.experiments import COLUMNS, EXPERIMENTS, SCHEMA_VERSION, git_blob_hash, run_experiment
from nadd.plotting import PlotError, emit_plot_script

DEMO = """experiment: purify-demo
seed: 0
trials: 30
output_dir: demo
mixture: {kind: bimodal, separation: 1.0, variance: 0.05, dim: 1}
grid: {n_steps: 12, t_min: 0.01, t_max: 8.0, rho: 7.0}
nadd: {sigma_t_prime: 4.0, sigma_t_stop: 0.5, kappa_min: 0.375, kappa_max: 0.5}
params: {trajectories: 2}
"""

TRAIN = """experiment: train-denoiser
seed: 0
trials: 1
output_dir: train
mixture: {kind: bimodal, separation: 1.0, variance: 0.05, dim: 1}
grid: {n_steps: 8, t_min: 0.01, t_max: 8.0, rho: 7.0}
nadd: {sigma_t_prime: 8.0}
denoiser: {kind: learned, widths: [4], train_steps: 3, batch_size: 16, learning_rate: 0.01}
params: {probe_points: 5, max_gap: 1.0e-9}
"""


def _write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_registry_has_every_experiment():
    assert {"fig1-bimodal", "purify-demo", "robustness-sweep", "theorem-verify", "ablation-tprime",
            "ablation-tstop", "ablation-churn", "ablation-ring", "train-denoiser"} <= set(EXPERIMENTS)


def test_run_writes_outputs(tmp_path, output_root, capsys):
    path = _write(tmp_path, DEMO)
    assert cli.main(["run", path]) == 0
    run = output_root / "demo"
    summary = json.loads((run / "summary.json").read_text())
    assert summary["schema_version"] == SCHEMA_VERSION
    assert summary["status"] == "INFO"
    assert summary["config_hash"] == config.load(path).digest()
    with open(run / "endpoints.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 30 and list(rows[0]) == COLUMNS["endpoints"]
    meta = json.loads((run / "run.json").read_text())
    assert meta["input_hash"] == git_blob_hash((tmp_path / "cfg.yaml").read_bytes())
    assert config.load(run / "config.yaml") == config.load(path)
    assert "purify-demo: INFO" in capsys.readouterr().out


def test_rerun_gives_identical_summary(tmp_path):
    cfg = config.loads(DEMO)
    a = run_experiment(cfg, tmp_path / "a").summary_path.read_bytes()
    b = run_experiment(cfg, tmp_path / "b").summary_path.read_bytes()
    assert a == b


def test_output_root_flag_overrides_env(tmp_path, output_root):
    path = _write(tmp_path, DEMO)
    assert cli.main(["run", path, "--output-root", str(tmp_path / "other")]) == 0
    assert (tmp_path / "other" / "demo" / "summary.json").exists()
    assert not output_root.exists()


def test_exit_code_invalid_config(tmp_path, output_root, capsys):
    assert cli.main(["run", _write(tmp_path, DEMO.replace("sigma_t_stop: 0.5", "sigma_t_stop: 9.0"))]) == 1
    assert "nadd.sigma_t_stop" in capsys.readouterr().err
    assert cli.main(["run", str(tmp_path / "missing.yaml")]) == 1
    assert cli.main(["run", _write(tmp_path, "experiment: [unclosed\n")]) == 1


def test_exit_code_experiment_failure(tmp_path, output_root):
    text = TRAIN.replace("learning_rate: 0.01", "learning_rate: 1.0e+12").replace("train_steps: 3", "train_steps: 50")
    import numpy as np
    with np.errstate(all="ignore"):
        assert cli.main(["run", _write(tmp_path, text)]) == 2


def test_exit_code_failed_assertion(tmp_path, output_root, capsys):
    assert cli.main(["run", _write(tmp_path, TRAIN)]) == 3
    assert "[FAIL] mean_squared_gap_within_budget" in capsys.readouterr().out
    assert (output_root / "train" / "denoiser.bin").exists()


def test_validate_command(tmp_path, configs_dir, capsys):
    assert cli.main(["validate", str(configs_dir / "fig1_bimodal.yaml")]) == 0
    assert cli.main(["validate", _write(tmp_path, DEMO + "bogus: 1\n")]) == 1
    assert "bogus" in capsys.readouterr().out


def test_list_experiments(capsys):
    assert cli.main(["list-experiments"]) == 0
    out = capsys.readouterr().out
    assert all(name in out for name in EXPERIMENTS)


def test_plot_emission_and_refusal(tmp_path, output_root):
    cli.main(["run", _write(tmp_path, DEMO)])
    run = output_root / "demo"
    script = emit_plot_script(run)
    body = script.read_text()
    assert '"red"' in body and '"pink"' in body
    (run / "trajectories.csv").write_text(",".join(COLUMNS["trajectories"]) + "\n")
    with pytest.raises(PlotError, match="no rows"):
        emit_plot_script(run)
    assert cli.main(["plot", str(run)]) == 2
    (run / "trajectories.csv").unlink()
    with pytest.raises(PlotError, match="missing"):
        emit_plot_script(run)
    with pytest.raises(PlotError, match="summary.json"):
        emit_plot_script(tmp_path)


def test_generated_script_renders(tmp_path, output_root):
    pytest.importorskip("matplotlib")
    cli.main(["run", _write(tmp_path, DEMO)])
    script = emit_plot_script(output_root / "demo")
    subprocess.run([sys.executable, str(script)], check=True, capture_output=True)
    assert (output_root / "demo" / "trajectories.png").stat().st_size > 0


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "nadd.cli", "list-experiments"], capture_output=True,
                         text=True, check=True).stdout
    assert "theorem-verify" in out
