from pathlib import Path

import numpy as np
import pytest

from nadd.distributions import GaussianMixture, bimodal

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


@pytest.fixture
def configs_dir():
    return CONFIGS


@pytest.fixture
def output_root(tmp_path, monkeypatch):
    root = tmp_path / "runs"
    monkeypatch.setenv("NADD_OUTPUT_ROOT", str(root))
    return root


@pytest.fixture
def toy_bimodal():
    return bimodal(1.0, 0.05, 1)


@pytest.fixture
def gauss2():
    return GaussianMixture(weights=[1.0], means=[[0.0, 0.0]], variances=[1.0])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
