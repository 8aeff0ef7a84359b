"""
Shared fixtures: settings pointed at a temporary ledger, and a small experiment-config factory
"""

import copy
from pathlib import Path

import pytest

from tools.config_loader import ConfigLoader

ROOT = Path(__file__).resolve().parent.parent
GOLDEN = 0.6180339887498949
SILVER = 0.41421356237309515


@pytest.fixture
def settings(tmp_path, monkeypatch):
    monkeypatch.setenv("ERGODICLAB_LEDGER", str(tmp_path / "ledger.db"))
    monkeypatch.setenv("ERGODICLAB_OUT_DIR", str(tmp_path / "runs"))
    return ConfigLoader(env_file=str(tmp_path / "missing.env"), config_file=str(ROOT / "config" / "config.yaml"))


BASE_EXPERIMENT = {
    "format": 1,
    "name": "rotation_small",
    "kind": "distance_profile",
    "seed": 3,
    "system": {"type": "rotation", "alpha": [GOLDEN, SILVER]},
    "cloud": {"constructor": "haar", "size": 400, "mode": "iid"},
    "metric": {"K": 3, "s": 1.0},
    "schedule": {"n_max": 20, "stride": 5},
    "calibration": {"size": 400, "repeats": 3},
}


@pytest.fixture
def experiment_dict():
    """Factory returning a fresh config dict with top-level sections replaced."""

    def build(**overrides):
        data = copy.deepcopy(BASE_EXPERIMENT)
        data.update(copy.deepcopy(overrides))
        return data

    return build
