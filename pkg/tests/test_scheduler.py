import json
from pathlib import Path

import pytest

from agents.scheduler import ExperimentScheduler, suite_exit_code
from utils.db import get_run
from utils.errors import NumericGuardError


@pytest.fixture
def scheduler(settings):
    return ExperimentScheduler(settings)


def manifest(result):
    return json.loads(Path(result["recorded"]["manifest"]).read_text(encoding="utf-8"))


def digests(result):
    return {name: info["sha256"] for name, info in result["recorded"]["artifacts"].items()}


@pytest.mark.asyncio
async def test_completed_run_is_recorded(scheduler, settings, experiment_dict):
    result = await scheduler.trigger_run(experiment_dict())
    assert result["exit_code"] == 0
    assert result["error"] == ""
    run_dir = Path(result["recorded"]["run_dir"])
    assert sorted(p.name for p in run_dir.iterdir()) == ["profile.csv", "run_manifest.json", "twisting.json"]
    assert result["calibration"]["noise_floor"] > 0.0

    data = manifest(result)
    assert data["status"] == "completed"
    assert data["config"]["name"] == "rotation_small"
    assert set(data["outputs"]) == {"profile.csv", "twisting.json"}
    assert data["versions"]["python"]

    row = get_run(result["run_id"], db_path=settings.get_setting("runtime.ledger_path"))
    assert row["status"] == "completed"
    assert len(row["outputs"]) == 2


@pytest.mark.asyncio
async def test_failed_check_exits_4_only_under_check(scheduler, experiment_dict):
    config = experiment_dict(checks={"final_max": 1e-12})
    relaxed = await scheduler.trigger_run(config)
    assert relaxed["exit_code"] == 0
    assert [c["passed"] for c in relaxed["checks"]] == [False]

    strict = await scheduler.trigger_run(config, check=True)
    assert strict["exit_code"] == 4
    data = manifest(strict)
    assert data["status"] == "failed"
    assert "profile.csv" in data["outputs"]


@pytest.mark.asyncio
async def test_config_error_exits_2(scheduler, experiment_dict):
    result = await scheduler.trigger_run(experiment_dict(format=2))
    assert result["exit_code"] == 2
    assert result["experiment"] is None
    assert result["recorded"] == {}


@pytest.mark.asyncio
async def test_numeric_guard_exits_3(scheduler, experiment_dict):
    config = experiment_dict(
        kind="expansive_s",
        system={"type": "expansive", "p": 2, "f": {"winding": 1}},
        cloud={"constructor": "curve", "size": 200},
        expansive={"grid_n": 1000, "check_points": 5, "check_n_max": 61},
    )
    result = await scheduler.trigger_run(config)
    assert result["exit_code"] == 3
    assert isinstance(result["exception"], NumericGuardError)


@pytest.mark.asyncio
async def test_repeated_runs_are_byte_identical(scheduler, experiment_dict):
    first = await scheduler.trigger_run(experiment_dict())
    second = await scheduler.trigger_run(experiment_dict())
    assert digests(first) == digests(second)
    assert second["recorded"]["mismatches"] == []
    assert first["run_id"] != second["run_id"]


@pytest.mark.asyncio
async def test_suite_runs_independent_experiments(scheduler, tmp_path, experiment_dict):
    results = await scheduler.run_suite(
        [experiment_dict(name="first"), experiment_dict(name="second", format=2)],
        out_dir=str(tmp_path / "suite"),
    )
    assert [r["exit_code"] for r in results] == [0, 2]
    assert (tmp_path / "suite" / "first" / "profile.csv").exists()
    assert suite_exit_code(results) == 2


def test_suite_exit_code_priority():
    assert suite_exit_code([]) == 0
    assert suite_exit_code([{"exit_code": 4}, {"exit_code": 0}]) == 4
    assert suite_exit_code([{"exit_code": 4}, {"exit_code": 3}]) == 3
    assert suite_exit_code([{"exit_code": 1}, {"exit_code": 2}]) == 2


def test_synchronous_run(scheduler, experiment_dict):
    assert scheduler.run(experiment_dict())["exit_code"] == 0
