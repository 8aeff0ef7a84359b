"""
Desk-scale runs of checked-in acceptance configs; deselect with -m "not slow"
"""

import pytest

from agents.scheduler import ExperimentScheduler

from conftest import ROOT

ACCEPTANCE = ROOT / "configs" / "acceptance"


@pytest.mark.slow
@pytest.mark.parametrize("name", [
    "a1_motivating", "a2_twisting_torus2", "a3_heisenberg", "a5a_example_5_4", "a7_invariants",
])
def test_acceptance_config_passes(settings, tmp_path, name):
    result = ExperimentScheduler(settings).run(str(ACCEPTANCE / f"{name}.json"), out_dir=str(tmp_path), check=True)
    failed = [c["name"] for c in result["checks"] if not c["passed"]]
    assert failed == []
    assert result["exit_code"] == 0
