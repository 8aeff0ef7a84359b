"""
Experiment Scheduler - Orchestrates one experiment run as a LangGraph StateGraph
validate -> calibrate -> execute -> check -> record
"""

import asyncio
import time
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, TypedDict, Union

from langgraph.graph import END, StateGraph

from agents.calibrator import CalibratorAgent
from agents.cocycle_agent import CocycleAgent
from agents.expansive_agent import ExpansiveAgent
from agents.heisenberg_agent import HeisenbergAgent
from agents.invariant_agent import InvariantAgent
from agents.profile_agent import DistanceProfileAgent
from agents.recorder import RecorderAgent, new_run_id
from tools.experiment_config import (
    ExperimentConfig,
    build_system,
    load_experiment_config,
    parse_experiment_config,
    resolve_metric,
)
from utils.checks import failed_checks
from utils.errors import AcceptanceError, exit_code_for
from utils.logger import setup_logger

logger = setup_logger(__name__)

ExperimentSource = Union[ExperimentConfig, Dict[str, Any], str, Path]

# kinds whose thresholds are tied to the noise floor
CALIBRATED_KINDS = ("distance_profile", "heisenberg", "expansive_s", "coboundary", "example_5_5")


class ExperimentState(TypedDict):
    """State definition for one experiment run"""
    source: Any
    experiment: Optional[ExperimentConfig]
    run_id: str
    out_dir: str
    threads: int
    assume_ergodic: bool
    check: bool

    calibration: Dict[str, Any]
    result: Dict[str, Any]
    checks: List[Dict[str, Any]]
    recorded: Dict[str, Any]

    error: str
    exception: Optional[BaseException]
    exit_code: int

    # Metadata
    started_at: str
    wall_time: float


class ExperimentScheduler:
    """Runs experiments through the validate/calibrate/execute/check/record workflow"""

    def __init__(self, config):
        self.config = config
        self.calibrator = CalibratorAgent(config)
        self.recorder = RecorderAgent(config)

        profile = DistanceProfileAgent(config)
        expansive = ExpansiveAgent(config)
        self.agents = {
            "distance_profile": profile,
            "cocycle_met": CocycleAgent(config),
            "heisenberg": HeisenbergAgent(config),
            "expansive_s": expansive,
            "coboundary": expansive,
            "example_5_5": expansive,
            "invariant_suite": InvariantAgent(config),
        }

        self.workflow = self._build_workflow_graph()

    @staticmethod
    def _fail(state: ExperimentState, node: str, error: BaseException) -> ExperimentState:
        logger.error(f"Node '{node}' failed: {error}")
        state["error"] = str(error)
        state["exception"] = error
        state["exit_code"] = exit_code_for(error)
        return state

    def _build_workflow_graph(self):
        """Build the LangGraph StateGraph for one experiment"""

        def validate(state: ExperimentState) -> ExperimentState:
            """Node: parse the config and sanity-check the base system"""
            try:
                source = state["source"]
                if isinstance(source, ExperimentConfig):
                    experiment = source
                elif isinstance(source, dict):
                    experiment = parse_experiment_config(source)
                else:
                    experiment = load_experiment_config(source)

                system = build_system(experiment.system)
                if experiment.kind != "cocycle_met" and hasattr(system, "is_minimal") and not system.is_minimal():
                    logger.warning(f"Base system of '{experiment.name}' is not minimal; "
                                   f"convergence statements may not apply")
                state["experiment"] = experiment
                state["run_id"] = new_run_id(experiment.name)
                logger.info(f"Validated '{experiment.name}' ({experiment.kind}), run {state['run_id']}")
                return state
            except Exception as e:
                return self._fail(state, "validate", e)

        def calibrate(state: ExperimentState) -> ExperimentState:
            """Node: measure the noise floor for kinds whose checks depend on it"""
            if state.get("error"):
                return state
            experiment = state["experiment"]
            if experiment.kind not in CALIBRATED_KINDS:
                logger.debug(f"Kind {experiment.kind} needs no calibration")
                return state
            try:
                system = build_system(experiment.system)
                metric = resolve_metric(experiment, self.config, system.space.dim)
                state["calibration"] = self.calibrator.calibrate_for(experiment, system, metric)
                return state
            except Exception as e:
                return self._fail(state, "calibrate", e)

        def execute(state: ExperimentState) -> ExperimentState:
            """Node: hand the experiment to its agent"""
            if state.get("error"):
                return state
            experiment = state["experiment"]
            calibration = state.get("calibration") or {}
            context = {
                "threads": state.get("threads", 1),
                "assume_ergodic": state.get("assume_ergodic", False),
                "noise_floor": calibration.get("noise_floor", 0.0),
                "epsilon": calibration.get("epsilon", 0.0),
            }
            try:
                logger.info(f"Executing '{experiment.name}' with {type(self.agents[experiment.kind]).__name__}")
                result = self.agents[experiment.kind].run(experiment, context)
                state["result"] = result
                state["checks"] = result.get("checks", [])
                return state
            except Exception as e:
                return self._fail(state, "execute", e)

        def check(state: ExperimentState) -> ExperimentState:
            """Node: report checks; under --check any failure fails the run"""
            if state.get("error"):
                return state
            for c in state.get("checks", []):
                level = logger.info if c["passed"] else logger.warning
                level(f"Check {c['name']}: {'PASS' if c['passed'] else 'FAIL'} "
                      f"(value {c['value']} {c['comparison']} {c['threshold']})")
            failed = failed_checks(state.get("checks", []))
            if failed and state.get("check"):
                names = ", ".join(c["name"] for c in failed)
                return self._fail(state, "check", AcceptanceError(f"{len(failed)} check(s) failed: {names}"))
            return state

        def record(state: ExperimentState) -> ExperimentState:
            """Node: write artifacts, manifest and ledger row (runs even after a failure)"""
            state["wall_time"] = time.monotonic() - state["wall_time"]
            if state.get("experiment") is None:
                logger.info("Nothing to record: the config never validated")
                return state
            try:
                state["recorded"] = self.recorder.record(state)
            except Exception as e:
                if state.get("error"):
                    logger.error(f"Recording a failed run also failed: {e}")
                else:
                    self._fail(state, "record", e)
            return state

        workflow = StateGraph(ExperimentState)

        workflow.add_node("validate", validate)
        workflow.add_node("calibrate", calibrate)
        workflow.add_node("execute", execute)
        workflow.add_node("check", check)
        workflow.add_node("record", record)

        workflow.set_entry_point("validate")
        workflow.add_edge("validate", "calibrate")
        workflow.add_edge("calibrate", "execute")
        workflow.add_edge("execute", "check")
        workflow.add_edge("check", "record")
        workflow.add_edge("record", END)

        return workflow.compile()

    def _initial_state(self, source: ExperimentSource, out_dir: Optional[str], threads: Optional[int],
                       assume_ergodic: bool, check: bool) -> ExperimentState:
        return ExperimentState(
            source=source,
            experiment=None,
            run_id="",
            out_dir=out_dir or self.config.get_setting("runtime.out_dir", "runs"),
            threads=int(threads or self.config.get_setting("runtime.threads", 1)),
            assume_ergodic=assume_ergodic,
            check=check,
            calibration={},
            result={},
            checks=[],
            recorded={},
            error="",
            exception=None,
            exit_code=0,
            started_at=datetime.now().isoformat(),
            # holds the monotonic start until the record node turns it into a duration
            wall_time=time.monotonic(),
        )

    async def trigger_run(self, source: ExperimentSource, out_dir: Optional[str] = None,
                          threads: Optional[int] = None, assume_ergodic: bool = False,
                          check: bool = False) -> Dict[str, Any]:
        """
        Run one experiment through the workflow

        Args:
            source: ExperimentConfig, config dict, or path to a JSON config
            out_dir: Output root; artifacts land in <out_dir>/<experiment name>/
            threads: Worker threads for push-forwards
            assume_ergodic: Allow cocycle runs over a non-minimal base
            check: Fail with exit code 4 when any configured check fails

        Returns:
            Final workflow state (exit_code, checks, recorded paths, error)
        """
        initial_state = self._initial_state(source, out_dir, threads, assume_ergodic, check)
        result = await self.workflow.ainvoke(initial_state)

        name = result["experiment"].name if result.get("experiment") else str(source)
        if result.get("error"):
            logger.error(f"Run '{name}' finished with exit code {result['exit_code']}: {result['error']}")
        else:
            logger.info(f"Run '{name}' completed in {result['wall_time']:.2f} seconds")
        return result

    def run(self, source: ExperimentSource, out_dir: Optional[str] = None, threads: Optional[int] = None,
            assume_ergodic: bool = False, check: bool = False) -> Dict[str, Any]:
        """Synchronous wrapper around trigger_run"""
        return asyncio.run(self.trigger_run(source, out_dir, threads, assume_ergodic, check))

    async def run_suite(self, sources: List[ExperimentSource], out_dir: Optional[str] = None,
                        threads: Optional[int] = None, assume_ergodic: bool = False,
                        check: bool = False) -> List[Dict[str, Any]]:
        """Independent experiments run concurrently, one worker thread each"""
        logger.info(f"Starting suite of {len(sources)} experiments")
        tasks = [
            asyncio.to_thread(self.run, source, out_dir, threads, assume_ergodic, check)
            for source in sources
        ]
        return list(await asyncio.gather(*tasks))


def suite_exit_code(results: List[Dict[str, Any]]) -> int:
    """Worst exit code wins; config and guard errors outrank acceptance failures."""
    codes = [r.get("exit_code", 0) for r in results]
    for code in (2, 3, 1, 4):
        if code in codes:
            return code
    return 0
