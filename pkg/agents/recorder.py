"""
Recorder Agent - Writes run artifacts atomically and keeps the run ledger
"""

import json
import platform
import uuid
from datetime import datetime
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List, Optional

from tools.io_utils import atomic_write, json_text, sha256_file, write_json
from utils.db import DB_FILE, add_output, init_db, previous_digests, save_run
from utils.logger import setup_logger

logger = setup_logger(__name__)

MANIFEST_NAME = "run_manifest.json"
MANIFEST_FORMAT = 1
TRACKED_PACKAGES = ("numpy", "scipy", "sympy", "pydantic", "PyYAML", "langgraph", "python-dotenv")


def package_versions() -> Dict[str, Optional[str]]:
    versions: Dict[str, Optional[str]] = {"python": platform.python_version()}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = None
    return versions


def new_run_id(name: str) -> str:
    return f"{name}-{datetime.now().strftime('%Y%m%dT%H%M%S')}-{uuid.uuid4().hex[:8]}"


class RecorderAgent:
    """Agent responsible for artifacts, run manifests and the sqlite ledger"""

    def __init__(self, config):
        self.config = config
        self.ledger_path = config.get_setting("runtime.ledger_path", DB_FILE)
        init_db(self.ledger_path)

    def run_directory(self, out_dir: str, experiment_name: str) -> Path:
        return Path(out_dir) / experiment_name

    def write_outputs(self, run_dir: Path, outputs: List[Dict[str, Any]]) -> Dict[str, Dict[str, str]]:
        """
        Write each agent output and digest it

        Args:
            run_dir: Directory for this experiment's artifacts
            outputs: [{"name", "content"}]; str content is written as text, dicts as JSON

        Returns:
            Dict name -> {"path", "sha256"}
        """
        artifacts = {}
        for output in outputs:
            path = run_dir / output["name"]
            content = output["content"]
            if isinstance(content, str):
                atomic_write(path, content)
            else:
                write_json(path, content)
            artifacts[output["name"]] = {"path": str(path), "sha256": sha256_file(path)}
            logger.info(f"Wrote {path}")
        return artifacts

    def compare_digests(self, config_hash: str, run_id: str, artifacts: Dict[str, Dict[str, str]]) -> List[str]:
        """Names of artifacts whose digest differs from the last completed run of the same config."""
        previous = previous_digests(config_hash, exclude_run_id=run_id, db_path=self.ledger_path)
        mismatches = [name for name, info in artifacts.items()
                      if name in previous and previous[name] != info["sha256"]]
        for name in mismatches:
            logger.warning(f"Reproducibility mismatch: {name} differs from the previous run of this config")
        if previous and not mismatches:
            logger.info("Outputs match the previous run of this config byte for byte")
        return mismatches

    def record(self, state: Dict[str, Any]) -> Dict[str, Any]:
        """
        Persist one finished (or failed) workflow run

        Artifacts are written whenever the execute step produced them, so a
        run that fails its acceptance checks still leaves its data behind.

        Args:
            state: Final workflow state from the scheduler

        Returns:
            Dict with success, run_dir, manifest path, artifacts and digest mismatches
        """
        experiment = state["experiment"]
        run_id = state["run_id"]
        run_dir = self.run_directory(state["out_dir"], experiment.name)
        result = state.get("result") or {}

        artifacts = self.write_outputs(run_dir, result.get("outputs", []))
        status = "failed" if state.get("error") else "completed"
        checks = json.loads(json_text(state.get("checks", []), indent=None))

        manifest = {
            "format": MANIFEST_FORMAT,
            "run_id": run_id,
            "status": status,
            "exit_code": state.get("exit_code", 0),
            "error": state.get("error") or None,
            "config": experiment.model_dump(mode="json"),
            "config_hash": experiment.config_hash(),
            "versions": package_versions(),
            "settings": self.config.get_config_summary(),
            "started_at": state.get("started_at"),
            "wall_time": state.get("wall_time"),
            "threads": state.get("threads", 1),
            "calibration": state.get("calibration") or None,
            "noise_floor": (state.get("calibration") or {}).get("noise_floor"),
            "outputs": {name: info["sha256"] for name, info in artifacts.items()},
            "checks": checks,
            "summary": result.get("summary", {}),
        }
        manifest_path = write_json(run_dir / MANIFEST_NAME, manifest)
        logger.info(f"Run manifest written to {manifest_path}")

        mismatches = self.compare_digests(experiment.config_hash(), run_id, artifacts) if status == "completed" else []

        saved = save_run({
            "run_id": run_id,
            "name": experiment.name,
            "kind": experiment.kind,
            "config_hash": experiment.config_hash(),
            "config_json": experiment.canonical_json(),
            "out_dir": str(run_dir),
            "status": status,
            "exit_code": state.get("exit_code", 0),
            "noise_floor": manifest["noise_floor"],
            "wall_time": state.get("wall_time"),
            "checks": checks,
            "error": state.get("error") or None,
        }, db_path=self.ledger_path)
        if saved:
            for name, info in artifacts.items():
                add_output(run_id, name, info["path"], info["sha256"], db_path=self.ledger_path)

        return {
            "success": saved,
            "run_dir": str(run_dir),
            "manifest": str(manifest_path),
            "artifacts": artifacts,
            "mismatches": mismatches,
        }
