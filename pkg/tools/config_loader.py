"""
Configuration Loader - Numeric defaults from config.yaml, runtime overrides from the environment
"""

import os
import copy
import yaml
from typing import Dict, Any, List, Optional
from dotenv import load_dotenv

from utils.logger import setup_logger

logger = setup_logger(__name__)

# environment variable -> dotted setting it overrides
ENV_OVERRIDES = {
    "ERGODICLAB_THREADS": "runtime.threads",
    "ERGODICLAB_OUT_DIR": "runtime.out_dir",
    "ERGODICLAB_LOG_LEVEL": "runtime.log_level",
    "ERGODICLAB_LEDGER": "runtime.ledger_path",
}

REQUIRED_SECTIONS = ("metrics", "runtime", "calibration")

DEFAULT_CONFIG: Dict[str, Any] = {
    "metrics": {
        "defaults": {
            1: {"K": 8, "s": 1.0},
            2: {"K": 8, "s": 1.0},
            3: {"K": 8, "s": 1.0},
            4: {"K": 4, "s": 1.0},
        },
    },
    "calibration": {
        "repeats": 5,
        "mode": "iid",
        "epsilon_factor": 3.0,
    },
    "runtime": {
        "threads": 1,
        "out_dir": "runs",
        "ledger_path": "runs/ledger.db",
        "log_level": "INFO",
        "log_dir": "logs",
        "log_file": "ergodiclab.log",
    },
}


def _path(key: str) -> List[str]:
    return [part for part in key.split(".") if part]


class ConfigLoader:
    """Settings tree for one process: YAML defaults with ERGODICLAB_* variables on top"""

    def __init__(self, env_file: str = ".env", config_file: str = "config/config.yaml"):
        self.env_file = env_file
        self.config_file = config_file

        if os.path.exists(env_file):
            load_dotenv(env_file)
            logger.info(f"Environment file {env_file} loaded")

        self.config_data: Dict[str, Any] = self._read_settings_file()
        for env_key, setting in ENV_OVERRIDES.items():
            raw = os.getenv(env_key)
            if raw:
                self.update_setting(setting, int(raw) if setting == "runtime.threads" else raw)
                logger.info(f"{setting} taken from ${env_key}")

    def _read_settings_file(self) -> Dict[str, Any]:
        if not os.path.exists(self.config_file):
            logger.warning(f"No settings file at {self.config_file}; built-in defaults in use")
            return copy.deepcopy(DEFAULT_CONFIG)
        try:
            with open(self.config_file, "r", encoding="utf-8") as handle:
                data = yaml.safe_load(handle) or {}
        except (OSError, yaml.YAMLError) as e:
            logger.error(f"Unreadable settings file {self.config_file}: {e}")
            return copy.deepcopy(DEFAULT_CONFIG)
        logger.debug(f"Settings read from {self.config_file}")
        return data

    def get_env(self, key: str, default: Optional[str] = None) -> Optional[str]:
        return os.getenv(key, default)

    def get_setting(self, key: str, default: Any = None) -> Any:
        """
        Look up a dotted key such as ``metrics.defaults.2.K``

        Numeric segments also match the integer keys YAML produces for
        bare numbers.
        """
        node: Any = self.config_data
        for part in _path(key):
            if not isinstance(node, dict):
                return default
            if part in node:
                node = node[part]
            elif part.isdigit() and int(part) in node:
                node = node[int(part)]
            else:
                return default
        return node

    def metric_defaults(self, dim: int) -> Dict[str, Any]:
        """Frequency cutoff K and decay s for a space of dimension ``dim``."""
        defaults = self.get_setting(f"metrics.defaults.{dim}")
        if defaults is None:
            defaults = self.get_setting("metrics.defaults.4", {"K": 4, "s": 1.0})
        return {"K": int(defaults.get("K", 4)), "s": float(defaults.get("s", 1.0))}

    def validate_config(self) -> bool:
        missing = [section for section in REQUIRED_SECTIONS if not self.get_setting(section)]
        if missing:
            logger.error(f"Settings lack section(s): {', '.join(missing)}")
            return False
        threads = self.get_setting("runtime.threads", 1)
        if not isinstance(threads, int) or threads < 1:
            logger.error(f"runtime.threads must be a positive integer, got {threads!r}")
            return False
        return True

    def update_setting(self, key: str, value: Any):
        """Set a dotted key in memory; CLI flags land here."""
        parts = _path(key)
        node = self.config_data
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
        logger.debug(f"{key} = {value!r}")

    def get_config_summary(self) -> Dict[str, Any]:
        """Settings echo written into every run manifest"""
        return {
            "config_file": self.config_file,
            "config_sections": sorted(str(k) for k in self.config_data),
            "env_overrides": sorted(k for k in ENV_OVERRIDES if os.getenv(k)),
            "threads": self.get_setting("runtime.threads", 1),
            "calibration": self.get_setting("calibration", {}),
            "validation_status": self.validate_config(),
        }
