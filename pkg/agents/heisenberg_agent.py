"""
Heisenberg Agent - Nilrotation profiles on H3(R)/H3(Z) and on the torus factor
"""

from typing import Any, Dict

from agents.profile_agent import profile_checks, run_profile
from dynamics.heisenberg import heis_power, torus_factor_cloud
from dynamics.measures import pushforward
from dynamics.metrics import haar_distance
from dynamics.torus_skew import RotationSystem
from tools.experiment_config import ExperimentConfig, build_cloud, build_system, resolve_metric
from tools.io_utils import profile_csv
from utils.checks import make_check, requested
from utils.logger import setup_logger

logger = setup_logger(__name__)


class HeisenbergAgent:
    """Agent responsible for heisenberg experiments"""

    def __init__(self, config):
        self.config = config
        self.epsilon_factor = float(config.get_setting("calibration.epsilon_factor", 3.0))

    def run(self, experiment: ExperimentConfig, context: Dict[str, Any]) -> Dict[str, Any]:
        rotation = build_system(experiment.system)
        cloud = build_cloud(experiment, rotation)
        metric = resolve_metric(experiment, self.config, 3)
        threads = context.get("threads", 1)
        noise_floor = context.get("noise_floor", 0.0)
        if not rotation.is_minimal():
            logger.warning(f"Nilrotation {rotation.u} is not minimal on the torus factor")

        logger.info(f"Heisenberg profile '{experiment.name}': {cloud.size} particles, u={rotation.u}")
        profile = run_profile(rotation, cloud, experiment, metric, threads)

        # the torus factor sees a plain rotation, so its profile is flat
        base_metric = resolve_metric(experiment, self.config, 2)
        base_rotation = RotationSystem((rotation.xu, rotation.yu))
        base_profile = run_profile(base_rotation, torus_factor_cloud(cloud), experiment, base_metric, threads)

        checks = profile_checks(experiment.checks, profile, noise_floor, self.epsilon_factor)
        checks += profile_checks(experiment.checks, base_profile, noise_floor, self.epsilon_factor, prefix="factor_")

        n = experiment.schedule.n_max
        pushed = pushforward(cloud, rotation, n, threads)
        projected = torus_factor_cloud(pushed)
        factor_gap = haar_distance(projected, base_metric["K"], base_metric["s"]) - base_profile[-1].fourier_value
        if (t := requested(experiment.checks, "factor_projection_gap")) is not None:
            checks.append(make_check("factor_projection_gap", abs(factor_gap), t))

        # z drift of u^n before reduction
        drift = heis_power(rotation.u, n)[2]
        outputs = [
            {"name": "profile.csv", "content": profile_csv(profile)},
            {"name": "torus_factor_profile.csv", "content": profile_csv(base_profile)},
            {"name": "heisenberg.json", "content": {
                "u": list(rotation.u),
                "minimal": rotation.is_minimal(),
                "n": n,
                "z_drift": drift,
                "factor_projection_gap": float(factor_gap),
            }},
        ]
        summary = {
            "initial": profile[0].fourier_value,
            "final": profile[-1].fourier_value,
            "factor_final": base_profile[-1].fourier_value,
            "z_drift": float(drift),
        }
        return {"success": True, "outputs": outputs, "checks": checks, "summary": summary}
