"""
Distance Profile Agent - Pushes a cloud along an orbit and reads convergence off its Haar distance
"""

from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from dynamics.measures import ParticleCloud
from dynamics.metrics import ProfilePoint, cesaro_average, density_statistics, distance_profile, twisting_report
from dynamics.torus_skew import vertical_rotation_defect
from tools.experiment_config import ExperimentConfig, build_cloud, build_system, resolve_metric
from tools.io_utils import profile_csv
from utils.checks import make_check, requested
from utils.logger import setup_logger

logger = setup_logger(__name__)


def run_profile(system, cloud: ParticleCloud, experiment: ExperimentConfig, metric: Dict[str, Any],
                threads: int = 1, support: Optional[Sequence[int]] = None) -> List[ProfilePoint]:
    schedule = experiment.schedule
    return distance_profile(
        system,
        cloud,
        schedule.n_max,
        metric["K"],
        metric["s"],
        schedule.stride,
        support if support is not None else metric["support"],
        metric["family_size"],
        metric["family_seed"],
        threads,
        schedule.times,
    )


def _decreasing_or_floor(values: Sequence[float], floor: float) -> bool:
    """Strictly decreasing, or already indistinguishable from sampling noise everywhere."""
    arr = np.asarray(values, dtype=float)
    if arr.size < 2:
        return True
    return bool(np.all(np.diff(arr) < 0) or np.all(arr <= floor))


def profile_checks(thresholds: Dict[str, float], profile: List[ProfilePoint], noise_floor: float,
                   epsilon_factor: float, prefix: str = "") -> List[Dict[str, Any]]:
    """
    Threshold checks on a profile; only names present in ``thresholds`` are evaluated

    Names ending in _noise_factor scale the noise floor; the others are
    absolute.
    """
    values = [p.fourier_value for p in profile]
    later = values[1:] if len(values) > 1 else values
    checks = []

    def wanted(name):
        return requested(thresholds, prefix + name)

    if (t := wanted("final_max_noise_factor")) is not None:
        checks.append(make_check(prefix + "final_max_noise_factor", values[-1], t * noise_floor))
    if (t := wanted("final_max")) is not None:
        checks.append(make_check(prefix + "final_max", values[-1], t))
    if (t := wanted("initial_min")) is not None:
        checks.append(make_check(prefix + "initial_min", values[0], t, ">="))
    if (t := wanted("min_value")) is not None:
        checks.append(make_check(prefix + "min_value", min(values), t, ">="))
    if (t := wanted("max_noise_factor")) is not None:
        checks.append(make_check(prefix + "max_noise_factor", max(values), t * noise_floor))
    if wanted("strictly_decreasing") is not None:
        checks.append(make_check(prefix + "strictly_decreasing", _decreasing_or_floor(later, noise_floor), True, "=="))
    if (t := wanted("constant_within_factor")) is not None:
        ratio = max(values) / min(values) if min(values) > 0 else float("inf")
        checks.append(make_check(prefix + "constant_within_factor", ratio, t))
    if (t := wanted("constant_within")) is not None:
        checks.append(make_check(prefix + "constant_within", max(values) - min(values), t))
    if (t := wanted("min_ratio_to_initial")) is not None:
        ratio = min(values) / values[0] if values[0] > 0 else float("nan")
        checks.append(make_check(prefix + "min_ratio_to_initial", ratio, t, ">="))
    if (t := wanted("cesaro_max_ratio")) is not None:
        checks.append(make_check(prefix + "cesaro_max_ratio", cesaro_average(later), t * values[0]))
    if (t := wanted("density_max")) is not None:
        factor = requested(thresholds, prefix + "density_epsilon_factor") or epsilon_factor
        report = density_statistics(later, max(factor * noise_floor, np.finfo(float).tiny))
        checks.append(make_check(prefix + "density_max", report.density, t))
    return checks


class DistanceProfileAgent:
    """Agent responsible for distance_profile experiments"""

    def __init__(self, config):
        self.config = config
        self.epsilon_factor = float(config.get_setting("calibration.epsilon_factor", 3.0))

    def run(self, experiment: ExperimentConfig, context: Dict[str, Any]) -> Dict[str, Any]:
        """
        Profile, twisting diagnostics and (optionally) the vertical rotation defect

        Args:
            experiment: Validated experiment config
            context: noise_floor, epsilon and threads from the scheduler

        Returns:
            Dict with success, outputs, checks and summary
        """
        system = build_system(experiment.system)
        cloud = build_cloud(experiment, system)
        metric = resolve_metric(experiment, self.config, system.space.dim)
        threads = context.get("threads", 1)
        noise_floor = context.get("noise_floor", 0.0)

        logger.info(f"Running distance profile '{experiment.name}' on {system.space} "
                    f"with {cloud.size} particles up to n={experiment.schedule.n_max}")
        profile = run_profile(system, cloud, experiment, metric, threads)
        values = [p.fourier_value for p in profile]
        later = values[1:] if len(values) > 1 else values

        epsilon = max(context.get("epsilon", 0.0), np.finfo(float).tiny)
        density = density_statistics(later, epsilon, windows=experiment.schedule.windows)
        twisting = twisting_report(later, experiment.schedule.windows)
        outputs = [
            {"name": "profile.csv", "content": profile_csv(profile)},
            {"name": "twisting.json", "content": {"twisting": twisting.to_dict(), "density": density.to_dict()}},
        ]
        checks = profile_checks(experiment.checks, profile, noise_floor, self.epsilon_factor)
        summary = {"initial": values[0], "final": values[-1], "points": len(profile), "density": density.density}

        if experiment.schedule.rotation_t is not None:
            t = experiment.schedule.rotation_t
            defect = vertical_rotation_defect(system, cloud, t, experiment.schedule.n_max,
                                              metric["K"], metric["s"], threads)
            outputs.append({"name": "rotation_defect.json",
                            "content": {"t": t, "n": experiment.schedule.n_max, "defect": defect}})
            summary["rotation_defect"] = defect
            if (factor := requested(experiment.checks, "defect_max_noise_factor")) is not None:
                checks.append(make_check("defect_max_noise_factor", defect, factor * noise_floor))

        logger.info(f"Profile '{experiment.name}': initial={values[0]:.4g} final={values[-1]:.4g}")
        return {"success": True, "outputs": outputs, "checks": checks, "summary": summary}
