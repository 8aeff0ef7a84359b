"""
Expansive Agent - S-set certificates, coboundary runs and the half-S limit-curve study
"""

from typing import Any, Dict, List, Tuple

import numpy as np

from agents.profile_agent import profile_checks, run_profile
from dynamics.expansive import (
    CurveSpec,
    UNIFORM_CIRCLE_SPREAD,
    ExpansiveSystem,
    classify_s,
    coboundary_residual,
    coboundary_system,
    graph_derivative_check,
    kappa,
    limit_curve_extract,
    make_example_5_5,
)
from dynamics.measures import FunctionSpec, Harmonic, derive_rng, pushforward
from tools.experiment_config import ExperimentConfig, build_cloud, build_system, resolve_metric
from tools.io_utils import profile_csv
from utils.checks import make_check, requested
from utils.logger import setup_logger

logger = setup_logger(__name__)

DEFAULT_COBOUNDARY_CURVE = FunctionSpec(0, (Harmonic((1,), 0.0, 0.1),), 1)
# sub-intervals well inside the two halves of the half-S construction
COMPLEMENT_COMPONENT = (0.15, 0.35)
S_COMPONENT = (0.6, 0.9)


def _inside(intervals: List[Tuple[float, float]], lo: float, hi: float, slack: float = 1e-12) -> bool:
    return all(a >= lo - slack and b <= hi + slack for a, b in intervals)


def _covers(intervals: List[Tuple[float, float]], lo: float, hi: float) -> bool:
    return any(a <= lo and b >= hi for a, b in intervals)


def _shift(component: Tuple[float, float], n: int, alpha: float) -> Tuple[float, float]:
    """Base interval occupied at time n by particles that started in ``component``."""
    offset = (n * alpha) % 1.0
    return (component[0] + offset) % 1.0, (component[1] + offset) % 1.0


class ExpansiveAgent:
    """Agent responsible for expansive_s, coboundary and example_5_5 experiments"""

    def __init__(self, config):
        self.config = config
        self.epsilon_factor = float(config.get_setting("calibration.epsilon_factor", 3.0))

    def run(self, experiment: ExperimentConfig, context: Dict[str, Any]) -> Dict[str, Any]:
        handlers = {
            "expansive_s": self.run_s_set,
            "coboundary": self.run_coboundary,
            "example_5_5": self.run_example_5_5,
        }
        return handlers[experiment.kind](experiment, context)

    # --- shared pieces ----------------------------------------------------

    def _configured_curve(self, experiment: ExperimentConfig, default: FunctionSpec) -> CurveSpec:
        model = experiment.expansive.curve
        return CurveSpec(model.to_spec(arity=1) if model is not None else default)

    def _derivative_check(self, experiment: ExperimentConfig, system: ExpansiveSystem,
                          curve: CurveSpec) -> Tuple[float, List[Dict[str, Any]]]:
        params = experiment.expansive
        xs = derive_rng(experiment.role_seed("check-points")).random(params.check_points)
        worst = graph_derivative_check(system, curve, xs, params.check_n_max)
        checks = []
        if (slack := requested(experiment.checks, "delta_kappa_slack")) is not None:
            checks.append(make_check("delta_kappa_slack", worst, kappa(system) + slack))
        return worst, checks

    def _profile(self, experiment: ExperimentConfig, system, curve: CurveSpec, context: Dict[str, Any],
                 support=None, prefix: str = ""):
        cloud = build_cloud(experiment, system, curve=curve)
        metric = resolve_metric(experiment, self.config, 2)
        profile = run_profile(system, cloud, experiment, metric, context.get("threads", 1), support)
        checks = profile_checks(experiment.checks, profile, context.get("noise_floor", 0.0),
                                self.epsilon_factor, prefix=prefix)
        return cloud, profile, checks

    # --- kinds ------------------------------------------------------------

    def run_s_set(self, experiment: ExperimentConfig, context: Dict[str, Any]) -> Dict[str, Any]:
        """Certified S classification for a configured curve, plus the pushed-curve profile."""
        system = build_system(experiment.system)
        curve = self._configured_curve(experiment, FunctionSpec.constant(0.0))
        params = experiment.expansive
        report = classify_s(system, curve, params.epsilon, params.grid_n, params.n_trunc, params.epsilon_out)
        worst, checks = self._derivative_check(experiment, system, curve)

        _, profile, profile_results = self._profile(experiment, system, curve, context)
        checks += profile_results
        if (t := requested(experiment.checks, "s_cover_min")) is not None:
            checks.append(make_check("s_cover_min", report.measure("certified_in"), t, ">="))

        outputs = [
            {"name": "s_set.json", "content": report.to_dict()},
            {"name": "profile.csv", "content": profile_csv(profile)},
        ]
        summary = {
            "certified_in": report.measure("certified_in"),
            "certified_out": report.measure("certified_out"),
            "kappa": report.kappa,
            "beta": report.beta,
            "delta_check": worst,
            "final": profile[-1].fourier_value,
        }
        return {"success": True, "outputs": outputs, "checks": checks, "summary": summary}

    def run_coboundary(self, experiment: ExperimentConfig, context: Dict[str, Any]) -> Dict[str, Any]:
        """f is rebuilt as gamma(. + alpha) - p gamma + c; the pushed curve should stay a curve."""
        configured = build_system(experiment.system)
        gamma = self._configured_curve(experiment, DEFAULT_COBOUNDARY_CURVE).gamma
        system, curve = coboundary_system(gamma, configured.alpha, configured.p,
                                          experiment.expansive.coboundary_constant)
        residual = coboundary_residual(system, curve, experiment.expansive.grid_n)
        logger.info(f"Coboundary residual {residual:.3e}")

        _, profile, checks = self._profile(experiment, system, curve, context)
        if (t := requested(experiment.checks, "residual_max")) is not None:
            checks.append(make_check("residual_max", residual, t))

        outputs = [
            {"name": "profile.csv", "content": profile_csv(profile)},
            {"name": "coboundary.json", "content": {
                "system": system.to_dict(),
                "gamma": curve.gamma.to_dict(),
                "residual": residual,
            }},
        ]
        summary = {"residual": residual, "initial": profile[0].fourier_value, "final": profile[-1].fourier_value}
        return {"success": True, "outputs": outputs, "checks": checks, "summary": summary}

    def run_example_5_5(self, experiment: ExperimentConfig, context: Dict[str, Any]) -> Dict[str, Any]:
        """
        Build the half-S curve, then compare full and base-only profiles and
        read the limit curve off the complement after extract_n steps
        """
        system = build_system(experiment.system)
        params = experiment.expansive
        example = make_example_5_5(system, params.n_trunc, grid_n=params.grid_n)
        curve = example.curve
        report = classify_s(system, curve, params.epsilon, params.grid_n, params.n_trunc, params.epsilon_out)
        worst, checks = self._derivative_check(experiment, system, curve)
        k = kappa(system)

        cloud, full, full_checks = self._profile(experiment, system, curve, context)
        _, base, base_checks = self._profile(experiment, system, curve, context, support=[0], prefix="base_")
        checks += full_checks + base_checks

        in_half = _inside(report.certified_in, 0.5, 1.0) and _inside(report.certified_out, 0.0, 0.5)
        if requested(experiment.checks, "s_inside_halves") is not None:
            checks.append(make_check("s_inside_halves", in_half, True, "=="))
        if (t := requested(experiment.checks, "beta_max")) is not None:
            checks.append(make_check("beta_max", report.beta, t))

        n = params.extract_n
        pushed = pushforward(cloud, system, n, context.get("threads", 1))
        complement = limit_curve_extract(pushed, _shift(COMPLEMENT_COMPONENT, n, system.alpha), params.extract_bins)
        s_part = limit_curve_extract(pushed, _shift(S_COMPONENT, n, system.alpha), params.extract_bins)
        if not _covers(report.certified_out, *COMPLEMENT_COMPONENT):
            logger.warning(f"Complement component {COMPLEMENT_COMPONENT} is not fully certified out of S")

        if (t := requested(experiment.checks, "spread_max")) is not None:
            checks.append(make_check("spread_max", complement.max_vertical_spread, t))
        if (t := requested(experiment.checks, "lipschitz_kappa_factor")) is not None:
            checks.append(make_check("lipschitz_kappa_factor", complement.lipschitz_estimate, t * k))
        if (t := requested(experiment.checks, "s_spread_min_ratio")) is not None:
            checks.append(make_check("s_spread_min_ratio", s_part.min_vertical_spread, t * UNIFORM_CIRCLE_SPREAD,
                                     ">="))

        outputs = [
            {"name": "example_5_5.json", "content": example.to_dict()},
            {"name": "s_set.json", "content": report.to_dict()},
            {"name": "profile.csv", "content": profile_csv(full)},
            {"name": "profile_base.csv", "content": profile_csv(base)},
            {"name": "limit_curve.json", "content": {
                "n": n,
                "kappa": k,
                "complement_component": list(COMPLEMENT_COMPONENT),
                "s_component": list(S_COMPONENT),
                "complement": complement.to_dict(),
                "s": s_part.to_dict(),
                "complement_bin_means": np.where(np.isnan(complement.bin_means), None,
                                                 complement.bin_means).tolist(),
            }},
        ]
        summary = {
            "certified_in": report.measure("certified_in"),
            "certified_out": report.measure("certified_out"),
            "beta": report.beta,
            "kappa": k,
            "delta_check": worst,
            "full_min": min(p.fourier_value for p in full),
            "base_max": max(p.fourier_value for p in base),
            "spread": complement.max_vertical_spread,
            "detrended_spread": complement.max_detrended_spread,
            "lipschitz": complement.lipschitz_estimate,
        }
        return {"success": True, "outputs": outputs, "checks": checks, "summary": summary}
