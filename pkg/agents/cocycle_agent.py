"""
Cocycle Agent - Unipotent multiplicative ergodic theorem runs and the exact power-polynomial suite
"""

from fractions import Fraction
from typing import Any, Dict, List, Tuple

import numpy as np

from dynamics.measures import derive_rng
from dynamics.unipotent import (
    EXACT,
    CocycleSpec,
    UnipotentMatrix,
    lambda_constant,
    lemma_identity_holds,
    met_convergence_check,
    met_limit_prediction,
)
from tools.experiment_config import ExperimentConfig, build_system
from tools.io_utils import convergence_csv
from utils.checks import make_check, requested
from utils.errors import ConfigError
from utils.logger import setup_logger

logger = setup_logger(__name__)


def _entry_key(key: str) -> Tuple[int, int]:
    """'1,3' (1-based, as written in configs) -> (0, 2)."""
    i, j = (int(part) for part in key.replace(" ", "").split(","))
    return i - 1, j - 1


def random_rational_unipotent(rng: np.random.Generator, d: int, max_numerator: int = 9,
                              max_denominator: int = 7) -> UnipotentMatrix:
    upper = {}
    for i in range(d):
        for j in range(i + 1, d):
            num = int(rng.integers(-max_numerator, max_numerator + 1))
            den = int(rng.integers(1, max_denominator + 1))
            upper[(i, j)] = Fraction(num, den)
    return UnipotentMatrix.from_upper(d, upper, EXACT)


def lemma_suite(samples: int, max_dim: int, seed: int) -> Dict[str, Any]:
    """Exact check of the power-polynomial identity on random rational matrices of size 2..max_dim."""
    rng = derive_rng(seed, "lemma-suite")
    failures: List[Dict[str, Any]] = []
    checked = 0
    for _ in range(samples):
        d = int(rng.integers(2, max_dim + 1))
        u = random_rational_unipotent(rng, d)
        for i in range(d):
            for j in range(i + 1, d):
                checked += 1
                if not lemma_identity_holds(u, i, j):
                    failures.append({"matrix": u.to_list(), "i": i + 1, "j": j + 1})
    logger.info(f"Power-polynomial suite: {checked} entries over {samples} matrices, {len(failures)} failures")
    return {"samples": samples, "entries_checked": checked, "failures": failures}


class CocycleAgent:
    """Agent responsible for cocycle_met experiments"""

    def __init__(self, config):
        self.config = config

    def build_spec(self, experiment: ExperimentConfig, system) -> CocycleSpec:
        params = experiment.cocycle
        try:
            if params.generator == "derivative":
                return CocycleSpec.derivative(system)
            if params.generator == "constant":
                upper = {_entry_key(k): v for k, v in (params.constant or {}).items()}
                return CocycleSpec.constant_generator(system, UnipotentMatrix.from_upper(system.d, upper))
            entries = {_entry_key(k): f.to_spec(arity=system.d) for k, f in (params.entries or {}).items()}
            return CocycleSpec.entrywise(system, system.d, entries)
        except ValueError as e:
            raise ConfigError(str(e), field_path="cocycle") from e

    def run(self, experiment: ExperimentConfig, context: Dict[str, Any]) -> Dict[str, Any]:
        """
        Convergence of theta_{1/n} C(x, n) to the predicted constant from several starts

        Args:
            experiment: Validated experiment config
            context: scheduler context (assume_ergodic is honoured here)

        Returns:
            Dict with success, outputs, checks and summary
        """
        system = build_system(experiment.system)
        if not system.is_minimal():
            if not context.get("assume_ergodic"):
                raise ConfigError("base is not minimal; pass --assume-ergodic to run the cocycle anyway",
                                  field_path="system")
            logger.warning("Running a cocycle over a non-minimal base (--assume-ergodic)")

        params = experiment.cocycle
        spec = self.build_spec(experiment, system)
        prediction = met_limit_prediction(spec, params.haar_sample_size, experiment.role_seed("haar"))
        starts = derive_rng(experiment.role_seed("starts")).random((params.starts, system.d))

        finals = []
        first_rows = None
        for k, x in enumerate(starts):
            rows = met_convergence_check(spec, x, params.n_list, prediction)
            if first_rows is None:
                first_rows = rows
            finals.append(rows[-1].max_deviation)
            logger.info(f"Start {k}: deviation at n={rows[-1].n} is {rows[-1].max_deviation:.3e}")

        worst = float(max(finals))
        summary: Dict[str, Any] = {
            "prediction": prediction.to_list(),
            "n_final": params.n_list[-1],
            "final_deviations": finals,
            "worst_final_deviation": worst,
            "generator_sup": spec.generator_sup(seed=experiment.role_seed("generator-sup")),
            "starts": starts.tolist(),
        }
        checks = []
        if (t := requested(experiment.checks, "final_max_deviation")) is not None:
            checks.append(make_check("final_max_deviation", worst, t))

        if spec.d >= 3:
            means = [prediction[i, i + 1] for i in range(spec.d - 1)]
            expected = float(lambda_constant(2)) * means[0] * means[1]
            summary["lambda_2"] = str(lambda_constant(2))
            summary["corner_expected"] = expected
            if (t := requested(experiment.checks, "lambda_entry_error")) is not None:
                checks.append(make_check("lambda_entry_error", abs(prediction[0, 2] - expected), t))

        outputs = [{"name": "convergence.csv", "content": convergence_csv(first_rows)}]
        if params.lemma_samples:
            suite = lemma_suite(params.lemma_samples, params.lemma_max_dim, experiment.role_seed("lemma"))
            outputs.append({"name": "lemma_suite.json", "content": suite})
            summary["lemma_failures"] = len(suite["failures"])
            if (t := requested(experiment.checks, "lemma_failures")) is not None:
                checks.append(make_check("lemma_failures", len(suite["failures"]), int(t)))

        outputs.append({"name": "met_summary.json", "content": summary})
        return {"success": True, "outputs": outputs, "checks": checks, "summary": {"worst_final_deviation": worst}}
