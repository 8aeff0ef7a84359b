"""
Calibrator Agent - Measures the sampling noise floor that every threshold is tied to
"""

from typing import Any, Dict, Optional, Sequence

import numpy as np

from dynamics.measures import SpaceTag, derive_seed, sample_haar
from dynamics.metrics import haar_distance, loglog_slope
from utils.logger import setup_logger

logger = setup_logger(__name__)

MIN_REPEATS = 3


class CalibratorAgent:
    """Agent responsible for the noise floor nu_0 and the epsilon derived from it"""

    def __init__(self, config):
        self.config = config
        self.repeats = int(config.get_setting("calibration.repeats", 5))
        self.mode = config.get_setting("calibration.mode", "iid")
        self.epsilon_factor = float(config.get_setting("calibration.epsilon_factor", 3.0))

    def calibrate_noise_floor(self, space: SpaceTag, cloud_size: int, K: int = 8, s: float = 1.0,
                              seed: int = 0, repeats: Optional[int] = None, mode: Optional[str] = None) -> float:
        """
        Median haar_distance over fresh Haar clouds of the given size

        Args:
            space: Space the clouds live on
            cloud_size: Particles per cloud
            K: Frequency cutoff
            s: Decay exponent
            seed: Master seed; repeat r draws from the 'calibration-r' stream
            repeats: Number of clouds (at least 3)
            mode: 'iid' or 'stratified'

        Returns:
            float: the noise floor nu_0
        """
        repeats = self.repeats if repeats is None else int(repeats)
        mode = mode or self.mode
        if repeats < MIN_REPEATS:
            raise ValueError(f"repeats must be >= {MIN_REPEATS}, got {repeats}")

        values = []
        for r in range(repeats):
            cloud = sample_haar(space, cloud_size, derive_seed(seed, f"calibration-{r}"), mode)
            values.append(haar_distance(cloud, K, s))
        floor = float(np.median(values))
        logger.info(f"Noise floor on {space} (n={cloud_size}, K={K}, s={s}, {mode}, {repeats} repeats): {floor:.6g}")
        return floor

    def calibrate_for(self, experiment, system, metric: Dict[str, Any]) -> Dict[str, Any]:
        """Noise floor for an experiment's space and cloud size, plus the epsilon baseline."""
        calibration = experiment.calibration
        size = calibration.size or experiment.cloud.size
        repeats = calibration.repeats or self.repeats
        mode = calibration.mode or self.mode
        floor = self.calibrate_noise_floor(
            system.space, size, metric["K"], metric["s"], experiment.role_seed("calibration"), repeats, mode
        )
        return {
            "noise_floor": floor,
            "epsilon": self.epsilon_factor * floor,
            "space": str(system.space),
            "size": size,
            "repeats": repeats,
            "mode": mode,
            "K": metric["K"],
            "s": metric["s"],
        }

    def scaling_slope(self, space: SpaceTag, sizes: Sequence[int], K: int = 8, s: float = 1.0,
                      seed: int = 0, repeats: Optional[int] = None) -> float:
        """Log-log slope of the i.i.d. noise floor against cloud size (about -1/2)."""
        floors = [self.calibrate_noise_floor(space, n, K, s, seed, repeats, "iid") for n in sizes]
        return loglog_slope(sizes, floors)
