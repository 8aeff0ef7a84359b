"""
Torus Skew - Rotations and iterated skew products on T^d

T(x_1, ..., x_d) = (x_1 + alpha, x_2 + f_1(x_1), ..., x_d + f_{d-1}(x_1..x_{d-1}))

plus their Jacobian cocycles in the reversed basis (d/dx_d, ..., d/dx_1),
where every Jacobian is upper unipotent.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from dynamics.measures import (
    FunctionSpec,
    Harmonic,
    ParticleCloud,
    SpaceTag,
    TorusPoint,
    cloud_on_graph,
    pushforward,
    wrap,
)
from dynamics.metrics import fourier_coefficients, frequency_weights
from dynamics.unipotent import UnipotentMatrix, ordered_product
from utils.logger import setup_logger

logger = setup_logger(__name__)

DEFAULT_ALPHA = (np.sqrt(5.0) - 1.0) / 2.0
MAX_RATIONAL_DENOMINATOR = 10 ** 6
RATIONAL_TOLERANCE = 1e-14
SYSTEM_FORMAT = 1


def check_irrational(alpha: float, name: str = "alpha") -> float:
    """
    Reject rotation numbers that are rationals p/q with q <= 10^6 to machine precision

    Returns:
        alpha as a float
    """
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"{name} must lie in (0, 1), got {alpha}")
    nearest = Fraction(alpha).limit_denominator(MAX_RATIONAL_DENOMINATOR)
    if abs(alpha - nearest.numerator / nearest.denominator) < RATIONAL_TOLERANCE:
        raise ValueError(f"{name}={alpha!r} is rational to machine precision ({nearest})")
    return alpha


def small_integer_relation(values: Sequence[float], max_coeff: Optional[int] = None,
                           tol: float = 1e-9) -> Optional[Tuple[int, ...]]:
    """
    Search for nonzero k in [-max_coeff, max_coeff]^d with k.values within tol of an integer

    Returns:
        The first relation found, or None when 1, values[0], ... look rationally independent
    """
    vals = np.asarray(values, dtype=float).reshape(-1)
    d = vals.size
    if max_coeff is None:
        max_coeff = 64 if d <= 2 else 12
    coeffs = np.arange(-max_coeff, max_coeff + 1)
    for combo in itertools.product(coeffs, repeat=d - 1) if d > 1 else [()]:
        head = float(np.dot(combo, vals[:-1])) if d > 1 else 0.0
        totals = head + coeffs * vals[-1]
        dist = np.abs(totals - np.round(totals))
        hits = np.nonzero(dist < tol)[0]
        for h in hits:
            k = tuple(int(c) for c in combo) + (int(coeffs[h]),)
            if any(k):
                return k
    return None


@dataclass(frozen=True)
class RotationSystem:
    """x -> x + alpha on T^d (the equicontinuous case)"""

    alpha: Tuple[float, ...]

    def __post_init__(self):
        alpha = tuple(float(a) for a in np.atleast_1d(np.asarray(self.alpha, dtype=float)))
        if not alpha:
            raise ValueError("RotationSystem needs at least one rotation number")
        object.__setattr__(self, "alpha", alpha)

    @property
    def d(self) -> int:
        return len(self.alpha)

    @property
    def space(self) -> SpaceTag:
        return SpaceTag.torus(self.d)

    def is_minimal(self) -> bool:
        return small_integer_relation(self.alpha) is None

    def step_array(self, points: np.ndarray) -> np.ndarray:
        return wrap(points + np.asarray(self.alpha))

    def step(self, p: TorusPoint) -> TorusPoint:
        if p.dim != self.d:
            raise ValueError(f"Point of T^{p.dim} given to a rotation of T^{self.d}")
        return p + self.alpha

    def orbit(self, x: Sequence[float], length: int) -> np.ndarray:
        """Points x, Tx, ..., T^(length-1)x as a (length, d) array."""
        start = np.asarray(x, dtype=float).reshape(1, -1)
        return wrap(start + np.arange(length).reshape(-1, 1) * np.asarray(self.alpha))

    def to_dict(self) -> Dict[str, Any]:
        return {"format": SYSTEM_FORMAT, "type": "rotation", "alpha": list(self.alpha)}


@dataclass(frozen=True)
class SkewSystem:
    """
    Iterated skew product over the rotation by alpha

    ``skews[k]`` has arity k+1 and feeds x_1..x_{k+1} into coordinate k+2.
    """

    alpha: float
    skews: Tuple[FunctionSpec, ...]
    furstenberg: bool = False

    def __post_init__(self):
        object.__setattr__(self, "alpha", check_irrational(self.alpha))
        skews = tuple(self.skews)
        if not skews:
            raise ValueError("A skew system needs at least one skewing map (d >= 2)")
        for k, f in enumerate(skews):
            if f.arity != k + 1:
                raise ValueError(f"skews[{k}] must have arity {k + 1}, got {f.arity}")
            if self.furstenberg and f.winding == 0:
                raise ValueError(f"skews[{k}] has winding 0 but the system is flagged Furstenberg class")
        object.__setattr__(self, "skews", skews)

    @property
    def d(self) -> int:
        return len(self.skews) + 1

    @property
    def space(self) -> SpaceTag:
        return SpaceTag.torus(self.d)

    def is_minimal(self) -> bool:
        """Nonzero windings over an irrational rotation give a uniquely ergodic skew."""
        return all(f.winding != 0 for f in self.skews)

    def lipschitz_constants(self) -> List[float]:
        return [f.lipschitz_bound() for f in self.skews]

    # --- dynamics -----------------------------------------------------

    def step_array(self, points: np.ndarray) -> np.ndarray:
        out = np.empty_like(points)
        out[:, 0] = points[:, 0] + self.alpha
        for k, f in enumerate(self.skews):
            out[:, k + 1] = points[:, k + 1] + np.asarray(f.lift(points[:, :k + 1]))
        return wrap(out)

    def step(self, p: TorusPoint) -> TorusPoint:
        if p.dim != self.d:
            raise ValueError(f"Point of T^{p.dim} given to a skew system on T^{self.d}")
        return TorusPoint(tuple(self.step_array(p.as_array().reshape(1, -1))[0]))

    def truncate(self, j: int) -> Union["SkewSystem", RotationSystem]:
        """The factor system on the first j coordinates."""
        if not 1 <= j <= self.d:
            raise ValueError(f"Cannot truncate a {self.d}-dimensional system to {j} coordinates")
        if j == 1:
            return RotationSystem((self.alpha,))
        return SkewSystem(self.alpha, self.skews[:j - 1], self.furstenberg)

    def orbit(self, x: Sequence[float], length: int) -> np.ndarray:
        """
        Points x, Tx, ..., T^(length-1)x as a (length, d) array

        Coordinates are filled one at a time with cumulative sums; coordinate
        k+2 only needs the already computed coordinates 1..k+1.
        """
        start = np.asarray(x, dtype=float).reshape(-1)
        if start.size != self.d:
            raise ValueError(f"Start point has {start.size} coordinates, expected {self.d}")
        if length < 1:
            raise ValueError("Orbit length must be >= 1")
        out = np.empty((length, self.d))
        out[:, 0] = wrap(start[0] + np.arange(length) * self.alpha)
        for k, f in enumerate(self.skews):
            increments = np.asarray(f.evaluate(out[:length - 1, :k + 1])).reshape(-1)
            out[0, k + 1] = start[k + 1]
            out[1:, k + 1] = start[k + 1] + np.cumsum(increments)
            out[:, k + 1] = wrap(out[:, k + 1])
        return out

    # --- derivatives --------------------------------------------------

    def derivative_steps(self, points: np.ndarray) -> np.ndarray:
        """
        Jacobians at many points as an (n, d, d) array in the reversed basis

        Row i stands for coordinate c = d - i (1-based). Entry (i, j) with
        i < j is d f_{c-1} / d x_{d-j}.
        """
        pts = np.asarray(points, dtype=float).reshape(-1, self.d)
        n, d = pts.shape[0], self.d
        jac = np.broadcast_to(np.eye(d), (n, d, d)).copy()
        for i in range(d - 1):
            c = d - i
            f = self.skews[c - 2]
            for j in range(i + 1, d):
                var = d - j - 1
                jac[:, i, j] = np.asarray(f.partial(pts[:, :c - 1], var)).reshape(-1)
        return jac

    def derivative_step(self, p: Union[TorusPoint, Sequence[float]]):
        coords = p.as_array() if isinstance(p, TorusPoint) else np.asarray(p, dtype=float)
        return UnipotentMatrix.from_array(self.derivative_steps(coords.reshape(1, -1))[0])

    def orbit_derivative(self, x: Sequence[float], n: int):
        """D(T^n) at x: the Jacobian cocycle product along the orbit."""
        if n == 0:
            return UnipotentMatrix.identity(self.d)
        return UnipotentMatrix.from_array(ordered_product(self.derivative_steps(self.orbit(x, n))))

    def winding_integral(self, index: int, base_point: Optional[Sequence[float]] = None,
                         grid_n: int = 1024) -> float:
        """
        Integral over the last variable of d f_index / d(last variable)

        Midpoint quadrature is exact for the trigonometric part once grid_n
        exceeds the largest frequency, leaving exactly the winding.
        """
        f = self.skews[index]
        if grid_n <= f.max_frequency:
            raise ValueError("grid_n must exceed the largest harmonic frequency")
        prefix = np.zeros(f.arity - 1) if base_point is None else np.asarray(base_point, dtype=float)[:f.arity - 1]
        t = (np.arange(grid_n) + 0.5) / grid_n
        pts = np.column_stack([np.tile(prefix, (grid_n, 1)), t]) if f.arity > 1 else t
        return float(np.mean(f.partial(pts, -1)))

    # --- serialisation -------------------------------------------------

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format": SYSTEM_FORMAT,
            "type": "skew",
            "d": self.d,
            "alpha": self.alpha,
            "furstenberg": self.furstenberg,
            "skews": [f.to_dict() for f in self.skews],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SkewSystem":
        if data.get("format", SYSTEM_FORMAT) != SYSTEM_FORMAT:
            raise ValueError(f"Unsupported system format {data.get('format')!r}")
        skews = tuple(FunctionSpec.from_dict(s, arity=k + 1) for k, s in enumerate(data["skews"]))
        system = cls(data.get("alpha", DEFAULT_ALPHA), skews, bool(data.get("furstenberg", False)))
        if "d" in data and int(data["d"]) != system.d:
            raise ValueError(f"d={data['d']} but {len(skews)} skews were given")
        return system


def motivating_system(alpha: float = DEFAULT_ALPHA) -> SkewSystem:
    """(x, y) -> (x + alpha, y + x)."""
    return SkewSystem(alpha, (FunctionSpec.linear(1, 1),), furstenberg=True)


def furstenberg_system(windings: Sequence[int], alpha: float = DEFAULT_ALPHA,
                       amplitudes: Optional[Sequence[float]] = None) -> SkewSystem:
    """
    f_k(x_1..x_k) = q_k x_k + (a_k / 2 pi) sin(2 pi x_k)

    With |a_k| < |q_k| every skew stays monotone in its last variable.
    """
    amplitudes = list(amplitudes) if amplitudes is not None else [0.0] * len(windings)
    if len(amplitudes) != len(windings):
        raise ValueError("Need one amplitude per winding")
    skews = []
    for k, (q, a) in enumerate(zip(windings, amplitudes)):
        unit = tuple([0] * k + [1])
        harmonics = (Harmonic(unit, 0.0, a / (2.0 * np.pi)),) if a else ()
        skews.append(FunctionSpec(int(q), harmonics, k + 1))
    return SkewSystem(alpha, tuple(skews), furstenberg=all(q != 0 for q in windings))


def horizontal_cloud(d: int, n: int, heights: Optional[Sequence[float]] = None, seed: int = 0,
                     mode: str = "stratified") -> ParticleCloud:
    """Lebesgue on the base circle times a point mass in every fiber coordinate."""
    heights = list(heights) if heights is not None else [0.0] * (d - 1)
    if len(heights) != d - 1:
        raise ValueError(f"Need {d - 1} fiber heights, got {len(heights)}")
    return cloud_on_graph([FunctionSpec.constant(h) for h in heights], n, seed, mode)


def vertical_rotate(cloud: ParticleCloud, t: float) -> ParticleCloud:
    """R_t: add t to the last coordinate of every particle."""
    points = np.array(cloud.points)
    points[:, -1] = points[:, -1] + t
    return cloud.with_points(wrap(points))


def rotation_defect(cloud: ParticleCloud, t: float, K: int = 8, s: float = 1.0) -> float:
    """
    fourier_distance(R_t cloud, cloud) from one coefficient set

    R_t multiplies the coefficient at k by exp(-2 pi i k_d t).
    """
    if t == 0:
        return 0.0
    freqs, weights = frequency_weights(cloud.dim, K, s)
    coefs = fourier_coefficients(cloud, freqs)
    phase = np.exp(-2j * np.pi * freqs[:, -1] * t) - 1.0
    return float(np.sum(weights * np.abs(coefs) * np.abs(phase)))


def vertical_rotation_defect(system, mu: ParticleCloud, t: float, n: int, K: int = 8, s: float = 1.0,
                             threads: int = 1) -> float:
    """Defect of T^n_* mu from invariance under rotation in the last coordinate."""
    return rotation_defect(pushforward(mu, system, n, threads), t, K, s)
