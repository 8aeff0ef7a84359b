"""
Heisenberg - The nilmanifold H3(R)/H3(Z) in Malcev coordinates

Group law: (x, y, z) * (x', y', z') = (x + x', y + y', z + z' + x y').
The fundamental domain is the unit cube; nilrotations act on the left.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, Sequence, Tuple

import numpy as np

from dynamics.measures import ParticleCloud, SpaceTag, TorusPoint, project, stratified_grid, wrap
from dynamics.torus_skew import small_integer_relation
from utils.logger import setup_logger

logger = setup_logger(__name__)

Element = Tuple[float, float, float]

DEFAULT_NILROTATION: Element = ((np.sqrt(5.0) - 1.0) / 2.0, np.sqrt(2.0) - 1.0, 0.0)
IDENTITY: Element = (0.0, 0.0, 0.0)
# closed-form powers are applied this many steps at a time before reducing
POWER_BLOCK = 256


def heis_mul_array(g: np.ndarray, h: np.ndarray) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    out = g + h
    out[..., 2] = g[..., 2] + h[..., 2] + g[..., 0] * h[..., 1]
    return out


def heis_mul(g: Sequence[float], h: Sequence[float]) -> Element:
    x, y, z = heis_mul_array(np.asarray(g, dtype=float), np.asarray(h, dtype=float))
    return float(x), float(y), float(z)


def heis_inverse(g: Sequence[float]) -> Element:
    x, y, z = (float(v) for v in g)
    return -x, -y, -z + x * y


def commutator(g: Sequence[float], h: Sequence[float]) -> Element:
    """g h g^-1 h^-1; always central, (0, 0, x_g y_h - x_h y_g)."""
    return heis_mul(heis_mul(g, h), heis_mul(heis_inverse(g), heis_inverse(h)))


def heis_power(u: Sequence[float], n: int) -> Element:
    """u^n = (n x, n y, n z + n(n-1)/2 x y)."""
    x, y, z = (float(v) for v in u)
    return n * x, n * y, n * z + 0.5 * n * (n - 1) * x * y


def reduce_array(g: np.ndarray) -> np.ndarray:
    """
    Right-multiply by the lattice element that lands in the unit cube

    g * (a, b, c) = (x + a, y + b, z + c + x b) with a = -floor(x),
    b = -floor(y), c = -floor(z - x floor(y)).
    """
    g = np.asarray(g, dtype=float)
    out = np.empty_like(g)
    fy = np.floor(g[..., 1])
    out[..., 0] = wrap(g[..., 0])
    out[..., 1] = wrap(g[..., 1])
    out[..., 2] = wrap(g[..., 2] - g[..., 0] * fy)
    return out


@dataclass(frozen=True)
class HeisenbergPoint:
    """A point of the fundamental domain: all coordinates in [0, 1)"""

    x: float
    y: float
    z: float

    def __post_init__(self):
        for name in ("x", "y", "z"):
            value = float(getattr(self, name))
            if not 0.0 <= value < 1.0:
                raise ValueError(f"Malcev coordinate {name}={value} outside [0, 1); use reduce()")
            object.__setattr__(self, name, value)

    def as_tuple(self) -> Element:
        return self.x, self.y, self.z


def reduce(g: Sequence[float]) -> HeisenbergPoint:
    x, y, z = reduce_array(np.asarray(g, dtype=float).reshape(3))
    return HeisenbergPoint(float(x), float(y), float(z))


def torus_factor(p: HeisenbergPoint) -> TorusPoint:
    return TorusPoint((p.x, p.y))


def torus_factor_cloud(cloud: ParticleCloud) -> ParticleCloud:
    if cloud.space != SpaceTag.heisenberg():
        raise ValueError(f"torus_factor_cloud needs a Heisenberg cloud, got {cloud.space}")
    return project(cloud, [0, 1])


@dataclass(frozen=True)
class NilRotation:
    """Left translation by u on the nilmanifold"""

    xu: float = DEFAULT_NILROTATION[0]
    yu: float = DEFAULT_NILROTATION[1]
    zu: float = DEFAULT_NILROTATION[2]

    @property
    def u(self) -> Element:
        return float(self.xu), float(self.yu), float(self.zu)

    @property
    def space(self) -> SpaceTag:
        return SpaceTag.heisenberg()

    def is_minimal(self) -> bool:
        """Minimal iff 1, x_u, y_u admit no small integer relation."""
        return small_integer_relation((self.xu, self.yu)) is None

    def step_array(self, points: np.ndarray) -> np.ndarray:
        u = np.asarray(self.u)
        return reduce_array(heis_mul_array(np.broadcast_to(u, points.shape), points))

    def iterate_array(self, points: np.ndarray, steps: int) -> np.ndarray:
        out = points
        remaining = int(steps)
        while remaining > 0:
            block = min(remaining, POWER_BLOCK)
            power = np.asarray(heis_power(self.u, block))
            out = reduce_array(heis_mul_array(np.broadcast_to(power, out.shape), out))
            remaining -= block
        return out

    def step(self, p: HeisenbergPoint) -> HeisenbergPoint:
        return reduce(heis_mul(self.u, p.as_tuple()))

    def to_dict(self) -> Dict[str, Any]:
        return {"format": 1, "type": "nilrotation", "xu": self.xu, "yu": self.yu, "zu": self.zu}


def is_minimal_rotation(rot: NilRotation) -> bool:
    """Minimal iff the torus projection (x_u, y_u) has no small integer relation with 1."""
    return rot.is_minimal()


def nil_step(rot: NilRotation, p: HeisenbergPoint) -> HeisenbergPoint:
    """One step of the nilrotation: reduce(u p)."""
    return rot.step(p)


def fiber_section_cloud(z0: float, n: int, seed: int = 0) -> ParticleCloud:
    """
    Particles (x_i, y_i, z0) with (x_i, y_i) on the stratified grid of T^2

    Projects to Lebesgue on the torus factor yet is singular on the nilmanifold.
    """
    base = stratified_grid(2, n)
    points = np.column_stack([base, np.full(base.shape[0], float(z0))])
    return ParticleCloud.from_points(wrap(points), None, SpaceTag.heisenberg(), label=f"fiber[z0={z0}]")
