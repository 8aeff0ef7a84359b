"""
Measures - Weighted particle clouds standing in for probability measures on
tori and on the Heisenberg fundamental domain, plus the circle-valued
FunctionSpec used for every skewing map and curve
"""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np

from utils.errors import SpaceMismatchError
from utils.logger import setup_logger

logger = setup_logger(__name__)

WEIGHT_TOLERANCE = 1e-12
DEFAULT_K_MAX = 64
# below this many particles a thread pool costs more than it saves
PARALLEL_MIN_PARTICLES = 20_000

ArrayLike = Union[float, Sequence[float], np.ndarray]


def wrap(values: ArrayLike) -> np.ndarray:
    """Reduce mod 1 into [0, 1); negative inputs included."""
    arr = np.asarray(values, dtype=float)
    out = arr - np.floor(arr)
    # -1e-18 - floor(-1e-18) rounds to exactly 1.0
    return np.where(out >= 1.0, 0.0, out)


def circular_difference(a: ArrayLike, b: ArrayLike) -> np.ndarray:
    """Signed mod-1 difference a - b in [-1/2, 1/2)."""
    d = wrap(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    return np.where(d >= 0.5, d - 1.0, d)


def derive_rng(seed: int, label: Optional[str] = None) -> np.random.Generator:
    """
    RNG for one logical role

    Streams are keyed by (master seed, crc32 of the role label), so adding a
    new consumer never shifts the numbers an existing role sees.
    """
    if label is None:
        return np.random.default_rng(int(seed))
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(label.encode("utf-8"))]))


def derive_seed(seed: int, label: str) -> int:
    return int(np.random.SeedSequence([int(seed), zlib.crc32(label.encode("utf-8"))]).generate_state(1)[0])


@dataclass(frozen=True)
class SpaceTag:
    """Which space a cloud lives on: the torus T^d or the Heisenberg nilmanifold"""

    kind: str
    dim: int

    def __post_init__(self):
        if self.kind not in ("torus", "heisenberg"):
            raise ValueError(f"Unknown space kind '{self.kind}'")
        if self.dim < 1:
            raise ValueError(f"Space dimension must be >= 1, got {self.dim}")
        if self.kind == "heisenberg" and self.dim != 3:
            raise ValueError("The Heisenberg nilmanifold is 3-dimensional")

    @classmethod
    def torus(cls, d: int) -> "SpaceTag":
        return cls("torus", int(d))

    @classmethod
    def heisenberg(cls) -> "SpaceTag":
        return cls("heisenberg", 3)

    @classmethod
    def parse(cls, text: str) -> "SpaceTag":
        """Parse ``torus:2`` or ``heisenberg``."""
        text = text.strip().lower()
        if text == "heisenberg":
            return cls.heisenberg()
        kind, _, dim = text.partition(":")
        if kind != "torus" or not dim.isdigit():
            raise ValueError(f"Cannot parse space '{text}' (expected 'torus:<d>' or 'heisenberg')")
        return cls.torus(int(dim))

    @property
    def coordinate_names(self) -> List[str]:
        if self.kind == "heisenberg":
            return ["x", "y", "z"]
        return [f"x{i + 1}" for i in range(self.dim)]

    def __str__(self) -> str:
        return "heisenberg" if self.kind == "heisenberg" else f"torus:{self.dim}"


@dataclass(frozen=True)
class TorusPoint:
    """A point of T^d; coordinates are always reduced into [0, 1)"""

    coords: Tuple[float, ...]

    def __post_init__(self):
        reduced = wrap(np.asarray(self.coords, dtype=float).reshape(-1))
        object.__setattr__(self, "coords", tuple(float(c) for c in reduced))

    @property
    def dim(self) -> int:
        return len(self.coords)

    def __add__(self, other: Union["TorusPoint", Sequence[float]]) -> "TorusPoint":
        shift = other.coords if isinstance(other, TorusPoint) else tuple(other)
        if len(shift) != self.dim:
            raise ValueError(f"Cannot add a {len(shift)}-vector to a point of T^{self.dim}")
        return TorusPoint(tuple(a + b for a, b in zip(self.coords, shift)))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)


@dataclass(frozen=True)
class Harmonic:
    """One term a*cos(2*pi*k.x) + b*sin(2*pi*k.x)"""

    k: Tuple[int, ...]
    a: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        k = (self.k,) if isinstance(self.k, (int, np.integer)) else tuple(self.k)
        object.__setattr__(self, "k", tuple(int(v) for v in k))
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))

    @property
    def is_constant(self) -> bool:
        return not any(self.k)


@dataclass(frozen=True)
class FunctionSpec:
    """
    Circle-valued map on T^arity:
    x -> winding * x_last + sum(a cos 2 pi k.x + b sin 2 pi k.x)  (mod 1)

    The winding is an integer, which is exactly what makes the formula well
    defined on the torus. A harmonic with k = 0 contributes the constant a.
    """

    winding: int = 0
    harmonics: Tuple[Harmonic, ...] = ()
    arity: int = 1

    def __post_init__(self):
        if isinstance(self.winding, float) and not float(self.winding).is_integer():
            raise ValueError(f"Winding must be an integer, got {self.winding}")
        object.__setattr__(self, "winding", int(self.winding))
        if self.arity < 1:
            raise ValueError("FunctionSpec arity must be >= 1")
        harmonics = tuple(h if isinstance(h, Harmonic) else Harmonic(*h) for h in self.harmonics)
        for h in harmonics:
            if len(h.k) != self.arity:
                raise ValueError(f"Harmonic frequency {h.k} does not match arity {self.arity}")
        object.__setattr__(self, "harmonics", harmonics)

    # --- construction -------------------------------------------------

    @classmethod
    def constant(cls, value: float, arity: int = 1) -> "FunctionSpec":
        return cls(0, (Harmonic((0,) * arity, value, 0.0),), arity)

    @classmethod
    def linear(cls, winding: int = 1, arity: int = 1) -> "FunctionSpec":
        return cls(winding, (), arity)

    @classmethod
    def from_dict(cls, data: Dict[str, Any], arity: Optional[int] = None) -> "FunctionSpec":
        """
        Build from ``{"winding": q, "harmonics": [[k, a, b], ...], "arity": n}``

        ``k`` may be an int for arity-1 maps. When ``arity`` is omitted it is
        inferred from the first harmonic, then from the argument, then 1.
        """
        raw = data.get("harmonics", []) or []
        harmonics = [Harmonic(tuple(np.atleast_1d(k).tolist()), a, b) for k, a, b in raw]
        inferred = data.get("arity") or arity or (len(harmonics[0].k) if harmonics else 1)
        return cls(int(data.get("winding", 0)), tuple(harmonics), int(inferred))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "winding": self.winding,
            "arity": self.arity,
            "harmonics": [[list(h.k), h.a, h.b] for h in self.harmonics],
        }

    # --- arithmetic on specs --------------------------------------------

    def __add__(self, other: "FunctionSpec") -> "FunctionSpec":
        if other.arity != self.arity:
            raise ValueError("Cannot add FunctionSpecs of different arity")
        return FunctionSpec(self.winding + other.winding, self.harmonics + other.harmonics, self.arity)

    def __sub__(self, other: "FunctionSpec") -> "FunctionSpec":
        return self + other.scale(-1)

    def scale(self, factor: int) -> "FunctionSpec":
        """Integer multiple; stays a well-defined circle map."""
        if int(factor) != factor:
            raise ValueError("Only integer multiples of a circle map are circle maps")
        factor = int(factor)
        return FunctionSpec(
            self.winding * factor,
            tuple(Harmonic(h.k, h.a * factor, h.b * factor) for h in self.harmonics),
            self.arity,
        )

    def shift(self, alpha: float) -> "FunctionSpec":
        """The arity-1 map x -> f(x + alpha), with phases rotated exactly."""
        if self.arity != 1:
            raise ValueError("shift is defined for arity-1 maps")
        shifted = []
        for h in self.harmonics:
            phi = 2.0 * np.pi * h.k[0] * alpha
            c, s = np.cos(phi), np.sin(phi)
            shifted.append(Harmonic(h.k, h.a * c + h.b * s, h.b * c - h.a * s))
        if self.winding:
            shifted.append(Harmonic((0,), self.winding * alpha, 0.0))
        return FunctionSpec(self.winding, tuple(shifted), 1)

    @classmethod
    def coboundary(cls, gamma: "FunctionSpec", alpha: float, p: int, constant: float = 0.0) -> "FunctionSpec":
        """f = gamma(. + alpha) - p*gamma + constant: the degenerate skewing map."""
        return gamma.shift(alpha) - gamma.scale(p) + cls.constant(constant)

    # --- evaluation ---------------------------------------------------

    def _inputs(self, x: ArrayLike) -> Tuple[np.ndarray, bool]:
        arr = np.asarray(x, dtype=float)
        single = arr.ndim == 0 or (arr.ndim == 1 and self.arity > 1)
        if self.arity == 1 and arr.ndim <= 1:
            arr = arr.reshape(-1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.shape[1] != self.arity:
            raise ValueError(f"Expected {self.arity} input coordinates, got {arr.shape[1]}")
        return arr, single

    def _frequencies(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        if not self.harmonics:
            empty = np.zeros(0)
            return np.zeros((0, self.arity)), empty, empty
        ks = np.array([h.k for h in self.harmonics], dtype=float)
        a = np.array([h.a for h in self.harmonics])
        b = np.array([h.b for h in self.harmonics])
        return ks, a, b

    @staticmethod
    def _output(values: np.ndarray, single: bool):
        return float(values[0]) if single else values

    def lift(self, x: ArrayLike):
        """Real-valued lift (no reduction mod 1)."""
        X, single = self._inputs(x)
        ks, a, b = self._frequencies()
        values = self.winding * X[:, -1]
        if len(a):
            phase = 2.0 * np.pi * (X @ ks.T)
            values = values + np.cos(phase) @ a + np.sin(phase) @ b
        return self._output(values, single)

    def evaluate(self, x: ArrayLike):
        X, single = self._inputs(x)
        return self._output(wrap(self.lift(X)), single)

    __call__ = evaluate

    def partial(self, x: ArrayLike, var: int = -1):
        """Closed-form derivative in input coordinate ``var``."""
        X, single = self._inputs(x)
        var = var % self.arity
        values = np.full(X.shape[0], float(self.winding) if var == self.arity - 1 else 0.0)
        ks, a, b = self._frequencies()
        if len(a):
            phase = 2.0 * np.pi * (X @ ks.T)
            scale = 2.0 * np.pi * ks[:, var]
            values = values + (-np.sin(phase)) @ (scale * a) + np.cos(phase) @ (scale * b)
        return self._output(values, single)

    derivative = partial

    def sup_partial(self, var: int = -1) -> float:
        """Upper bound for sup |df/dx_var|: |q| (last variable) + sum 2 pi |k_var| (|a|+|b|)."""
        var = var % self.arity
        bound = abs(self.winding) if var == self.arity - 1 else 0.0
        for h in self.harmonics:
            bound += 2.0 * np.pi * abs(h.k[var]) * (abs(h.a) + abs(h.b))
        return float(bound)

    def lipschitz_bound(self) -> float:
        """Euclidean Lipschitz bound from the per-variable derivative bounds."""
        return float(np.sqrt(sum(self.sup_partial(v) ** 2 for v in range(self.arity))))

    def mean_partial(self, var: int = -1) -> float:
        """Exact Haar integral of df/dx_var: the winding for the last variable, else 0."""
        return float(self.winding) if var % self.arity == self.arity - 1 else 0.0

    def haar_mean(self) -> float:
        """Haar integral of the real lift on [0,1)^arity: q/2 plus the constant harmonics."""
        return 0.5 * self.winding + sum(h.a for h in self.harmonics if h.is_constant)

    @property
    def max_frequency(self) -> int:
        return max((max(abs(v) for v in h.k) for h in self.harmonics), default=0)


@dataclass(frozen=True, eq=False)
class ParticleCloud:
    """
    Finite weighted point set; the stand-in for a Borel probability measure

    Arrays are made read-only on construction. The constructor only validates:
    normalisation happens in ``from_points`` so that operations which keep the
    weight vector pass it through bit-for-bit.
    """

    points: np.ndarray
    weights: np.ndarray
    space: SpaceTag
    label: str = field(default="", compare=False)

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if points.flags.writeable:
            points = points.copy()
            points.setflags(write=False)
        if weights.flags.writeable:
            weights = weights.copy()
            weights.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

        if points.shape[0] < 1:
            raise ValueError("A particle cloud needs at least one particle")
        if points.shape[0] != weights.shape[0]:
            raise ValueError(f"{points.shape[0]} points but {weights.shape[0]} weights")
        if points.shape[1] != self.space.dim:
            raise ValueError(f"Points have {points.shape[1]} coordinates, space {self.space} needs {self.space.dim}")
        if np.any(weights < 0):
            raise ValueError("Weights must be nonnegative")
        total = float(np.sum(weights))
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            raise ValueError(f"Weights sum to {total!r}, expected 1 within {WEIGHT_TOLERANCE}")
        if points.min() < 0.0 or points.max() >= 1.0:
            raise ValueError("Particle coordinates must lie in [0, 1)")

    @classmethod
    def from_points(cls, points: ArrayLike, weights: Optional[ArrayLike] = None,
                    space: Optional[SpaceTag] = None, label: str = "") -> "ParticleCloud":
        """Reduce coordinates mod 1 and renormalise the weights."""
        pts = wrap(points)
        if pts.ndim <= 1:
            pts = pts.reshape(-1, 1) if space is None or space.dim == 1 else pts.reshape(1, -1)
        n = pts.shape[0]
        if n < 1:
            raise ValueError("A particle cloud needs at least one particle")
        if weights is None:
            w = np.full(n, 1.0 / n)
        else:
            w = np.asarray(weights, dtype=float).reshape(-1)
            if np.any(w < 0):
                raise ValueError("Weights must be nonnegative")
            total = w.sum()
            if total <= 0:
                raise ValueError("Weights must have positive total mass")
            w = w / total
        return cls(pts, w, space or SpaceTag.torus(pts.shape[1]), label)

    @classmethod
    def point_mass(cls, point: ArrayLike, space: Optional[SpaceTag] = None) -> "ParticleCloud":
        coords = np.atleast_1d(np.asarray(point, dtype=float))
        return cls.from_points(coords.reshape(1, -1), None, space or SpaceTag.torus(coords.size))

    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    @property
    def dim(self) -> int:
        return self.space.dim

    def with_points(self, points: np.ndarray, space: Optional[SpaceTag] = None) -> "ParticleCloud":
        """Same weight vector (the identical array), new positions."""
        return ParticleCloud(points, self.weights, space or self.space, self.label)

    def with_label(self, label: str) -> "ParticleCloud":
        return ParticleCloud(self.points, self.weights, self.space, label)


class StepMap(Protocol):
    """Anything that acts on particle arrays: rotations, skews, nil-rotations"""

    space: SpaceTag

    def step_array(self, points: np.ndarray) -> np.ndarray:
        ...


def _iterate_block(system: StepMap, points: np.ndarray, steps: int) -> np.ndarray:
    iterate = getattr(system, "iterate_array", None)
    if iterate is not None:
        return iterate(points, steps)
    out = points
    for _ in range(steps):
        out = system.step_array(out)
    return out


def iterate_points(system: StepMap, points: np.ndarray, steps: int, threads: int = 1) -> np.ndarray:
    """
    Apply ``system`` ``steps`` times to every row

    With several threads the rows are split into contiguous chunks and
    reassembled in their original order, so the result does not depend on
    the thread count.
    """
    if steps == 0:
        return points
    if threads <= 1 or points.shape[0] < PARALLEL_MIN_PARTICLES:
        return _iterate_block(system, points, steps)
    chunks = np.array_split(points, threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(lambda chunk: _iterate_block(system, chunk, steps), chunks))
    return np.concatenate(results, axis=0)


def pushforward(cloud: ParticleCloud, system: StepMap, steps: int, threads: int = 1) -> ParticleCloud:
    """
    T^n_* of a particle cloud: every particle moves to its n-fold image

    Args:
        cloud: Input cloud (never modified)
        system: Step map on the same space
        steps: n >= 0
        threads: Worker threads over particle chunks

    Returns:
        New cloud sharing the input's weight vector
    """
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    if cloud.space != system.space:
        raise SpaceMismatchError(f"Cloud lives on {cloud.space} but the map acts on {system.space}")
    if steps == 0:
        return cloud
    return cloud.with_points(iterate_points(system, cloud.points, int(steps), threads))


def project(cloud: ParticleCloud, coord_indices: Iterable[int]) -> ParticleCloud:
    """
    Push the cloud forward under a coordinate projection (0-based indices)

    The image always lives on a torus; projecting onto every coordinate in
    order returns the cloud itself.
    """
    indices = [int(i) for i in coord_indices]
    if not indices:
        raise ValueError("project needs at least one coordinate index")
    for i in indices:
        if i < 0 or i >= cloud.dim:
            raise ValueError(f"Coordinate index {i} out of range for {cloud.space}")
    if indices == list(range(cloud.dim)):
        return cloud
    return cloud.with_points(cloud.points[:, indices], SpaceTag.torus(len(indices)))


def fourier_coefficient(cloud: ParticleCloud, k: Sequence[int], k_max: int = DEFAULT_K_MAX) -> complex:
    """sum_i w_i exp(-2 pi i k.x_i); exactly 1 at k = 0."""
    freq = np.atleast_1d(np.asarray(k, dtype=np.int64))
    if freq.size != cloud.dim:
        raise ValueError(f"Frequency {tuple(freq)} has wrong length for {cloud.space}")
    if np.any(np.abs(freq) > k_max):
        raise ValueError(f"Frequency {tuple(freq)} exceeds K_max={k_max}")
    if not freq.any():
        return complex(1.0, 0.0)
    phase = cloud.points @ freq.astype(float)
    return complex(np.sum(cloud.weights * np.exp(-2j * np.pi * phase)))


def stratified_grid(dim: int, n: int) -> np.ndarray:
    """
    Cell midpoints of the side^dim grid with side^dim <= n maximal

    Sizes that are not perfect powers are rounded down with a warning.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    side = max(1, int(round(n ** (1.0 / dim))))
    while side ** dim > n:
        side -= 1
    while (side + 1) ** dim <= n:
        side += 1
    if side ** dim != n:
        logger.warning(f"Stratified grid on {dim} coordinates uses {side ** dim} particles instead of {n}")
    axis = (np.arange(side) + 0.5) / side
    if dim == 1:
        return axis.reshape(-1, 1)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def _base_coordinates(n: int, seed: int, mode: str) -> np.ndarray:
    if mode == "stratified":
        return (np.arange(n) + 0.5) / n
    if mode == "iid":
        return derive_rng(seed).random(n)
    raise ValueError(f"Unknown sampling mode '{mode}' (expected 'stratified' or 'iid')")


def sample_haar(space: SpaceTag, n: int, seed: int = 0, mode: str = "iid") -> ParticleCloud:
    """
    Haar (= Lebesgue in coordinates) cloud with equal weights

    ``iid`` draws n uniform points from the seeded generator; ``stratified``
    uses grid cell midpoints.
    """
    if n < 1:
        raise ValueError(f"sample_haar needs n >= 1, got {n}")
    if mode == "iid":
        points = derive_rng(seed).random((n, space.dim))
    elif mode == "stratified":
        points = stratified_grid(space.dim, n)
    else:
        raise ValueError(f"Unknown sampling mode '{mode}' (expected 'stratified' or 'iid')")
    return ParticleCloud.from_points(points, None, space, label=f"haar[{mode}]")


def cloud_on_graph(functions: Sequence[FunctionSpec], n: int, seed: int = 0,
                   mode: str = "stratified") -> ParticleCloud:
    """Particles (x, g1(x), g2(x), ...) with x Lebesgue on the circle."""
    if n < 1:
        raise ValueError(f"cloud_on_graph needs n >= 1, got {n}")
    for f in functions:
        if f.arity != 1:
            raise ValueError("Graph coordinates must be arity-1 FunctionSpecs")
    x = _base_coordinates(n, seed, mode)
    columns = [x] + [np.asarray(f.evaluate(x)) for f in functions]
    points = np.column_stack(columns)
    return ParticleCloud.from_points(points, None, SpaceTag.torus(points.shape[1]), label=f"graph[{mode}]")


def cloud_on_curve(gamma: FunctionSpec, n: int, seed: int = 0, mode: str = "stratified") -> ParticleCloud:
    """Particles on the graph {(x, gamma(x))}; the first marginal is Lebesgue."""
    return cloud_on_graph([gamma], n, seed, mode)
