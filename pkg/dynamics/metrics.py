"""
Metrics - Fourier proxy for the weak-star distance, Lipschitz lower bounds,
distance profiles along orbits and the density / window statistics used to
read twisting and weak twisting off a profile
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from dynamics.measures import (
    FunctionSpec,
    Harmonic,
    ParticleCloud,
    StepMap,
    circular_difference,
    derive_rng,
    pushforward,
    stratified_grid,
)
from utils.errors import SpaceMismatchError
from utils.logger import setup_logger

logger = setup_logger(__name__)

# complex entries per (particles x frequencies) block
BLOCK_ELEMENTS = 1 << 22
DEFAULT_LADDER_BASE = (10, 30)


def frequency_box(dim: int, K: int, support: Optional[Sequence[int]] = None) -> np.ndarray:
    """
    All nonzero k in Z^dim with |k|_inf <= K, lexicographic order

    With ``support`` only coordinates in that index set may be nonzero
    (``support=[0]`` gives the base-only frequencies of a skew product).
    """
    if K < 1:
        raise ValueError(f"Frequency cutoff K must be >= 1, got {K}")
    axes = []
    allowed = set(range(dim)) if support is None else {int(i) for i in support}
    for j in range(dim):
        axes.append(np.arange(-K, K + 1) if j in allowed else np.zeros(1, dtype=np.int64))
    mesh = np.meshgrid(*axes, indexing="ij")
    box = np.stack([m.reshape(-1) for m in mesh], axis=1).astype(np.int64)
    return box[np.any(box != 0, axis=1)]


def _pairwise_total(parts: List[np.ndarray]) -> np.ndarray:
    while len(parts) > 1:
        merged = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            merged.append(parts[-1])
        parts = merged
    return parts[0]


def fourier_coefficients(cloud: ParticleCloud, freqs: np.ndarray) -> np.ndarray:
    """
    Coefficients sum_i w_i exp(-2 pi i k.x_i) for every row k of ``freqs``

    Per-coordinate exponential tables are multiplied together instead of
    evaluating one exponential per (particle, frequency). Particles are
    processed in fixed-size blocks whose partial sums are combined in a
    fixed pairwise order, so results are reproducible bit-for-bit.
    """
    freqs = np.asarray(freqs, dtype=np.int64).reshape(-1, cloud.dim)
    if freqs.shape[0] == 0:
        return np.zeros(0, dtype=complex)
    k_lo = int(freqs.min())
    k_hi = int(freqs.max())
    orders = np.arange(k_lo, k_hi + 1)
    columns = freqs - k_lo
    block = max(1, BLOCK_ELEMENTS // freqs.shape[0])

    partials = []
    for start in range(0, cloud.size, block):
        pts = cloud.points[start:start + block]
        w = cloud.weights[start:start + block]
        terms = None
        for j in range(cloud.dim):
            if not np.any(freqs[:, j]):
                continue
            table = np.exp(-2j * np.pi * np.multiply.outer(pts[:, j], orders))
            factor = table[:, columns[:, j]]
            terms = factor if terms is None else terms * factor
        if terms is None:
            partials.append(np.full(freqs.shape[0], np.sum(w), dtype=complex))
        else:
            partials.append(np.einsum("i,ij->j", w, terms))
    return _pairwise_total(partials)


@lru_cache(maxsize=64)
def _decay_weights(dim: int, K: int, s: float, support: Optional[Tuple[int, ...]]) -> Tuple[np.ndarray, np.ndarray]:
    freqs = frequency_box(dim, K, support)
    weights = (1.0 + np.sum(freqs.astype(float) ** 2, axis=1)) ** (-s)
    freqs.setflags(write=False)
    weights.setflags(write=False)
    return freqs, weights


def frequency_weights(dim: int, K: int, s: float = 1.0,
                      support: Optional[Sequence[int]] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Frequencies of the box and their decay weights (1 + |k|^2)^(-s); cached, read-only."""
    _check_metric_args(K, s)
    return _decay_weights(dim, int(K), float(s), _support_key(support))


def _check_metric_args(K: int, s: float):
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if s < 0:
        raise ValueError(f"s must be >= 0, got {s}")


def _support_key(support: Optional[Sequence[int]]) -> Optional[Tuple[int, ...]]:
    return None if support is None else tuple(sorted(int(i) for i in support))


def fourier_distance(mu: ParticleCloud, nu: ParticleCloud, K: int = 8, s: float = 1.0,
                     support: Optional[Sequence[int]] = None) -> float:
    """
    Weighted l1 distance between Fourier coefficients

    sum over 0 < |k|_inf <= K of (1 + |k|_2^2)^(-s) |mu^(k) - nu^(k)|

    Args:
        mu: First cloud
        nu: Second cloud on the same space
        K: Frequency cutoff
        s: Decay exponent
        support: Optional coordinate subset the frequencies may use

    Returns:
        Nonnegative distance
    """
    if mu.space != nu.space:
        raise SpaceMismatchError(f"Cannot compare a cloud on {mu.space} with one on {nu.space}")
    _check_metric_args(K, s)
    freqs, weights = _decay_weights(mu.dim, int(K), float(s), _support_key(support))
    if mu is nu:
        return 0.0
    diff = fourier_coefficients(mu, freqs) - fourier_coefficients(nu, freqs)
    return float(np.sum(weights * np.abs(diff)))


def haar_distance(mu: ParticleCloud, K: int = 8, s: float = 1.0,
                  support: Optional[Sequence[int]] = None) -> float:
    """Distance to Haar, whose coefficients all vanish off k = 0; no reference cloud needed."""
    _check_metric_args(K, s)
    freqs, weights = _decay_weights(mu.dim, int(K), float(s), _support_key(support))
    return float(np.sum(weights * np.abs(fourier_coefficients(mu, freqs))))


# --- Lipschitz test family ----------------------------------------------


@dataclass(frozen=True)
class ProbeFunction:
    """A 1-Lipschitz function bounded by 1 together with its exact Haar mean"""

    name: str
    evaluate: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    haar_mean: float = 0.0


@lru_cache(maxsize=8)
def _mean_torus_norm(dim: int) -> float:
    # translation invariance: the Haar mean of d(x, c) does not depend on c
    if dim == 1:
        return 0.25
    side = {2: 400, 3: 64, 4: 20}.get(dim, 8)
    grid = stratified_grid(dim, side ** dim)
    return float(np.mean(np.sqrt(np.sum(circular_difference(grid, 0.0) ** 2, axis=1))))


def _distance_member(center: np.ndarray, index: int) -> ProbeFunction:
    dim = center.size
    offset = np.sqrt(dim) / 4.0

    def evaluate(points: np.ndarray) -> np.ndarray:
        return np.sqrt(np.sum(circular_difference(points, center) ** 2, axis=1)) - offset

    return ProbeFunction(f"dist[{index}]", evaluate, _mean_torus_norm(dim) - offset)


def _trig_member(rng: np.random.Generator, dim: int, index: int, terms: int = 3, max_k: int = 2) -> ProbeFunction:
    harmonics = []
    while len(harmonics) < terms:
        k = rng.integers(-max_k, max_k + 1, size=dim)
        if not np.any(k):
            continue
        a, b = rng.normal(size=2)
        harmonics.append(Harmonic(tuple(int(v) for v in k), float(a), float(b)))
    spec = FunctionSpec(0, tuple(harmonics), dim)
    sup_bound = sum(abs(h.a) + abs(h.b) for h in harmonics)
    scale = max(spec.lipschitz_bound(), sup_bound)

    def evaluate(points: np.ndarray) -> np.ndarray:
        return np.asarray(spec.lift(points)) / scale

    return ProbeFunction(f"trig[{index}]", evaluate, 0.0)


def lipschitz_family(dim: int, family_size: int, family_seed: int = 0) -> List[ProbeFunction]:
    """
    Deterministic family of admissible test functions

    Order: cos/sin of each coordinate scaled by 1/(2 pi); distance to the
    origin and to the centre; then alternating random trig mixtures and
    random-centre distance functions. Member i never depends on
    ``family_size``, so the first m members of any larger family coincide
    with a family of size m.
    """
    if family_size < 1:
        raise ValueError(f"family_size must be >= 1, got {family_size}")
    members: List[ProbeFunction] = []
    for j in range(dim):
        members.append(ProbeFunction(f"cos[{j}]", lambda p, j=j: np.cos(2.0 * np.pi * p[:, j]) / (2.0 * np.pi)))
        members.append(ProbeFunction(f"sin[{j}]", lambda p, j=j: np.sin(2.0 * np.pi * p[:, j]) / (2.0 * np.pi)))
    members.append(_distance_member(np.zeros(dim), len(members)))
    members.append(_distance_member(np.full(dim, 0.5), len(members)))
    fixed = len(members)
    index = fixed
    while len(members) < family_size:
        rng = derive_rng(family_seed, f"lipschitz-{index}")
        if (index - fixed) % 2 == 0:
            members.append(_trig_member(rng, dim, index))
        else:
            members.append(_distance_member(rng.random(dim), index))
        index += 1
    return members[:family_size]


def _integrals(cloud: ParticleCloud, family: List[ProbeFunction]) -> np.ndarray:
    return np.array([float(np.sum(cloud.weights * f.evaluate(cloud.points))) for f in family])


def lipschitz_lower_bound(mu: ParticleCloud, nu: ParticleCloud, family_seed: int = 0,
                          family_size: int = 64) -> float:
    """max over the test family of |int f dmu - int f dnu|; never exceeds the true weak-star norm."""
    if mu.space != nu.space:
        raise SpaceMismatchError(f"Cannot compare a cloud on {mu.space} with one on {nu.space}")
    if mu is nu:
        return 0.0
    family = lipschitz_family(mu.dim, family_size, family_seed)
    return float(np.max(np.abs(_integrals(mu, family) - _integrals(nu, family))))


def haar_lipschitz_lower_bound(mu: ParticleCloud, family_seed: int = 0, family_size: int = 64) -> float:
    """Same bound against Haar, using each member's exact Haar mean."""
    family = lipschitz_family(mu.dim, family_size, family_seed)
    means = np.array([f.haar_mean for f in family])
    return float(np.max(np.abs(_integrals(mu, family) - means)))


@dataclass(frozen=True)
class MetricEstimate:
    fourier_value: float
    lipschitz_lower: float
    K: int
    family_size: int
    s: float = 1.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "fourier_value": self.fourier_value,
            "lipschitz_lower": self.lipschitz_lower,
            "K": self.K,
            "s": self.s,
            "family_size": self.family_size,
        }


def estimate_distance(mu: ParticleCloud, nu: Optional[ParticleCloud] = None, K: int = 8, s: float = 1.0,
                      family_seed: int = 0, family_size: int = 64) -> MetricEstimate:
    """The (Fourier proxy, Lipschitz lower bound) pair; ``nu=None`` means Haar."""
    if nu is None:
        fourier = haar_distance(mu, K, s)
        lower = haar_lipschitz_lower_bound(mu, family_seed, family_size)
    else:
        fourier = fourier_distance(mu, nu, K, s)
        lower = lipschitz_lower_bound(mu, nu, family_seed, family_size)
    return MetricEstimate(fourier, lower, int(K), int(family_size), float(s))


# --- profiles along orbits ------------------------------------------------


class ProfilePoint(NamedTuple):
    n: int
    fourier_value: float
    lipschitz_lower: Optional[float] = None


def profile_schedule(n_max: int, stride: int) -> List[int]:
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    times = list(range(0, n_max + 1, stride))
    if times[-1] != n_max:
        times.append(n_max)
    return times


def distance_profile(system: StepMap, mu: ParticleCloud, n_max: int, K: int = 8, s: float = 1.0,
                     stride: int = 1, support: Optional[Sequence[int]] = None, family_size: int = 0,
                     family_seed: int = 0, threads: int = 1,
                     times: Optional[Sequence[int]] = None) -> List[ProfilePoint]:
    """
    Haar distance of T^n_* mu at n = 0, stride, 2*stride, ..., n_max

    The cloud is pushed forward incrementally between checkpoints. A
    positive ``family_size`` adds the Lipschitz lower bound at each point.
    Explicit ``times`` (increasing, starting anywhere >= 0) replace the
    regular schedule.
    """
    schedule = list(times) if times is not None else profile_schedule(n_max, stride)
    if any(b <= a for a, b in zip(schedule, schedule[1:])) or schedule[0] < 0:
        raise ValueError("Profile times must be nonnegative and strictly increasing")
    profile: List[ProfilePoint] = []
    cloud = mu
    current = 0
    for n in schedule:
        cloud = pushforward(cloud, system, n - current, threads)
        current = n
        fourier = haar_distance(cloud, K, s, support)
        lower = haar_lipschitz_lower_bound(cloud, family_seed, family_size) if family_size > 0 else None
        profile.append(ProfilePoint(n, fourier, lower))
        logger.debug(f"profile n={n} fourier={fourier:.6g}")
    logger.info(f"Distance profile: {len(profile)} checkpoints, "
                f"first={profile[0].fourier_value:.4g} last={profile[-1].fourier_value:.4g}")
    return profile


# --- averages and densities ---------------------------------------------


def cesaro_average(values: Sequence[float], N: Optional[int] = None) -> float:
    """(1/N) sum_{n<N} x_n."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("Cesaro average of an empty profile")
    N = arr.size if N is None else int(N)
    if N < 1 or N > arr.size:
        raise ValueError(f"N={N} outside 1..{arr.size}")
    return float(np.mean(arr[:N]))


def _window_means(arr: np.ndarray, L: int) -> np.ndarray:
    totals = np.concatenate([[0.0], np.cumsum(arr)])
    return (totals[L:] - totals[:-L]) / L


def uniform_window_average(values: Sequence[float], L: int, start: int = 0) -> float:
    """Largest average over windows of length L that begin at index >= start."""
    arr = np.asarray(values, dtype=float)
    if L < 1:
        raise ValueError(f"Window length must be >= 1, got {L}")
    if start < 0 or L > arr.size - start:
        raise ValueError(f"Window length {L} does not fit in {arr.size - start} values")
    return float(np.max(_window_means(arr, L)[start:]))


def window_ladder(max_length: int, base: Sequence[int] = DEFAULT_LADDER_BASE) -> List[int]:
    """Geometric ladder 10, 30, 100, 300, ... up to ``max_length``."""
    ladder: List[int] = []
    scale = 1
    while True:
        for b in base:
            L = b * scale
            if L > max_length:
                return ladder
            ladder.append(L)
        scale *= 10


@dataclass
class DensityReport:
    """Empirical density and uniform density of J = {n : x_n > epsilon}"""

    epsilon: float
    N: int
    density: float
    uniform_density_by_window: List[Tuple[int, float]]
    window_averages: List[Tuple[int, int, float]]
    limit_estimate: float

    @property
    def exceptional_fraction(self) -> float:
        return self.density

    def to_dict(self) -> Dict[str, Any]:
        return {
            "density": self.density,
            "uniform_density_by_window": [{"L": L, "value": v} for L, v in self.uniform_density_by_window],
            "epsilon": self.epsilon,
            "N": self.N,
            "limit_estimate": self.limit_estimate,
            "window_averages": [{"M": M, "N": N, "average": a} for M, N, a in self.window_averages],
        }


def density_statistics(values: Sequence[float], epsilon: float, N: Optional[int] = None,
                       windows: Optional[Sequence[int]] = None, start: int = 0) -> DensityReport:
    """
    Density statistics of the exceptional set

    Args:
        values: Sequence x_1, x_2, ... (position i holds x_{i+1})
        epsilon: Threshold; J = {n : x_n > epsilon}
        N: Prefix length to use (default: all)
        windows: Window lengths for the uniform density (default: ladder)
        start: First index a window may begin at

    Returns:
        DensityReport with the plain density, the worst window density per
        length and the windows attaining it
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    arr = np.asarray(values, dtype=float)
    N = arr.size if N is None else int(N)
    if N < 1 or N > arr.size:
        raise ValueError(f"N={N} outside 1..{arr.size}")
    indicator = (arr[:N] > epsilon).astype(float)
    density = float(indicator.sum() / N)
    lengths = window_ladder(N - start) if windows is None else [int(L) for L in windows]

    by_window: List[Tuple[int, float]] = []
    attained: List[Tuple[int, int, float]] = []
    for L in lengths:
        if L < 1 or L > N - start:
            continue
        means = _window_means(indicator, L)[start:]
        best = int(np.argmax(means))
        value = float(means[best])
        by_window.append((L, value))
        attained.append((start + best, start + best + L - 1, value))

    tail = indicator[N // 2:]
    limit = float(tail.mean()) if tail.size else density
    return DensityReport(float(epsilon), N, density, by_window, attained, limit)


@dataclass
class TwistingReport:
    """Three readings of one deviation profile: last value, Cesaro mean, worst windows"""

    final_value: float
    cesaro: float
    uniform_by_window: List[Tuple[int, float]]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "final_value": self.final_value,
            "cesaro": self.cesaro,
            "uniform_by_window": [{"L": L, "value": v} for L, v in self.uniform_by_window],
        }


def twisting_report(values: Sequence[float], ladder: Optional[Sequence[int]] = None) -> TwistingReport:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("twisting_report needs a nonempty profile")
    lengths = window_ladder(arr.size) if ladder is None else [L for L in ladder if L <= arr.size]
    return TwistingReport(
        float(arr[-1]),
        cesaro_average(arr),
        [(int(L), uniform_window_average(arr, int(L))) for L in lengths],
    )


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log y against log x."""
    x = np.log(np.asarray(xs, dtype=float))
    y = np.log(np.maximum(np.asarray(ys, dtype=float), np.finfo(float).tiny))
    return float(stats.linregress(x, y).slope)
