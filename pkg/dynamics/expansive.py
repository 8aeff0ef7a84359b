"""
Expansive - Skew products T(x, y) = (x + alpha, p y + f(x)) with |p| >= 2

Covers the certified series tau, the derivatives Delta_n of pushed curves,
the kappa and beta bounds, coboundary detection, the two model examples and
the fiber statistics used to read a limit curve off a particle cloud.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from dynamics.measures import FunctionSpec, Harmonic, ParticleCloud, SpaceTag, circular_difference, wrap
from dynamics.torus_skew import DEFAULT_ALPHA, check_irrational
from utils.errors import ConstructionError, NumericGuardError
from utils.logger import setup_logger

logger = setup_logger(__name__)

DEFAULT_N_TRUNC = 40
DEFAULT_GRID_N = 10_000
DEFAULT_BINS = 200
# |p|^n beyond this loses every fractional digit of Delta_n in double precision
DELTA_GUARD = 2.0 ** 60
UNIFORM_CIRCLE_SPREAD = float(np.sqrt(1.0 / 12.0))

Interval = Tuple[float, float]


@dataclass(frozen=True)
class ExpansiveSystem:
    alpha: float
    p: int
    f: FunctionSpec

    def __post_init__(self):
        object.__setattr__(self, "alpha", check_irrational(self.alpha))
        if int(self.p) != self.p or abs(int(self.p)) < 2:
            raise ValueError(f"p must be an integer with |p| >= 2, got {self.p}")
        object.__setattr__(self, "p", int(self.p))
        if self.f.arity != 1:
            raise ValueError("The skewing map of an expansive system has arity 1")

    @property
    def space(self) -> SpaceTag:
        return SpaceTag.torus(2)

    @property
    def sup_fprime(self) -> float:
        return self.f.sup_partial()

    def fprime(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.f.partial(wrap(x))).reshape(-1)

    def step_array(self, points: np.ndarray) -> np.ndarray:
        out = np.empty_like(points)
        out[:, 0] = points[:, 0] + self.alpha
        out[:, 1] = self.p * points[:, 1] + np.asarray(self.f.lift(points[:, 0])).reshape(-1)
        return wrap(out)

    def to_dict(self) -> Dict[str, Any]:
        return {"format": 1, "type": "expansive", "alpha": self.alpha, "p": self.p, "f": self.f.to_dict()}


@dataclass(frozen=True)
class CurveSpec:
    """A curve y = gamma(x) on T^2 with closed-form derivative"""

    gamma: FunctionSpec

    def __post_init__(self):
        if self.gamma.arity != 1:
            raise ValueError("A curve is the graph of an arity-1 map")

    def derivative(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.gamma.partial(wrap(x))).reshape(-1)

    def sup_derivative(self) -> float:
        return self.gamma.sup_partial()


CurveLike = Union[CurveSpec, FunctionSpec]


def as_curve(curve: CurveLike) -> CurveSpec:
    return curve if isinstance(curve, CurveSpec) else CurveSpec(curve)


def _grid(grid_n: int) -> np.ndarray:
    return (np.arange(grid_n) + 0.5) / grid_n


# --- tau, Delta_n, kappa ----------------------------------------------------


def tail_bound(sys: ExpansiveSystem, n_trunc: int) -> float:
    """Geometric tail sup|f'| |p|^(-N+1) / (|p| - 1) of the tau series after N terms."""
    q = abs(sys.p)
    return sys.sup_fprime * float(q) ** (-n_trunc + 1) / (q - 1)


@dataclass(frozen=True)
class TauValue:
    value: np.ndarray
    tail_bound: float


def tau(sys: ExpansiveSystem, curve: CurveLike, x: Union[float, np.ndarray],
        n_trunc: int = DEFAULT_N_TRUNC) -> TauValue:
    """
    p gamma'(x) + sum_{n < N} p^(-n) f'(x + n alpha), with a certified tail

    |tau_exact(x) - value| <= tail_bound for every x.
    """
    if n_trunc < 1:
        raise ValueError(f"N_trunc must be >= 1, got {n_trunc}")
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    total = sys.p * as_curve(curve).derivative(xs)
    for n in range(n_trunc):
        total = total + float(sys.p) ** (-n) * sys.fprime(xs + n * sys.alpha)
    return TauValue(total, tail_bound(sys, n_trunc))


def _check_delta_guard(sys: ExpansiveSystem, n: int):
    if float(abs(sys.p)) ** n > DELTA_GUARD:
        raise NumericGuardError("delta_n_overflow", f"|p|^n = {abs(sys.p)}^{n} exceeds 2^60")


def delta_n(sys: ExpansiveSystem, curve: CurveLike, x: Union[float, np.ndarray], n: int,
            method: str = "direct") -> np.ndarray:
    """
    Derivative of the pushed curve's fiber coordinate after n steps

    direct:    p^n gamma'(x) + sum_{k<n} p^(n-1-k) f'(x + k alpha)
    recursive: Delta_0 = gamma', Delta_{k+1} = p Delta_k + f'(x + k alpha)
    """
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    _check_delta_guard(sys, n)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    gp = as_curve(curve).derivative(xs)
    if method == "recursive":
        value = gp
        for k in range(n):
            value = sys.p * value + sys.fprime(xs + k * sys.alpha)
        return value
    if method != "direct":
        raise ValueError(f"Unknown method '{method}'")
    value = float(sys.p) ** n * gp
    for k in range(n):
        value = value + float(sys.p) ** (n - 1 - k) * sys.fprime(xs + k * sys.alpha)
    return value


def kappa(sys: ExpansiveSystem) -> float:
    """|p| / (|p| - 1) * sup|f'|."""
    q = abs(sys.p)
    return q / (q - 1) * sys.sup_fprime


def graph_derivative_check(sys: ExpansiveSystem, curve: CurveLike, xs: np.ndarray, n_max: int) -> float:
    """
    max over x in xs and n <= n_max of |Delta_n(x) - p^(n-1) tau(x)|

    tau is summed far enough that p^(n-1) times its tail stays negligible.
    """
    xs = np.asarray(xs, dtype=float).reshape(-1)
    t = tau(sys, curve, xs, n_max + 60).value
    worst = 0.0
    for n in range(n_max + 1):
        d = delta_n(sys, curve, xs, n)
        worst = max(worst, float(np.max(np.abs(d - float(sys.p) ** (n - 1) * t))))
    return worst


def complement_slope(sys: ExpansiveSystem, x: Union[float, np.ndarray], n: int,
                     n_trunc: int = DEFAULT_N_TRUNC) -> np.ndarray:
    """
    -sum_{k >= n} p^(n-1-k) f'(x + k alpha): Delta_n - p^(n-1) tau

    Where tau vanishes this is the slope of the pushed curve; for linear f
    it is the constant -winding / (p - 1) for every n.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    total = np.zeros_like(xs)
    for k in range(n, n + n_trunc):
        total = total - float(sys.p) ** (n - 1 - k) * sys.fprime(xs + k * sys.alpha)
    return total


# --- S-set classification -------------------------------------------------


def _runs(mask: np.ndarray, grid_n: int) -> List[Interval]:
    intervals: List[Interval] = []
    padded = np.concatenate([[False], mask, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    for start, stop in zip(edges[0::2], edges[1::2]):
        intervals.append((start / grid_n, stop / grid_n))
    return intervals


def _measure(intervals: Sequence[Interval]) -> float:
    return float(sum(b - a for a, b in intervals))


@dataclass
class SSetReport:
    """Three-valued classification of the grid by the size of tau"""

    epsilon: float
    epsilon_out: float
    n_trunc: int
    tail_bound: float
    certified_in: List[Interval]
    certified_out: List[Interval]
    undetermined: List[Interval]
    kappa: float
    beta: float

    def measure(self, label: str) -> float:
        return _measure(getattr(self, label))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "epsilon": self.epsilon,
            "epsilon_out": self.epsilon_out,
            "N_trunc": self.n_trunc,
            "tail_bound": self.tail_bound,
            "certified_in": [list(i) for i in self.certified_in],
            "certified_out": [list(i) for i in self.certified_out],
            "undetermined": [list(i) for i in self.undetermined],
            "kappa": self.kappa,
            "beta": self.beta,
        }


def classify_s(sys: ExpansiveSystem, curve: CurveLike, epsilon: float, grid_n: int = DEFAULT_GRID_N,
               n_trunc: int = DEFAULT_N_TRUNC, epsilon_out: Optional[float] = None) -> SSetReport:
    """
    Label each grid cell by its midpoint

    in:   |tau| - tail > epsilon        (tau certified nonzero)
    out:  |tau| + tail < epsilon_out    (tau certified small; default epsilon / 10)
    else: undetermined

    Raises:
        ValueError: epsilon does not exceed the tail bound
    """
    tail = tail_bound(sys, n_trunc)
    if epsilon <= tail:
        raise ValueError(f"epsilon={epsilon} must exceed the tail bound {tail:.3e} at N_trunc={n_trunc}")
    epsilon_out = epsilon / 10.0 if epsilon_out is None else float(epsilon_out)
    values = np.abs(tau(sys, curve, _grid(grid_n), n_trunc).value)
    inside = values - tail > epsilon
    outside = values + tail < epsilon_out
    undetermined = ~(inside | outside)
    report = SSetReport(
        float(epsilon), epsilon_out, int(n_trunc), tail,
        _runs(inside, grid_n), _runs(outside, grid_n), _runs(undetermined, grid_n),
        kappa(sys), beta_bound(sys, curve, max(grid_n, 1000)),
    )
    logger.info(f"S classification: in={report.measure('certified_in'):.4f} "
                f"out={report.measure('certified_out'):.4f} undetermined={report.measure('undetermined'):.4f}")
    return report


def s_set(sys: ExpansiveSystem, curve: CurveLike, epsilon: float, grid_n: int = DEFAULT_GRID_N,
          n_trunc: int = DEFAULT_N_TRUNC) -> List[Interval]:
    """Maximal grid intervals certified to lie in S."""
    return classify_s(sys, curve, epsilon, grid_n, n_trunc).certified_in


def beta_bound(sys: ExpansiveSystem, curve: CurveLike, grid_n: int = DEFAULT_GRID_N) -> float:
    """Grid measure of {x : |f'(x) + p gamma'(x)| < sup|f'| / (|p| - 1)}, strict inequality."""
    if grid_n < 1000:
        raise ValueError(f"grid_n must be >= 1000, got {grid_n}")
    xs = _grid(grid_n)
    lhs = np.abs(sys.fprime(xs) + sys.p * as_curve(curve).derivative(xs))
    threshold = sys.sup_fprime / (abs(sys.p) - 1)
    return float(np.mean(lhs < threshold))


# --- coboundaries -----------------------------------------------------------


def coboundary_residual(sys: ExpansiveSystem, curve: CurveLike, grid_n: int = DEFAULT_GRID_N) -> float:
    """
    min over c of sup |f - (gamma(. + alpha) - p gamma) - c| on a grid

    Windings are compared first: a coboundary forces
    winding(f) = winding(gamma) (1 - p); otherwise the residual is +inf.
    """
    gamma = as_curve(curve).gamma
    if sys.f.winding != gamma.winding * (1 - sys.p):
        return float("inf")
    xs = _grid(grid_n)
    residual = (np.asarray(sys.f.lift(xs))
                - (np.asarray(gamma.lift(xs + sys.alpha)) - sys.p * np.asarray(gamma.lift(xs))))
    return float((residual.max() - residual.min()) / 2.0)


def coboundary_system(gamma: FunctionSpec, alpha: float = DEFAULT_ALPHA, p: int = 2,
                      constant: float = 0.0) -> Tuple[ExpansiveSystem, CurveSpec]:
    """f = gamma(. + alpha) - p gamma + c together with the curve gamma."""
    return ExpansiveSystem(alpha, p, FunctionSpec.coboundary(gamma, alpha, p, constant)), CurveSpec(gamma)


# --- model examples -------------------------------------------------------


def example_5_4_system(alpha: float = DEFAULT_ALPHA, p: int = 2) -> Tuple[ExpansiveSystem, CurveSpec]:
    """f(x) = x (strictly monotone) with the horizontal curve gamma = 0."""
    return ExpansiveSystem(alpha, p, FunctionSpec.linear(1)), CurveSpec(FunctionSpec.constant(0.0))


def _collect(terms: Dict[int, List[float]], k: int, a: float, b: float):
    terms[k][0] += a
    terms[k][1] += b


def _derivative_series(sys: ExpansiveSystem, n_trunc: int) -> Tuple[float, Dict[int, List[float]]]:
    """
    g = -sum_{n<N} p^(-n-1) f'(x + n alpha) as (mean, {k: [cos, sin]})

    f' is a trigonometric polynomial, so g is one as well and is assembled
    harmonic by harmonic.
    """
    q = sys.f.winding
    mean = 0.0
    terms: Dict[int, List[float]] = defaultdict(lambda: [0.0, 0.0])
    for n in range(n_trunc):
        weight = -float(sys.p) ** (-n - 1)
        mean += weight * q
        for h in sys.f.harmonics:
            k, a, b = h.k[0], h.a, h.b
            if k == 0:
                continue
            if k < 0:
                k, b = -k, -b
            # derivative of a cos + b sin at frequency k, then shifted by n alpha
            da, db = 2.0 * np.pi * k * b, -2.0 * np.pi * k * a
            phi = 2.0 * np.pi * k * n * sys.alpha
            c, s = np.cos(phi), np.sin(phi)
            _collect(terms, k, weight * (da * c + db * s), weight * (db * c - da * s))
    return mean, terms


def _bump_series(order: int, samples: int = 512) -> Tuple[float, Dict[int, List[float]]]:
    """Fourier series of cos^(2m)(pi (x - 3/4)): zero at x = 1/4, peak 1 at x = 3/4."""
    xs = np.arange(samples) / samples
    values = np.cos(np.pi * (xs - 0.75)) ** (2 * order)
    coeffs = np.fft.rfft(values) / samples
    terms: Dict[int, List[float]] = defaultdict(lambda: [0.0, 0.0])
    for k in range(1, order + 1):
        terms[k] = [2.0 * coeffs[k].real, -2.0 * coeffs[k].imag]
    return float(coeffs[0].real), terms


@dataclass
class Example55:
    curve: CurveSpec
    certificates: Dict[str, float]
    bump_order: int
    bump_scale: float
    winding: int
    harmonics: int = field(default=0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "gamma": self.curve.gamma.to_dict(),
            "certificates": self.certificates,
            "bump_order": self.bump_order,
            "bump_scale": self.bump_scale,
            "winding": self.winding,
            "harmonics": self.harmonics,
        }


def make_example_5_5(sys: ExpansiveSystem, n_trunc: int = DEFAULT_N_TRUNC, bump_orders: Sequence[int] = (12, 16, 8),
                     tau_target: float = 0.1, grid_n: int = DEFAULT_GRID_N) -> Example55:
    """
    A curve with S = (1/2, 1) up to certified tolerance

    gamma' = g + b where g = -sum p^(-n-1) f'(x + n alpha) cancels the tau
    series and b = c cos^(2m)(pi (x - 3/4)) is a trigonometric bump that
    is negligible on [0, 1/2] and large on (1/2, 1). The scale c makes
    |tau| >= tau_target on [0.55, 0.95] and puts an integer winding on
    gamma. Orders m are tried in turn until both certificates hold:
    sup |tau| on [0.05, 0.45] <= 0.01 and inf |tau| on [0.55, 0.95] >= 0.05.

    Raises:
        ConstructionError: no order meets the certificates
    """
    mean_g, g_terms = _derivative_series(sys, n_trunc)
    xs = _grid(grid_n)
    low = (xs >= 0.05) & (xs <= 0.45)
    high = (xs >= 0.55) & (xs <= 0.95)
    tail = tail_bound(sys, n_trunc)
    failures = []

    for order in bump_orders:
        mean_b, b_terms = _bump_series(order)
        floor_b = float(np.cos(np.pi * 0.2) ** (2 * order))
        c_min = tau_target / (abs(sys.p) * floor_b)
        winding = int(np.ceil(mean_g + c_min * mean_b))
        scale = (winding - mean_g) / mean_b

        derivative_terms: Dict[int, List[float]] = defaultdict(lambda: [0.0, 0.0])
        for k, (a, b) in g_terms.items():
            _collect(derivative_terms, k, a, b)
        for k, (a, b) in b_terms.items():
            _collect(derivative_terms, k, scale * a, scale * b)
        # antiderivative of A cos + B sin at frequency k
        harmonics = tuple(
            Harmonic((k,), -B / (2.0 * np.pi * k), A / (2.0 * np.pi * k))
            for k, (A, B) in sorted(derivative_terms.items()) if abs(A) + abs(B) > 0.0
        )
        curve = CurveSpec(FunctionSpec(winding, harmonics, 1))
        values = np.abs(tau(sys, curve, xs, n_trunc).value)
        certificates = {
            "sup_tau_complement": float(values[low].max() + tail),
            "inf_tau_s": float(values[high].min() - tail),
            "tail_bound": tail,
        }
        if certificates["sup_tau_complement"] <= 0.01 and certificates["inf_tau_s"] >= 0.05:
            logger.info(f"Half-S curve: bump order {order}, scale {scale:.4f}, winding {winding}, "
                        f"sup|tau| off S {certificates['sup_tau_complement']:.2e}")
            return Example55(curve, certificates, order, float(scale), winding, len(harmonics))
        failures.append((order, certificates))
        logger.warning(f"Half-S certificates failed at bump order {order}: {certificates}")

    raise ConstructionError(f"No bump order in {list(bump_orders)} met the certificates: {failures}")


# --- limit curves ---------------------------------------------------------


@dataclass
class CurveExtract:
    lipschitz_estimate: float
    max_vertical_spread: float
    gaps: List[int]
    bin_means: np.ndarray = field(repr=False)
    bin_spreads: np.ndarray = field(repr=False)
    bin_detrended: np.ndarray = field(repr=False)

    @property
    def min_vertical_spread(self) -> float:
        finite = self.bin_spreads[np.isfinite(self.bin_spreads)]
        return float(finite.min()) if finite.size else float("nan")

    @property
    def max_detrended_spread(self) -> float:
        finite = self.bin_detrended[np.isfinite(self.bin_detrended)]
        return float(finite.max()) if finite.size else float("nan")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lipschitz_estimate": self.lipschitz_estimate,
            "max_vertical_spread": self.max_vertical_spread,
            "min_vertical_spread": self.min_vertical_spread,
            "max_detrended_spread": self.max_detrended_spread,
            "gaps": self.gaps,
        }


def limit_curve_extract(cloud: ParticleCloud, component: Interval, bins: int = DEFAULT_BINS) -> CurveExtract:
    """
    Fiber statistics of a T^2 cloud over a base interval

    The interval may wrap through 0 (a > b). Per bin: scipy's circular
    mean of the fiber coordinate and the circular standard deviation about
    it, i.e. the RMS of circular residuals, which is sqrt(1/12) for a
    uniform fiber. A graph of slope L contributes L * width / sqrt(12) per
    bin; the detrended diagnostic removes each bin's own linear trend first
    and so is near zero on any exact Lipschitz graph. Empty bins are
    reported as gaps and break adjacency.
    """
    if cloud.dim != 2:
        raise ValueError("limit_curve_extract works on clouds on T^2")
    a, b = float(component[0]), float(component[1])
    length = (b - a) % 1.0 or 1.0
    offset = wrap(cloud.points[:, 0] - a)
    keep = offset < length
    u = offset[keep]
    y = cloud.points[keep, 1]
    width = length / bins
    index = np.minimum((u / width).astype(int), bins - 1)

    means = np.full(bins, np.nan)
    spreads = np.full(bins, np.nan)
    detrended = np.full(bins, np.nan)
    order = np.argsort(index, kind="stable")
    boundaries = np.searchsorted(index[order], np.arange(bins + 1))
    for i in range(bins):
        members = order[boundaries[i]:boundaries[i + 1]]
        if members.size == 0:
            continue
        ys = y[members]
        mean = float(stats.circmean(ys, high=1.0, low=0.0))
        residual = circular_difference(ys, mean)
        means[i] = mean
        spreads[i] = float(np.sqrt(np.mean(residual ** 2)))
        if members.size >= 3:
            centred = u[members] - u[members].mean()
            denom = float(np.dot(centred, centred))
            if denom > 0:
                residual = residual - centred * (np.dot(centred, residual) / denom)
        detrended[i] = float(np.sqrt(np.mean(residual ** 2)))

    gaps = [int(i) for i in np.flatnonzero(np.isnan(means))]
    adjacent = ~np.isnan(means[:-1]) & ~np.isnan(means[1:])
    steps = np.abs(circular_difference(means[1:][adjacent], means[:-1][adjacent]))
    lipschitz = float(steps.max() / width) if steps.size else float("nan")
    spread = float(np.nanmax(spreads)) if np.any(np.isfinite(spreads)) else float("nan")
    if gaps:
        logger.warning(f"limit_curve_extract: {len(gaps)} empty bins over [{a}, {b}]")
    return CurveExtract(lipschitz, spread, gaps, means, spreads, detrended)
