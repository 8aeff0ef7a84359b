"""
Unipotent - Upper unipotent matrices with an exact (Fraction) and a floating
(numpy) backend, dilations, orbit cocycles and the power-polynomial oracle
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache, reduce
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import sympy

from dynamics.measures import FunctionSpec, derive_rng
from utils.errors import NumericGuardError, VerificationError
from utils.logger import setup_logger

logger = setup_logger(__name__)

ENTRY_GUARD = 1e300
PRODUCT_CHUNK = 1 << 17
EXACT = "exact"
FLOAT = "float"

Number = Union[int, float, Fraction]


def _as_fraction(value: Number) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    return Fraction(float(value))


class UnipotentMatrix:
    """
    d x d upper triangular matrix with unit diagonal

    Exact matrices keep rows as tuples of Fractions; float matrices keep a
    read-only numpy array. Indices are 0-based. Instances are immutable.
    """

    __slots__ = ("_rows", "_array", "d", "backend")

    def __init__(self, entries: Any, backend: str = FLOAT):
        if backend not in (EXACT, FLOAT):
            raise ValueError(f"Unknown backend '{backend}'")
        self.backend = backend
        if backend == EXACT:
            rows = tuple(tuple(_as_fraction(v) for v in row) for row in entries)
            d = len(rows)
            self._rows = rows
            self._array = None
            check = lambda i, j: rows[i][j]  # noqa: E731
        else:
            arr = np.array(entries, dtype=float)
            arr.setflags(write=False)
            d = arr.shape[0]
            self._rows = None
            self._array = arr
            check = lambda i, j: arr[i, j]  # noqa: E731
        self.d = d
        for i in range(d):
            if len(entries[i]) != d:
                raise ValueError("UnipotentMatrix entries must be square")
            if check(i, i) != 1:
                raise ValueError(f"Diagonal entry ({i},{i}) is not 1")
            for j in range(i):
                if check(i, j) != 0:
                    raise ValueError(f"Entry ({i},{j}) below the diagonal is not 0")

    # --- construction ---------------------------------------------------

    @classmethod
    def identity(cls, d: int, backend: str = FLOAT) -> "UnipotentMatrix":
        if d < 1:
            raise ValueError("Matrix size must be >= 1")
        return cls([[1 if i == j else 0 for j in range(d)] for i in range(d)], backend)

    @classmethod
    def from_upper(cls, d: int, upper: Dict[Tuple[int, int], Number], backend: str = FLOAT) -> "UnipotentMatrix":
        rows = [[1 if i == j else 0 for j in range(d)] for i in range(d)]
        for (i, j), value in upper.items():
            if not 0 <= i < j < d:
                raise ValueError(f"({i},{j}) is not a strictly upper entry of a {d}x{d} matrix")
            rows[i][j] = value
        return cls(rows, backend)

    @classmethod
    def from_array(cls, array: np.ndarray) -> "UnipotentMatrix":
        return cls(np.asarray(array, dtype=float), FLOAT)

    # --- access -----------------------------------------------------------

    def __getitem__(self, index: Tuple[int, int]) -> Number:
        i, j = index
        return self._rows[i][j] if self.backend == EXACT else float(self._array[i, j])

    @property
    def is_exact(self) -> bool:
        return self.backend == EXACT

    def upper_entries(self) -> Dict[Tuple[int, int], Number]:
        return {(i, j): self[i, j] for i in range(self.d) for j in range(i + 1, self.d)}

    def superdiagonal(self) -> List[Number]:
        return [self[i, i + 1] for i in range(self.d - 1)]

    def as_array(self) -> np.ndarray:
        if self.backend == FLOAT:
            return self._array
        return np.array([[float(v) for v in row] for row in self._rows])

    def to_float(self) -> "UnipotentMatrix":
        return self if self.backend == FLOAT else UnipotentMatrix(self.as_array(), FLOAT)

    def to_exact(self) -> "UnipotentMatrix":
        return self if self.backend == EXACT else UnipotentMatrix(self._array.tolist(), EXACT)

    def to_list(self) -> List[List[Union[float, str]]]:
        if self.backend == FLOAT:
            return self._array.tolist()
        return [[str(v) for v in row] for row in self._rows]

    def max_abs_entry(self) -> float:
        return max((abs(float(v)) for v in self.upper_entries().values()), default=0.0)

    def max_abs_diff(self, other: "UnipotentMatrix") -> float:
        self._check_size(other)
        return float(np.max(np.abs(self.as_array() - other.as_array()))) if self.d > 1 else 0.0

    # --- algebra ----------------------------------------------------------

    def _check_compatible(self, other: "UnipotentMatrix"):
        self._check_size(other)
        if other.backend != self.backend:
            raise ValueError(f"Cannot combine {self.backend} and {other.backend} matrices")

    def _check_size(self, other: "UnipotentMatrix"):
        if other.d != self.d:
            raise ValueError(f"Size mismatch: {self.d} vs {other.d}")

    def __matmul__(self, other: "UnipotentMatrix") -> "UnipotentMatrix":
        self._check_compatible(other)
        if self.backend == FLOAT:
            return UnipotentMatrix(self._array @ other._array, FLOAT)
        a, b, d = self._rows, other._rows, self.d
        rows = [[Fraction(0)] * d for _ in range(d)]
        for i in range(d):
            for j in range(i, d):
                rows[i][j] = sum((a[i][k] * b[k][j] for k in range(i, j + 1)), Fraction(0))
        return UnipotentMatrix(rows, EXACT)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, UnipotentMatrix):
            return NotImplemented
        if other.d != self.d or other.backend != self.backend:
            return False
        if self.backend == EXACT:
            return self._rows == other._rows
        return bool(np.array_equal(self._array, other._array))

    __hash__ = None

    def dilate(self, t: Number) -> "UnipotentMatrix":
        """theta_t: entry (i, j) scaled by t^(j-i)."""
        if t <= 0:
            raise ValueError(f"Dilation parameter must be > 0, got {t}")
        if self.backend == EXACT:
            t = _as_fraction(t)
            return UnipotentMatrix(
                [[v * t ** (j - i) if j >= i else v for j, v in enumerate(row)] for i, row in enumerate(self._rows)],
                EXACT,
            )
        idx = np.arange(self.d)
        powers = np.maximum(idx[None, :] - idx[:, None], 0)
        scale = float(t) ** powers
        return UnipotentMatrix(self._array * scale, FLOAT)

    def power(self, n: int) -> "UnipotentMatrix":
        if n < 0:
            raise ValueError("Only nonnegative powers are supported")
        result = UnipotentMatrix.identity(self.d, self.backend)
        base = self
        while n:
            if n & 1:
                result = result @ base
            base = base @ base
            n >>= 1
        return result

    def __repr__(self) -> str:
        return f"UnipotentMatrix(d={self.d}, backend={self.backend}, upper={self.upper_entries()})"


def multiply(a: UnipotentMatrix, b: UnipotentMatrix) -> UnipotentMatrix:
    return a @ b


def dilate(u: UnipotentMatrix, t: Number) -> UnipotentMatrix:
    return u.dilate(t)


def _guard(array: np.ndarray):
    if not np.all(np.isfinite(array)) or np.max(np.abs(array)) >= ENTRY_GUARD:
        raise NumericGuardError("cocycle_entry_overflow",
                                f"cocycle product entry reached {np.max(np.abs(array)):.3e}")


def ordered_product(matrices: np.ndarray, chunk: int = PRODUCT_CHUNK) -> np.ndarray:
    """
    M[n-1] @ ... @ M[1] @ M[0] for an (n, d, d) stack

    Pairwise tree reduction that keeps later factors on the left. Long
    stacks are reduced chunk by chunk and the chunk results combined the
    same way, so the association order depends only on n and ``chunk``.
    """
    stack = np.asarray(matrices, dtype=float)
    n, d = stack.shape[0], stack.shape[1]
    if n == 0:
        return np.eye(d)
    if n > chunk:
        parts = np.stack([ordered_product(stack[i:i + chunk], chunk) for i in range(0, n, chunk)])
        return ordered_product(parts, chunk)
    while stack.shape[0] > 1:
        if stack.shape[0] % 2:
            stack = np.concatenate([stack, np.eye(d)[None]], axis=0)
        stack = np.matmul(stack[1::2], stack[0::2])
        _guard(stack)
    return stack[0]


# --- cocycles ---------------------------------------------------------------


GENERATOR_KINDS = ("derivative", "entrywise", "constant", "callable")


@dataclass(frozen=True)
class CocycleSpec:
    """
    A base system plus a generator x -> U(x)

    Kinds: ``derivative`` (Jacobian of a skew base), ``entrywise``
    (FunctionSpec per strictly upper entry, evaluated as real lifts),
    ``constant`` (one matrix) and ``callable`` (any Python function of the
    base point, the only kind with an exact orbit backend besides constant).
    """

    base: Any
    kind: str
    d: int
    entries: Dict[Tuple[int, int], FunctionSpec] = field(default_factory=dict)
    constant: Optional[UnipotentMatrix] = None
    function: Optional[Callable[[np.ndarray], UnipotentMatrix]] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise ValueError(f"Unknown generator kind '{self.kind}'")
        if self.kind == "derivative" and getattr(self.base, "d", None) != self.d:
            raise ValueError("A derivative cocycle has the size of its base system")
        if self.kind == "constant" and (self.constant is None or self.constant.d != self.d):
            raise ValueError("A constant cocycle needs a matrix of size d")
        if self.kind == "callable" and self.function is None:
            raise ValueError("A callable cocycle needs a function")
        for (i, j), f in self.entries.items():
            if not 0 <= i < j < self.d:
                raise ValueError(f"Generator entry ({i},{j}) is not strictly upper")
            if f.arity != self.base.d:
                raise ValueError(f"Generator entry ({i},{j}) has arity {f.arity}, base has dimension {self.base.d}")

    @classmethod
    def derivative(cls, system) -> "CocycleSpec":
        return cls(system, "derivative", system.d)

    @classmethod
    def constant_generator(cls, base, u: UnipotentMatrix) -> "CocycleSpec":
        return cls(base, "constant", u.d, constant=u)

    @classmethod
    def entrywise(cls, base, d: int, entries: Dict[Tuple[int, int], FunctionSpec]) -> "CocycleSpec":
        return cls(base, "entrywise", d, entries=dict(entries))

    def generators(self, points: np.ndarray) -> np.ndarray:
        """Generator values at each row of ``points`` as an (n, d, d) float array."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.base.d)
        n = pts.shape[0]
        if self.kind == "derivative":
            return self.base.derivative_steps(pts)
        if self.kind == "constant":
            return np.broadcast_to(self.constant.as_array(), (n, self.d, self.d)).copy()
        out = np.broadcast_to(np.eye(self.d), (n, self.d, self.d)).copy()
        if self.kind == "entrywise":
            for (i, j), f in self.entries.items():
                out[:, i, j] = np.asarray(f.lift(pts)).reshape(-1)
            return out
        for r in range(n):
            out[r] = self.function(pts[r]).as_array()
        return out

    def generator_exact(self, point: np.ndarray) -> UnipotentMatrix:
        if self.kind == "constant":
            return self.constant.to_exact()
        if self.kind == "callable":
            return self.function(point).to_exact()
        return UnipotentMatrix(self.generators(point)[0], FLOAT).to_exact()

    def generator_sup(self, sample_size: int = 10_000, seed: int = 0) -> float:
        """Largest |entry| over a Haar sample of base points; recorded with every run."""
        pts = derive_rng(seed, "generator-sup").random((sample_size, self.base.d))
        gens = self.generators(pts)
        upper = np.triu(np.ones((self.d, self.d), dtype=bool), 1)
        return float(np.max(np.abs(gens[:, upper]))) if self.d > 1 else 0.0


def _sequential_orbit(base, x: np.ndarray, length: int) -> np.ndarray:
    pts = np.empty((length, base.d))
    current = np.asarray(x, dtype=float).reshape(1, -1)
    for k in range(length):
        pts[k] = current[0]
        current = base.step_array(current)
    return pts


def cocycle_product(spec: CocycleSpec, x: Sequence[float], n: int, backend: str = FLOAT) -> UnipotentMatrix:
    """
    C(x, n) = f(T^(n-1) x) ... f(T x) f(x); C(x, 0) = identity

    The float backend uses the vectorised orbit and ``ordered_product``;
    the exact backend steps the base one point at a time and multiplies
    Fractions, so the cocycle identity holds without rounding.
    """
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if n == 0:
        return UnipotentMatrix.identity(spec.d, backend)
    start = np.asarray(x, dtype=float).reshape(-1)
    if backend == EXACT:
        if spec.kind == "constant":
            return spec.constant.to_exact().power(n)
        orbit = _sequential_orbit(spec.base, start, n)
        factors = [spec.generator_exact(p) for p in orbit]
        return reduce(lambda acc, g: g @ acc, factors[1:], factors[0])
    if spec.kind == "constant":
        return UnipotentMatrix.from_array(ordered_product(spec.generators(np.zeros((n, spec.base.d)))))
    orbit = spec.base.orbit(start, n)
    return UnipotentMatrix.from_array(ordered_product(spec.generators(orbit)))


# --- power polynomials and lambda ---------------------------------------------


_n = sympy.Symbol("n", integer=True, nonnegative=True)


@dataclass(frozen=True)
class PowerPolynomial:
    """P(n) = sum coefficients[k] n^k, exact rational coefficients"""

    coefficients: Tuple[Fraction, ...]

    @property
    def degree(self) -> int:
        nonzero = [k for k, c in enumerate(self.coefficients) if c != 0]
        return nonzero[-1] if nonzero else 0

    @property
    def leading_coefficient(self) -> Fraction:
        return self.coefficients[self.degree] if self.coefficients else Fraction(0)

    def __call__(self, n: int) -> Fraction:
        return sum((c * Fraction(n) ** k for k, c in enumerate(self.coefficients)), Fraction(0))


def _from_sympy(value) -> Fraction:
    rational = sympy.Rational(value)
    return Fraction(int(rational.p), int(rational.q))


def _to_sympy(value: Fraction) -> sympy.Rational:
    return sympy.Rational(value.numerator, value.denominator)


def matrix_power_polynomial(u: UnipotentMatrix, i: int, j: int, extra_checks: int = 5) -> PowerPolynomial:
    """
    The polynomial P with P(n) = (u^n)[i, j] for every n >= 0

    Interpolates exactly through n = 0..(j-i) and verifies the result
    against direct powers at the next ``extra_checks`` values of n.

    Raises:
        VerificationError: the interpolant disagrees with a direct power
    """
    if not u.is_exact:
        raise ValueError("matrix_power_polynomial needs the exact backend")
    if not 0 <= i <= j < u.d:
        raise ValueError(f"({i},{j}) is not an upper entry of a {u.d}x{u.d} matrix")
    degree = j - i
    values = []
    power = UnipotentMatrix.identity(u.d, EXACT)
    for _ in range(degree + 1 + extra_checks):
        values.append(power[i, j])
        power = power @ u

    points = [(k, _to_sympy(values[k])) for k in range(degree + 1)]
    expr = sympy.interpolate(points, _n) if degree > 0 else points[0][1]
    poly = sympy.Poly(sympy.expand(expr), _n, domain="QQ")
    coefficients = tuple(_from_sympy(c) for c in reversed(poly.all_coeffs()))
    result = PowerPolynomial(coefficients or (Fraction(0),))

    for k in range(degree + 1, degree + 1 + extra_checks):
        if result(k) != values[k]:
            raise VerificationError(f"Interpolated entry ({i},{j}) gives {result(k)} at n={k}, direct power {values[k]}")
    return result


@lru_cache(maxsize=None)
def _lambda_by_summation(k: int) -> Fraction:
    if k == 0:
        return Fraction(1)
    m = sympy.Symbol("m", integer=True, nonnegative=True)
    partial_sum = sympy.summation(m ** (k - 1), (m, 0, _n - 1))
    leading = sympy.Poly(sympy.expand(partial_sum), _n).LC()
    return _lambda_by_summation(k - 1) * _from_sympy(leading)


@lru_cache(maxsize=None)
def lambda_constant(k: int) -> Fraction:
    """
    Leading-coefficient constant of a (j - i) = k entry of u^n

    Built from the summation recursion (each extra superdiagonal step sums
    the previous entry over the orbit) and cross-checked against
    interpolation of powers of the all-ones superdiagonal matrix.
    """
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    value = _lambda_by_summation(k)
    ones = UnipotentMatrix.from_upper(k + 1, {(a, a + 1): 1 for a in range(k)}, EXACT)
    oracle = matrix_power_polynomial(ones, 0, k).coefficients
    oracle_leading = oracle[k] if len(oracle) > k else Fraction(0)
    if oracle_leading != value:
        raise VerificationError(f"lambda({k}): summation gives {value}, interpolation gives {oracle_leading}")
    return value


def lemma_identity_holds(u: UnipotentMatrix, i: int, j: int) -> bool:
    """Degree <= j-i and leading coefficient lambda(j-i) * prod of the superdiagonal, exactly."""
    poly = matrix_power_polynomial(u, i, j)
    k = j - i
    expected = lambda_constant(k)
    for a in range(i, j):
        expected *= u[a, a + 1]
    top = poly.coefficients[k] if len(poly.coefficients) > k else Fraction(0)
    return len(poly.coefficients) <= k + 1 and top == expected


# --- limits and convergence -------------------------------------------------


def superdiagonal_means(spec: CocycleSpec, haar_sample_size: int = 10_000, seed: int = 0) -> List[float]:
    """
    Haar means of the superdiagonal generator entries

    Exact where a closed form exists: windings for Jacobian cocycles,
    ``haar_mean`` for FunctionSpec entries, the entries of a constant
    generator. A Haar sample is used only for callable generators.
    """
    d = spec.d
    if spec.kind == "derivative":
        # row i stands for coordinate d - i; its superdiagonal is the last-variable derivative of f_{d-i-1}
        return [float(spec.base.skews[d - i - 2].winding) for i in range(d - 1)]
    if spec.kind == "constant":
        return [float(v) for v in spec.constant.superdiagonal()]
    if spec.kind == "entrywise":
        return [spec.entries[(i, i + 1)].haar_mean() if (i, i + 1) in spec.entries else 0.0 for i in range(d - 1)]
    pts = derive_rng(seed, "met-haar").random((haar_sample_size, spec.base.d))
    gens = spec.generators(pts)
    return [float(np.mean(gens[:, i, i + 1])) for i in range(d - 1)]


def met_limit_prediction(spec: CocycleSpec, haar_sample_size: int = 10_000, seed: int = 0) -> UnipotentMatrix:
    """Entry (i, j) = lambda(j - i) * prod_{k=i}^{j-1} <f_{k,k+1}>."""
    means = superdiagonal_means(spec, haar_sample_size, seed)
    upper = {}
    for i in range(spec.d):
        for j in range(i + 1, spec.d):
            upper[(i, j)] = float(lambda_constant(j - i)) * float(np.prod(means[i:j]))
    return UnipotentMatrix.from_upper(spec.d, upper, FLOAT)


class ConvergenceRow(NamedTuple):
    n: int
    max_deviation: float
    deviations: Dict[Tuple[int, int], float]


def met_convergence_check(spec: CocycleSpec, x: Sequence[float], n_list: Sequence[int],
                          prediction: Optional[UnipotentMatrix] = None) -> List[ConvergenceRow]:
    """
    Deviation of theta_{1/n} C(x, n) from the predicted limit at each n

    The product is extended segment by segment with the cocycle identity
    C(x, n') = C(T^n x, n' - n) C(x, n); the raw product is dilated once
    per checkpoint.
    """
    times = [int(n) for n in n_list]
    if not times or any(b <= a for a, b in zip(times, times[1:])) or times[0] < 1:
        raise ValueError("n_list must be positive and strictly increasing")
    prediction = prediction or met_limit_prediction(spec)
    start = np.asarray(x, dtype=float).reshape(-1)
    orbit = spec.base.orbit(start, times[-1]) if spec.kind != "constant" else np.zeros((times[-1], spec.base.d))

    rows: List[ConvergenceRow] = []
    running = np.eye(spec.d)
    previous = 0
    for n in times:
        segment = ordered_product(spec.generators(orbit[previous:n]))
        running = segment @ running
        _guard(running)
        previous = n
        scaled = UnipotentMatrix.from_array(running).dilate(1.0 / n)
        deviations = {
            (i, j): abs(scaled[i, j] - prediction[i, j])
            for i in range(spec.d) for j in range(i + 1, spec.d)
        }
        worst = max(deviations.values(), default=0.0)
        rows.append(ConvergenceRow(n, worst, deviations))
        logger.debug(f"MET check n={n} max deviation {worst:.3e}")
    return rows


def perturbation_bound(u: UnipotentMatrix, delta: float) -> Dict[Tuple[int, int], float]:
    """
    Per-entry limsup bound for sequences whose superdiagonals stay within delta of u's

    lambda(j-i) * (prod(|u_k| + delta) - prod |u_k|) over k = i..j-1
    """
    if delta < 0:
        raise ValueError("delta must be >= 0")
    sup = [abs(float(v)) for v in u.superdiagonal()]
    bounds = {}
    for i in range(u.d):
        for j in range(i + 1, u.d):
            lam = float(lambda_constant(j - i))
            bounds[(i, j)] = lam * (float(np.prod([s + delta for s in sup[i:j]])) - float(np.prod(sup[i:j])))
    return bounds


def perturbation_ratios(factors: np.ndarray, u: UnipotentMatrix, delta: float) -> Dict[Tuple[int, int], float]:
    """|theta_{1/n}(A_n ... A_1) - theta_{1/n}(u^n)| divided by perturbation_bound, entry by entry."""
    n = len(factors)
    scaled = UnipotentMatrix.from_array(ordered_product(factors)).dilate(1.0 / n)
    limit = u.power(n).dilate(1.0 / n)
    return {(i, j): abs(scaled[i, j] - limit[i, j]) / bound
            for (i, j), bound in perturbation_bound(u, delta).items()}


def uniform_perturbation_bound(d: int, M: float, delta: float) -> float:
    """lambda (M + delta)^(d-1) - lambda M^(d-1) with lambda = lambda(d-1)."""
    lam = float(lambda_constant(d - 1))
    return lam * ((M + delta) ** (d - 1) - M ** (d - 1))
