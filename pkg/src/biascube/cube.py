"""Biased discrete cube: points, product measure, discrete derivatives, exact moments.

Points of {-1,+1}^n are encoded as integer bitmasks: bit j of the index holds
coordinate j, with a set bit meaning +1. This makes coordinate flips a single
XOR and turns the product-measure weight into a popcount. Everything in this
module is an exact enumeration over dense tables of size 2^n; it is the oracle
layer that the sampling and quadrature machinery elsewhere is checked against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_TABLE_N = 24


def _check_table_n(n: int) -> None:
    if not 1 <= n <= MAX_TABLE_N:
        raise ValueError(f"n={n} outside supported table range [1, {MAX_TABLE_N}]")


@dataclass(frozen=True)
class CubePoint:
    """A point of {-1,+1}^n, stored as a bitmask (bit set means +1)."""

    index: int
    n: int

    def __post_init__(self):
        _check_table_n(self.n)
        if not 0 <= self.index < (1 << self.n):
            raise ValueError(f"index {self.index} out of range for n={self.n}")

    def sign(self, j: int) -> int:
        """Coordinate j as +1 or -1."""
        if not 0 <= j < self.n:
            raise IndexError(f"coordinate {j} out of range for n={self.n}")
        return 1 if (self.index >> j) & 1 else -1

    def flip(self, j: int) -> "CubePoint":
        if not 0 <= j < self.n:
            raise IndexError(f"coordinate {j} out of range for n={self.n}")
        return CubePoint(self.index ^ (1 << j), self.n)

    def signs(self) -> np.ndarray:
        """All coordinates as a length-n array of +-1."""
        bits = (self.index >> np.arange(self.n)) & 1
        return (2 * bits - 1).astype(np.float64)

    @classmethod
    def from_signs(cls, signs) -> "CubePoint":
        signs = np.asarray(signs)
        bits = (signs > 0).astype(np.int64)
        index = int(bits @ (1 << np.arange(len(signs), dtype=np.int64)))
        return cls(index, len(signs))


@dataclass(frozen=True)
class BiasedMeasure:
    """Product measure on {-1,+1}^n with P(coordinate = +1) = alpha."""

    alpha: float
    n: int

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha={self.alpha} must lie in (0, 1)")
        _check_table_n(self.n)

    def weights(self) -> np.ndarray:
        return measure_weights(self)


@dataclass(frozen=True)
class NormSpec:
    """Target space descriptor: the l_q norm on R^d with type data (p, T).

    q is the norm exponent, p the type exponent used in the inequalities and
    T the type constant. T is configuration, never computed; the default
    (q = p, T = 1) is exact for l_p targets with p in [1, 2].
    """

    q: float
    p: float
    T: float = 1.0

    def __post_init__(self):
        if self.q < 1.0:
            raise ValueError(f"norm exponent q={self.q} must be >= 1")
        if not 1.0 <= self.p <= 2.0:
            raise ValueError(f"type exponent p={self.p} must lie in [1, 2]")
        if self.T <= 0.0:
            raise ValueError(f"type constant T={self.T} must be positive")

    def norm(self, v: np.ndarray, axis: int = -1) -> np.ndarray:
        """l_q norm along `axis`."""
        v = np.asarray(v, dtype=np.float64)
        if self.q == 1.0:
            return np.abs(v).sum(axis=axis)
        if self.q == 2.0:
            return np.sqrt((v * v).sum(axis=axis))
        return (np.abs(v) ** self.q).sum(axis=axis) ** (1.0 / self.q)


def lp_norm_spec(p: float, T: float = 1.0) -> NormSpec:
    """The default test target: l_p with type exponent p and constant T."""
    return NormSpec(q=p, p=p, T=T)


class CubeFunction:
    """Dense table of a function {-1,+1}^n -> R^d.

    Row x of `values` is the value at the point with bitmask x. Tables are
    stored read-only; operations return fresh tables.
    """

    def __init__(self, values, n: int | None = None):
        values = np.array(values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise ValueError("values must be a (2^n, d) table")
        size = values.shape[0]
        if n is None:
            n = size.bit_length() - 1
        _check_table_n(n)
        if size != (1 << n):
            raise ValueError(f"table has {size} rows, expected 2^{n}")
        values.setflags(write=False)
        self.values = values
        self.n = n
        self.d = values.shape[1]

    @property
    def size(self) -> int:
        return 1 << self.n

    def __call__(self, x: CubePoint | int) -> np.ndarray:
        index = x.index if isinstance(x, CubePoint) else int(x)
        return self.values[index]

    def is_constant(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.values - self.values[0]) <= tol))

    @classmethod
    def constant(cls, n: int, vector) -> "CubeFunction":
        vector = np.atleast_1d(np.asarray(vector, dtype=np.float64))
        return cls(np.tile(vector, ((1 << n), 1)), n)


def random_cube_function(n: int, d: int, rng: np.random.Generator, scale: float = 1.0) -> CubeFunction:
    return CubeFunction(scale * rng.standard_normal(((1 << n), d)), n)


def coordinate_signs(n: int) -> np.ndarray:
    """(2^n, n) matrix of coordinates; row x, column j is the sign of bit j."""
    if n > 16:
        raise ValueError("sign matrix only materialized for n <= 16")
    idx = np.arange(1 << n, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(n)) & 1
    return (2 * bits - 1).astype(np.float64)


def diagonal_function(n: int, p: float) -> CubeFunction:
    """The normalized coordinate map eps -> n^(-1/p) * (eps_1, ..., eps_n).

    Its centered p-th moment in l_p equals the single-coordinate closed form
    for every n, which is what makes it the sharpness witness.
    """
    return CubeFunction(coordinate_signs(n) * n ** (-1.0 / p), n)


def measure_weights(measure: BiasedMeasure) -> np.ndarray:
    """Product weights alpha^{#(+1)} (1-alpha)^{n-#(+1)}, indexed by bitmask."""
    n, alpha = measure.n, measure.alpha
    idx = np.arange(1 << n, dtype=np.uint32)
    k = np.bitwise_count(idx).astype(np.float64)
    return alpha**k * (1.0 - alpha) ** (n - k)


def _check_index(f: CubeFunction, i: int) -> None:
    if not 0 <= i < f.n:
        raise IndexError(f"coordinate {i} out of range for n={f.n}")


def flip_derivative(f: CubeFunction, i: int) -> CubeFunction:
    """(f(x) - f(x with coordinate i flipped)) / 2."""
    _check_index(f, i)
    flipped = np.arange(f.size) ^ (1 << i)
    return CubeFunction((f.values - f.values[flipped]) / 2.0, f.n)


def partial_derivative(f: CubeFunction, i: int) -> CubeFunction:
    """(f(x with coordinate i set to +1) - f(x with it set to -1)) / 2.

    The result does not depend on coordinate i of the evaluation point.
    """
    _check_index(f, i)
    idx = np.arange(f.size)
    hi = idx | (1 << i)
    lo = idx & ~(1 << i)
    return CubeFunction((f.values[hi] - f.values[lo]) / 2.0, f.n)


def biased_derivative(f: CubeFunction, i: int, alpha: float) -> CubeFunction:
    """f(x) minus the alpha-biased average over coordinate i.

    Equals (1 - 2*alpha + x_i) times the partial derivative, which is the
    identity that decouples the coordinate from the slope.
    """
    _check_index(f, i)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha={alpha} must lie in (0, 1)")
    idx = np.arange(f.size)
    hi = idx | (1 << i)
    lo = idx & ~(1 << i)
    mean_i = alpha * f.values[hi] + (1.0 - alpha) * f.values[lo]
    return CubeFunction(f.values - mean_i, f.n)


def gradient_stack(f: CubeFunction) -> np.ndarray:
    """All flip derivatives at once, shape (n, 2^n, d)."""
    idx = np.arange(f.size)
    out = np.empty((f.n, f.size, f.d))
    for i in range(f.n):
        out[i] = (f.values - f.values[idx ^ (1 << i)]) / 2.0
    return out


def _check_compatible(f: CubeFunction, measure: BiasedMeasure) -> None:
    if f.n != measure.n:
        raise ValueError(f"function has n={f.n} but measure has n={measure.n}")


def expect(f: CubeFunction, measure: BiasedMeasure) -> np.ndarray:
    """Exact mean vector of f under the biased measure."""
    _check_compatible(f, measure)
    return measure_weights(measure) @ f.values


def centered_lp_moment(f: CubeFunction, measure: BiasedMeasure, p: float, norm: NormSpec) -> float:
    """Exact (E ||f - E f||^p)^(1/p), the left-hand side of the inequalities."""
    _check_compatible(f, measure)
    if p < 1.0:
        raise ValueError(f"moment exponent p={p} must be >= 1")
    w = measure_weights(measure)
    dev = norm.norm(f.values - w @ f.values)
    return float((w @ dev**p) ** (1.0 / p))


def gradient_pth_moment_sum(f: CubeFunction, measure: BiasedMeasure, p: float, norm: NormSpec) -> float:
    """Exact sum over coordinates of E ||flip_derivative_i f||^p."""
    _check_compatible(f, measure)
    w = measure_weights(measure)
    total = 0.0
    idx = np.arange(f.size)
    for i in range(f.n):
        diff = (f.values - f.values[idx ^ (1 << i)]) / 2.0
        total += float(w @ norm.norm(diff) ** p)
    return total


def biased_identity_residual(f: CubeFunction, alpha: float) -> float:
    """Max pointwise residual of biased_derivative = (1 - 2 alpha + x_i) * partial_derivative."""
    signs = coordinate_signs(f.n)
    worst = 0.0
    for i in range(f.n):
        da = biased_derivative(f, i, alpha).values
        pd = partial_derivative(f, i).values
        coef = (1.0 - 2.0 * alpha + signs[:, i])[:, None]
        worst = max(worst, float(np.max(np.abs(da - coef * pd))))
    return worst


def two_point_centered_moment(alpha: float, p: float) -> float:
    """(E |eps - E eps|^p)^(1/p) for a single alpha-biased coordinate.

    Closed form: (alpha (2(1-alpha))^p + (1-alpha) (2 alpha)^p)^(1/p).
    """
    return float(
        (alpha * (2.0 * (1.0 - alpha)) ** p + (1.0 - alpha) * (2.0 * alpha) ** p) ** (1.0 / p)
    )
