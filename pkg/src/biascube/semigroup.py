"""Heat semigroup of the biased random walk: kernel, generator, score coefficients.

The one-coordinate transition kernel is

    p_t(x, y) = (1 - e^-t)/2 * (2*alpha - 1) * y + (1 + e^-t * x * y)/2

and the n-coordinate walk moves independently per coordinate, so the semigroup
acts as a tensor product of 2x2 kernels. The score coefficient

    score(x, y) = e^-t * x * y / (2 * p_t(x, y))

is the flip derivative of log p_t in its first argument; it has conditional
mean zero under p_t(x, .) and its absolute p-th moments obey the explicit
(2*alpha)^(1-p) e^-tp (1 - e^-t)^(1-p) envelope for alpha < 1/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from biascube.cube import (
    BiasedMeasure,
    CubeFunction,
    CubePoint,
    biased_derivative,
    expect,
    flip_derivative,
    measure_weights,
)


@dataclass(frozen=True)
class KernelParams:
    """Bias and time of the heat kernel."""

    alpha: float
    t: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha={self.alpha} must lie in (0, 1)")
        if self.t < 0.0:
            raise ValueError(f"t={self.t} must be nonnegative")


def kernel_1d(params: KernelParams, x: int, y: int) -> float:
    """Transition probability p_t(x, y) for signs x, y in {-1, +1}.

    The off-diagonal branch factors out 1 - e^-t (through expm1) so tiny
    times do not cancel to zero.
    """
    e = math.exp(-params.t)
    em = -math.expm1(-params.t)
    if x == y:
        return em * (2.0 * params.alpha - 1.0) * y / 2.0 + (1.0 + e) / 2.0
    return em * (1.0 + (2.0 * params.alpha - 1.0) * y) / 2.0


def transition_matrix(params: KernelParams) -> np.ndarray:
    """2x2 kernel indexed by bits: entry [xb, yb] is p_t(sign(xb), sign(yb))."""
    out = np.empty((2, 2))
    for xb, x in ((0, -1), (1, 1)):
        for yb, y in ((0, -1), (1, 1)):
            out[xb, yb] = kernel_1d(params, x, y)
    return out


def score(params: KernelParams, eps_i: int, xt_i: int) -> float:
    """Score coefficient of one coordinate, eps_i the start sign, xt_i the end sign.

    At t = 0 the off-diagonal transition has probability zero and the score is
    undefined there; that case is a domain error rather than a limit.
    """
    if params.t == 0.0 and eps_i != xt_i:
        raise ValueError("score undefined at t=0 off the diagonal (zero kernel weight)")
    e = math.exp(-params.t)
    em = -math.expm1(-params.t)
    bias = (2.0 * params.alpha - 1.0) * xt_i
    if eps_i == xt_i:
        denom = em * bias + 1.0 + e
    else:
        denom = em * (1.0 + bias)
    return e * eps_i * xt_i / denom


def score_table(params: KernelParams) -> np.ndarray:
    """2x2 score values indexed by bits, same layout as transition_matrix."""
    out = np.empty((2, 2))
    for xb, x in ((0, -1), (1, 1)):
        for yb, y in ((0, -1), (1, 1)):
            out[xb, yb] = score(params, x, y)
    return out


def score_vector(eps: CubePoint, xt: CubePoint, params: KernelParams) -> np.ndarray:
    """Per-coordinate score values for a start/end pair of cube points."""
    if eps.n != xt.n:
        raise ValueError("points live on cubes of different dimension")
    return np.array([score(params, eps.sign(j), xt.sign(j)) for j in range(eps.n)])


def score_abs_moment(params: KernelParams, p: float, x: int) -> float:
    """Exact E[|score|^p | start = x], a two-term sum over the end sign."""
    if params.t <= 0.0:
        raise ValueError("score moments require t > 0")
    if p < 1.0:
        raise ValueError(f"p={p} must be >= 1")
    total = 0.0
    for y in (-1, 1):
        w = kernel_1d(params, x, y)
        total += w * abs(score(params, x, y)) ** p
    return total


def score_moment_bound(alpha: float, t: float, p: float) -> float:
    """(2 alpha)^(1-p) e^(-t p) (1 - e^-t)^(1-p), valid envelope for alpha < 1/2."""
    e = math.exp(-t)
    return (2.0 * alpha) ** (1.0 - p) * e**p * (-math.expm1(-t)) ** (1.0 - p)


def _tensor_apply(values: np.ndarray, n: int, mats) -> np.ndarray:
    """Contract a (2^n, d) table with one 2x2 matrix per coordinate.

    mats[j] acts on coordinate j; entry [out_bit, in_bit]. Coordinate j of the
    bitmask corresponds to axis n-1-j of the C-order reshape.
    """
    d = values.shape[1]
    arr = values.reshape((2,) * n + (d,))
    for j in range(n):
        axis = n - 1 - j
        arr = np.moveaxis(np.tensordot(mats[j], arr, axes=([1], [axis])), 0, axis)
    return arr.reshape(1 << n, d)


def apply_heat(f: CubeFunction, params: KernelParams) -> CubeFunction:
    """Heat semigroup applied to a table: (P_t f)(x) = sum_y prod_i p_t(x_i,y_i) f(y)."""
    K = transition_matrix(params)
    return CubeFunction(_tensor_apply(f.values, f.n, [K] * f.n), f.n)


def generator(f: CubeFunction, alpha: float) -> CubeFunction:
    """Walk generator: minus the sum of biased derivatives over coordinates."""
    acc = np.zeros_like(f.values)
    for i in range(f.n):
        acc -= biased_derivative(f, i, alpha).values
    return CubeFunction(acc, f.n)


def dirichlet_form(f: CubeFunction, g: CubeFunction, alpha: float) -> float:
    """Energy -E[f * (generator g)], components reduced entrywise and summed."""
    if f.n != g.n or f.d != g.d:
        raise ValueError("dirichlet form requires matching table shapes")
    w = measure_weights(BiasedMeasure(alpha, f.n))
    lg = generator(g, alpha).values
    return float(-(w @ (f.values * lg).sum(axis=1)))


def dirichlet_form_gradient(f: CubeFunction, g: CubeFunction, alpha: float) -> float:
    """The same energy through the gradient representation:

    4 alpha (1 - alpha) * sum_i E[flip_derivative_i f . flip_derivative_i g].
    """
    if f.n != g.n or f.d != g.d:
        raise ValueError("dirichlet form requires matching table shapes")
    w = measure_weights(BiasedMeasure(alpha, f.n))
    total = 0.0
    for i in range(f.n):
        df = flip_derivative(f, i).values
        dg = flip_derivative(g, i).values
        total += float(w @ (df * dg).sum(axis=1))
    return 4.0 * alpha * (1.0 - alpha) * total


def heat_derivative_residual(f: CubeFunction, params: KernelParams, i: int) -> float:
    """Max-abs residual of the identity D_i P_t f = E[score_i * f(walk end)].

    The left side composes apply_heat with the flip derivative. The right side
    is the exact kernel-weighted expectation, evaluated as a tensor contraction
    where coordinate i carries p_t * score (the flip derivative of the kernel)
    and the others carry p_t.
    """
    if params.t <= 0.0:
        raise ValueError("identity requires t > 0")
    if not 0 <= i < f.n:
        raise IndexError(f"coordinate {i} out of range for n={f.n}")
    if f.n > 12:
        raise ValueError("residual check limited to n <= 12")
    left = flip_derivative(apply_heat(f, params), i).values
    K = transition_matrix(params)
    e = math.exp(-params.t)
    signs = np.array([-1.0, 1.0])
    weighted = e * np.outer(signs, signs) / 2.0  # p_t(x,y) * score(x,y)
    mats = [weighted if j == i else K for j in range(f.n)]
    right = _tensor_apply(f.values, f.n, mats)
    return float(np.max(np.abs(left - right)))


def sample_walk(eps: CubePoint, params: KernelParams, rng: np.random.Generator) -> CubePoint:
    """End point of the walk at time t started at eps, one independent draw
    per coordinate from the transition kernel."""
    K = transition_matrix(params)
    bits = (eps.index >> np.arange(eps.n)) & 1
    p_plus = np.where(bits == 1, K[1, 1], K[0, 1])
    new_bits = (rng.random(eps.n) < p_plus).astype(np.int64)
    return CubePoint(int(new_bits @ (1 << np.arange(eps.n, dtype=np.int64))), eps.n)


def sample_walk_clock(eps: CubePoint, params: KernelParams, rng: np.random.Generator) -> CubePoint:
    """Cross-check sampler built from rate-1 refresh clocks per coordinate.

    A coordinate that rings at least once by time t is replaced by a fresh
    draw from the biased coordinate law; marginally at fixed t this is the
    same distribution as sample_walk.
    """
    rings = rng.poisson(params.t, eps.n) > 0
    fresh = rng.random(eps.n) < params.alpha
    bits = ((eps.index >> np.arange(eps.n)) & 1).astype(bool)
    new_bits = np.where(rings, fresh, bits).astype(np.int64)
    return CubePoint(int(new_bits @ (1 << np.arange(eps.n, dtype=np.int64))), eps.n)


def stationary_check(f: CubeFunction, params: KernelParams) -> float:
    """Max-abs deviation of P_t f's mean from the stationary mean of f."""
    m = BiasedMeasure(params.alpha, f.n)
    return float(np.max(np.abs(expect(apply_heat(f, params), m) - expect(f, m))))
