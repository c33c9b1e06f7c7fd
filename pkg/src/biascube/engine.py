"""Both sides of the cube concentration inequalities, exact and Monte Carlo.

The time-integral bound states that the centered p-th moment of a table is at
most 4 alpha (1 - alpha) times the time integral of

    h(t) = (E || sum_i score_i(t) * flip_derivative_i f(start) ||^p)^(1/p),

the expectation running over the joint law of the stationary start point and
the walk position at time t. The type-constant bound replaces the integral by
32 T alpha^(1/p) (sum_i E ||flip_derivative_i f||^p)^(1/p) for alpha < 1/2.
Both are proved inequalities, so a verification ratio above 1 (beyond float
tolerance) indicates an implementation bug, and the verifiers treat it so.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from biascube import _core
from biascube.cube import (
    BiasedMeasure,
    CubeFunction,
    NormSpec,
    centered_lp_moment,
    coordinate_signs,
    gradient_pth_moment_sum,
    gradient_stack,
    measure_weights,
    two_point_centered_moment,
)
from biascube.quadrature import QuadratureSpec, composite_time_rule, integrate_time
from biascube.semigroup import KernelParams, score_table, transition_matrix

EXACT_JOINT_MAX_N = 10
RATIO_ALLOWANCE = 1e-6


@dataclass(frozen=True)
class MCSpec:
    """Monte Carlo sizing: total samples, base seed, batch count for error bars."""

    samples: int = 100_000
    seed: int = 0
    batches: int = 20

    def __post_init__(self):
        if self.batches < 2:
            raise ValueError("need at least 2 batches for an error bar")
        if self.samples < self.batches:
            raise ValueError("samples must be >= batches")


@dataclass
class RhsResult:
    value: float
    quad_error: float
    mc_error: float
    method: str
    evaluations: int

    @property
    def error(self) -> float:
        return self.quad_error + self.mc_error


@dataclass
class InequalityReport:
    lhs: float
    rhs: float
    ratio: float
    method: str
    error_estimate: float
    params: dict
    passed: bool
    notes: str = ""

    def to_record(self, command: str) -> dict:
        return {
            "command": command,
            "params": self.params,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "ratio": self.ratio,
            "error_estimate": self.error_estimate,
            "pass": self.passed,
            "notes": self.notes,
        }


def _substream(seed: int, key: int) -> np.random.Generator:
    """Counter-derived substream: independent of evaluation order and worker count."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(key,)))


def _score_gradient_pre(
    df: np.ndarray, mu: np.ndarray, alpha: float, t: float, p: float, q: float
) -> float:
    params = KernelParams(alpha, t)
    return _core.score_gradient_moment(
        df, mu, transition_matrix(params), score_table(params), p, q
    )


def score_gradient_moment_exact(
    f: CubeFunction, alpha: float, t: float, p: float, norm: NormSpec
) -> float:
    """Exact h(t) by enumeration of all 4^n joint start/end states."""
    if t <= 0.0:
        raise ValueError("exact integrand requires t > 0")
    if p < 1.0:
        raise ValueError(f"p={p} must be >= 1")
    if f.n > EXACT_JOINT_MAX_N:
        raise ValueError(f"joint enumeration limited to n <= {EXACT_JOINT_MAX_N}")
    df = gradient_stack(f)
    mu = measure_weights(BiasedMeasure(alpha, f.n))
    pre = _score_gradient_pre(df, mu, alpha, t, p, norm.q)
    return pre ** (1.0 / p)


def _mc_sample_powers(
    df: np.ndarray | None,
    fn: Callable | None,
    n: int,
    alpha: float,
    t: float,
    p: float,
    norm: NormSpec,
    count: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """count draws of ||sum_i score_i * flip_derivative_i f||^p under the joint law."""
    params = KernelParams(alpha, t)
    K = transition_matrix(params)
    sc = score_table(params)
    bits_e = (rng.random((count, n)) < alpha).astype(np.int64)
    p_plus = np.where(bits_e == 1, K[1, 1], K[0, 1])
    bits_y = (rng.random((count, n)) < p_plus).astype(np.int64)
    coef = sc[bits_e, bits_y]
    if df is not None:
        idx = bits_e @ (1 << np.arange(n, dtype=np.int64))
        vec = np.einsum("cn,ncd->cd", coef, df[:, idx, :])
    else:
        signs = (2 * bits_e - 1).astype(np.float64)
        base = np.asarray(fn(signs), dtype=np.float64)
        vec = np.zeros_like(base)
        for i in range(n):
            flipped = signs.copy()
            flipped[:, i] = -flipped[:, i]
            vec += coef[:, i, None] * (base - np.asarray(fn(flipped))) / 2.0
    return norm.norm(vec) ** p


def score_gradient_moment_mc(
    f: CubeFunction | Callable,
    alpha: float,
    t: float,
    p: float,
    norm: NormSpec,
    mc: MCSpec,
    *,
    n: int | None = None,
    substream: int = 0,
) -> tuple[float, float]:
    """Monte Carlo h(t): returns (root of the mean power, batch stderr of the mean power).

    Sampling is seeded per (mc.seed, substream) so replays are exact. The p-th
    root is applied after averaging; the reported standard error refers to the
    pre-root mean.
    """
    if t <= 0.0:
        raise ValueError("integrand requires t > 0")
    if isinstance(f, CubeFunction):
        df, fn, n = gradient_stack(f), None, f.n
    else:
        if n is None:
            raise ValueError("callable functions need an explicit n")
        df, fn = None, f
    rng = _substream(mc.seed, substream)
    per = mc.samples // mc.batches
    means = np.array([
        _mc_sample_powers(df, fn, n, alpha, t, p, norm, per, rng).mean()
        for _ in range(mc.batches)
    ])
    mean = float(means.mean())
    stderr = float(means.std(ddof=1) / math.sqrt(mc.batches))
    return mean ** (1.0 / p), stderr


def pisier_rhs(
    f: CubeFunction,
    alpha: float,
    p: float,
    norm: NormSpec,
    quad: QuadratureSpec | None = None,
    mode: str = "exact",
    mc: MCSpec | None = None,
) -> RhsResult:
    """4 alpha (1 - alpha) times the time integral of h(t).

    Exact mode integrates the enumerated h adaptively to quad.tol; mc mode
    evaluates h on a fixed composite rule and propagates the per-node batch
    errors through the quadrature weights.
    """
    quad = quad or QuadratureSpec()
    pref = 4.0 * alpha * (1.0 - alpha)
    if mode == "exact":
        df = gradient_stack(f)
        mu = measure_weights(BiasedMeasure(alpha, f.n))
        if f.n > EXACT_JOINT_MAX_N:
            raise ValueError(f"joint enumeration limited to n <= {EXACT_JOINT_MAX_N}")

        def h(t: float) -> float:
            return _score_gradient_pre(df, mu, alpha, t, p, norm.q) ** (1.0 / p)

        res = integrate_time(h, quad)
        return RhsResult(pref * res.value, pref * res.error, 0.0, "exact", res.evaluations)
    if mode != "mc":
        raise ValueError(f"unknown mode {mode!r}")
    if mc is None:
        raise ValueError("mc mode needs an MCSpec")
    rule = composite_time_rule(quad.panels)
    h_vals = np.empty(rule.t.size)
    h_errs = np.empty(rule.t.size)
    for k, t in enumerate(rule.t):
        est, se_pre = score_gradient_moment_mc(f, alpha, float(t), p, norm, mc, substream=k)
        h_vals[k] = est
        pre = est**p
        h_errs[k] = se_pre / (p * pre ** ((p - 1.0) / p)) if pre > 0.0 else 0.0
    value = rule.integral(h_vals)
    return RhsResult(
        pref * value,
        pref * rule.error_estimate(h_vals),
        pref * rule.propagated_sd(h_errs),
        "mc",
        rule.t.size * mc.samples,
    )


def _rounding_floor(f: CubeFunction) -> float:
    """Absolute slack for proved-inequality checks: both sides of the contracts
    are float sums, so a zero bound meets a few-ulp left side on constants."""
    return 1e-12 * max(1.0, float(np.abs(f.values).max()))


def _echo(f: CubeFunction, alpha: float, p: float, norm: NormSpec, **extra) -> dict:
    out = {"n": f.n, "d": f.d, "alpha": alpha, "p": p, "q": norm.q, "T": norm.T}
    out.update(extra)
    return out


def verify_pisier(
    f: CubeFunction,
    alpha: float,
    p: float,
    norm: NormSpec,
    quad: QuadratureSpec | None = None,
    mode: str = "exact",
    mc: MCSpec | None = None,
) -> InequalityReport:
    """Check centered moment <= time-integral bound; a failure flags a bug."""
    lhs = centered_lp_moment(f, BiasedMeasure(alpha, f.n), p, norm)
    rhs = pisier_rhs(f, alpha, p, norm, quad, mode, mc)
    ratio = lhs / rhs.value if rhs.value > 0.0 else 0.0
    floor = _rounding_floor(f)
    if mode == "exact":
        passed = lhs <= rhs.value * (1.0 + RATIO_ALLOWANCE) + rhs.quad_error + floor
    else:
        passed = lhs <= rhs.value + 3.0 * rhs.mc_error + rhs.quad_error + floor
    params = _echo(f, alpha, p, norm, mode=mode, seed=mc.seed if mc else None,
                   samples=mc.samples if mc else None)
    return InequalityReport(lhs, rhs.value, ratio, mode, rhs.error, params, passed)


def effective_alpha(alpha: float) -> float:
    """Bias after the symmetry that maps alpha >= 1/2 onto 1 - alpha."""
    return min(alpha, 1.0 - alpha)


def poincare_rhs(f: CubeFunction, alpha: float, p: float, norm: NormSpec) -> float:
    """32 T alpha^(1/p) (sum_i E ||flip_derivative_i f||^p)^(1/p), exact tables.

    For alpha >= 1/2 the bias symmetry substitutes 1 - alpha in the constant;
    the measure itself is unchanged.
    """
    a = effective_alpha(alpha)
    grad = gradient_pth_moment_sum(f, BiasedMeasure(alpha, f.n), p, norm)
    return 32.0 * norm.T * a ** (1.0 / p) * grad ** (1.0 / p)


def verify_poincare(
    f: CubeFunction, alpha: float, norm: NormSpec, p: float | None = None
) -> InequalityReport:
    """Check centered moment <= type-constant bound (exact both sides)."""
    p = norm.p if p is None else p
    lhs = centered_lp_moment(f, BiasedMeasure(alpha, f.n), p, norm)
    rhs = poincare_rhs(f, alpha, p, norm)
    ratio = lhs / rhs if rhs > 0.0 else 0.0
    passed = lhs <= rhs * (1.0 + RATIO_ALLOWANCE) + _rounding_floor(f)
    notes = "" if alpha < 0.5 else f"bias symmetry applied: constant uses {effective_alpha(alpha)}"
    params = _echo(f, alpha, p, norm, mode="exact")
    return InequalityReport(lhs, rhs, ratio, "exact", 0.0, params, passed, notes)


@dataclass
class ScanRow:
    alpha: float
    p: float
    lhs: float
    rhs: float
    ratio: float
    alpha_ratio: float
    in_band: bool


def sharpness_scan(p: float, n: int, alpha_grid) -> list[ScanRow]:
    """Bias dependence of the diagonal example against the 32-constant bound.

    lhs is the closed-form centered moment (independent of n), rhs the exact
    bound 32 alpha^(1/p) for the example. The scan asserts that
    lhs / alpha^(1/p) stays inside [2^(1-1/p) (1-alpha), 4] on the grid.
    """
    rows = []
    for alpha in alpha_grid:
        if not 0.0 < alpha < 0.5:
            raise ValueError(f"scan grid must lie in (0, 1/2); got {alpha}")
        lhs = two_point_centered_moment(alpha, p)
        rhs = 32.0 * alpha ** (1.0 / p)
        alpha_ratio = lhs / alpha ** (1.0 / p)
        lo = 2.0 ** (1.0 - 1.0 / p) * (1.0 - alpha)
        in_band = lo <= alpha_ratio <= 4.0
        rows.append(ScanRow(alpha, p, lhs, rhs, lhs / rhs, alpha_ratio, in_band))
        if not in_band:
            raise RuntimeError(
                f"sharpness band violated at alpha={alpha}: {alpha_ratio} not in [{lo}, 4]"
            )
    return rows


def concentration_ratio(f: CubeFunction, alpha: float, p: float, norm: NormSpec) -> float:
    """R(f) = centered moment / (sum of gradient p-th moments)^(1/p), scale invariant."""
    m = BiasedMeasure(alpha, f.n)
    den = gradient_pth_moment_sum(f, m, p, norm) ** (1.0 / p)
    if den < 1e-12:
        raise ValueError("degenerate gradient denominator (function nearly constant)")
    return centered_lp_moment(f, m, p, norm) / den


@dataclass
class SearchResult:
    function: CubeFunction
    ratio: float
    evaluations: int
    restarts: int


def _warm_start(n: int, d: int) -> CubeFunction:
    signs = coordinate_signs(n)
    vals = np.zeros(((1 << n), d))
    for j in range(min(n, d)):
        vals[:, j] = signs[:, j]
    if min(n, d) == 0:
        vals[:, 0] = signs[:, 0]
    return CubeFunction(vals, n)


def extremal_search(
    n: int,
    d: int,
    alpha: float,
    p: float,
    norm: NormSpec,
    budget: int = 4000,
    seed: int = 0,
    init_step: float = 0.8,
    shrink: float = 0.97,
    min_step: float = 1e-7,
    warm_start: bool = True,
) -> SearchResult:
    """Random-restart hill climbing on R(f) over non-constant tables.

    Single-cell Gaussian perturbations with a geometrically shrinking step;
    restarts draw fresh Gaussian tables. The known extremal candidate (the
    coordinate map) seeds the first climb when warm_start is set, so the
    search can only match or improve on it.
    """
    if n > 5 or d > 4:
        raise ValueError("search keeps exact evaluation in the loop; n <= 5, d <= 4")
    m = BiasedMeasure(alpha, n)
    w = measure_weights(m)
    size = 1 << n
    idx = np.arange(size)
    flips = [idx ^ (1 << i) for i in range(n)]

    def ratio_of(values: np.ndarray) -> float:
        mean = w @ values
        num = float((w @ norm.norm(values - mean) ** p) ** (1.0 / p))
        den_p = 0.0
        for i in range(n):
            den_p += float(w @ norm.norm((values - values[flips[i]]) / 2.0) ** p)
        den = den_p ** (1.0 / p)
        if den < 1e-12:
            return -np.inf
        return num / den

    rng = _substream(seed, 0)
    evals = 0
    best_vals: np.ndarray | None = None
    best_r = -np.inf
    restarts = max(2, budget // 800)
    per_restart = max(1, budget // restarts)
    for r in range(restarts):
        if r == 0 and warm_start:
            cur = _warm_start(n, d).values.copy()
        else:
            cur = rng.standard_normal((size, d))
            while np.ptp(cur) == 0.0:
                cur = rng.standard_normal((size, d))
        cur_r = ratio_of(cur)
        evals += 1
        while not np.isfinite(cur_r):
            cur = rng.standard_normal((size, d))
            cur_r = ratio_of(cur)
            evals += 1
        step = init_step
        for _ in range(per_restart):
            x = rng.integers(size)
            j = rng.integers(d)
            cand = cur.copy()
            cand[x, j] += step * rng.standard_normal()
            cand_r = ratio_of(cand)
            evals += 1
            if cand_r > cur_r:
                cur, cur_r = cand, cand_r
            else:
                step *= shrink
                if step < min_step:
                    break
        if cur_r > best_r:
            best_vals, best_r = cur, cur_r
    assert best_vals is not None
    scale_check = ratio_of(7.3 * best_vals)
    assert abs(scale_check - best_r) <= 1e-12 * max(1.0, best_r), "ratio must be scale invariant"
    return SearchResult(CubeFunction(best_vals, n), float(best_r), evals, restarts)
