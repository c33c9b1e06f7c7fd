"""Product-Poisson concentration: forward differences, multiplier bounds, scaling limit.

Functions on N^m are dense tables on the box {0, ..., K-1}^m, extended
constantly beyond the cutoff; the extension keeps them bounded and kills
forward differences at the boundary. Expectations against the product
Poisson(1) law are computed on the box with the plain product weights, and
the neglected tail is reported as an explicit bound instead of being dropped
silently.

The bridge to the cube lifts a lattice table to {-1,+1}^(m*n) through row
popcounts, with per-coordinate bias 1/n. As n grows the pair (row sum,
refresh count) converges to an independent Poisson(1) x Poisson(1 - e^-t)
pair, which is what turns the cube time-integral bound into the Poisson one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln
from scipy.stats import binom as _binom
from scipy.stats import poisson as _poisson

from biascube.cube import CubeFunction, NormSpec
from biascube.engine import InequalityReport, MCSpec, RhsResult, _substream
from biascube.quadrature import QuadratureSpec, composite_time_rule, integrate_time
from biascube.semigroup import KernelParams, kernel_1d, score_table, transition_matrix

BOX_MASS_GUARD = 1e-8
MAX_LIFT_BITS = 20


class LatticeFunction:
    """Dense table of a bounded function N^m -> R^d, truncated at K per coordinate.

    Row index is the C-order ravel of the lattice point (first coordinate most
    significant). Values beyond the box are the constant extension, so the
    table determines the function on all of N^m.
    """

    def __init__(self, values, m: int, K: int):
        values = np.array(values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if m < 1 or K < 2:
            raise ValueError("need m >= 1 and K >= 2")
        if values.shape[0] != K**m:
            raise ValueError(f"table has {values.shape[0]} rows, expected {K}^{m}")
        values.setflags(write=False)
        self.values = values
        self.m = m
        self.K = K
        self.d = values.shape[1]

    @property
    def size(self) -> int:
        return self.K**self.m

    def grid(self) -> np.ndarray:
        """View of the table with shape (K,)*m + (d,)."""
        return self.values.reshape((self.K,) * self.m + (self.d,))

    def at(self, point) -> np.ndarray:
        """Value at a lattice point, clamping each coordinate into the box."""
        point = np.minimum(np.asarray(point, dtype=np.int64), self.K - 1)
        if point.min() < 0:
            raise ValueError("lattice points are nonnegative")
        idx = int(np.ravel_multi_index(tuple(point), (self.K,) * self.m))
        return self.values[idx]

    def sup_norm_bound(self, norm: NormSpec) -> float:
        """Computed sup of the target norm over the table (hence over N^m)."""
        return float(norm.norm(self.values).max())

    def box_indices(self, points: np.ndarray) -> np.ndarray:
        """Row indices for an (count, m) array of lattice points, clamped."""
        clamped = np.minimum(points, self.K - 1)
        return np.ravel_multi_index(tuple(clamped.T), (self.K,) * self.m)


def random_lattice_function(m: int, K: int, d: int, rng: np.random.Generator, scale: float = 1.0) -> LatticeFunction:
    return LatticeFunction(scale * rng.standard_normal((K**m, d)), m, K)


def indicator_at_zero(K: int) -> LatticeFunction:
    """m = 1 table of 1_{k = 0}."""
    vals = np.zeros((K, 1))
    vals[0, 0] = 1.0
    return LatticeFunction(vals, 1, K)


def clipped_identity(K: int) -> LatticeFunction:
    """m = 1 table of min(k, K-1)."""
    return LatticeFunction(np.arange(K, dtype=np.float64), 1, K)


def forward_difference(f: LatticeFunction, i: int) -> LatticeFunction:
    """f(... x_i + 1 ...) - f(... x_i ...); zero at the cutoff boundary."""
    if not 0 <= i < f.m:
        raise IndexError(f"coordinate {i} out of range for m={f.m}")
    g = f.grid()
    out = np.zeros_like(g)
    src = [slice(None)] * f.m + [slice(None)]
    dst = [slice(None)] * f.m + [slice(None)]
    src[i] = slice(1, None)
    dst[i] = slice(0, f.K - 1)
    out[tuple(dst)] = g[tuple(src)] - g[tuple(dst)]
    return LatticeFunction(out.reshape(f.size, f.d), f.m, f.K)


def difference_stack(f: LatticeFunction) -> np.ndarray:
    """All forward differences, shape (m, K^m, d)."""
    return np.stack([forward_difference(f, i).values for i in range(f.m)])


def _unit_poisson_pmf(K: int) -> np.ndarray:
    k = np.arange(K)
    return np.exp(-1.0 + k * 0.0 - gammaln(k + 1.0))


def box_weights(f: LatticeFunction) -> tuple[np.ndarray, float]:
    """Plain product Poisson(1) weights on the box and the missing mass."""
    pmf = _unit_poisson_pmf(f.K)
    w = pmf.copy()
    for _ in range(f.m - 1):
        w = np.multiply.outer(w, pmf)
    w = w.ravel()
    mass_out = 1.0 - pmf.sum() ** f.m
    if mass_out > BOX_MASS_GUARD:
        raise ValueError(
            f"cutoff K={f.K} leaves mass {mass_out:.3e} outside the box for m={f.m}"
        )
    return w, mass_out


def expect_lattice(f: LatticeFunction) -> tuple[np.ndarray, float]:
    """Box expectation of f and the unaccounted tail mass."""
    w, mass_out = box_weights(f)
    return w @ f.values, mass_out


def centered_moment(f: LatticeFunction, p: float, norm: NormSpec) -> tuple[float, float]:
    """(E ||f - E f||^p)^(1/p) on the box, with a bound on the truncation error.

    The mean is normalized by the box mass (so constants center to zero
    exactly); the bound combines the omitted-region contribution
    2B mass^(1/p) with the mean-shift effect 2B mass, B the sup of the
    target norm of f.
    """
    if p < 1.0:
        raise ValueError(f"p={p} must be >= 1")
    w, mass_out = box_weights(f)
    mean = (w @ f.values) / w.sum()
    value = float((w @ norm.norm(f.values - mean) ** p) ** (1.0 / p))
    bound = f.sup_norm_bound(norm)
    tail = 2.0 * bound * (mass_out ** (1.0 / p) + mass_out)
    return value, tail


def multiplier(t: float, eta: int | np.ndarray):
    """e^-t - e^-t * eta / (1 - e^-t), the mean-zero Poisson multiplier."""
    e = math.exp(-t)
    return e - e * np.asarray(eta) / (-math.expm1(-t))


def multiplier_second_moment(t: float) -> float:
    """E multiplier^2 = e^-2t / (1 - e^-t)."""
    e = math.exp(-t)
    return e * e / (-math.expm1(-t))


def multiplier_abs_moment(t: float, p: float, cutoff: int = 60) -> float:
    """Exact E |multiplier|^p by a truncated Poisson sum (tail below 1e-60)."""
    if t <= 0.0:
        raise ValueError("multiplier moments require t > 0")
    lam = -math.expm1(-t)
    k = np.arange(cutoff)
    pmf = np.exp(-lam + k * np.log(lam) - gammaln(k + 1.0))
    return float(pmf @ np.abs(multiplier(t, k)) ** p)


def _poisson_cdf(lam: float, kmax: int = 64) -> np.ndarray:
    k = np.arange(kmax)
    pmf = np.exp(-lam + k * np.log(lam) - gammaln(k + 1.0)) if lam > 0 else (k == 0) * 1.0
    return np.cumsum(pmf)


def sample_poisson_inversion(lam: float, size, rng: np.random.Generator) -> np.ndarray:
    """Poisson draws by CDF inversion; exact and replayable for lam <= 1."""
    cdf = _poisson_cdf(lam)
    draws = np.searchsorted(cdf, rng.random(size), side="left")
    return np.minimum(draws, len(cdf) - 1)


def sample_multiplier(t: float, rng: np.random.Generator) -> float:
    """One multiplier draw: eta ~ Poisson(1 - e^-t) by sequential inversion."""
    if t <= 0.0:
        raise ValueError("multiplier requires t > 0")
    lam = -math.expm1(-t)
    u = rng.random()
    eta = 0
    acc = math.exp(-lam)
    term = acc
    while u > acc and eta < 400:
        eta += 1
        term *= lam / eta
        acc += term
    return float(multiplier(t, eta))


def multiplier_gradient_moment_mc(
    f: LatticeFunction,
    t: float,
    p: float,
    norm: NormSpec,
    mc: MCSpec,
    *,
    substream: int = 0,
) -> tuple[float, float]:
    """Monte Carlo (E ||sum_i multiplier_i * difference_i f(N)||^p)^(1/p).

    N is a fresh product Poisson(1) draw (points beyond the box hit the zero
    differences of the constant extension), the multipliers are independent of
    N. Returns the post-root estimate and the batch stderr of the pre-root mean.
    """
    if t <= 0.0:
        raise ValueError("integrand requires t > 0")
    dz = difference_stack(f)
    lam = -math.expm1(-t)
    rng = _substream(mc.seed, substream)
    per = mc.samples // mc.batches
    means = np.empty(mc.batches)
    for b in range(mc.batches):
        pts = sample_poisson_inversion(1.0, (per, f.m), rng)
        eta = sample_poisson_inversion(lam, (per, f.m), rng)
        coef = np.asarray(multiplier(t, eta))
        idx = f.box_indices(pts)
        vec = np.einsum("cm,mcd->cd", coef, dz[:, idx, :])
        means[b] = (norm.norm(vec) ** p).mean()
    mean = float(means.mean())
    stderr = float(means.std(ddof=1) / math.sqrt(mc.batches))
    return mean ** (1.0 / p), stderr


def multiplier_gradient_moment_exact(
    f: LatticeFunction, t: float, p: float, norm: NormSpec, eta_cutoff: int = 40
) -> float:
    """Exact truncated integrand for small m (state space (K * eta_cutoff)^m)."""
    if f.m > 2:
        raise ValueError("exact integrand enumeration kept to m <= 2")
    if t <= 0.0:
        raise ValueError("integrand requires t > 0")
    dz = difference_stack(f)
    w_n, _ = box_weights(f)
    lam = -math.expm1(-t)
    k = np.arange(eta_cutoff)
    pmf_eta = np.exp(-lam + k * np.log(lam) - gammaln(k + 1.0))
    tilde = np.asarray(multiplier(t, k))
    if f.m == 1:
        vec = tilde[:, None, None] * dz[0][None, :, :]  # (eta, box, d)
        pw = norm.norm(vec) ** p
        return float(pmf_eta @ pw @ w_n) ** (1.0 / p)
    w_eta = np.multiply.outer(pmf_eta, pmf_eta).ravel()
    coef = np.stack(np.meshgrid(tilde, tilde, indexing="ij"), axis=-1).reshape(-1, 2)
    vec = np.einsum("em,mbd->ebd", coef, dz)
    pw = norm.norm(vec) ** p
    return float(w_eta @ pw @ w_n) ** (1.0 / p)


def verify_pisier(
    f: LatticeFunction,
    p: float,
    norm: NormSpec,
    quad: QuadratureSpec | None = None,
    mc: MCSpec | None = None,
) -> InequalityReport:
    """Check the Poisson time-integral bound with a Monte Carlo integrand.

    Passes when lhs <= rhs + 3 * propagated MC error + quadrature estimate
    + truncation bound.
    """
    quad = quad or QuadratureSpec()
    mc = mc or MCSpec()
    lhs, tail = centered_moment(f, p, norm)
    rule = composite_time_rule(quad.panels)
    h_vals = np.empty(rule.t.size)
    h_errs = np.empty(rule.t.size)
    for k, t in enumerate(rule.t):
        est, se_pre = multiplier_gradient_moment_mc(f, float(t), p, norm, mc, substream=k)
        h_vals[k] = est
        pre = est**p
        h_errs[k] = se_pre / (p * pre ** ((p - 1.0) / p)) if pre > 0.0 else 0.0
    rhs = RhsResult(
        rule.integral(h_vals),
        rule.error_estimate(h_vals),
        rule.propagated_sd(h_errs),
        "mc",
        rule.t.size * mc.samples,
    )
    ratio = lhs / rhs.value if rhs.value > 0.0 else 0.0
    passed = lhs <= rhs.value + 3.0 * rhs.mc_error + rhs.quad_error + tail
    params = {"m": f.m, "K": f.K, "d": f.d, "p": p, "q": norm.q, "T": norm.T,
              "seed": mc.seed, "samples": mc.samples, "mode": "mc"}
    notes = f"truncation bound {tail:.3e}"
    return InequalityReport(lhs, rhs.value, ratio, "mc", rhs.error, params, passed, notes)


def difference_pth_moment_sum(f: LatticeFunction, p: float, norm: NormSpec) -> float:
    """sum_i E ||forward difference_i f||^p on the box."""
    w, _ = box_weights(f)
    total = 0.0
    for i in range(f.m):
        total += float(w @ norm.norm(forward_difference(f, i).values) ** p)
    return total


def verify_poincare(
    f: LatticeFunction, norm: NormSpec, p: float | None = None
) -> InequalityReport:
    """Check centered moment <= 4 T (sum_i E ||difference_i f||^p)^(1/p), exact tables."""
    p = norm.p if p is None else p
    lhs, tail = centered_moment(f, p, norm)
    rhs = 4.0 * norm.T * difference_pth_moment_sum(f, p, norm) ** (1.0 / p)
    ratio = lhs / rhs if rhs > 0.0 else 0.0
    passed = lhs <= rhs * (1.0 + 1e-6) + tail
    params = {"m": f.m, "K": f.K, "d": f.d, "p": p, "q": norm.q, "T": norm.T, "mode": "exact"}
    return InequalityReport(lhs, rhs, ratio, "exact", tail, params, passed,
                            f"truncation bound {tail:.3e}")


def lift_to_cube(f: LatticeFunction, n: int) -> CubeFunction:
    """Cube table g on {-1,+1}^(m*n) with g(eps) = f(row popcounts).

    Coordinate (i, j) sits at bit i*n + j; row sums are clamped into the box.
    """
    bits_total = f.m * n
    if bits_total > MAX_LIFT_BITS:
        raise ValueError(f"lift needs m*n <= {MAX_LIFT_BITS}, got {bits_total}")
    idx = np.arange(1 << bits_total, dtype=np.uint64)
    row_mask = np.uint64((1 << n) - 1)
    sums = np.empty((idx.size, f.m), dtype=np.int64)
    for i in range(f.m):
        sums[:, i] = np.bitwise_count((idx >> np.uint64(i * n)) & row_mask)
    return CubeFunction(f.values[f.box_indices(sums)], bits_total)


def lift_gradient_identity_residual(f: LatticeFunction, n: int) -> float:
    """Max residual of the lifted flip derivative against the two-point formula

    flip_derivative_(i,j) g(eps) = (f(..., S_i, ...) - f(..., S_i - eps_ij, ...)) / 2.
    """
    from biascube.cube import flip_derivative

    g = lift_to_cube(f, n)
    idx = np.arange(g.size, dtype=np.uint64)
    row_mask = np.uint64((1 << n) - 1)
    sums = np.empty((g.size, f.m), dtype=np.int64)
    for i in range(f.m):
        sums[:, i] = np.bitwise_count((idx >> np.uint64(i * n)) & row_mask)
    base = f.values[f.box_indices(sums)]
    worst = 0.0
    for i in range(f.m):
        for j in range(n):
            bit = i * n + j
            eps = 2 * ((idx >> np.uint64(bit)) & np.uint64(1)).astype(np.int64) - 1
            shifted = sums.copy()
            shifted[:, i] = np.maximum(shifted[:, i] - eps, 0)
            formula = (base - f.values[f.box_indices(shifted)]) / 2.0
            lhs = flip_derivative(g, bit).values
            worst = max(worst, float(np.max(np.abs(lhs - formula))))
    return worst


def _row_compositions(n: int) -> np.ndarray:
    """All (a, b, c, e) with a+b+c+e = n, one row per class assignment."""
    out = []
    for a in range(n + 1):
        for b in range(n + 1 - a):
            for c in range(n + 1 - a - b):
                out.append((a, b, c, n - a - b - c))
    return np.array(out, dtype=np.int64)


def lifted_score_moment(
    f: LatticeFunction, n: int, t: float, p: float, norm: NormSpec, portion: str = "all"
) -> float:
    """Exact (E || (1/n) sum_ij score_ij * flip_derivative_ij g ||^p)^(1/p) at bias 1/n.

    Row coordinates only enter through their four (start, end) sign classes,
    so each row reduces to the multinomial law of class counts; this keeps the
    enumeration polynomial in n instead of 4^(m n). portion restricts the sum
    to the start-sign +1 terms ("plus"), the -1 terms ("minus"), or everything.
    """
    if portion not in ("all", "plus", "minus"):
        raise ValueError(f"unknown portion {portion!r}")
    if f.m * n > MAX_LIFT_BITS:
        raise ValueError(f"lifted moment needs m*n <= {MAX_LIFT_BITS}")
    if t <= 0.0:
        raise ValueError("requires t > 0")
    alpha = 1.0 / n
    params = KernelParams(alpha, t)
    kmat = transition_matrix(params)
    smat = score_table(params)
    # class order (a, b, c, e) = (+n+, +n-, -n+, -n-) in (start, end) signs
    probs4 = np.array([
        alpha * kmat[1, 1], alpha * kmat[1, 0],
        (1 - alpha) * kmat[0, 1], (1 - alpha) * kmat[0, 0],
    ])
    score4 = np.array([smat[1, 1], smat[1, 0], smat[0, 1], smat[0, 0]])
    comp = _row_compositions(n)
    log_mult = gammaln(n + 1.0) - gammaln(comp + 1.0).sum(axis=1)
    log_prob = log_mult + comp @ np.log(probs4)
    prob = np.exp(log_prob)
    s_row = comp[:, 0] + comp[:, 1]
    cp_row = (comp[:, 0] * score4[0] + comp[:, 1] * score4[1]) / n
    cm_row = (comp[:, 2] * score4[2] + comp[:, 3] * score4[3]) / n
    if portion == "plus":
        cm_row = np.zeros_like(cm_row)
    elif portion == "minus":
        cp_row = np.zeros_like(cp_row)

    r = comp.shape[0]
    shape = (r,) * f.m
    weight = np.ones(shape)
    for i in range(f.m):
        weight = weight * prob.reshape((1,) * i + (r,) + (1,) * (f.m - 1 - i))
    weight = weight.ravel()
    grids = np.meshgrid(*([s_row] * f.m), indexing="ij")
    s_vec = np.stack([g.ravel() for g in grids], axis=1)  # (states, m)
    base = f.values[f.box_indices(s_vec)]
    vec = np.zeros_like(base)
    for i in range(f.m):
        cp = cp_row.reshape((1,) * i + (r,) + (1,) * (f.m - 1 - i))
        cp = np.broadcast_to(cp, shape).ravel()
        cm = cm_row.reshape((1,) * i + (r,) + (1,) * (f.m - 1 - i))
        cm = np.broadcast_to(cm, shape).ravel()
        down = s_vec.copy()
        down[:, i] = np.maximum(down[:, i] - 1, 0)
        up = s_vec.copy()
        up[:, i] = up[:, i] + 1
        d_plus = (base - f.values[f.box_indices(down)]) / 2.0
        d_minus = (base - f.values[f.box_indices(up)]) / 2.0
        vec += cp[:, None] * d_plus + cm[:, None] * d_minus
    pre = float(weight @ norm.norm(vec) ** p)
    return pre ** (1.0 / p)


def lifted_lhs_exact(f: LatticeFunction, n: int, p: float, norm: NormSpec) -> float:
    """Centered moment of the lifted table, through the clamped binomial law.

    Row sums are Binomial(n, 1/n) lumped at K-1, so this equals the cube
    centered moment of the lift exactly without touching a 2^(m n) table.
    """
    K = f.K
    k = np.arange(K)
    pmf = _binom.pmf(k, n, 1.0 / n)
    pmf[K - 1] = 1.0 - _binom.cdf(K - 2, n, 1.0 / n)
    w = pmf.copy()
    for _ in range(f.m - 1):
        w = np.multiply.outer(w, pmf)
    w = w.ravel()
    mean = w @ f.values
    return float((w @ norm.norm(f.values - mean) ** p) ** (1.0 / p))


@dataclass
class TvRow:
    n: int
    t: float
    tv: float
    mass_out: float


def binomial_limit_tv(n_list, t: float, cutoff: int = 40) -> list[TvRow]:
    """Exact total variation between the lifted pair law and its Poisson limit.

    For each n the pair is (S, B) with S ~ Binomial(n, 1/n) and, given S = k,
    B ~ Binomial(n - k, p_t(-1, +1) at bias 1/n); the limit is an independent
    Poisson(1) x Poisson(1 - e^-t). Laws are compared on the window
    [0, cutoff)^2 and the window's missing mass is added conservatively.
    """
    if t <= 0.0:
        raise ValueError("requires t > 0")
    lam = -math.expm1(-t)
    rows = []
    for n in n_list:
        pt = kernel_1d(KernelParams(1.0 / n, t), -1, 1)
        ks = np.arange(min(cutoff, n + 1))
        P = np.zeros((cutoff, cutoff))
        pk = _binom.pmf(ks, n, 1.0 / n)
        for k in ks:
            bs = np.arange(cutoff)
            P[k] = pk[k] * _binom.pmf(bs, n - k, pt)
        q1 = _poisson.pmf(np.arange(cutoff), 1.0)
        q2 = _poisson.pmf(np.arange(cutoff), lam)
        Q = np.outer(q1, q2)
        mass_out = float((1.0 - P.sum()) + (1.0 - Q.sum()))
        if mass_out > BOX_MASS_GUARD:
            raise ValueError(f"window cutoff={cutoff} leaks mass {mass_out:.3e} at n={n}")
        tv = 0.5 * float(np.abs(P - Q).sum()) + 0.5 * mass_out
        rows.append(TvRow(int(n), t, tv, mass_out))
    return rows


def binomial_poisson_marginal_tv(n: int, cutoff: int = 40) -> float:
    """TV between Binomial(n, 1/n) and Poisson(1) on the window."""
    k = np.arange(cutoff)
    pb = _binom.pmf(k, n, 1.0 / n)
    pp = _poisson.pmf(k, 1.0)
    return 0.5 * float(np.abs(pb - pp).sum() + (1.0 - pb.sum()) + (1.0 - pp.sum()))


@dataclass
class ScalingRow:
    n: int
    cube_lhs: float
    cube_rhs: float
    plus_portion: float


@dataclass
class ScalingReport:
    poisson_lhs: float
    poisson_rhs: float
    rows: list[ScalingRow]
    rhs_method: str


def scaling_limit_report(
    f: LatticeFunction,
    n_list,
    p: float,
    norm: NormSpec,
    quad: QuadratureSpec | None = None,
    mc: MCSpec | None = None,
) -> ScalingReport:
    """Cube bounds of the lifted tables against the Poisson bounds of f.

    For each n the cube side is exact: the lifted left side through the
    binomial law and the lifted right side 4 (1 - 1/n) * integral of the
    1/n-rescaled score-gradient moment. The start-sign +1 portion of that sum
    (the term that must vanish in the limit) is integrated separately and
    reported rather than assumed zero. The Poisson right side is exact for
    m <= 2 and Monte Carlo otherwise.
    """
    quad = quad or QuadratureSpec()
    p_lhs, _ = centered_moment(f, p, norm)
    if f.m <= 2:
        res = integrate_time(lambda t: multiplier_gradient_moment_exact(f, t, p, norm), quad)
        p_rhs, rhs_method = res.value, "exact"
    else:
        mc = mc or MCSpec()
        rule = composite_time_rule(quad.panels)
        vals = np.array([
            multiplier_gradient_moment_mc(f, float(t), p, norm, mc, substream=k)[0]
            for k, t in enumerate(rule.t)
        ])
        p_rhs, rhs_method = rule.integral(vals), "mc"
    rows = []
    for n in n_list:
        pref = 4.0 * (1.0 - 1.0 / n)
        body = integrate_time(lambda t: lifted_score_moment(f, n, t, p, norm), quad)
        plus = integrate_time(lambda t: lifted_score_moment(f, n, t, p, norm, "plus"), quad)
        rows.append(ScalingRow(int(n), lifted_lhs_exact(f, n, p, norm),
                               pref * body.value, pref * plus.value))
    return ScalingReport(p_lhs, p_rhs, rows, rhs_method)
