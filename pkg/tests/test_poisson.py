import math

import numpy as np
import pytest

from biascube.cube import BiasedMeasure, centered_lp_moment, lp_norm_spec
from biascube.engine import MCSpec, score_gradient_moment_exact
from biascube.poisson import (
    LatticeFunction,
    binomial_limit_tv,
    binomial_poisson_marginal_tv,
    box_weights,
    centered_moment,
    clipped_identity,
    expect_lattice,
    forward_difference,
    indicator_at_zero,
    lift_gradient_identity_residual,
    lift_to_cube,
    lifted_lhs_exact,
    lifted_score_moment,
    multiplier,
    multiplier_abs_moment,
    multiplier_gradient_moment_exact,
    multiplier_gradient_moment_mc,
    multiplier_second_moment,
    random_lattice_function,
    sample_multiplier,
    sample_poisson_inversion,
    scaling_limit_report,
    verify_pisier,
    verify_poincare,
)
from biascube.quadrature import QuadratureSpec

E1 = math.exp(-1.0)


class TestLatticeFunction:
    def test_shape_guard(self):
        with pytest.raises(ValueError):
            LatticeFunction(np.zeros((10, 1)), m=2, K=4)

    def test_clamped_lookup(self):
        f = clipped_identity(6)
        assert f.at([3]) == pytest.approx(3.0)
        assert f.at([99]) == pytest.approx(5.0)

    def test_sup_norm_bound(self, rng):
        f = random_lattice_function(2, 5, 3, rng)
        norm = lp_norm_spec(2.0)
        want = max(float(norm.norm(v)) for v in f.values)
        assert f.sup_norm_bound(norm) == pytest.approx(want)


class TestForwardDifference:
    def test_constant(self):
        f = LatticeFunction(np.full((8, 2), 3.0), 1, 8)
        assert np.all(forward_difference(f, 0).values == 0.0)

    def test_clipped_identity(self):
        g = forward_difference(clipped_identity(6), 0).values[:, 0]
        assert np.array_equal(g, np.array([1, 1, 1, 1, 1, 0.0]))

    def test_two_dim_product(self):
        K = 5
        k1, k2 = np.meshgrid(np.arange(K), np.arange(K), indexing="ij")
        f = LatticeFunction((k1 * k2).reshape(-1).astype(float), 2, K)
        d0 = forward_difference(f, 0).values.reshape(K, K)
        assert np.array_equal(d0[: K - 1], k2[: K - 1].astype(float))
        assert np.all(d0[K - 1] == 0.0)

    def test_index_guard(self):
        with pytest.raises(IndexError):
            forward_difference(clipped_identity(4), 1)


class TestMultiplier:
    def test_mean_zero_closed_form(self):
        for t in (0.3, 1.0, 4.0):
            lam = -math.expm1(-t)
            mean = math.exp(-t) - math.exp(-t) * lam / lam
            assert mean == 0.0

    def test_second_moment_matches_sum(self):
        for t in (0.2, 1.0, 3.0):
            k = np.arange(80)
            lam = -math.expm1(-t)
            from scipy.stats import poisson as sp

            pmf = sp.pmf(k, lam)
            want = float(pmf @ np.asarray(multiplier(t, k)) ** 2)
            assert multiplier_second_moment(t) == pytest.approx(want, rel=1e-12)

    def test_truncated_mean_zero(self):
        for t in (0.5, 2.0):
            k = np.arange(80)
            from scipy.stats import poisson as sp

            pmf = sp.pmf(k, -math.expm1(-t))
            assert abs(float(pmf @ np.asarray(multiplier(t, k)))) <= 1e-15

    @pytest.mark.parametrize("p", [1.0, 1.5, 2.0])
    def test_abs_moment_below_rms(self, p):
        for t in np.geomspace(0.05, 5.0, 12):
            lhs = multiplier_abs_moment(t, p) ** (1.0 / p)
            rms = math.exp(-t) / math.sqrt(-math.expm1(-t))
            assert lhs <= rms * (1 + 1e-12)
            assert multiplier_second_moment(t) == pytest.approx(rms * rms, rel=1e-12)

    def test_empirical_mean(self):
        rng = np.random.default_rng(3)
        t = 1.0
        eta = sample_poisson_inversion(-math.expm1(-t), 1_000_000, rng)
        vals = np.asarray(multiplier(t, eta))
        sigma = math.exp(-t) / math.sqrt(-math.expm1(-t))
        assert abs(vals.mean()) <= 4 * sigma / 1000.0

    def test_scalar_sampler(self):
        rng = np.random.default_rng(5)
        draws = np.array([sample_multiplier(1.0, rng) for _ in range(20000)])
        sigma = math.exp(-1.0) / math.sqrt(-math.expm1(-1.0))
        assert abs(draws.mean()) <= 4 * sigma / math.sqrt(20000)
        assert draws.std() == pytest.approx(sigma, rel=0.05)
        with pytest.raises(ValueError):
            sample_multiplier(0.0, rng)


class TestInversionSampler:
    def test_matches_pmf(self):
        rng = np.random.default_rng(8)
        draws = sample_poisson_inversion(1.0, 200_000, rng)
        from scipy.stats import poisson as sp

        for k in range(8):
            freq = float((draws == k).mean())
            pk = sp.pmf(k, 1.0)
            sigma = math.sqrt(pk * (1 - pk) / 200_000)
            assert abs(freq - pk) <= 4 * sigma

    def test_deterministic(self):
        a = sample_poisson_inversion(0.7, 100, np.random.default_rng(1))
        b = sample_poisson_inversion(0.7, 100, np.random.default_rng(1))
        assert np.array_equal(a, b)


class TestCenteredMoment:
    def test_constant(self):
        f = LatticeFunction(np.full((12, 1), 2.0), 1, 12)
        value, tail = centered_moment(f, 1.0, lp_norm_spec(1.0))
        assert value <= 1e-14
        assert tail >= 0.0

    def test_indicator_closed_form(self):
        f = indicator_at_zero(12)
        value, tail = centered_moment(f, 1.0, lp_norm_spec(1.0))
        want = 2 * E1 * (1 - E1)
        assert abs(value - want) <= tail + 1e-12

    def test_expect_lattice(self):
        mean, mass_out = expect_lattice(indicator_at_zero(12))
        assert mean[0] == pytest.approx(E1, abs=1e-12)
        assert 0 < mass_out < 1e-8

    def test_truncation_stability(self, rng):
        v16 = rng.uniform(-0.5, 0.5, size=(16, 1))
        f16 = LatticeFunction(v16, 1, 16)
        f12 = LatticeFunction(v16[:12], 1, 12)
        a, tail_a = centered_moment(f16, 1.0, lp_norm_spec(1.0))
        b, tail_b = centered_moment(f12, 1.0, lp_norm_spec(1.0))
        assert abs(a - b) <= min(1e-8, tail_a + tail_b)

    def test_mass_guard(self):
        f = LatticeFunction(np.zeros((4**3, 1)), 3, 4)
        with pytest.raises(ValueError):
            box_weights(f)


class TestPoincare:
    def test_clipped_identity(self):
        K = 12
        rep = verify_poincare(clipped_identity(K), lp_norm_spec(1.0))
        pmf_below = sum(math.exp(-1.0) / math.factorial(k) for k in range(K - 1))
        assert rep.rhs == pytest.approx(4.0 * pmf_below, rel=1e-10)
        assert rep.passed and rep.ratio < 1.0

    def test_constant(self):
        f = LatticeFunction(np.full((12, 2), 1.5), 1, 12)
        rep = verify_poincare(f, lp_norm_spec(2.0))
        assert rep.passed and rep.ratio == 0.0

    @pytest.mark.parametrize("m", [1, 2, 3])
    @pytest.mark.parametrize("p", [1.0, 2.0])
    def test_random_sweep(self, m, p, rng):
        f = random_lattice_function(m, 12, 2, rng)
        rep = verify_poincare(f, lp_norm_spec(p))
        assert rep.passed and rep.ratio <= 1.0 + 1e-6


class TestPisier:
    def test_exact_vs_mc_integrand(self, rng):
        for m in (1, 2):
            f = random_lattice_function(m, 12, 2, rng)
            for t in (0.4, 1.5):
                exact = multiplier_gradient_moment_exact(f, t, 1.5, lp_norm_spec(1.5))
                est, se = multiplier_gradient_moment_mc(
                    f, t, 1.5, lp_norm_spec(1.5), MCSpec(40000, seed=6)
                )
                assert abs(est**1.5 - exact**1.5) <= 3.5 * se + 1e-12

    def test_indicator_passes(self):
        rep = verify_pisier(indicator_at_zero(12), 1.0, lp_norm_spec(1.0),
                            QuadratureSpec(panels=8), MCSpec(20000, seed=4))
        # the zero indicator is an equality case at p = 1, so the two sides
        # must coincide up to the Monte Carlo and panel errors
        assert rep.passed
        assert rep.ratio == pytest.approx(1.0, abs=0.02)

    def test_constant_trivial(self):
        f = LatticeFunction(np.full((12, 1), 3.0), 1, 12)
        rep = verify_pisier(f, 2.0, lp_norm_spec(2.0), QuadratureSpec(panels=4),
                            MCSpec(2000, seed=1))
        assert rep.passed

    def test_deterministic_reports(self, rng):
        f = random_lattice_function(1, 12, 1, rng)
        kw = dict(quad=QuadratureSpec(panels=4), mc=MCSpec(4000, seed=11))
        a = verify_pisier(f, 1.0, lp_norm_spec(1.0), **kw)
        b = verify_pisier(f, 1.0, lp_norm_spec(1.0), **kw)
        assert a.lhs == b.lhs and a.rhs == b.rhs


class TestLift:
    def test_constant_lifts_constant(self):
        f = LatticeFunction(np.full((8, 2), 1.5), 1, 8)
        g = lift_to_cube(f, 3)
        assert np.all(g.values == 1.5)

    def test_popcount_identity(self):
        g = lift_to_cube(clipped_identity(8), 2)
        want = np.array([0, 1, 1, 2], dtype=float)
        assert np.array_equal(g.values[:, 0], want)

    def test_gradient_identity_residual(self, rng):
        for m, n in [(1, 4), (2, 3)]:
            f = random_lattice_function(m, 6, 2, rng)
            assert lift_gradient_identity_residual(f, n) <= 1e-14

    def test_bit_budget_guard(self, rng):
        f = random_lattice_function(3, 4, 1, rng)
        with pytest.raises(ValueError):
            lift_to_cube(f, 7)

    def test_lifted_lhs_matches_cube_moment(self, rng):
        f = random_lattice_function(2, 6, 2, rng)
        n = 3
        g = lift_to_cube(f, n)
        for p in (1.0, 2.0):
            want = centered_lp_moment(g, BiasedMeasure(1.0 / n, g.n), p, lp_norm_spec(p))
            got = lifted_lhs_exact(f, n, p, lp_norm_spec(p))
            assert got == pytest.approx(want, rel=1e-12)

    def test_lifted_integrand_matches_generic_enumeration(self, rng):
        for m, n in [(1, 4), (2, 2)]:
            f = random_lattice_function(m, 6, 2, rng)
            g = lift_to_cube(f, n)
            for t in (0.5, 2.0):
                generic = score_gradient_moment_exact(g, 1.0 / n, t, 1.5, lp_norm_spec(1.5))
                fast = lifted_score_moment(f, n, t, 1.5, lp_norm_spec(1.5))
                assert fast == pytest.approx(generic / n, rel=1e-11)

    def test_portion_split_adds_up(self, rng):
        f = random_lattice_function(1, 6, 1, rng)
        plus = lifted_score_moment(f, 4, 1.0, 1.0, lp_norm_spec(1.0), "plus")
        minus = lifted_score_moment(f, 4, 1.0, 1.0, lp_norm_spec(1.0), "minus")
        both = lifted_score_moment(f, 4, 1.0, 1.0, lp_norm_spec(1.0))
        assert both <= plus + minus + 1e-12


class TestBinomialLimit:
    def test_joint_tv_decreasing(self):
        rows = binomial_limit_tv([4, 16, 64], 1.0)
        tvs = [r.tv for r in rows]
        assert tvs[2] < tvs[1] < tvs[0]
        assert rows[2].tv < rows[0].tv

    def test_long_time_still_decreasing(self):
        rows = binomial_limit_tv([4, 16, 64], 50.0)
        assert rows[2].tv < rows[1].tv < rows[0].tv

    def test_marginal_rate(self):
        tv4 = binomial_poisson_marginal_tv(4)
        tv16 = binomial_poisson_marginal_tv(16)
        tv64 = binomial_poisson_marginal_tv(64)
        assert tv64 < tv16 < tv4
        assert tv4 / tv16 > 2.5
        assert tv16 / tv64 > 2.5

    def test_kernel_scaling_anchor(self):
        # n * p_t(-1, +1) at bias 1/n is exactly 1 - e^-t
        from biascube.semigroup import KernelParams, kernel_1d

        for n in (4, 64):
            for t in (0.5, 3.0):
                assert n * kernel_1d(KernelParams(1.0 / n, t), -1, 1) == pytest.approx(
                    -math.expm1(-t), rel=1e-14
                )

    def test_mass_guard(self):
        with pytest.raises(ValueError):
            binomial_limit_tv([4], 1.0, cutoff=3)


class TestScalingLimit:
    def test_indicator_gaps_shrink(self):
        f = indicator_at_zero(12)
        report = scaling_limit_report(f, [4, 8, 16], 1.0, lp_norm_spec(1.0))
        assert report.rhs_method == "exact"
        rhs_gaps = [abs(r.cube_rhs - report.poisson_rhs) for r in report.rows]
        lhs_gaps = [abs(r.cube_lhs - report.poisson_lhs) for r in report.rows]
        assert rhs_gaps[2] < rhs_gaps[1] < rhs_gaps[0]
        assert lhs_gaps[2] < lhs_gaps[1] < lhs_gaps[0]

    def test_plus_portion_vanishes(self):
        f = indicator_at_zero(12)
        report = scaling_limit_report(f, [4, 8, 16], 1.0, lp_norm_spec(1.0))
        plus = [r.plus_portion for r in report.rows]
        assert plus[2] < plus[1] < plus[0]

    def test_constant_all_zero(self):
        f = LatticeFunction(np.full((12, 1), 2.0), 1, 12)
        report = scaling_limit_report(f, [2, 4], 1.0, lp_norm_spec(1.0))
        assert report.poisson_lhs <= 1e-14
        for row in report.rows:
            assert row.cube_lhs <= 1e-14
            assert abs(row.cube_rhs) <= 1e-12
