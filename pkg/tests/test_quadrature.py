import math

import numpy as np
import pytest
from scipy import integrate as sci

from biascube.quadrature import (
    QuadratureError,
    QuadratureSpec,
    composite_time_rule,
    integrate_time,
    score_envelope_integral,
    score_envelope_integrand,
    sqrt_kernel_integrand,
)


class TestClosedForms:
    @pytest.mark.parametrize("p", [1.0, 1.5, 2.0])
    def test_score_envelope(self, p):
        res = integrate_time(score_envelope_integrand(0.1, p), QuadratureSpec(tol=1e-8))
        want = score_envelope_integral(0.1, p)
        assert abs(res.value - want) <= 1e-8
        assert res.error <= 1e-8

    def test_sqrt_kernel(self):
        res = integrate_time(sqrt_kernel_integrand, QuadratureSpec(tol=1e-10))
        assert abs(res.value - 2.0) <= 1e-10

    @pytest.mark.parametrize("sub", ["exp", "exp_sqrt"])
    def test_both_substitutions_agree(self, sub):
        res = integrate_time(
            score_envelope_integrand(0.25, 1.5), QuadratureSpec(tol=1e-9, substitution=sub)
        )
        assert abs(res.value - score_envelope_integral(0.25, 1.5)) <= 1e-9


class TestAgainstScipy:
    def test_smooth_decaying_integrand(self):
        def h(t):
            return math.exp(-t) * (2.0 + math.sin(3.0 * t))

        want, _ = sci.quad(h, 0.0, np.inf)
        res = integrate_time(h, QuadratureSpec(tol=1e-10))
        assert res.value == pytest.approx(want, abs=1e-9)

    def test_singular_integrand(self):
        def h(t):
            e = math.exp(-t)
            return e * (-math.expm1(-t)) ** (-0.4)

        want, _ = sci.quad(lambda u: u**-0.4, 0.0, 1.0)
        res = integrate_time(h, QuadratureSpec(tol=1e-9))
        assert res.value == pytest.approx(want, abs=1e-8)


class TestDomainDiscipline:
    def test_never_evaluates_at_endpoints(self):
        seen = []

        def h(t):
            assert t > 0.0 and math.isfinite(t)
            seen.append(t)
            return math.exp(-t)

        integrate_time(h, QuadratureSpec(tol=1e-9))
        assert seen and min(seen) > 0.0

    def test_budget_exhaustion_reported(self):
        def nasty(t):
            return math.exp(-t) * (-math.expm1(-t)) ** -0.98

        with pytest.raises(QuadratureError):
            integrate_time(nasty, QuadratureSpec(tol=1e-12, budget=40))

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            QuadratureSpec(tol=0.0)
        with pytest.raises(ValueError):
            QuadratureSpec(substitution="cosine")
        with pytest.raises(ValueError):
            QuadratureSpec(panels=1)


class TestCompositeRule:
    def test_nodes_interior_and_weights_positive(self):
        rule = composite_time_rule(12)
        assert rule.t.min() > 0.0
        assert np.all(np.isfinite(rule.t))
        assert np.all(rule.w > 0.0)

    def test_integrates_sqrt_kernel(self):
        rule = composite_time_rule(12)
        vals = np.array([sqrt_kernel_integrand(t) for t in rule.t])
        got = rule.integral(vals)
        err = rule.error_estimate(vals)
        assert abs(got - 2.0) <= max(err, 1e-6)

    def test_integrates_envelope(self):
        rule = composite_time_rule(12)
        h = score_envelope_integrand(0.1, 2.0)
        vals = np.array([h(t) for t in rule.t])
        assert rule.integral(vals) == pytest.approx(score_envelope_integral(0.1, 2.0), rel=1e-4)

    def test_propagated_sd(self):
        rule = composite_time_rule(4)
        ones = np.ones_like(rule.t)
        assert rule.propagated_sd(ones) == pytest.approx(
            math.sqrt((rule.w**2).sum()), rel=1e-12
        )
