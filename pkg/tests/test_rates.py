"""Rate-function integrals and the Lambda_gamma functional."""

import numpy as np
import pytest

from slowfast.rates import (
    NonIntegrableRateError,
    RateEvaluationError,
    RateFunction,
    alpha_integral,
    lambda_gamma,
)


def simpson_tail_integral(alpha, gamma, t, cutoff=60.0, n=200_001):
    """Brute-force oracle for Lambda_gamma: dense Simpson on [t, R] with R
    chosen so the integrand is below ~1e-26."""
    # R such that gamma*A(t,R) >= cutoff
    lo, hi = t, t + 1.0
    while gamma * alpha.integral(t, hi) < cutoff:
        hi = t + 2.0 * (hi - t)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if gamma * alpha.integral(t, mid) < cutoff:
            lo = mid
        else:
            hi = mid
    rs = np.linspace(t, hi, n)
    vals = np.exp(-gamma * alpha.integral(t, rs))
    return float(np.trapezoid(vals, rs))


class TestAlphaIntegral:
    def test_constant_linear(self):
        assert alpha_integral(RateFunction.constant(2.0), 0.0, 3.0) == pytest.approx(6.0)

    def test_power_beta_one(self):
        a = RateFunction.power(1.0, 1.0)
        assert alpha_integral(a, 0.0, 1.0) == pytest.approx(1.5)

    def test_power_beta_minus_half(self):
        a = RateFunction.power(1.0, -0.5)
        got = alpha_integral(a, 0.0, 3.0)
        assert got == pytest.approx(2.0, abs=1e-12)
        # adaptive-quadrature oracle through the custom path
        oracle = RateFunction.from_callable(lambda t: (1.0 + t) ** -0.5)
        assert got == pytest.approx(alpha_integral(oracle, 0.0, 3.0), abs=1e-8)

    def test_requires_ordering(self):
        with pytest.raises(ValueError):
            alpha_integral(RateFunction.constant(1.0), 2.0, 1.0)

    def test_reflection_splits_at_zero(self):
        a = RateFunction.power(1.0, 1.0)
        assert a.integral(-2.0, 3.0) == pytest.approx(
            a.integral(0.0, 2.0) + a.integral(0.0, 3.0)
        )

    @pytest.mark.parametrize("c0,beta", [(1.0, 0.7), (2.0, -0.4), (0.5, 2.0)])
    def test_additivity_closed_form(self, c0, beta):
        a = RateFunction.power(c0, beta)
        rng = np.random.default_rng(42)
        for _ in range(20):
            s, u, t = np.sort(rng.uniform(-5.0, 8.0, 3))
            total = a.integral(s, t)
            assert a.integral(s, u) + a.integral(u, t) == pytest.approx(
                total, rel=1e-10, abs=1e-12
            )

    def test_additivity_quadrature(self):
        a = RateFunction.from_callable(lambda t: 1.0 + np.sin(t) ** 2)
        rng = np.random.default_rng(1)
        for _ in range(5):
            s, u, t = np.sort(rng.uniform(0.0, 6.0, 3))
            assert a.integral(s, u) + a.integral(u, t) == pytest.approx(
                a.integral(s, t), rel=1e-6, abs=1e-9
            )

    def test_non_finite_rate_reports_time(self):
        bad = RateFunction.from_callable(lambda t: np.where(t > 1.0, np.nan, 1.0))
        with pytest.raises(RateEvaluationError):
            bad(2.0)

    def test_nonpositive_rejected_at_construction(self):
        with pytest.raises(ValueError):
            RateFunction.power(-1.0, 0.5)
        with pytest.raises(ValueError):
            RateFunction.power(1.0, -1.5)


class TestLambdaGamma:
    def test_constant_closed_form(self):
        assert lambda_gamma(RateFunction.constant(2.0), 0.5, 3.7) == pytest.approx(1.0)

    def test_power_beta_zero_matches_constant(self):
        a = RateFunction.power(1.0, 0.0)
        assert lambda_gamma(a, 0.5, 0.0, tol=1e-10) == pytest.approx(2.0, abs=1e-8)

    def test_power_beta_one_against_simpson_oracle(self):
        # frozen from the dense-Simpson oracle: integral of exp(-(r + r^2/2))
        a = RateFunction.power(1.0, 1.0)
        got = lambda_gamma(a, 1.0, 0.0, tol=1e-10)
        assert got == pytest.approx(0.6556795423698508, abs=1e-9)
        assert got == pytest.approx(simpson_tail_integral(a, 1.0, 0.0), abs=1e-8)

    @pytest.mark.parametrize("t", [0.0, 1.0, 17.3])
    def test_constant_consistency_all_t(self, t):
        assert lambda_gamma(RateFunction.constant(3.0), 0.25, t) == pytest.approx(
            1.0 / 0.75
        )

    def test_monotone_in_gamma(self):
        a = RateFunction.power(1.0, 0.5)
        vals = [lambda_gamma(a, g, 1.0, tol=1e-9) for g in (0.2, 0.5, 0.8, 1.0)]
        assert all(v1 >= v2 for v1, v2 in zip(vals, vals[1:]))

    @pytest.mark.parametrize("beta", [0.0, 0.5, 2.0])
    def test_nonincreasing_in_t_for_growing_rate(self, beta):
        a = RateFunction.power(1.0, beta)
        vals = [lambda_gamma(a, 0.7, t, tol=1e-9) for t in (0.0, 1.0, 4.0, 10.0)]
        assert all(v1 >= v2 - 1e-10 for v1, v2 in zip(vals, vals[1:]))

    def test_divergent_rate_detected(self):
        # integrable alpha: the exponent saturates and the tail never decays
        a = RateFunction.from_callable(lambda t: 1.0 / (1.0 + t) ** 2)
        with pytest.raises(NonIntegrableRateError):
            lambda_gamma(a, 0.5, 0.0, tol=1e-6)

    def test_gamma_domain(self):
        with pytest.raises(ValueError):
            lambda_gamma(RateFunction.constant(1.0), 1.5, 0.0)
        with pytest.raises(ValueError):
            lambda_gamma(RateFunction.constant(1.0), 0.5, 0.0, tol=-1.0)
