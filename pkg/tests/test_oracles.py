"""Closed-form oracles for the two benchmarks."""

import math

import numpy as np
import pytest
from scipy.integrate import dblquad, quad

from slowfast.models import Forcing
from slowfast.oracles import (
    Example1Params,
    Example2Params,
    ex1_exact_strong_error,
    ex1_rate_exponent,
    ex2_exact_mean_gap,
    ex2_exact_strong_error,
    ex2_psi,
)


class TestEx1StrongError:
    def test_constant_rate_closed_form(self):
        # beta = 0: eps^2 [(y^2 - 1/2)(1 - e^-R)^2 + (R - 1 + e^-R)]
        p = Example1Params(1.0, 0.0, 0.0, 0.3)
        for eps in (0.25, 2.0 ** -6):
            big_r = 1.0 / eps
            want = eps ** 2 * ((0.09 - 0.5) * (1 - math.exp(-big_r)) ** 2
                               + (big_r - 1 + math.exp(-big_r)))
            assert ex1_exact_strong_error(p, eps, 1.0) == pytest.approx(want, rel=1e-9)

    def test_stationary_start_drops_transient(self):
        # y^2 = 1/2: the transient square vanishes; for beta=0 this is
        # exactly eps^2 (R - 1 + e^-R)
        p = Example1Params(1.0, 0.0, 0.0, math.sqrt(0.5))
        eps = 2.0 ** -5
        big_r = 1.0 / eps
        want = eps ** 2 * (big_r - 1 + math.exp(-big_r))
        assert ex1_exact_strong_error(p, eps, 1.0) == pytest.approx(want, rel=1e-9)

    def test_large_horizon_linear_in_t(self):
        # error / eps^2 -> t/eps, i.e. error ~ eps * t
        p = Example1Params(1.0, 0.0, 0.0, math.sqrt(0.5))
        eps, t = 1e-4, 2.0
        assert ex1_exact_strong_error(p, eps, t) == pytest.approx(eps * t, rel=1e-3)

    def test_against_2d_quadrature_oracle(self):
        # independent route: dblquad of the printed covariance
        p = Example1Params(1.0, 0.5, 0.0, 0.9)
        eps = 2.0 ** -4
        big_r = 1.0 / eps
        prim = lambda s: ((1.0 + s) ** 1.5 - 1.0) / 1.5
        cov = lambda s, r: ((0.81 - 0.5) * math.exp(-prim(s)) * math.exp(-prim(r))
                            + 0.5 * math.exp(-(prim(s) - prim(r))))
        val, _ = dblquad(cov, 0.0, big_r, lambda r: r, lambda r: big_r,
                         epsabs=1e-12)
        assert ex1_exact_strong_error(p, eps, 1.0) == pytest.approx(
            2.0 * eps ** 2 * val, rel=1e-8)

    def test_asymptotic_matches_rate_integral(self):
        # error comparable to eps^2 * integral of alpha Lambda^2
        from slowfast.averaging import theoretical_bound
        from slowfast.rates import RateFunction

        p = Example1Params(1.0, 0.5, 0.0, math.sqrt(0.5))
        eps_values = [2.0 ** -k for k in range(6, 11)]
        errs = np.array([ex1_exact_strong_error(p, e, 1.0) for e in eps_values])
        bound = theoretical_bound("strong-general", RateFunction.power(1.0, 0.5),
                                  0.9, 1.0, eps_values)
        ratios = errs / bound.values
        assert np.max(ratios) <= 2.0 * np.min(ratios)

    def test_domain(self):
        with pytest.raises(ValueError):
            ex1_exact_strong_error(Example1Params(1.0, 0.0), 0.1, -1.0)
        with pytest.raises(ValueError):
            Example1Params(1.0, -1.5)


class TestEx1RateExponent:
    @pytest.mark.parametrize("beta,expect", [
        (0.0, (1.0, False)),
        (0.5, (1.5, False)),
        (1.0, (2.0, True)),
        (2.0, (2.0, False)),
        (-0.5, (0.5, False)),
    ])
    def test_piecewise_map(self, beta, expect):
        assert ex1_rate_exponent(beta) == expect

    def test_domain(self):
        with pytest.raises(ValueError):
            ex1_rate_exponent(-1.0)

    @pytest.mark.parametrize("beta,tol", [(-0.5, 0.1), (0.0, 0.1), (0.5, 0.1),
                                          (1.0, 0.2), (2.0, 0.1)])
    def test_slope_consistency(self, beta, tol):
        # slopes of the exact error over eps in {2^-6 .. 2^-14} match the map
        p = Example1Params(1.0, beta, 0.0, math.sqrt(0.5))
        eps = np.array([2.0 ** -k for k in range(6, 15)])
        errs = np.array([ex1_exact_strong_error(p, e, 1.0) for e in eps])
        slope = np.polyfit(np.log(eps), np.log(errs), 1)[0]
        declared, _ = ex1_rate_exponent(beta)
        assert abs(slope - declared) <= tol


class TestEx2Psi:
    def test_constant(self):
        p = Example2Params(Forcing.constant(2.4))
        assert ex2_psi(p, 7.0) == pytest.approx(2.4)

    def test_sinusoid_closed_form(self):
        w = 2.0 * math.pi / 1.5
        p = Example2Params(Forcing.sinusoid(0.0, 1.0, 1.5))
        for t in (0.0, 0.4, 2.2):
            want = (math.sin(w * t) - w * math.cos(w * t)) / (1.0 + w * w)
            assert ex2_psi(p, t) == pytest.approx(want, abs=1e-10)

    def test_sinusoid_periodicity(self):
        p = Example2Params(Forcing.sinusoid(1.0, 0.5, 0.9))
        for t in (0.1, 1.7):
            assert ex2_psi(p, t + 0.9) == pytest.approx(ex2_psi(p, t), abs=1e-10)

    def test_decaying_vanishes(self):
        p = Example2Params(Forcing.decaying(1.0))
        assert ex2_psi(p, 500.0) < 0.02
        assert ex2_psi(p, 500.0) < ex2_psi(p, 5.0)


class TestEx2MeanGap:
    def test_matched_start_zero_gap(self):
        # y equal to the kernel average of the forcing: zero gap for constant phi
        forcing = Forcing.constant(1.3)
        p = Example2Params(forcing, 0.0, 1.3)
        assert ex2_exact_mean_gap(p, 0.05, 1.0) == pytest.approx(0.0, abs=1e-14)

    def test_zero_forcing_direct_integral(self):
        p = Example2Params(Forcing.constant(0.0), 0.0, 1.0)
        eps, t = 0.1, 1.0
        assert ex2_exact_mean_gap(p, eps, t) == pytest.approx(
            eps * (1.0 - math.exp(-t / eps)), rel=1e-12)

    def test_envelope(self):
        forcing = Forcing.sinusoid(1.0, 0.5, 1.0)
        c = forcing.psi_zero()
        p = Example2Params(forcing, 0.0, 2.0)
        for eps in (0.2, 0.01):
            assert ex2_exact_mean_gap(p, eps, 1.0) <= eps * (2.0 + abs(c)) + 1e-12

    def test_matches_printed_quadrature(self):
        forcing = Forcing.decaying(1.0)
        c = forcing.psi_zero()
        p = Example2Params(forcing, 0.0, 0.8)
        eps, t = 0.05, 1.0
        val, _ = quad(lambda s: (0.8 - c) * math.exp(-s), 0.0, t / eps)
        assert ex2_exact_mean_gap(p, eps, t) == pytest.approx(eps * abs(val), rel=1e-9)


class TestEx2StrongError:
    def test_stationary_start(self):
        # (y - c)^2 = 1/2: error = eps^2 (R - 1 + e^-R) ~ eps t
        forcing = Forcing.constant(1.0)
        y = 1.0 + math.sqrt(0.5)
        p = Example2Params(forcing, 0.0, y)
        eps, t = 2.0 ** -6, 1.0
        big_r = t / eps
        assert ex2_exact_strong_error(p, eps, t) == pytest.approx(
            eps ** 2 * (big_r - 1.0 + math.exp(-big_r)), rel=1e-12)

    def test_short_time_vanishes(self):
        p = Example2Params(Forcing.constant(1.0), 0.0, 0.0)
        assert ex2_exact_strong_error(p, 0.1, 1e-6) < 1e-10

    def test_order_eps(self):
        p = Example2Params(Forcing.decaying(1.0), 0.0, 1.0)
        vals = [ex2_exact_strong_error(p, e, 1.0) / e for e in (2.0 ** -6, 2.0 ** -10)]
        assert vals[0] == pytest.approx(vals[1], rel=0.1)

    def test_against_2d_quadrature(self):
        forcing = Forcing.sinusoid(1.0, 0.5, 1.0)
        c = forcing.psi_zero()
        y = 1.7
        p = Example2Params(forcing, 0.0, y)
        eps, t = 0.25, 1.0
        big_r = t / eps
        cov = lambda s, r: (((y - c) ** 2 - 0.5) * math.exp(-(s + r))
                            + 0.5 * math.exp(-(s - r)))
        val, _ = dblquad(cov, 0.0, big_r, lambda r: r, lambda r: big_r,
                         epsabs=1e-13)
        assert ex2_exact_strong_error(p, eps, t) == pytest.approx(
            2.0 * eps ** 2 * val, rel=1e-9)
