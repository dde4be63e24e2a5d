"""Sampled dissipativity/growth validation."""

import numpy as np
import pytest

from slowfast.assumptions import validate_assumptions
from slowfast.models import Forcing, example1, example2


def test_example1_margin_zero_no_violations():
    # f = -alpha(t) y, g constant in y: the equal-x inequality is tight
    report = validate_assumptions(example1(1.0, 0.5), count=400, seed=3)
    assert report.passed
    assert report.dissipativity_margin == pytest.approx(0.0, abs=1e-9)
    assert report.checked_points == 400


def test_sign_flip_breaks_dissipativity():
    m = example1(1.0, 0.0)
    alpha = m.alpha

    def f_bad(t, x, y):
        return alpha(t) * y

    bad = type(m)(
        n=1, m=1, d1=1, d2=1, b=m.b, sigma=m.sigma, f=f_bad, g=m.g,
        alpha=alpha, sigma_independent_of_y=True, name="example1-flipped",
    )
    report = validate_assumptions(bad, count=200, seed=5)
    assert not report.passed
    assert len(report.violations) > 0
    t, x1, x2, y1, y2 = report.violations[0]
    assert np.allclose(x1, x2)          # witnesses come from equal-x samples


def test_example2_no_violations():
    report = validate_assumptions(example2(Forcing.constant(1.0)), count=300, seed=7)
    assert report.passed
    assert report.dissipativity_margin == pytest.approx(0.0, abs=1e-9)


def test_growth_margins_finite_and_stable():
    report_small = validate_assumptions(example1(2.0, 1.0), count=200, seed=11)
    report_big = validate_assumptions(example1(2.0, 1.0), count=800, seed=12)
    assert 0.0 < report_small.growth_margin_f <= 1.5
    assert report_big.growth_margin_f <= 1.1 * max(report_small.growth_margin_f, 1.0)


def test_fitted_c_reported_for_cross_x_models():
    # slow coupling enters f through nothing here, so fitted C ~ 0 for example1
    report = validate_assumptions(example1(1.0, 0.0), count=300, seed=1)
    assert report.fitted_c == pytest.approx(0.0, abs=1e-9)
