"""Closed-form reference computations for the two scalar benchmarks.

These are independent ground truth for the Monte-Carlo experiments: exact
strong errors and mean gaps obtained by quadrature of the benchmarks'
stationary covariance functions, plus the piecewise rate-exponent map for
the power rate family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .models import Forcing
from .rates import RateFunction

__all__ = [
    "Example1Params",
    "Example2Params",
    "ex1_exact_strong_error",
    "ex1_rate_exponent",
    "ex2_psi",
    "ex2_exact_mean_gap",
    "ex2_exact_strong_error",
]


@dataclass(frozen=True)
class Example1Params:
    c0: float = 1.0
    beta: float = 0.0
    x: float = 0.0
    y: float = 0.0

    def __post_init__(self):
        if not self.c0 > 0:
            raise ValueError("c0 must be positive")
        if not self.beta > -1:
            raise ValueError("beta must exceed -1")

    @property
    def alpha(self) -> RateFunction:
        if self.beta == 0.0:
            return RateFunction.constant(self.c0)
        return RateFunction.power(self.c0, self.beta)


@dataclass(frozen=True)
class Example2Params:
    forcing: Forcing
    x: float = 0.0
    y: float = 0.0


from numpy.polynomial.legendre import leggauss

_GL_NODES, _GL_WEIGHTS = leggauss(48)


def _decay_integral(alpha: RateFunction, r, r_max: float):
    """integral over [r, r_max] of exp(-A(r, s)) ds, vectorized over r.

    Substituting u = A(r, s) turns this into the integral of
    exp(-u)/alpha(s(u)) over [0, min(A(r, r_max), 42)], evaluated by
    48-node Gauss-Legendre (the integrand is smooth and the tail beyond
    u = 42 is below 1e-18)."""
    r = np.asarray(r, dtype=float)
    pr = alpha._signed_primitive(r)
    u_max = np.minimum(alpha._signed_primitive(r_max) - pr, 42.0)
    half = 0.5 * u_max[..., None]
    u = half * (_GL_NODES[None, :] + 1.0)
    s_of_u = alpha._primitive_inverse(pr[..., None] + u)
    vals = np.exp(-u) / alpha(s_of_u)
    return (vals @ _GL_WEIGHTS) * half[..., 0]


def ex1_exact_strong_error(p: Example1Params, eps: float, t: float) -> float:
    """E |X_t - Xbar_t|^2 for the first benchmark, by quadrature of the
    stationary-plus-transient covariance of the fast state.

    The double integral of the covariance splits into a transient square,
    (y^2 - 1/2) * L(R)^2 with L(R) the integral of exp(-A(0, s)), and the
    stationary part D2(R), R = t/eps.
    """
    if not (t > 0 and eps > 0):
        raise ValueError("need t > 0 and eps > 0")
    alpha = p.alpha
    big_r = t / eps
    lval = float(_decay_integral(alpha, np.array([0.0]), big_r)[0])
    d2, _ = quad(lambda r: float(_decay_integral(alpha, np.array([r]), big_r)[0]),
                 0.0, big_r, epsabs=1e-12, epsrel=1e-9, limit=400)
    return eps * eps * ((p.y * p.y - 0.5) * lval * lval + d2)


def ex1_rate_exponent(beta: float):
    """(exponent of sup_t E|.|^2 in eps, log-correction flag)."""
    if not beta > -1:
        raise ValueError("beta must exceed -1")
    if beta < 1.0:
        return 1.0 + beta, False
    if beta == 1.0:
        return 2.0, True
    return 2.0, False


def ex2_psi(p: Example2Params, t: float) -> float:
    """The unit-rate exponential moving average of the forcing."""
    return float(p.forcing.psi(t))


def ex2_exact_mean_gap(p: Example2Params, eps: float, t: float) -> float:
    """|E X_t - E Xbar_t| = eps * |(y - c) (1 - exp(-t/eps))| with
    c the kernel average of the forcing over (-inf, 0]."""
    if not (t > 0 and eps > 0):
        raise ValueError("need t > 0 and eps > 0")
    c = p.forcing.psi_zero()
    return eps * abs((p.y - c) * (1.0 - math.exp(-t / eps)))


def ex2_exact_strong_error(p: Example2Params, eps: float, t: float) -> float:
    """E |X_t - Xbar_t|^2 for the forced benchmark (closed form).

    With R = t/eps and c as above:
        eps^2 * [ ((y-c)^2 - 1/2) (1 - e^-R)^2 + (R - 1 + e^-R) ].
    """
    if not (t > 0 and eps > 0):
        raise ValueError("need t > 0 and eps > 0")
    c = p.forcing.psi_zero()
    big_r = t / eps
    em = math.exp(-big_r)
    return eps * eps * (
        ((p.y - c) ** 2 - 0.5) * (1.0 - em) ** 2 + (big_r - 1.0 + em)
    )


def ex1_error_table(p: Example1Params, eps_values, t: float):
    """(eps, exact error) pairs, ready for CSV export."""
    return [(float(e), ex1_exact_strong_error(p, float(e), t)) for e in eps_values]


def ex2_error_table(p: Example2Params, eps_values, t: float):
    return [(float(e), ex2_exact_strong_error(p, float(e), t)) for e in eps_values]
