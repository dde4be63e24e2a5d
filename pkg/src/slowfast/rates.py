"""Dissipation-rate functions alpha(t) and their integral functionals.

A rate function controls how fast the fast variable forgets its initial
condition.  Everything downstream (burn-in horizons, Poisson-equation tail
truncation, theoretical error brackets) is expressed through two derived
quantities:

    A(s, t)      = integral of alpha over [s, t]
    Lambda_g(t)  = integral over [t, inf) of exp(-g * A(t, r)) dr

Rate functions are defined on all of R by even reflection, alpha(t) =
alpha(|t|), so that pullback constructions (simulation started at large
negative times) are well defined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad

__all__ = [
    "RateFunction",
    "RateEvaluationError",
    "NonIntegrableRateError",
    "alpha_integral",
    "lambda_gamma",
]

# Hard cap on horizon-search iterations when truncating Lambda_gamma.
_MAX_TRUNCATION_STEPS = 10**6


class RateEvaluationError(ValueError):
    """A rate function returned a non-finite or non-positive value."""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} (at t={t!r})")
        self.t = t


class NonIntegrableRateError(ValueError):
    """Lambda_gamma diverges: the running exponent fails to grow."""


@dataclass(frozen=True)
class RateFunction:
    """Dissipation rate alpha(t) > 0 with closed forms where available.

    kind:
        'constant'  alpha(t) = c0
        'power'     alpha(t) = c0 * (1 + |t|)**beta, beta > -1
        'custom'    user-supplied evaluator, integrated by quadrature
    quad_tol:
        absolute tolerance for quadrature fallbacks (custom kind).
    """

    kind: str
    c0: float = 1.0
    beta: float = 0.0
    evaluator: Optional[Callable[[np.ndarray], np.ndarray]] = field(
        default=None, compare=False
    )
    quad_tol: float = 1e-10

    def __post_init__(self):
        if self.kind not in ("constant", "power", "custom"):
            raise ValueError(f"unknown rate kind {self.kind!r}")
        if self.kind in ("constant", "power") and not self.c0 > 0:
            raise ValueError("c0 must be positive")
        if self.kind == "power" and not self.beta > -1:
            raise ValueError("power family requires beta > -1")
        if self.kind == "custom" and self.evaluator is None:
            raise ValueError("custom rate needs an evaluator")
        if not self.quad_tol > 0:
            raise ValueError("quad_tol must be positive")

    # -- constructors ------------------------------------------------------

    @classmethod
    def constant(cls, c0: float) -> "RateFunction":
        return cls(kind="constant", c0=c0)

    @classmethod
    def power(cls, c0: float, beta: float) -> "RateFunction":
        return cls(kind="power", c0=c0, beta=beta)

    @classmethod
    def from_callable(cls, fn: Callable, quad_tol: float = 1e-10) -> "RateFunction":
        return cls(kind="custom", evaluator=fn, quad_tol=quad_tol)

    # -- evaluation --------------------------------------------------------

    def __call__(self, t):
        """alpha(|t|), vectorized; raises on non-finite or <= 0 values."""
        ta = np.abs(np.asarray(t, dtype=float))
        if self.kind == "constant":
            out = np.full_like(ta, self.c0)
        elif self.kind == "power":
            out = self.c0 * (1.0 + ta) ** self.beta
        else:
            out = np.asarray(self.evaluator(ta), dtype=float)
        bad = ~np.isfinite(out) | (out <= 0.0)
        if np.any(bad):
            t_bad = float(np.asarray(t, dtype=float).reshape(-1)[np.flatnonzero(bad.reshape(-1))[0]])
            raise RateEvaluationError("rate function not finite/positive", t_bad)
        if np.isscalar(t) or np.asarray(t).ndim == 0:
            return float(out)
        return out

    def _primitive(self, t):
        """P(t) = integral of alpha over [0, t] for t >= 0 (closed forms)."""
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return self.c0 * t
        if self.kind == "power":
            p = self.beta + 1.0
            return self.c0 * ((1.0 + t) ** p - 1.0) / p
        raise NotImplementedError

    def _signed_primitive(self, t):
        """Odd extension of P, valid for any real t under even reflection."""
        t = np.asarray(t, dtype=float)
        return np.sign(t) * self._primitive(np.abs(t))

    def _primitive_inverse(self, v):
        """Inverse of P on [0, inf): the time t >= 0 with P(t) = v."""
        v = np.asarray(v, dtype=float)
        if self.kind == "constant":
            return v / self.c0
        if self.kind == "power":
            p = self.beta + 1.0
            return (1.0 + p * v / self.c0) ** (1.0 / p) - 1.0
        raise NotImplementedError

    def has_closed_form(self) -> bool:
        return self.kind in ("constant", "power")

    def integral(self, s, t):
        """A(s, t) = integral of alpha(|u|) over [s, t], for s <= t."""
        s_arr = np.asarray(s, dtype=float)
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < s_arr):
            raise ValueError("alpha_integral requires s <= t")
        if self.kind in ("constant", "power"):
            out = self._signed_primitive(t_arr) - self._signed_primitive(s_arr)
        else:
            out = self._integral_quad(s_arr, t_arr)
        if np.isscalar(s) and np.isscalar(t):
            return float(out)
        return out

    def _integral_quad(self, s_arr, t_arr):
        def one(a, b):
            if a == b:
                return 0.0
            val, _ = quad(
                lambda u: float(self(abs(u))),
                a,
                b,
                epsabs=self.quad_tol / 10.0,
                epsrel=1e-10,
                limit=200,
                points=[0.0] if a < 0.0 < b else None,
            )
            return val

        it = np.broadcast(s_arr, t_arr)
        out = np.array([one(a, b) for a, b in it]).reshape(it.shape)
        return out

    def is_nondecreasing(self) -> bool:
        if self.kind == "constant":
            return True
        if self.kind == "power":
            return self.beta >= 0.0
        return False


def alpha_integral(alpha: RateFunction, s, t):
    """A(s, t); exact for constant/power families, quadrature otherwise."""
    return alpha.integral(s, t)


def _find_truncation_horizon(alpha: RateFunction, gamma: float, t: float, tol: float) -> float:
    """Smallest R with gamma*A(t,R) >= -log(tol * gamma * alpha(R)).

    The right-hand side is the local-exponential majorant of the tail
    integral; past R the remaining mass of exp(-gamma*A(t, .)) is below tol.
    """

    def excess(r: float) -> float:
        a_r = float(alpha(r))
        target = -math.log(tol * gamma * a_r) if tol * gamma * a_r < 1.0 else 0.0
        return gamma * float(alpha.integral(t, r)) - target

    step = max(1.0, 1.0 / float(alpha(t)))
    r = t + step
    n = 0
    while excess(r) < 0.0:
        step *= 2.0
        r = t + step
        n += 1
        if n > 200 or r - t > _MAX_TRUNCATION_STEPS:
            raise NonIntegrableRateError(
                f"Lambda_gamma tail does not decay (gamma={gamma}, t={t}); "
                "the running exponent fails to grow"
            )
    lo, hi = t, r
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if excess(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return hi


def lambda_gamma(alpha: RateFunction, gamma: float, t: float, tol: float = 1e-9) -> float:
    """Lambda_gamma(t) = integral over [t, inf) of exp(-gamma * A(t, r)) dr.

    Truncation error is kept below tol; the integral on the truncated
    interval is evaluated with absolute tolerance tol/10.
    """
    if not (0.0 < gamma <= 1.0):
        raise ValueError("gamma must lie in (0, 1]")
    if not tol > 0.0:
        raise ValueError("tol must be positive")
    if alpha.kind == "constant":
        return 1.0 / (gamma * alpha.c0)

    r_max = _find_truncation_horizon(alpha, gamma, t, tol / 2.0)

    def integrand(r):
        return math.exp(-gamma * float(alpha.integral(t, r)))

    val, _ = quad(integrand, t, r_max, epsabs=tol / 10.0, epsrel=1e-10, limit=400)
    return float(val)


def lambda_profile(alpha: RateFunction, gamma: float, s_grid: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Lambda_gamma evaluated on a grid (convenience for bound evaluation)."""
    return np.array([lambda_gamma(alpha, gamma, float(s), tol) for s in np.asarray(s_grid, dtype=float)])
