"""Probabilistic evaluation of the nonautonomous Poisson-equation solution
and its verification (PDE residual, centering, growth).

Phi(s, x, y) is the time integral from s to infinity of E H(r, x, Y_r)
along the frozen dynamics started at (s, y).  Evaluation truncates the
integral where an exponential-ergodicity majorant predicts the remaining
tail is below tolerance, and uses common random numbers: inner noise is
indexed by (base seed, path, micro-step index), never by state, so finite
differences of the Monte-Carlo functional are coherent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .engine import _advance_fast, _normals, build_fast_schedule
from .measures import estimate_mu
from .models import SlowFastModel
from .rates import lambda_gamma

__all__ = [
    "CenteredFunction",
    "PhiEvaluator",
    "PhiResult",
    "ResidualReport",
    "phi",
    "residual",
    "check_centering",
    "check_growth",
    "TruncationError",
]


class TruncationError(RuntimeError):
    """The ergodicity tail bound was not met within the horizon cap."""


@dataclass(frozen=True)
class CenteredFunction:
    """H(s, x, y) -> R^k, centered under the time-s measures.

    fn is vectorized over paths: (s, x(P,n), y(P,m)) -> (P, k).
    """

    fn: Callable = field(compare=False)
    k: int = 1
    construction: str = "explicit"

    @classmethod
    def explicit(cls, fn: Callable, k: int = 1) -> "CenteredFunction":
        return cls(fn=fn, k=k)

    @classmethod
    def drift_minus_average(cls, b_field: Callable, bbar: Callable, n: int) -> "CenteredFunction":
        """H = b(x, y) - bbar(s, x) with bbar the time-indexed averaged drift."""

        def fn(s, x, y):
            return np.asarray(b_field(x, y)) - np.asarray(bbar(s, x))

        return cls(fn=fn, k=n, construction="b-minus-bbar")

    def __call__(self, s, x, y):
        return np.asarray(self.fn(s, x, y), dtype=float)


@dataclass(frozen=True)
class PhiResult:
    value: np.ndarray
    per_path: np.ndarray
    stderr: np.ndarray
    tail_bound: float
    horizon: float
    n_segments: int


@dataclass(frozen=True)
class PhiEvaluator:
    """Deterministic Monte-Carlo evaluator of Phi over the frozen family.

    Each evaluation freezes the slow state at the requested x.  The base
    seed fixes the inner noise for every evaluation point, so repeated
    calls are reproducible and finite differences across nearby (s, y)
    share their randomness.
    """

    model: SlowFastModel
    H: CenteredFunction
    tol: float = 1e-4
    n_paths: int = 2000
    step: float = 0.05           # target micro step on the frozen clock
    seed: int = 0
    horizon_cap: float = 1e4

    def _horizon(self, s: float, x, y) -> float:
        """Smallest B with exp(-A(s, s+B)) * scale * Lambda <= tol."""
        scale = 1.0 + float(np.linalg.norm(x)) + float(np.linalg.norm(y))
        lam = max(lambda_gamma(self.model.alpha, 1.0, s, tol=min(self.tol, 1e-6)), 1.0)
        target = math.log(scale * lam / self.tol)
        alpha = self.model.alpha

        def deficit(b):
            return float(alpha.integral(s, s + b)) - target

        if deficit(self.horizon_cap) < 0.0:
            raise TruncationError(
                f"tail bound not met within horizon cap {self.horizon_cap:g}"
            )
        lo, hi = 0.0, self.horizon_cap
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if deficit(mid) < 0.0:
                lo = mid
            else:
                hi = mid
        return hi

    def evaluate(self, s: float, x, y, n_segments: Optional[int] = None) -> PhiResult:
        """Per-path time integrals of H along frozen paths from (s, y).

        n_segments pins the trapezoid layout (used by finite differences to
        keep all evaluation points on a common noise indexing).
        """
        model = self.model
        x = np.asarray(x, dtype=float).reshape(model.n)
        y = np.asarray(y, dtype=float).reshape(model.m)
        if n_segments is None:
            n_segments = max(8, int(math.ceil(self._horizon(s, x, y) / self.step)))
        # the segment width is exactly `step` for every evaluation point, so
        # pinned n_segments implies an identical noise-to-time-step layout
        horizon = n_segments * self.step
        edges = s + self.step * np.arange(n_segments + 1)
        sched = build_fast_schedule(model, edges, "auto")
        P = self.n_paths
        xi = _normals(self.seed, 1, np.arange(P), sched.total * model.d2)
        xi = xi.reshape(P, sched.total, model.d2)
        xb = np.broadcast_to(x, (P, model.n))
        Y = np.broadcast_to(y, (P, model.m)).copy()
        acc = np.zeros((P, self.H.k))
        h_prev = self.H(s, xb, Y)
        for j in range(sched.total):
            Y = _advance_fast(model, sched, j, xb, Y, xi[:, j])
            h_new = self.H(sched.s_nodes[j] + sched.h[j], xb, Y)
            acc += (0.5 * sched.h[j]) * (h_prev + h_new)
            h_prev = h_new
        end_mean = np.abs(h_prev.mean(axis=0))
        end_se = h_prev.std(axis=0, ddof=1) / math.sqrt(P)
        lam_end = lambda_gamma(self.model.alpha, 1.0, s + horizon, tol=min(self.tol, 1e-6))
        tail = float(np.max(end_mean + end_se)) * lam_end
        value = acc.mean(axis=0)
        stderr = acc.std(axis=0, ddof=1) / math.sqrt(P)
        return PhiResult(value, acc, stderr, tail, horizon, n_segments)

    def __call__(self, s: float, x, y) -> np.ndarray:
        return self.evaluate(s, x, y).value


def phi(evaluator: PhiEvaluator, s: float, x, y) -> np.ndarray:
    """Point value of the Poisson solution (deterministic under the seed)."""
    return evaluator(s, x, y)


@dataclass(frozen=True)
class ResidualReport:
    point: tuple
    residual: np.ndarray
    norm: float
    mc_stderr: float
    fd_estimate: float
    tail_bound: float
    tolerance: float
    passed: bool


def residual(
    evaluator: PhiEvaluator,
    s: float,
    x,
    y,
    h_s: Optional[float] = None,
    h_y: Optional[float] = None,
) -> ResidualReport:
    """Assemble d_s Phi + <f, grad_y Phi> + 1/2 Tr[g g^T Hess_y Phi] + H by
    central differences of the per-path functionals (common random numbers),
    with a Richardson step-halving estimate of the finite-difference error.

    Needs the model's analytic partials only implicitly: f and g themselves
    are evaluated at the point; no coefficient derivatives are required.
    """
    model = evaluator.model
    x = np.asarray(x, dtype=float).reshape(model.n)
    y = np.asarray(y, dtype=float).reshape(model.m)
    if h_s is None:
        h_s = 1e-3 * (1.0 + abs(s))
    if h_y is None:
        h_y = 1e-3 * (1.0 + float(np.linalg.norm(y)))

    center = evaluator.evaluate(s, x, y)
    n_seg = center.n_segments

    def per_path(ss, yy):
        return evaluator.evaluate(ss, x, yy, n_segments=n_seg).per_path

    m = model.m
    k = evaluator.H.k
    P = evaluator.n_paths

    def ds_at(step):
        return (per_path(s + step, y) - per_path(s - step, y)) / (2.0 * step)

    d_s = ds_at(h_s)
    d_s_coarse = ds_at(2.0 * h_s)

    def grad_hess(step):
        grad = np.empty((P, k, m))
        hess = np.empty((P, k, m, m))
        plus = []
        minus = []
        for i in range(m):
            e = np.zeros(m)
            e[i] = step
            plus.append(per_path(s, y + e))
            minus.append(per_path(s, y - e))
            grad[:, :, i] = (plus[i] - minus[i]) / (2.0 * step)
            hess[:, :, i, i] = (plus[i] - 2.0 * center.per_path + minus[i]) / step**2
        for i in range(m):
            for j in range(i + 1, m):
                ei = np.zeros(m); ei[i] = step
                ej = np.zeros(m); ej[j] = step
                pp = per_path(s, y + ei + ej)
                pm = per_path(s, y + ei - ej)
                mp = per_path(s, y - ei + ej)
                mm = per_path(s, y - ei - ej)
                mixed = (pp - pm - mp + mm) / (4.0 * step**2)
                hess[:, :, i, j] = mixed
                hess[:, :, j, i] = mixed
        return grad, hess

    grad, hess = grad_hess(h_y)
    grad2, hess2 = grad_hess(2.0 * h_y)

    xb = x[None, :]
    yb = y[None, :]
    fval = np.asarray(model.f(s, xb, yb))[0]                  # (m,)
    gval = np.asarray(model.g(s, xb, yb))
    if gval.ndim == 3:
        gval = gval[0]
    gg = gval @ gval.T                                        # (m, m)
    hval = evaluator.H(s, xb, yb)[0]                          # (k,)

    def assemble(d_s_pp, grad_pp, hess_pp):
        gen = np.einsum("pkm,m->pk", grad_pp, fval) \
            + 0.5 * np.einsum("pkij,ij->pk", hess_pp, gg)
        return d_s_pp + gen + hval[None, :]

    res_pp = assemble(d_s, grad, hess)
    res_coarse = assemble(d_s_coarse, grad2, hess2)
    res = res_pp.mean(axis=0)
    mc_stderr = float(np.max(res_pp.std(axis=0, ddof=1))) / math.sqrt(P)
    fd_estimate = float(np.max(np.abs(res_coarse.mean(axis=0) - res))) / 3.0
    tail = center.tail_bound * (1.0 + float(np.max(np.abs(fval))) + float(np.max(np.abs(gg))))
    tolerance = 5.0 * (fd_estimate + mc_stderr + tail)
    norm = float(np.max(np.abs(res)))
    return ResidualReport(
        point=(s, tuple(x), tuple(y)), residual=res, norm=norm,
        mc_stderr=mc_stderr, fd_estimate=fd_estimate, tail_bound=tail,
        tolerance=tolerance, passed=bool(norm <= tolerance),
    )


@dataclass(frozen=True)
class CenteringReport:
    rows: list
    passed: bool


def check_centering(
    H: CenteredFunction,
    model: SlowFastModel,
    s_grid: Sequence[float],
    x_grid: Sequence,
    tol: float = 1e-4,
    n_samples: int = 20_000,
    seed: int = 0,
) -> CenteringReport:
    """Estimate the measure integral of H at each (s, x); pass within 3 sigma."""
    rows = []
    ok = True
    for i, s in enumerate(s_grid):
        for j, x in enumerate(x_grid):
            frozen = model.frozen(np.asarray(x, dtype=float))
            meas = estimate_mu(frozen, float(s), tol=tol, n_samples=n_samples,
                               seed=seed + 31 * i + j)
            xb = np.broadcast_to(frozen.x, (meas.n_samples, model.n))
            vals = H(float(s), xb, meas.samples)
            mean = vals.mean(axis=0)
            se = vals.std(axis=0, ddof=1) / math.sqrt(len(vals))
            row_ok = bool(np.all(np.abs(mean) <= 3.0 * se))
            ok = ok and row_ok
            rows.append({
                "s": float(s), "x": np.asarray(x, dtype=float),
                "mean": mean, "stderr": se, "passed": row_ok,
            })
    return CenteringReport(rows=rows, passed=ok)


@dataclass(frozen=True)
class GrowthReport:
    rows: list
    max_ratio: float


def check_growth(
    evaluator: PhiEvaluator,
    s_values: Sequence[float],
    x_values: Sequence,
    y_values: Sequence,
) -> GrowthReport:
    """Max of |Phi| / ((1+|x|+|y|) * Lambda(s)) over the sample grid."""
    rows = []
    worst = 0.0
    for s in s_values:
        lam = lambda_gamma(evaluator.model.alpha, 1.0, float(s), tol=1e-8)
        for x in x_values:
            for y in y_values:
                val = evaluator(float(s), x, y)
                scale = (1.0 + float(np.linalg.norm(x)) + float(np.linalg.norm(y))) * lam
                ratio = float(np.max(np.abs(val))) / scale
                worst = max(worst, ratio)
                rows.append({"s": float(s), "x": x, "y": y,
                             "phi": val, "ratio": ratio})
    return GrowthReport(rows=rows, max_ratio=worst)
