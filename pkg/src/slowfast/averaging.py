"""Averaged equations, strong/weak error experiments over an epsilon grid,
log-log rate fitting and the theoretical error brackets.

Theoretical bounds are evaluated as the epsilon-dependent bracket of the
named estimate only; the multiplicative constants are existential and are
fitted from data where a comparison is made.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator

from .engine import CoupledSamplePair, TimeGrid, simulate_averaged, simulate_coupled
from .measures import (
    averaged_diffusion,
    averaged_drift,
    estimate_mu,
    estimate_mu_limit,
    periodic_average_drift,
)
from .models import SlowFastModel
from .rates import RateFunction, lambda_gamma

__all__ = [
    "AveragedModel",
    "RateEstimate",
    "BoundEvaluation",
    "FitResult",
    "DegenerateRegressionError",
    "SigmaDependenceError",
    "TestFunction",
    "standard_test_functions",
    "build_averaged",
    "strong_error",
    "weak_error",
    "theoretical_bound",
    "fit_rate",
    "check_lambda_comparison",
    "check_window_average",
]


class DegenerateRegressionError(ValueError):
    """Too few grid points for a rate fit."""


class SigmaDependenceError(ValueError):
    """Strong-error coupling requested with a y-dependent slow diffusion."""

    def __init__(self):
        super().__init__(
            "strong-error experiments need sigma independent of the fast "
            "state (strong averaging may fail otherwise); use weak_error"
        )


# ---------------------------------------------------------------------------
# Averaged models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AveragedModel:
    """Averaged drift/diffusion in one of the three variants.

    general:    drift(t, x), diffusion(t, x), evaluated at t/eps by the
                integrator (the averaged coefficients keep the fast clock);
    convergent: drift(x), diffusion(x) from the limiting invariant measure;
    periodic:   drift(x), diffusion(x) from the period-averaged measures.

    mean_fn, when present (oracle mode), maps (times, eps, x0) to the exact
    mean of the averaged solution along the grid.
    """

    variant: str
    n: int
    d1: int
    drift: Callable = field(compare=False)
    diffusion: Callable = field(compare=False)
    provenance: str = "oracle"
    mean_fn: Optional[Callable] = field(default=None, compare=False)
    tau: Optional[float] = None

    def __post_init__(self):
        if self.variant not in ("general", "convergent", "periodic"):
            raise ValueError(f"unknown variant {self.variant!r}")

    def drift_at(self, t_slow: float, eps: Optional[float], x: np.ndarray) -> np.ndarray:
        if self.variant == "general":
            if eps is None:
                raise ValueError("general-variant averaged model needs eps")
            return np.asarray(self.drift(t_slow / eps, x))
        return np.asarray(self.drift(x))

    def diffusion_at(self, t_slow: float, eps: Optional[float], x: np.ndarray) -> np.ndarray:
        if self.variant == "general":
            if eps is None:
                raise ValueError("general-variant averaged model needs eps")
            return np.asarray(self.diffusion(t_slow / eps, x))
        return np.asarray(self.diffusion(x))

    def exact_mean(self, times: np.ndarray, eps: Optional[float], x0) -> Optional[np.ndarray]:
        if self.mean_fn is None:
            return None
        return np.asarray(self.mean_fn(np.asarray(times, dtype=float), eps, x0))


def _oracle_example1(model: SlowFastModel, variant: str) -> AveragedModel:
    def drift(*args):
        x = args[-1]
        return np.zeros_like(x)

    def diffusion(*args):
        return np.ones((1, 1))

    def mean_fn(times, eps, x0):
        return float(np.asarray(x0).reshape(-1)[0]) * np.ones((len(times), 1))

    return AveragedModel(variant=variant, n=1, d1=1, drift=drift,
                         diffusion=diffusion, provenance="oracle",
                         mean_fn=mean_fn, tau=model.tau)


def _oracle_example2(model: SlowFastModel, variant: str) -> AveragedModel:
    forcing = model.linear_fast.forcing

    if variant == "general":
        def drift(t_fast, x):
            return float(forcing.psi(t_fast)) * np.ones_like(x)

        def diffusion(t_fast, x):
            return np.ones((1, 1))

        def mean_fn(times, eps, x0):
            # cumulative integral of psi(s/eps) along the grid: Gauss-Legendre
            # panels on the fast clock, sized to resolve any forcing period
            x0 = float(np.asarray(x0).reshape(-1)[0])
            gl_x, gl_w = np.polynomial.legendre.leggauss(5)
            r_max = float(times[-1]) / eps
            psi_f = forcing.psi_fn(r_max + 1.0)
            width = forcing.period / 8.0 if forcing.kind == "sinusoid" else 0.5
            out = np.empty(len(times))
            out[0] = x0
            acc = x0
            for k in range(len(times) - 1):
                a, b = times[k] / eps, times[k + 1] / eps
                n_panels = max(1, int(math.ceil((b - a) / width)))
                edges = np.linspace(a, b, n_panels + 1)
                mids = 0.5 * (edges[:-1] + edges[1:])
                halves = 0.5 * np.diff(edges)
                nodes = mids[:, None] + halves[:, None] * gl_x[None, :]
                vals = np.asarray(psi_f(nodes), dtype=float)
                acc += eps * float(np.sum(halves[:, None] * gl_w[None, :] * vals))
                out[k + 1] = acc
            return out[:, None]

        return AveragedModel(variant="general", n=1, d1=1, drift=drift,
                             diffusion=diffusion, provenance="oracle",
                             mean_fn=mean_fn, tau=model.tau)

    if variant == "convergent":
        if not forcing.decays():
            raise ValueError("convergent variant needs a decaying forcing")

        def drift(x):
            return np.zeros_like(x)

        def diffusion(x):
            return np.ones((1, 1))

        def mean_fn(times, eps, x0):
            return float(np.asarray(x0).reshape(-1)[0]) * np.ones((len(times), 1))

        return AveragedModel(variant="convergent", n=1, d1=1, drift=drift,
                             diffusion=diffusion, provenance="oracle",
                             mean_fn=mean_fn)

    if variant == "periodic":
        if model.tau is None:
            raise ValueError("periodic variant needs a forcing period")
        tau = model.tau
        bp, _ = quad(lambda t: float(forcing.psi(t)), 0.0, tau,
                     epsabs=1e-12, epsrel=1e-10, limit=200)
        bp /= tau

        def drift(x):
            return bp * np.ones_like(x)

        def diffusion(x):
            return np.ones((1, 1))

        def mean_fn(times, eps, x0):
            x0 = float(np.asarray(x0).reshape(-1)[0])
            return (x0 + bp * np.asarray(times, dtype=float))[:, None]

        return AveragedModel(variant="periodic", n=1, d1=1, drift=drift,
                             diffusion=diffusion, provenance="oracle",
                             mean_fn=mean_fn, tau=tau)

    raise ValueError(f"unknown variant {variant!r}")


def _batched_psd_root(mats: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (mats + np.swapaxes(mats, -1, -2)))
    w = np.clip(w, 0.0, None)
    return np.einsum("...ij,...j,...kj->...ik", v, np.sqrt(w), v)


def _estimated_averaged(model: SlowFastModel, variant: str, spec: dict) -> AveragedModel:
    """Wire measure estimation into drift/diffusion evaluators.

    Supported for models whose fast coefficients do not depend on x (all
    built-ins); time lookups are cached on a quantized bucket of the fast
    clock (folded by the period when one is declared).
    """
    tol = spec.get("tol", 1e-3)
    n_samples = spec.get("n_samples", 4000)
    seed = spec.get("seed", 0)
    bucket = spec.get("t_bucket", 0.05)
    x_ref = np.zeros(model.n)
    frozen = model.frozen(x_ref)
    cache: dict = {}

    def measure_at(t_fast: float):
        t_eff = t_fast % model.tau if model.tau else t_fast
        key = int(round(t_eff / bucket))
        if key not in cache:
            cache[key] = estimate_mu(frozen, key * bucket, tol=tol,
                                     n_samples=n_samples, seed=seed + key)
        return cache[key]

    def drift_general(t_fast, x):
        meas = measure_at(float(t_fast))
        # mean over samples of b(x_p, y_j), path-vectorized in chunks
        out = np.zeros((x.shape[0], model.n))
        samples = meas.samples
        for j0 in range(0, len(samples), 64):
            block = samples[j0:j0 + 64]
            for y in block:
                out += model.b(x, np.broadcast_to(y, (x.shape[0], model.m)))
        return out / len(samples)

    def diffusion_general(t_fast, x):
        meas = measure_at(float(t_fast))
        sub = meas.samples[:: max(1, len(meas.samples) // 256)]
        acc = np.zeros((x.shape[0], model.n, model.n))
        for y in sub:
            sig = np.asarray(model.sigma(x, np.broadcast_to(y, (x.shape[0], model.m))))
            if sig.ndim == 2:
                sig = np.broadcast_to(sig, (x.shape[0],) + sig.shape)
            acc += np.einsum("pij,pkj->pik", sig, sig)
        return _batched_psd_root(acc / len(sub))

    if variant == "general":
        return AveragedModel(variant="general", n=model.n, d1=model.n,
                             drift=drift_general, diffusion=diffusion_general,
                             provenance="estimated", tau=model.tau)

    if variant == "periodic":
        if model.tau is None:
            raise ValueError("periodic variant needs a declared period")
        bp = periodic_average_drift(model.b, frozen, model.tau, x_ref,
                                    nodes=spec.get("nodes", 64), tol=tol,
                                    n_samples=n_samples, seed=seed)
        # period-average of the diffusion via the same trapezoid nodes
        nodes = spec.get("nodes", 64)
        ts = np.linspace(0.0, model.tau, nodes + 1)
        acc = None
        for k, t in enumerate(ts):
            meas = estimate_mu(frozen, float(t), tol=tol, n_samples=n_samples,
                               seed=seed + 7000 + k)
            xb = np.broadcast_to(x_ref, (meas.n_samples, model.n))
            sig = np.asarray(model.sigma(xb, meas.samples))
            if sig.ndim == 2:
                sig = np.broadcast_to(sig, (meas.n_samples,) + sig.shape)
            m_k = np.einsum("pij,pkj->pik", sig, sig).mean(axis=0)
            w = 0.5 / nodes if k in (0, nodes) else 1.0 / nodes
            acc = m_k * w if acc is None else acc + m_k * w
        root = _batched_psd_root(acc[None])[0]

        def drift_p(x):
            return np.broadcast_to(bp, x.shape).copy()

        def diffusion_p(x):
            return root

        return AveragedModel(variant="periodic", n=model.n, d1=model.n,
                             drift=drift_p, diffusion=diffusion_p,
                             provenance="estimated", tau=model.tau)

    if variant == "convergent":
        bar_frozen = spec.get("bar_frozen")
        if bar_frozen is None:
            raise ValueError("convergent variant needs bar_frozen (limit dynamics)")
        meas = estimate_mu_limit(bar_frozen, tol=tol, n_samples=n_samples, seed=seed)
        bc = averaged_drift(model.b, meas, x_ref)
        root = averaged_diffusion(model.sigma, meas, x_ref)

        def drift_c(x):
            return np.broadcast_to(bc, x.shape).copy()

        def diffusion_c(x):
            return root

        return AveragedModel(variant="convergent", n=model.n, d1=model.n,
                             drift=drift_c, diffusion=diffusion_c,
                             provenance="estimated")

    raise ValueError(f"unknown variant {variant!r}")


def build_averaged(model: SlowFastModel, variant: str, mode: str = "oracle",
                   spec: Optional[dict] = None) -> AveragedModel:
    """Averaged model for the given variant, either from the registered
    closed form (oracle mode, benchmark models) or by measure estimation."""
    if mode == "oracle":
        if model.name.startswith("example1") or model.name.startswith("linear_nd"):
            if model.name.startswith("linear_nd"):
                raise ValueError("no closed-form averaged model for linear_nd")
            return _oracle_example1(model, variant)
        if model.name.startswith("example2"):
            return _oracle_example2(model, variant)
        raise ValueError(f"no oracle averaged form registered for {model.name!r}")
    if mode == "estimated":
        return _estimated_averaged(model, variant, spec or {})
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# Rate fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FitResult:
    exponent: float
    intercept: float
    r_squared: float
    conf_halfwidth: float
    curvature: float
    log_correction: bool
    log_adjusted_exponent: Optional[float] = None


@dataclass(frozen=True)
class RateEstimate:
    epsilons: np.ndarray
    errors: np.ndarray
    stderrs: np.ndarray
    exponent: float
    intercept: float
    r_squared: float
    conf_halfwidth: float
    log_correction: bool
    inconclusive: bool = False
    diagnostic: str = ""


def _weighted_poly_fit(x, y, w, degree):
    xm = np.vander(x, degree + 1, increasing=True)
    wx = xm * w[:, None]
    gram = xm.T @ wx
    coef = np.linalg.solve(gram, wx.T @ y)
    resid = y - xm @ coef
    dof = max(len(x) - (degree + 1), 1)
    scale = float((w * resid ** 2).sum() / dof)
    cov = np.linalg.inv(gram) * max(scale, 1e-30)
    return coef, cov, resid


def fit_rate(epsilons, errors, stderrs=None) -> FitResult:
    """Weighted least squares of log(error) on log(eps).

    Weights are 1/(stderr/error)^2 (the delta-method variance of the log);
    a significant quadratic term flags a possible logarithmic correction.
    """
    eps = np.asarray(epsilons, dtype=float)
    err = np.asarray(errors, dtype=float)
    if len(eps) < 3:
        raise DegenerateRegressionError("rate fitting needs at least 3 grid points")
    if np.any(np.diff(eps) >= 0):
        raise ValueError("epsilons must be strictly decreasing")
    if np.any(err <= 0):
        raise ValueError("errors must be positive")
    if stderrs is None:
        rel = np.zeros_like(err)
    else:
        rel = np.asarray(stderrs, dtype=float) / err
    w = 1.0 / np.maximum(rel, 1e-6) ** 2
    w = w / w.max()
    x, y = np.log(eps), np.log(err)
    coef, cov, resid = _weighted_poly_fit(x, y, w, 1)
    slope, intercept = float(coef[1]), float(coef[0])
    se_slope = math.sqrt(max(cov[1, 1], 0.0))
    ybar = float((w * y).sum() / w.sum())
    ss_tot = float((w * (y - ybar) ** 2).sum())
    ss_res = float((w * resid ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    curvature = 0.0
    log_corr = False
    log_adj = None
    if len(eps) >= 4:
        coef2, cov2, _ = _weighted_poly_fit(x, y, w, 2)
        curvature = float(coef2[2])
        se_c2 = math.sqrt(max(cov2[2, 2], 0.0))
        log_corr = abs(curvature) > max(0.01, 3.0 * se_c2)
        if log_corr and np.all(eps < 1.0):
            # refit with the candidate logarithmic factor removed
            y_adj = y - np.log(np.log(1.0 / eps))
            coef3, _, _ = _weighted_poly_fit(x, y_adj, w, 1)
            log_adj = float(coef3[1])
    return FitResult(exponent=slope, intercept=intercept, r_squared=r2,
                     conf_halfwidth=2.0 * se_slope, curvature=curvature,
                     log_correction=log_corr, log_adjusted_exponent=log_adj)


def _estimate_from_fit(eps, errors, stderrs, inconclusive=False, diagnostic=""):
    try:
        fit = fit_rate(eps, errors, stderrs)
        return RateEstimate(
            epsilons=np.asarray(eps, dtype=float), errors=np.asarray(errors, dtype=float),
            stderrs=np.asarray(stderrs, dtype=float), exponent=fit.exponent,
            intercept=fit.intercept, r_squared=fit.r_squared,
            conf_halfwidth=fit.conf_halfwidth, log_correction=fit.log_correction,
            inconclusive=inconclusive, diagnostic=diagnostic,
        )
    except DegenerateRegressionError as exc:
        return RateEstimate(
            epsilons=np.asarray(eps, dtype=float), errors=np.asarray(errors, dtype=float),
            stderrs=np.asarray(stderrs, dtype=float), exponent=float("nan"),
            intercept=float("nan"), r_squared=float("nan"),
            conf_halfwidth=float("nan"), log_correction=False,
            inconclusive=True, diagnostic=str(exc),
        )


# ---------------------------------------------------------------------------
# Strong and weak error experiments
# ---------------------------------------------------------------------------

def strong_error(
    model: SlowFastModel,
    averaged: AveragedModel,
    eps_grid: Sequence[float],
    T: float = 1.0,
    x0=None,
    y0=None,
    n_steps: int = 64,
    n_paths: int = 2000,
    seed: int = 0,
    substeps="auto",
    fast_mode: str = "auto",
    shared_w1: bool = True,
    threads: int = 1,
) -> RateEstimate:
    """sup_t E|X_t - Xbar_t|^2 per eps with pathwise W1 coupling, and its
    fitted log-log exponent.  Per-eps runs are independent jobs; threads > 1
    dispatches them to a worker pool (results are identical either way)."""
    if not model.sigma_independent_of_y:
        raise SigmaDependenceError()
    eps_values = np.sort(np.asarray(eps_grid, dtype=float))[::-1]
    x0 = np.zeros(model.n) if x0 is None else x0
    y0 = np.zeros(model.m) if y0 is None else y0

    def job(i_eps):
        i, eps = i_eps
        grid = TimeGrid(0.0, T, n_steps)
        run_seed = seed + 7919 * i
        slow, _ = simulate_coupled(model, float(eps), x0, y0, grid,
                                   substeps=substeps, n_paths=n_paths,
                                   seed=run_seed, fast_mode=fast_mode,
                                   store_fast=False)
        avg = simulate_averaged(averaged, float(eps), x0, grid,
                                n_paths=n_paths, seed=run_seed,
                                shared_w1=shared_w1)
        sup, _, se = CoupledSamplePair(slow, avg).gap_mean_square()
        return sup, se

    results = _map_jobs(job, list(enumerate(eps_values)), threads)
    errs = [r[0] for r in results]
    ses = [r[1] for r in results]
    return _estimate_from_fit(eps_values, errs, ses)


def _map_jobs(job, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [job(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(job, items))


@dataclass(frozen=True)
class TestFunction:
    name: str
    fn: Callable = field(compare=False)
    in_c4b: bool = True


def standard_test_functions(n: int) -> list:
    """Smooth bounded test functions plus the identity (the identity is
    outside the bounded class and only meaningful on linear benchmarks)."""
    u = np.ones(n) / math.sqrt(n)

    def tanh_fn(states):
        return np.tanh(states @ u)

    def gauss_fn(states):
        return np.exp(-np.sum(states ** 2, axis=-1))

    def identity_fn(states):
        return states @ u * math.sqrt(n) if n == 1 else states[..., 0]

    return [
        TestFunction("tanh", tanh_fn, True),
        TestFunction("gauss", gauss_fn, True),
        TestFunction("identity", identity_fn, False),
    ]


def weak_error(
    model: SlowFastModel,
    averaged: AveragedModel,
    test_functions: Sequence[TestFunction],
    eps_grid: Sequence[float],
    T: float = 1.0,
    x0=None,
    y0=None,
    n_steps: int = 64,
    n_paths: int = 4000,
    seed: int = 0,
    substeps="auto",
    fast_mode: str = "auto",
    antithetic: bool = True,
    threads: int = 1,
) -> dict:
    """sup_t |E f(X_t) - E f(Xbar_t)| per eps and test function.

    The two sides use independent driving noise; W1 antithetics tame the
    Monte-Carlo noise of the slow side.  In oracle mode the identity test
    function compares against the exact averaged mean, removing one MC
    layer.  Estimates whose stderr exceeds half the measured error at some
    eps carry the inconclusive flag.
    """
    eps_values = np.sort(np.asarray(eps_grid, dtype=float))[::-1]
    x0 = np.zeros(model.n) if x0 is None else x0
    y0 = np.zeros(model.m) if y0 is None else y0
    if antithetic and n_paths % 2:
        raise ValueError("antithetic variates need an even n_paths")
    per_fn = {tf.name: {"errors": [], "stderrs": []} for tf in test_functions}

    def job(i_eps):
        i, eps = i_eps
        grid = TimeGrid(0.0, T, n_steps)
        run_seed = seed + 104729 * i
        slow, _ = simulate_coupled(model, float(eps), x0, y0, grid,
                                   substeps=substeps, n_paths=n_paths,
                                   seed=run_seed, fast_mode=fast_mode,
                                   store_fast=False, antithetic=antithetic)
        exact_mean = averaged.exact_mean(grid.times(), float(eps), x0)
        avg = None
        need_sim = any(tf.name != "identity" or exact_mean is None
                       for tf in test_functions)
        if need_sim:
            avg = simulate_averaged(averaged, float(eps), x0, grid,
                                    n_paths=n_paths, seed=run_seed + 1,
                                    shared_w1=False, antithetic=antithetic)
        def mean_se(vals):
            # under W1 antithetics, independence holds between pairs, not paths
            if antithetic:
                vals = 0.5 * (vals[0::2] + vals[1::2])
            return (vals.mean(axis=0),
                    vals.std(axis=0, ddof=1) / math.sqrt(vals.shape[0]))

        point = {}
        for tf in test_functions:
            m_slow, se_slow = mean_se(tf.fn(slow.states))
            if tf.name == "identity" and exact_mean is not None:
                m_avg = exact_mean[:, 0]
                se_avg = np.zeros_like(m_avg)
            else:
                m_avg, se_avg = mean_se(tf.fn(avg.states))
            diff = np.abs(m_slow - m_avg)
            k = int(np.argmax(diff))
            point[tf.name] = (float(diff[k]), float(np.hypot(se_slow[k], se_avg[k])))
        return point

    for point in _map_jobs(job, list(enumerate(eps_values)), threads):
        for name, (err, se) in point.items():
            per_fn[name]["errors"].append(err)
            per_fn[name]["stderrs"].append(se)
    out = {}
    for tf in test_functions:
        errs = np.asarray(per_fn[tf.name]["errors"])
        ses = np.asarray(per_fn[tf.name]["stderrs"])
        weak_noise = bool(np.any(ses > 0.5 * np.maximum(errs, 1e-300)))
        est = _estimate_from_fit(eps_values, errs, ses,
                                 inconclusive=weak_noise,
                                 diagnostic="stderr exceeds half the measured error"
                                 if weak_noise else "")
        out[tf.name] = est
    return out


# ---------------------------------------------------------------------------
# Theoretical brackets
# ---------------------------------------------------------------------------

_BOUND_KINDS = (
    "strong-general",
    "weak-general",
    "strong-convergent",
    "weak-convergent",
    "strong-periodic",
    "weak-periodic",
)


@dataclass(frozen=True)
class BoundEvaluation:
    kind: str
    epsilons: np.ndarray
    values: np.ndarray


class _LambdaTable:
    """Dense Lambda_gamma interpolant on [0, R] (quadrature at the nodes)."""

    def __init__(self, alpha: RateFunction, gamma: float, r_max: float):
        lin = np.linspace(0.0, min(r_max, 10.0), 41)
        nodes = lin
        if r_max > 10.0:
            nodes = np.unique(np.concatenate([lin, np.geomspace(10.0, r_max, 120)]))
        vals = np.array([lambda_gamma(alpha, gamma, float(s), tol=1e-8) for s in nodes])
        self._interp = PchipInterpolator(nodes, vals)
        self.r_max = r_max

    def __call__(self, s):
        return self._interp(np.clip(s, 0.0, self.r_max))


def _sup_lambda_gamma(alpha, gamma, T, eps) -> float:
    ts = np.concatenate([[0.0], np.geomspace(T * 1e-4, T, 24)])
    return float(max(lambda_gamma(alpha, gamma, float(t / eps), tol=1e-8) for t in ts))


def _int_alpha_lambda_sq(alpha, table: "_LambdaTable", r: float) -> float:
    val, _ = quad(lambda s: float(alpha(s)) * float(table(s)) ** 2, 0.0, r,
                  epsrel=1e-7, epsabs=1e-12, limit=400)
    return val


def _conv_sqrt_integral(phi: Callable, eta: float, r: float) -> float:
    """integral over [0, r] of sqrt(conv(s)) ds where
    conv(s) = integral over [0, s] of exp(-eta*(s-u)) phi(u)^2 du."""
    n = max(400, min(40000, int(r / 0.02)))
    s = np.linspace(0.0, r, n + 1)
    h = s[1] - s[0]
    phi2 = np.asarray(phi(s), dtype=float) ** 2
    conv = np.empty(n + 1)
    conv[0] = 0.0
    decay = math.exp(-eta * h)
    for k in range(n):
        conv[k + 1] = decay * conv[k] + 0.5 * h * (decay * phi2[k] + phi2[k + 1])
    return float(np.trapezoid(np.sqrt(np.maximum(conv, 0.0)), s))


def theoretical_bound(
    kind: str,
    alpha: RateFunction,
    gamma: float,
    T: float,
    eps_values: Sequence[float],
    phi: Optional[Callable] = None,
    beta_a4: Optional[float] = None,
    tau: Optional[float] = None,
) -> BoundEvaluation:
    """The eps-dependent bracket of the named estimate(constants omitted)."""
    if kind not in _BOUND_KINDS:
        raise ValueError(f"unknown bound kind {kind!r}; choose from {_BOUND_KINDS}")
    eps_values = np.asarray(eps_values, dtype=float)
    r_max = T / float(eps_values.min())
    needs_table = kind in ("strong-general", "strong-convergent", "strong-periodic")
    table = _LambdaTable(alpha, 1.0, r_max) if needs_table else None
    if kind.endswith("convergent"):
        if phi is None or beta_a4 is None:
            raise ValueError("convergent bounds need phi and beta_a4")
        if alpha.kind != "constant":
            raise ValueError("convergent bounds use the limiting constant rate")
        eta = 2.0 * beta_a4 * alpha.c0
    vals = []
    for eps in eps_values:
        r = T / float(eps)
        sup_lam = _sup_lambda_gamma(alpha, gamma, T, float(eps))
        if kind == "strong-general":
            v = eps ** 2 * (sup_lam ** 2 + _int_alpha_lambda_sq(alpha, table, r))
        elif kind == "weak-general":
            v = eps * sup_lam
        elif kind == "strong-convergent":
            sconv = _conv_sqrt_integral(phi, eta, r)
            v = eps ** 2 * (sconv ** 2 + sup_lam ** 2
                            + _int_alpha_lambda_sq(alpha, table, r))
        elif kind == "weak-convergent":
            sconv = _conv_sqrt_integral(phi, eta, r)
            v = eps * (sconv + sup_lam)
        elif kind == "strong-periodic":
            v = eps ** 2 * (eps ** (-4.0 / 3.0) + sup_lam ** 2
                            + _int_alpha_lambda_sq(alpha, table, r))
        else:  # weak-periodic
            v = eps * (sup_lam + eps ** (-2.0 / 3.0))
        vals.append(float(v))
    return BoundEvaluation(kind=kind, epsilons=eps_values, values=np.asarray(vals))


# ---------------------------------------------------------------------------
# Deterministic lemma checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LambdaComparisonReport:
    epsilons: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    ratios: np.ndarray
    max_ratio: float
    bounded: bool


def check_lambda_comparison(alpha: RateFunction, gamma: float, T: float,
                  eps_grid: Sequence[float]) -> LambdaComparisonReport:
    """Compare sup_t Lambda_gamma(t/eps)^2 with the integral of
    alpha * Lambda^2 up to T/eps; the ratio must stay bounded as eps drops."""
    if alpha.kind not in ("constant", "power"):
        raise ValueError("the asymptotic comparison needs a differentiable "
                         "closed-form rate family (constant or power)")
    eps_values = np.sort(np.asarray(eps_grid, dtype=float))[::-1]
    r_max = T / float(eps_values.min())
    table = _LambdaTable(alpha, 1.0, r_max)
    lhs, rhs = [], []
    for eps in eps_values:
        lhs.append(_sup_lambda_gamma(alpha, gamma, T, float(eps)) ** 2)
        rhs.append(_int_alpha_lambda_sq(alpha, table, T / float(eps)))
    lhs = np.asarray(lhs)
    rhs = np.asarray(rhs)
    ratios = lhs / rhs
    # bounded: the tail of the ratio sequence does not keep growing
    bounded = bool(ratios[-1] <= max(1.05 * float(ratios.max()), float(ratios[0]) + 1e-12)
                   and ratios[-1] <= 1.2 * float(np.median(ratios)))
    return LambdaComparisonReport(epsilons=eps_values, lhs=lhs, rhs=rhs, ratios=ratios,
                         max_ratio=float(ratios.max()), bounded=bounded)


@dataclass(frozen=True)
class WindowAverageReport:
    rows: list
    max_excess: float
    passed: bool


def check_window_average(h_fn: Callable, tau: float, M: Optional[float] = None,
                  T_values: Sequence[float] = (1.0,),
                  a_values: Sequence[float] = (0.0,),
                  resolution: int = 1 << 14) -> WindowAverageReport:
    """Verify |avg of h over [a, a+T] - period average| <= 2*tau*M/T on the
    grid of (a, T) pairs, by dense periodic quadrature."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    cells = np.arange(resolution)
    mids = (cells + 0.5) * (tau / resolution)
    h_vals = np.asarray(h_fn(mids), dtype=float)
    if M is None:
        M = float(np.max(np.abs(h_vals)))
    cell_int = h_vals * (tau / resolution)
    cum = np.concatenate([[0.0], np.cumsum(cell_int)])
    period_int = float(cum[-1])

    def integral_0_to(x: float) -> float:
        k_per, rem = divmod(x, tau)
        frac = rem / tau * resolution
        idx = int(frac)
        if idx >= resolution:
            idx, frac = resolution - 1, float(resolution)
        partial = cum[idx] + (frac - idx) * cell_int[idx]
        return k_per * period_int + partial

    period_avg = period_int / tau
    rows = []
    worst = -math.inf
    for a in a_values:
        for t_len in T_values:
            win = (integral_0_to(float(a) + float(t_len)) - integral_0_to(float(a))) / float(t_len)
            lhs = abs(win - period_avg)
            bound = 2.0 * tau * M / float(t_len)
            rows.append({"a": float(a), "T": float(t_len), "lhs": lhs, "bound": bound})
            worst = max(worst, lhs - bound)
    return WindowAverageReport(rows=rows, max_excess=worst, passed=bool(worst <= 1e-9))
