"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines.  Monte-Carlo criteria use pinned seeds; the engines are bit-for-bit
reproducible, so a green run stays green.
"""

import math
import sys

import numpy as np
import pytest

from slowfast.averaging import (
    build_averaged,
    check_lambda_comparison,
    check_window_average,
    fit_rate,
    standard_test_functions,
    strong_error,
    theoretical_bound,
    weak_error,
)
from slowfast.engine import (
    TimeGrid,
    simulate_coupled,
    simulate_frozen,
    simulate_y_variational,
)
from slowfast.measures import estimate_mu, exp_convolution
from slowfast.models import Forcing, example1, example2
from slowfast.oracles import (
    Example1Params,
    Example2Params,
    ex1_exact_strong_error,
    ex1_rate_exponent,
    ex2_exact_mean_gap,
    ex2_psi,
)
from slowfast.poisson import CenteredFunction, PhiEvaluator, check_centering, check_growth, residual
from slowfast.rates import RateFunction


def report(number: int, label: str, ok: bool, detail: str = ""):
    status = "PASS" if ok else "FAIL"
    line = f"ACCEPTANCE {number:2d} [{status}] {label}"
    if detail:
        line += f"  ({detail})"
    print(line, file=sys.stderr)
    assert ok, line


def test_criterion_01_exact_oracle_rate_table():
    """Slopes of the exact strong error match the declared exponent map."""
    eps = np.array([2.0 ** -k for k in range(6, 15)])
    ok = True
    details = []
    for beta in (-0.5, 0.0, 0.5, 2.0):
        p = Example1Params(1.0, beta, 0.0, math.sqrt(0.5))
        errs = np.array([ex1_exact_strong_error(p, e, 1.0) for e in eps])
        slope = float(np.polyfit(np.log(eps), np.log(errs), 1)[0])
        declared, _ = ex1_rate_exponent(beta)
        ok = ok and abs(slope - declared) <= 0.1
        details.append(f"b={beta}:{slope:.3f}")
    p1 = Example1Params(1.0, 1.0, 0.0, math.sqrt(0.5))
    errs1 = np.array([ex1_exact_strong_error(p1, e, 1.0) for e in eps])
    slope1 = float(np.polyfit(np.log(eps), np.log(errs1), 1)[0])
    declared1, log_flag = ex1_rate_exponent(1.0)
    fit = fit_rate(eps, errs1, None)
    ok = ok and abs(slope1 - declared1) <= 0.2 and log_flag and fit.log_correction
    details.append(f"b=1:{slope1:.3f}+log")
    report(1, "exact-oracle rate table", ok, " ".join(details))


def test_criterion_02_simulation_vs_oracle():
    """MC strong error (beta=0, dt=eps/20 on the fast clock, 1e4 paths)
    matches the exact error within 3 MC standard errors at every eps."""
    model = example1(1.0, 0.0)
    averaged = build_averaged(model, "general")
    p = Example1Params(1.0, 0.0, 0.0, math.sqrt(0.5))
    n_steps, t_final = 64, 1.0
    ok = True
    worst = 0.0
    for k in range(4, 9):
        eps = 2.0 ** -k
        substeps = int(round((t_final / (n_steps * eps)) * 20))
        grid = TimeGrid(0.0, t_final, n_steps)
        slow, _ = simulate_coupled(model, eps, [0.0], [math.sqrt(0.5)], grid,
                                   substeps=substeps, n_paths=10_000,
                                   seed=7000 + k, store_fast=False)
        from slowfast.engine import simulate_averaged

        avg = simulate_averaged(averaged, eps, [0.0], grid, n_paths=10_000,
                                seed=7000 + k, shared_w1=True)
        gap = (slow.states - avg.states)[:, :, 0]
        curve = (gap ** 2).mean(axis=0)
        i = int(np.argmax(curve))
        se = (gap[:, i] ** 2).std(ddof=1) / math.sqrt(10_000)
        z = abs(curve[i] - ex1_exact_strong_error(p, eps, t_final)) / se
        worst = max(worst, z)
        ok = ok and z <= 3.0
    report(2, "simulation vs oracle agreement (beta=0)", ok,
           f"worst |z| = {worst:.2f}")


def test_criterion_03_strong_rate_fit():
    """Fitted strong exponent within +-0.15 of 1+beta for beta in {0, 0.5}."""
    eps_grid = [2.0 ** -k for k in range(4, 10)]
    ok = True
    details = []
    for beta, seed in ((0.0, 203), (0.5, 202)):
        model = example1(1.0, beta)
        averaged = build_averaged(model, "general")
        est = strong_error(model, averaged, eps_grid, T=1.0, x0=[0.0],
                           y0=[math.sqrt(0.5)], n_steps=64, n_paths=4000,
                           seed=seed)
        ok = ok and abs(est.exponent - (1.0 + beta)) <= 0.15
        details.append(f"b={beta}:{est.exponent:.3f}")
    report(3, "strong-rate fit from simulation", ok, " ".join(details))


def test_criterion_04_weak_error_bound():
    """Example-2 mean gap: below C*eps with C fitted at eps=2^-4 (MC slack),
    and within 3 stderr of the exact gap at every eps."""
    eps_grid = [2.0 ** -k for k in range(4, 10)]
    identity = [tf for tf in standard_test_functions(1) if tf.name == "identity"]
    ok = True
    details = []
    for label, forcing in (("decaying", Forcing.decaying(1.0)),
                           ("periodic", Forcing.sinusoid(1.0, 0.5, 1.0))):
        model = example2(forcing)
        averaged = build_averaged(model, "general")
        ests = weak_error(model, averaged, identity, eps_grid, T=1.0,
                          x0=[0.0], y0=[2.0], n_steps=64, n_paths=10_000,
                          seed=55, antithetic=True)
        est = ests["identity"]
        p = Example2Params(forcing, 0.0, 2.0)
        gaps = np.array([ex2_exact_mean_gap(p, float(e), 1.0)
                         for e in est.epsilons])
        within = np.all(np.abs(est.errors - gaps) <= 3.0 * est.stderrs)
        c_hat = est.errors[0] / est.epsilons[0]
        linear = np.all(est.errors <= c_hat * est.epsilons + 3.0 * est.stderrs)
        ok = ok and within and linear and not est.inconclusive
        details.append(f"{label}: C={c_hat:.3f}")
    report(4, "weak-error bound and oracle match (example 2)", ok,
           " ".join(details))


def test_criterion_05_evolution_measure():
    """mu_t moments: centered with variance 1/2 (example 1); mean psi(t)
    (example 2); 1e5 samples, 3 sigma."""
    m1 = example1(1.0, 0.5)
    mu1 = estimate_mu(m1.frozen([0.0]), 2.0, tol=1e-4, n_samples=100_000, seed=11)
    se_mean = mu1.samples.std(ddof=1) / math.sqrt(mu1.n_samples)
    se_var = (mu1.samples[:, 0] ** 2).std(ddof=1) / math.sqrt(mu1.n_samples)
    ok = abs(mu1.mean()[0]) <= 3.0 * se_mean
    ok = ok and abs(mu1.var()[0] - 0.5) <= 3.0 * se_var

    forcing = Forcing.decaying(1.0)
    m2 = example2(forcing)
    t2 = 1.5
    mu2 = estimate_mu(m2.frozen([0.0]), t2, tol=1e-4, n_samples=100_000, seed=12)
    psi = ex2_psi(Example2Params(forcing), t2)
    se2 = mu2.samples.std(ddof=1) / math.sqrt(mu2.n_samples)
    se2_var = (mu2.samples[:, 0] ** 2).std(ddof=1) / math.sqrt(mu2.n_samples)
    ok = ok and abs(mu2.mean()[0] - psi) <= 3.0 * se2
    ok = ok and abs(mu2.var()[0] - 0.5) <= 3.0 * se2_var
    report(5, "evolution-measure correctness", ok,
           f"ex1 var={mu1.var()[0]:.4f}, ex2 mean={mu2.mean()[0]:.4f} vs psi={psi:.4f}")


def test_criterion_06_poisson_residual():
    """PDE residual of the probabilistic solution at 20 random points per
    benchmark, each below 5x the combined fd/MC/tail tolerance."""
    h_id = CenteredFunction.explicit(lambda s, x, y: y.copy(), k=1)
    benchmarks = [
        ("ou", PhiEvaluator(model=example1(1.5, 0.0), H=h_id, tol=1e-4,
                            n_paths=1500, step=0.05, seed=3)),
        ("power", PhiEvaluator(model=example1(1.0, 0.7), H=h_id, tol=1e-4,
                               n_paths=1500, step=0.04, seed=4)),
    ]
    ok = True
    worst = 0.0
    rng = np.random.default_rng(60)
    for label, ev in benchmarks:
        for _ in range(20):
            s = float(rng.uniform(0.0, 2.0))
            x = rng.uniform(-1.5, 1.5, 1)
            y = rng.uniform(-1.5, 1.5, 1)
            rep = residual(ev, s, x, y)
            worst = max(worst, rep.norm / rep.tolerance)
            ok = ok and rep.passed
    report(6, "Poisson residual at 20 random points x 2 benchmarks", ok,
           f"worst norm/tol = {worst:.3f}")


def test_criterion_07_centering_and_growth():
    """H = b - bbar centered at all grid points; growth ratio stable under
    grid refinement."""
    forcing = Forcing.sinusoid(1.0, 0.5, 1.0)
    model = example2(forcing)
    averaged = build_averaged(model, "general")
    H = CenteredFunction.drift_minus_average(
        model.b, lambda s, x: averaged.drift(s, np.atleast_2d(x)), 1)
    cent = check_centering(H, model, s_grid=[0.0, 0.3, 0.7, 1.2],
                           x_grid=[[0.0], [1.0]], n_samples=20_000, seed=2)
    ev = PhiEvaluator(model=model, H=H, tol=1e-4, n_paths=1000, step=0.05, seed=8)
    coarse = check_growth(ev, s_values=[0.0, 0.5, 1.0], x_values=[[0.0]],
                          y_values=[[-1.0], [0.5], [2.0]])
    fine = check_growth(ev, s_values=[0.0, 0.25, 0.5, 0.75, 1.0],
                        x_values=[[0.0], [0.5]],
                        y_values=[[-2.0], [-1.0], [0.5], [1.0], [2.0]])
    stable = fine.max_ratio < 2.0 * coarse.max_ratio
    ok = cent.passed and stable
    report(7, "centering of b - bbar and growth-ratio stability", ok,
           f"ratios {coarse.max_ratio:.3f} -> {fine.max_ratio:.3f}")


def test_criterion_08_moment_and_variational_invariants():
    """Fourth-moment envelope of the frozen flow, uniform-in-eps fourth
    moments of the fast component, and variational decay, with 3 sigma slack."""
    gamma = 0.5
    ok = True

    # (a) envelope E|Y|^4 <= exp(-4 gamma A)|y|^4 + Chat (1+|x|^4): the
    # constant is existential, so fit it over one seeded grid of starting
    # points (transients included) and verify the envelope with that single
    # constant on a fresh grid and fresh seeds
    def envelope_residuals(model, points, seed0, sign):
        out = []
        for i, (s0, y0, x0) in enumerate(points):
            ens = simulate_frozen(model.frozen([x0]), s0, [y0], horizon=6.0,
                                  n_steps=24, n_paths=4000, seed=seed0 + i)
            m4, se4 = ens.moment_curve(4.0, stderr=True)
            a_int = model.alpha.integral(s0, ens.grid.times())
            decay = np.exp(-4.0 * gamma * a_int) * abs(y0) ** 4
            out.append(np.max((m4 + sign * 3.0 * se4 - decay) / (1.0 + x0 ** 4)))
        return out

    fit_pts = [(0.0, 0.0, 0.0), (0.0, 3.5, 0.0), (0.7, 2.0, 1.5),
               (0.3, -3.0, -1.5)]
    ver_pts = [(0.0, 3.0, 0.0), (0.5, -2.5, 1.0), (1.1, 1.0, -1.0),
               (0.2, 2.8, 0.5)]
    for model in (example1(1.0, 0.5), example2(Forcing.sinusoid(1.0, 0.5, 1.0))):
        c_hat = max(envelope_residuals(model, fit_pts, 100, +1.0))
        worst = max(envelope_residuals(model, ver_pts, 200, -1.0))
        ok = ok and worst <= c_hat

    # (b) sup_eps sup_t E|Y^eps_t|^4 uniformly bounded in eps
    model = example1(1.0, 0.5)
    sups = []
    for i, k in enumerate(range(3, 8)):
        _, fast = simulate_coupled(model, 2.0 ** -k, [0.5], [1.0],
                                   TimeGrid(0.0, 1.0, 32), n_paths=3000,
                                   seed=300 + i)
        m4, se4 = fast.moment_curve(4.0, stderr=True)
        sups.append(float(np.max(m4 - 3.0 * se4)))
    cap = (1.0 + 0.5 ** 4 + 1.0 ** 4) * max(sups[0], sups[1])
    ok = ok and all(s <= cap for s in sups)

    # (c) variational decay E|dY.l|^4 <= exp(-4A)|l|^4 (EM contracts at least
    # as fast; 3 sigma slack)
    for model in (example1(1.0, 0.5), example2(Forcing.decaying(1.0))):
        times, m4v, se4v = simulate_y_variational(
            model.frozen([0.0]), 0.5, [0.3], [1.5], horizon=3.0, n_steps=24,
            n_paths=2000, seed=5)
        env = np.exp(-4.0 * model.alpha.integral(0.5, times)) * 1.5 ** 4
        ok = ok and bool(np.all(m4v <= env + 3.0 * se4v + 1e-12))

    report(8, "moment and variational invariants", ok)


def test_criterion_09_deterministic_quadrature_lemmas():
    """Window-average bound on three waveforms, bounded Lambda comparison for
    beta in {-0.5, 0.5}, and decay of the mixing convolution."""
    tau = 1.0
    t_vals = np.linspace(0.8, 12.0, 20)
    a_vals = np.linspace(0.0, 2.0 * tau, 20)
    waves = {
        "constant": lambda s: np.ones_like(np.asarray(s, dtype=float)),
        "sine": lambda s: np.sin(2.0 * np.pi * np.asarray(s) / tau),
        "square": lambda s: np.where((np.asarray(s) / tau) % 1.0 < 0.5, 1.0, -1.0),
    }
    ok = all(check_window_average(fn, tau, T_values=t_vals, a_values=a_vals).passed
             for fn in waves.values())
    for beta in (-0.5, 0.5):
        rep = check_lambda_comparison(RateFunction.power(1.0, beta), 0.9, 1.0,
                            [2.0 ** -k for k in range(3, 9)])
        ok = ok and rep.bounded
    conv = exp_convolution(lambda r: 1.0 / (1.0 + r), eta=1.0, t=50.0)
    ok = ok and conv < 1e-3
    report(9, "deterministic quadrature lemmas", ok, f"conv(50) = {conv:.2e}")


def test_criterion_10_periodic_bound_shape():
    """Periodic-variant strong error below a constant times the
    eps^(2/3)-dominated bracket, constant fitted at the largest eps."""
    forcing = Forcing.sinusoid(1.0, 0.5, 1.0)
    model = example2(forcing)
    averaged = build_averaged(model, "periodic")
    eps_grid = [2.0 ** -k for k in range(4, 9)]
    est = strong_error(model, averaged, eps_grid, T=1.0, x0=[0.0], y0=[1.0],
                       n_steps=64, n_paths=4000, seed=31)
    bracket = theoretical_bound("strong-periodic", model.alpha, 0.9, 1.0,
                                est.epsilons, tau=1.0)
    c_hat = est.errors[0] / bracket.values[0]
    ok = bool(np.all(est.errors <= c_hat * bracket.values + 3.0 * est.stderrs))
    report(10, "periodic-case bound shape", ok,
           f"ratios {np.round(est.errors / (c_hat * bracket.values), 3)}")


def test_criterion_11_reproducibility(tmp_path):
    """Any run repeated with the same seed yields byte-identical CSV bodies."""
    from slowfast.cli import main

    cfg = tmp_path / "repro.toml"
    cfg.write_text("""
[experiment]
kind = "oracle-compare"
id = "repro"
seed = 90210

[model]
id = "example1"

[run]
n_steps = 32
n_paths = 2000
epsilons = [0.0625, 0.03125, 0.015625]
y0 = [0.7071067811865476]
""")
    outs = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
        outs.append(out)
    pre = "repro-s90210."
    same = all(
        (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
        for name in (pre + "oracle_compare.csv", pre + "summary.json")
    )
    report(11, "byte-identical CSV bodies under a repeated seed", same)
