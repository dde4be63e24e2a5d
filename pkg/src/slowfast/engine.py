"""Time-stepping engines for the coupled system, the frozen equation and the
first-order variational flow.

Noise discipline: every path owns counter-based substreams keyed on
(seed, path index, channel), so ensembles are reproducible bit-for-bit and
independent of path execution order or chunking.  Channels: 0 = slow noise
W1 (shared between a coupled run and its averaged partner), 1 = fast noise
W2, 2 = independent noise for uncoupled averaged runs.

The fast variable advances on its own clock (t/eps for the coupled system,
real time for the frozen equation) in micro steps chosen per slow step.  The
'em' mode is plain Euler-Maruyama; 'exact' draws from the closed-form
Gaussian transition of a linear fast family and is unconditionally stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .models import FrozenModel, SlowFastModel

__all__ = [
    "TimeGrid",
    "PathEnsemble",
    "CoupledSamplePair",
    "StabilityError",
    "BlowUpError",
    "simulate_coupled",
    "simulate_averaged",
    "simulate_frozen",
    "simulate_y_variational",
    "w1_increments",
]

_KEY_MASK = (1 << 64) - 1
_BLOWUP_LIMIT = 1e12
# path-chunk sizing: keep per-chunk noise blocks under ~480 MB
_NOISE_BUDGET_DOUBLES = 60_000_000


class StabilityError(ValueError):
    """Explicit-Euler fast stepping would be non-dissipative."""

    def __init__(self, h_alpha: float, min_substeps: int):
        super().__init__(
            f"fast sub-step violates (dt/substeps)*alpha/eps <= 0.5 "
            f"(worst product {h_alpha:.3g}); minimal admissible substeps: {min_substeps}"
        )
        self.min_substeps = min_substeps


class BlowUpError(RuntimeError):
    """A state coordinate exceeded the blow-up guard."""

    def __init__(self, path_index: int, t: float):
        super().__init__(f"state blew up past {_BLOWUP_LIMIT:g} on path {path_index} at t={t:g}")
        self.path_index = path_index
        self.t = t


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    t_final: float
    n_steps: int

    def __post_init__(self):
        if not (self.t_final > self.t0 and self.n_steps >= 1):
            raise ValueError("TimeGrid needs t_final > t0 and n_steps >= 1")

    @property
    def dt(self) -> float:
        return (self.t_final - self.t0) / self.n_steps

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)


@dataclass(frozen=True)
class PathEnsemble:
    """Sample paths on a grid: states[path, time index, component]."""

    grid: TimeGrid
    states: np.ndarray
    seed: int
    scheme: str

    def __post_init__(self):
        if self.states.ndim != 3 or self.states.shape[1] != self.grid.n_steps + 1:
            raise ValueError("states must have shape (paths, n_steps+1, dim)")
        self.states.setflags(write=False)

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[2]

    def mean_curve(self) -> np.ndarray:
        return self.states.mean(axis=0)

    def moment_curve(self, power: float, stderr: bool = False):
        """E |state|^power along the grid (Euclidean norm over components)."""
        v = np.linalg.norm(self.states, axis=2) ** power
        m = v.mean(axis=0)
        if not stderr:
            return m
        return m, v.std(axis=0, ddof=1) / math.sqrt(self.n_paths)


@dataclass(frozen=True)
class CoupledSamplePair:
    """A coupled run and its averaged partner driven by the same W1."""

    slow: PathEnsemble
    averaged: PathEnsemble
    fast: Optional[PathEnsemble] = None

    def __post_init__(self):
        if self.slow.grid != self.averaged.grid:
            raise ValueError("coupled ensembles must share the time grid")
        if self.slow.seed != self.averaged.seed:
            raise ValueError("coupled ensembles must share the seed")

    def gap_mean_square(self):
        """(sup_t E|gap|^2, per-time curve, stderr at the sup)."""
        gap = self.slow.states - self.averaged.states
        sq = (gap ** 2).sum(axis=2)
        curve = sq.mean(axis=0)
        k = int(np.argmax(curve))
        stderr = sq[:, k].std(ddof=1) / math.sqrt(sq.shape[0])
        return float(curve[k]), curve, float(stderr)


# ---------------------------------------------------------------------------
# Noise substreams
# ---------------------------------------------------------------------------

def _stream(seed: int, path_index: int, channel: int) -> np.random.Generator:
    key = np.array([seed & _KEY_MASK, (path_index * 4 + channel) & _KEY_MASK],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _normals(seed: int, channel: int, paths: np.ndarray, count: int,
             antithetic: bool = False) -> np.ndarray:
    """Per-path standard normals, shape (len(paths), count).

    With antithetic=True the stream is keyed on the pair index path//2 and
    odd paths get the negated draw (used for the W1 channel only).
    """
    out = np.empty((len(paths), count))
    for i, p in enumerate(paths):
        key_path = (p // 2) if antithetic else p
        out[i] = _stream(seed, int(key_path), channel).standard_normal(count)
        if antithetic and (p % 2 == 1):
            out[i] = -out[i]
    return out


def w1_increments(seed: int, paths: np.ndarray, n_steps: int, d1: int, dt: float,
                  antithetic: bool = False) -> np.ndarray:
    """The W1 increments a run consumes, shape (paths, n_steps, d1)."""
    xi = _normals(seed, 0, np.asarray(paths), n_steps * d1, antithetic=antithetic)
    return math.sqrt(dt) * xi.reshape(len(paths), n_steps, d1)


def _path_chunks(n_paths: int, doubles_per_path: int):
    chunk = max(64, min(n_paths, _NOISE_BUDGET_DOUBLES // max(doubles_per_path, 1)))
    for start in range(0, n_paths, chunk):
        yield np.arange(start, min(start + chunk, n_paths))


# ---------------------------------------------------------------------------
# Fast-clock schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FastSchedule:
    """Micro-step layout over the slow grid, on the fast/frozen clock."""

    s_nodes: np.ndarray          # (J,) left endpoints of micro steps
    h: np.ndarray                # (J,) widths
    offsets: np.ndarray          # (K+1,) micro index range per slow step
    mode: str                    # 'em' | 'exact'
    decay: Optional[np.ndarray] = None
    forced: Optional[np.ndarray] = None
    stdf: Optional[np.ndarray] = None

    @property
    def total(self) -> int:
        return len(self.h)


def _resolve_mode(model: SlowFastModel, fast_mode: str) -> str:
    if fast_mode == "auto":
        return "exact" if model.fast_linear_gaussian else "em"
    if fast_mode == "exact" and not model.fast_linear_gaussian:
        raise ValueError("exact fast mode needs fast_linear_gaussian")
    if fast_mode not in ("em", "exact"):
        raise ValueError(f"unknown fast mode {fast_mode!r}")
    return fast_mode


def build_fast_schedule(model: SlowFastModel, edges: np.ndarray, substeps,
                        fast_mode: str = "auto", eta: float = 0.25) -> FastSchedule:
    """Split each slow interval [edges[k], edges[k+1]] into micro steps.

    substeps='auto' sizes micro steps so h*alpha <= eta locally; an integer
    applies uniformly.  EM mode enforces the h*alpha <= 0.5 dissipativity
    rule up front and refuses with the minimal admissible substeps.
    """
    mode = _resolve_mode(model, fast_mode)
    alpha = model.alpha
    widths = np.diff(edges)
    # local rate bound per step: families monotone in |t| attain it at an
    # endpoint, except on steps straddling 0 where alpha(0) can dominate
    a_edges = np.maximum(alpha(np.abs(edges[:-1])), alpha(np.abs(edges[1:])))
    straddle = (edges[:-1] < 0.0) & (edges[1:] > 0.0)
    if np.any(straddle):
        a_edges = np.where(straddle, np.maximum(a_edges, alpha(0.0)), a_edges)
    if substeps == "auto":
        sub = np.maximum(1, np.ceil(widths * a_edges / eta).astype(int))
    else:
        if not (isinstance(substeps, (int, np.integer)) and substeps >= 1):
            raise ValueError("substeps must be 'auto' or an int >= 1")
        sub = np.full(len(widths), int(substeps))
    if mode == "em":
        h_alpha = widths * a_edges / sub
        worst = float(np.max(h_alpha))
        if worst > 0.5:
            min_sub = int(np.ceil(np.max(widths * a_edges) / 0.5))
            raise StabilityError(worst, min_sub)
    offsets = np.concatenate([[0], np.cumsum(sub)])
    s_nodes = np.empty(offsets[-1])
    h = np.empty(offsets[-1])
    for k in range(len(widths)):
        j0, j1 = offsets[k], offsets[k + 1]
        hk = widths[k] / sub[k]
        s_nodes[j0:j1] = edges[k] + hk * np.arange(sub[k])
        h[j0:j1] = hk
    if mode == "exact":
        fam = model.linear_fast
        decay = np.asarray(fam.decay(s_nodes, h), dtype=float)
        forced = np.asarray(fam.forced_mean(s_nodes, h), dtype=float)
        stdf = np.asarray(fam.noise_std(s_nodes, h), dtype=float)
        return FastSchedule(s_nodes, h, offsets, mode, decay, forced, stdf)
    return FastSchedule(s_nodes, h, offsets, mode)


def _contract_g(gval: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """g @ xi for g of shape (P,m,d2) or (m,d2) and xi of shape (P,d2)."""
    if gval.ndim == 2:
        return xi @ gval.T
    return np.einsum("pmd,pd->pm", gval, xi)


def _advance_fast(model: SlowFastModel, sched: FastSchedule, j: int,
                  x_block: np.ndarray, y: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """One micro step of the fast variable (frozen x_block)."""
    if sched.mode == "exact":
        fam = model.linear_fast
        target = 0.0 if fam.target is None else fam.target(x_block)
        noise = xi if fam.gmat is None else xi @ fam.gmat.T
        return target + sched.decay[j] * (y - target) + sched.forced[j] \
            + sched.stdf[j] * noise
    s, hj = sched.s_nodes[j], sched.h[j]
    drift = model.f(s, x_block, y)
    gval = np.asarray(model.g(s, x_block, y))
    return y + hj * drift + math.sqrt(hj) * _contract_g(gval, xi)


def _check_blowup(arrs, paths: np.ndarray, t: float):
    for a in arrs:
        bad = ~np.all(np.abs(a) < _BLOWUP_LIMIT, axis=tuple(range(1, a.ndim)))
        if np.any(bad):
            raise BlowUpError(int(paths[np.flatnonzero(bad)[0]]), t)


# ---------------------------------------------------------------------------
# Coupled slow-fast simulation
# ---------------------------------------------------------------------------

def simulate_coupled(
    model: SlowFastModel,
    eps: float,
    x0,
    y0,
    grid: TimeGrid,
    substeps="auto",
    n_paths: int = 1000,
    seed: int = 0,
    fast_mode: str = "auto",
    antithetic: bool = False,
    store_fast: bool = True,
):
    """Multirate Euler-Maruyama for the coupled system.

    Within each slow step the slow state is held at its left endpoint while
    the fast state takes micro steps on the clock t/eps; the slow drift is
    accumulated along the micro nodes by the trapezoid rule (the fast
    transient is one-sided, so a left Riemann sum would bias it at first
    order in the micro step).  Returns (slow ensemble, fast ensemble); the
    fast one is None when store_fast=False.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    mode = _resolve_mode(model, fast_mode)
    times = grid.times()
    edges = times / eps
    sched = build_fast_schedule(model, edges, substeps, fast_mode=mode)
    K = grid.n_steps
    x0 = np.asarray(x0, dtype=float).reshape(model.n)
    y0 = np.asarray(y0, dtype=float).reshape(model.m)
    scheme = f"coupled/{mode}/sub={substeps}/anti={int(antithetic)}"

    xs = np.empty((n_paths, K + 1, model.n))
    ys = np.empty((n_paths, K + 1, model.m)) if store_fast else None

    doubles = sched.total * model.d2 + K * model.d1
    for paths in _path_chunks(n_paths, doubles):
        P = len(paths)
        xi2 = _normals(seed, 1, paths, sched.total * model.d2).reshape(P, sched.total, model.d2)
        dW1 = w1_increments(seed, paths, K, model.d1, grid.dt, antithetic=antithetic)
        X = np.broadcast_to(x0, (P, model.n)).copy()
        Y = np.broadcast_to(y0, (P, model.m)).copy()
        xs[paths, 0] = X
        if store_fast:
            ys[paths, 0] = Y
        b_prev = model.b(X, Y)
        for k in range(K):
            j0, j1 = sched.offsets[k], sched.offsets[k + 1]
            bacc = np.zeros((P, model.n))
            # trapezoid along the micro nodes (X frozen at the left endpoint)
            for j in range(j0, j1):
                Y = _advance_fast(model, sched, j, X, Y, xi2[:, j])
                b_new = model.b(X, Y)
                bacc += (0.5 * sched.h[j]) * (b_prev + b_new)
                b_prev = b_new
            sig = np.asarray(model.sigma(X, Y))
            X = X + eps * bacc + _contract_g(sig, dW1[:, k])
            b_prev = model.b(X, Y)
            _check_blowup((X, Y), paths, times[k + 1])
            xs[paths, k + 1] = X
            if store_fast:
                ys[paths, k + 1] = Y

    slow = PathEnsemble(grid, xs, seed, scheme)
    fast = PathEnsemble(grid, ys, seed, scheme) if store_fast else None
    return slow, fast


def simulate_averaged(
    averaged,
    eps: Optional[float],
    x0,
    grid: TimeGrid,
    n_paths: int = 1000,
    seed: int = 0,
    shared_w1: bool = False,
    antithetic: bool = False,
):
    """Euler-Maruyama for an averaged model.

    With shared_w1=True the run consumes exactly the W1 increments of a
    simulate_coupled run with the same (seed, grid, antithetic) arguments
    (strong-error coupling); otherwise it draws an independent substream.
    The general variant evaluates its drift/diffusion at t/eps.
    """
    times = grid.times()
    K = grid.n_steps
    n = averaged.n
    x0 = np.asarray(x0, dtype=float).reshape(n)
    channel = 0 if shared_w1 else 2
    scheme = f"averaged/{averaged.variant}/w1={'shared' if shared_w1 else 'indep'}/anti={int(antithetic)}"
    xs = np.empty((n_paths, K + 1, n))
    for paths in _path_chunks(n_paths, K * averaged.d1):
        P = len(paths)
        xi = _normals(seed, channel, paths, K * averaged.d1, antithetic=antithetic)
        dW = math.sqrt(grid.dt) * xi.reshape(P, K, averaged.d1)
        X = np.broadcast_to(x0, (P, n)).copy()
        xs[paths, 0] = X
        for k in range(K):
            drift = averaged.drift_at(times[k], eps, X)
            diff = np.asarray(averaged.diffusion_at(times[k], eps, X))
            X = X + drift * grid.dt + _contract_g(diff, dW[:, k])
            _check_blowup((X,), paths, times[k + 1])
            xs[paths, k + 1] = X
    return PathEnsemble(grid, xs, seed, scheme)


# ---------------------------------------------------------------------------
# Frozen equation
# ---------------------------------------------------------------------------

def simulate_frozen(
    frozen: FrozenModel,
    s: float,
    y0,
    horizon: float,
    n_steps: int = 64,
    n_paths: int = 1000,
    seed: int = 0,
    substeps="auto",
    fast_mode: str = "auto",
    eta: float = 0.25,
):
    """Ensemble of the frozen fast equation on [s, s+horizon] (real clock)."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    model = frozen.parent
    mode = _resolve_mode(model, fast_mode)
    grid = TimeGrid(s, s + horizon, n_steps)
    edges = grid.times()
    sched = build_fast_schedule(model, edges, substeps, fast_mode=mode, eta=eta)
    y0 = np.asarray(y0, dtype=float).reshape(model.m)
    scheme = f"frozen/{mode}/sub={substeps}"
    ys = np.empty((n_paths, n_steps + 1, model.m))
    for paths in _path_chunks(n_paths, sched.total * model.d2):
        P = len(paths)
        xi2 = _normals(seed, 1, paths, sched.total * model.d2).reshape(P, sched.total, model.d2)
        xb = frozen.x_block(P)
        Y = np.broadcast_to(y0, (P, model.m)).copy()
        ys[paths, 0] = Y
        for k in range(n_steps):
            for j in range(sched.offsets[k], sched.offsets[k + 1]):
                Y = _advance_fast(model, sched, j, xb, Y, xi2[:, j])
            _check_blowup((Y,), paths, edges[k + 1])
            ys[paths, k + 1] = Y
    return PathEnsemble(grid, ys, seed, scheme)


def simulate_y_variational(
    frozen: FrozenModel,
    s: float,
    y0,
    direction,
    horizon: float,
    n_steps: int = 64,
    n_paths: int = 1000,
    seed: int = 0,
):
    """Joint simulation of (Y, dY/dy0 . l); returns (times, E|Z|^4, stderr).

    Needs the model's analytic y-partials of f and g.  The variational
    factor is integrated by Euler-Maruyama on the same micro schedule as Y.
    """
    model = frozen.parent
    if not model.has_partials():
        raise ValueError("variational flow needs f_dy and g_dy on the model")
    grid = TimeGrid(s, s + horizon, n_steps)
    # fine micro steps: the Euler contraction factor must track exp(-h*alpha)
    # closely for the fourth-moment decay comparison to be meaningful
    sched = build_fast_schedule(model, grid.times(), "auto", fast_mode="em",
                                eta=0.05)
    l0 = np.asarray(direction, dtype=float).reshape(model.m)
    y0 = np.asarray(y0, dtype=float).reshape(model.m)
    fourth = np.zeros((n_paths, n_steps + 1))
    for paths in _path_chunks(n_paths, sched.total * model.d2):
        P = len(paths)
        xi2 = _normals(seed, 1, paths, sched.total * model.d2).reshape(P, sched.total, model.d2)
        xb = frozen.x_block(P)
        Y = np.broadcast_to(y0, (P, model.m)).copy()
        Z = np.broadcast_to(l0, (P, model.m)).copy()
        fourth[paths, 0] = np.linalg.norm(Z, axis=1) ** 4
        for k in range(n_steps):
            for j in range(sched.offsets[k], sched.offsets[k + 1]):
                sj, hj = sched.s_nodes[j], sched.h[j]
                fj = model.f(sj, xb, Y)
                gj = np.asarray(model.g(sj, xb, Y))
                fdy = np.asarray(model.f_dy(sj, xb, Y))      # (P, m, m)
                gdy = np.asarray(model.g_dy(sj, xb, Y))      # (P, m, d2, m)
                drift_z = np.einsum("pab,pb->pa", fdy, Z)
                gz = np.einsum("pmdb,pb->pmd", gdy, Z)
                noise = math.sqrt(hj) * xi2[:, j]
                Znew = Z + hj * drift_z + np.einsum("pmd,pd->pm", gz, noise)
                Y = Y + hj * fj + _contract_g(gj, noise)
                Z = Znew
            _check_blowup((Y, Z), paths, grid.times()[k + 1])
            fourth[paths, k + 1] = np.linalg.norm(Z, axis=1) ** 4
    mean = fourth.mean(axis=0)
    stderr = fourth.std(axis=0, ddof=1) / math.sqrt(n_paths)
    return grid.times(), mean, stderr
