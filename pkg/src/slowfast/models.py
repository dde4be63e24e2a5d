"""Model data types and the registry of built-in slow-fast systems.

State conventions: path-vectorized evaluators take x of shape (P, n) and
y of shape (P, m) and return arrays with a leading path axis.  Constant
coefficient matrices may be returned without the path axis; the engine
broadcasts.  Time arguments are scalars (the engine never mixes times
within a call).

Coefficients are defined for all real t.  Negative times arise from
pullback burn-in; built-in families extend by their value pattern
(constant and periodic forcings by their formula, the decaying forcing by
even reflection, rate functions by even reflection).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad

from .rates import RateFunction

__all__ = [
    "Forcing",
    "LinearFastFamily",
    "SlowFastModel",
    "FrozenModel",
    "ModelDimensionError",
    "example1",
    "example2",
    "linear_nd",
    "REGISTRY",
    "build_model",
    "model_schemas",
]


class ModelDimensionError(ValueError):
    """Coefficient evaluator output has the wrong shape (construction-time)."""


# ---------------------------------------------------------------------------
# Forcing terms for the fast drift
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Forcing:
    """A bounded forcing phi(t), extended to all of R by its value pattern.

    kinds: 'constant' (value), 'sinusoid' (offset + amplitude*sin(2*pi*t/period)),
    'decaying' (scale*(1+|t|)**(-p)), 'custom' (callable; even reflection).
    """

    kind: str
    value: float = 0.0
    offset: float = 0.0
    amplitude: float = 0.0
    period: float = 1.0
    p: float = 1.0
    scale: float = 1.0
    evaluator: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("constant", "sinusoid", "decaying", "custom"):
            raise ValueError(f"unknown forcing kind {self.kind!r}")
        if self.kind == "sinusoid" and not self.period > 0:
            raise ValueError("period must be positive")
        if self.kind == "decaying" and not self.p > 0:
            raise ValueError("decay exponent p must be positive")
        if self.kind == "custom" and self.evaluator is None:
            raise ValueError("custom forcing needs an evaluator")

    @classmethod
    def constant(cls, value: float) -> "Forcing":
        return cls(kind="constant", value=value)

    @classmethod
    def sinusoid(cls, offset: float, amplitude: float, period: float) -> "Forcing":
        return cls(kind="sinusoid", offset=offset, amplitude=amplitude, period=period)

    @classmethod
    def decaying(cls, p: float, scale: float = 1.0) -> "Forcing":
        return cls(kind="decaying", p=p, scale=scale)

    @property
    def omega(self) -> float:
        return 2.0 * math.pi / self.period

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            out = np.full_like(t, self.value)
        elif self.kind == "sinusoid":
            out = self.offset + self.amplitude * np.sin(self.omega * t)
        elif self.kind == "decaying":
            out = self.scale * (1.0 + np.abs(t)) ** (-self.p)
        else:
            out = np.asarray(self.evaluator(np.abs(t)), dtype=float)
        return out if out.ndim else float(out)

    def bound(self) -> float:
        """sup |phi| over R."""
        if self.kind == "constant":
            return abs(self.value)
        if self.kind == "sinusoid":
            return abs(self.offset) + abs(self.amplitude)
        if self.kind == "decaying":
            return abs(self.scale)
        ts = np.linspace(0.0, 200.0, 20001)
        return float(np.max(np.abs(self(ts))))

    def decays(self) -> bool:
        return self.kind == "decaying"

    def is_periodic(self) -> bool:
        return self.kind == "constant" or self.kind == "sinusoid"

    def psi(self, t, rate: float = 1.0):
        """Exponential-kernel convolution: integral over (-inf, t] of
        rate*exp(-rate*(t-r))*phi(r) dr ... normalized so psi == value for a
        constant forcing.  Closed form for constant/sinusoid, quadrature
        otherwise."""
        a = rate
        t_arr = np.asarray(t, dtype=float)
        if self.kind == "constant":
            out = np.full_like(t_arr, self.value)
        elif self.kind == "sinusoid":
            w = self.omega / a
            out = self.offset + self.amplitude * (
                np.sin(self.omega * t_arr) - w * np.cos(self.omega * t_arr)
            ) / (1.0 + w * w)
        else:
            def one(tt):
                # split at u = max(t, 0): the |t - u| kink of the reflected tail
                cut = 40.0 / a
                v1, _ = quad(lambda u: a * math.exp(-a * u) * float(self(tt - u)),
                             0.0, max(tt, 0.0) if 0.0 < tt < cut else cut,
                             epsabs=1e-12, epsrel=1e-10, limit=200)
                v2 = 0.0
                if 0.0 < tt < cut:
                    v2, _ = quad(lambda u: a * math.exp(-a * u) * float(self(tt - u)),
                                 tt, cut, epsabs=1e-12, epsrel=1e-10, limit=200)
                return v1 + v2
            out = np.array([one(float(tt)) for tt in np.atleast_1d(t_arr)]).reshape(t_arr.shape)
        return out if out.ndim else float(out)

    def psi_zero(self, rate: float = 1.0) -> float:
        """psi(0) = integral over (-inf, 0] of the kernel against phi."""
        return float(self.psi(0.0, rate=rate))

    def psi_fn(self, t_max: float, rate: float = 1.0) -> Callable:
        """Fast vectorized psi on [0, t_max]: the closed form where one
        exists, a monotone interpolant of quadrature values otherwise."""
        if self.kind in ("constant", "sinusoid"):
            return lambda t: self.psi(t, rate=rate)
        from scipy.interpolate import PchipInterpolator

        nodes = np.concatenate([np.linspace(0.0, min(t_max, 4.0), 81),
                                np.geomspace(4.0, max(t_max, 4.001), 240)])
        nodes = np.unique(np.clip(nodes, 0.0, t_max))
        vals = np.asarray(self.psi(nodes, rate=rate), dtype=float)
        interp = PchipInterpolator(nodes, vals)
        return lambda t: interp(np.clip(t, 0.0, t_max))

    def step_conv(self, s, h, rate: float = 1.0):
        """integral over [0, h] of exp(-rate*(h-u)) * phi(s+u) du, vectorized
        over step starts s and widths h (closed forms where available)."""
        a = rate
        s = np.asarray(s, dtype=float)
        h = np.asarray(h, dtype=float)
        if self.kind == "constant":
            return self.value * (1.0 - np.exp(-a * h)) / a
        if self.kind == "sinusoid":
            w = self.omega
            e = np.exp(-a * h)
            osc = (
                a * np.sin(w * (s + h)) - w * np.cos(w * (s + h))
                - e * (a * np.sin(w * s) - w * np.cos(w * s))
            ) / (a * a + w * w)
            return self.offset * (1.0 - e) / a + self.amplitude * osc
        # composite Simpson with 8 panels per step: integrand is smooth
        nodes = np.linspace(0.0, 1.0, 9)
        u = h[..., None] * nodes
        vals = np.exp(-a * (h[..., None] - u)) * self(s[..., None] + u)
        weights = np.array([1.0, 4.0, 2.0, 4.0, 2.0, 4.0, 2.0, 4.0, 1.0]) / 24.0
        return (vals * weights).sum(axis=-1) * h


# ---------------------------------------------------------------------------
# Linear-Gaussian fast dynamics (exact transitions)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearFastFamily:
    """Frozen fast dynamics dY = (-a(t)*(Y - target(x)) + c(t)) dt + g(t) dW
    with Gaussian transition kernels available in closed form.

    noise: 'matched' means g(t) g(t)^T = a(t) * G G^T (the transition noise
    variance factor is (1 - decay^2)/2); 'const' means g(t) = G with a a
    constant rate (variance factor (1 - decay^2)/(2*a0)).
    """

    rate: RateFunction
    noise: str = "matched"
    forcing: Optional[Forcing] = None
    gmat: Optional[np.ndarray] = None        # (m, d2); None means scalar 1
    target: Optional[Callable] = field(default=None, compare=False)  # x -> (P, m)

    def __post_init__(self):
        if self.noise not in ("matched", "const"):
            raise ValueError("noise must be 'matched' or 'const'")
        if self.noise == "const" and self.rate.kind != "constant":
            raise ValueError("const-noise exact transitions need a constant rate")

    def decay(self, s, h):
        """exp(-A(s, s+h)) elementwise."""
        s = np.asarray(s, dtype=float)
        h = np.asarray(h, dtype=float)
        return np.exp(-self.rate.integral(s, s + h))

    def noise_std(self, s, h):
        """Scalar std factor of the transition noise (times G)."""
        d = self.decay(s, h)
        if self.noise == "matched":
            var = 0.5 * (1.0 - d * d)
        else:
            var = (1.0 - d * d) / (2.0 * self.rate.c0)
        return np.sqrt(var)

    def forced_mean(self, s, h):
        """Deterministic forcing contribution to the step mean."""
        if self.forcing is None:
            return np.zeros(np.broadcast(np.asarray(s), np.asarray(h)).shape)
        if self.rate.kind != "constant":
            raise ValueError("forcing with non-constant rate is not supported")
        return self.forcing.step_conv(s, h, rate=self.rate.c0)

    def stationary_var_factor(self) -> float:
        if self.noise == "matched":
            return 0.5
        return 1.0 / (2.0 * self.rate.c0)


# ---------------------------------------------------------------------------
# Model types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SlowFastModel:
    """Coefficient fields of the coupled system.

    b(x, y) -> (P, n), sigma(x, y) -> (P, n, d1) or (n, d1),
    f(t, x, y) -> (P, m), g(t, x, y) -> (P, m, d2) or (m, d2).
    Optional partials f_dy -> (P, m, m) and g_dy -> (P, m, d2, m) enable the
    variational flow and Poisson residual checks.
    """

    n: int
    m: int
    d1: int
    d2: int
    b: Callable = field(compare=False)
    sigma: Callable = field(compare=False)
    f: Callable = field(compare=False)
    g: Callable = field(compare=False)
    alpha: RateFunction = field(default_factory=lambda: RateFunction.constant(1.0))
    sigma_independent_of_y: bool = False
    fast_linear_gaussian: bool = False
    linear_fast: Optional[LinearFastFamily] = field(default=None, compare=False)
    f_dy: Optional[Callable] = field(default=None, compare=False)
    g_dy: Optional[Callable] = field(default=None, compare=False)
    name: str = "custom"
    tau: Optional[float] = None               # forcing period, when periodic

    def __post_init__(self):
        for d, label in ((self.n, "n"), (self.m, "m"), (self.d1, "d1"), (self.d2, "d2")):
            if not (isinstance(d, int) and d >= 1):
                raise ModelDimensionError(f"dimension {label} must be a positive int")
        x = np.zeros((2, self.n))
        y = np.zeros((2, self.m))
        checks = [
            ("b", np.asarray(self.b(x, y)), (2, self.n)),
            ("f", np.asarray(self.f(0.0, x, y)), (2, self.m)),
        ]
        for label, out, want in checks:
            if out.shape != want:
                raise ModelDimensionError(
                    f"{label} returned shape {out.shape}, expected {want}"
                )
        sig = np.asarray(self.sigma(x, y))
        if sig.shape not in ((2, self.n, self.d1), (self.n, self.d1)):
            raise ModelDimensionError(
                f"sigma returned shape {sig.shape}, expected (P,{self.n},{self.d1})"
            )
        gv = np.asarray(self.g(0.0, x, y))
        if gv.shape not in ((2, self.m, self.d2), (self.m, self.d2)):
            raise ModelDimensionError(
                f"g returned shape {gv.shape}, expected (P,{self.m},{self.d2})"
            )
        if self.fast_linear_gaussian and self.linear_fast is None:
            raise ModelDimensionError(
                "fast_linear_gaussian requires a LinearFastFamily"
            )

    def frozen(self, x) -> "FrozenModel":
        x = np.asarray(x, dtype=float)
        if x.size != self.n:
            raise ModelDimensionError(
                f"frozen x has {x.size} components, expected {self.n}"
            )
        return FrozenModel(parent=self, x=x.reshape(self.n))

    def has_partials(self) -> bool:
        return self.f_dy is not None and self.g_dy is not None


@dataclass(frozen=True)
class FrozenModel:
    """The fast equation with the slow state held at x."""

    parent: SlowFastModel
    x: np.ndarray

    def __post_init__(self):
        if np.asarray(self.x).shape != (self.parent.n,):
            raise ModelDimensionError(
                f"frozen x has shape {np.asarray(self.x).shape}, expected ({self.parent.n},)"
            )

    @property
    def m(self) -> int:
        return self.parent.m

    @property
    def d2(self) -> int:
        return self.parent.d2

    @property
    def alpha(self) -> RateFunction:
        return self.parent.alpha

    def x_block(self, n_paths: int) -> np.ndarray:
        return np.broadcast_to(self.x, (n_paths, self.parent.n))

    def f(self, t, y):
        return self.parent.f(t, self.x_block(y.shape[0]), y)

    def g(self, t, y):
        return self.parent.g(t, self.x_block(y.shape[0]), y)


# ---------------------------------------------------------------------------
# Built-in families
# ---------------------------------------------------------------------------

def example1(c0: float = 1.0, beta: float = 0.0) -> SlowFastModel:
    """Scalar benchmark: slow drift is the fast state, fast state is a
    time-rescaled OU with rate alpha(t) = c0*(1+t)**beta and noise matched so
    the quasi-stationary law is N(0, 1/2)."""
    alpha = RateFunction.power(c0, beta) if beta != 0.0 else RateFunction.constant(c0)

    def b(x, y):
        return y.copy()

    def sigma(x, y):
        return np.ones((1, 1))

    def f(t, x, y):
        return -alpha(t) * y

    def g(t, x, y):
        return math.sqrt(alpha(t)) * np.ones((1, 1))

    def f_dy(t, x, y):
        return -alpha(t) * np.ones((y.shape[0], 1, 1))

    def g_dy(t, x, y):
        return np.zeros((y.shape[0], 1, 1, 1))

    fam = LinearFastFamily(rate=alpha, noise="matched")
    return SlowFastModel(
        n=1, m=1, d1=1, d2=1, b=b, sigma=sigma, f=f, g=g, alpha=alpha,
        sigma_independent_of_y=True, fast_linear_gaussian=True, linear_fast=fam,
        f_dy=f_dy, g_dy=g_dy, name=f"example1(c0={c0},beta={beta})",
    )


def example2(forcing: Forcing) -> SlowFastModel:
    """Scalar benchmark with mean-reverting forced fast state.

    Fast dynamics relax at unit rate toward the forcing phi(t); the fast
    noise enters at the standard eps**(-1/2) multi-scale intensity so the
    quasi-stationary law is N(psi(t), 1/2).  (Some statements of this model
    print the noise as eps**(+1/2); the printed solution and its covariance
    only hold for the eps**(-1/2) scaling, which is what is implemented.)
    """
    alpha = RateFunction.constant(1.0)

    def b(x, y):
        return y.copy()

    def sigma(x, y):
        return np.ones((1, 1))

    def f(t, x, y):
        return forcing(t) - y

    def g(t, x, y):
        return np.ones((1, 1))

    def f_dy(t, x, y):
        return -np.ones((y.shape[0], 1, 1))

    def g_dy(t, x, y):
        return np.zeros((y.shape[0], 1, 1, 1))

    fam = LinearFastFamily(rate=alpha, noise="const", forcing=forcing)
    tau = forcing.period if forcing.kind == "sinusoid" else None
    return SlowFastModel(
        n=1, m=1, d1=1, d2=1, b=b, sigma=sigma, f=f, g=g, alpha=alpha,
        sigma_independent_of_y=True, fast_linear_gaussian=True, linear_fast=fam,
        f_dy=f_dy, g_dy=g_dy, name=f"example2({forcing.kind})", tau=tau,
    )


def linear_nd(
    n: int = 2,
    m: int = 2,
    c0: float = 1.0,
    beta: float = 0.0,
    slow_coupling: float = 0.5,
    sigma_scale: float = 1.0,
    sigma_y_coupling: float = 0.0,
) -> SlowFastModel:
    """Multi-dimensional linear family: the fast state relaxes (matched-noise
    OU, rate alpha) and drives the slow drift through a fixed coupling
    matrix.  sigma_y_coupling != 0 makes the slow diffusion depend on y
    (weak-averaging territory; the strong precondition then fails)."""
    alpha = RateFunction.power(c0, beta) if beta != 0.0 else RateFunction.constant(c0)
    rng = np.random.default_rng(7)
    dmat = slow_coupling * rng.standard_normal((n, m)) / math.sqrt(m)
    sig0 = sigma_scale * np.eye(n)

    def b(x, y):
        return y @ dmat.T

    if sigma_y_coupling == 0.0:
        def sigma(x, y):
            return sig0
        sigma_indep = True
    else:
        def sigma(x, y):
            bump = 1.0 + sigma_y_coupling * np.tanh(y[:, :1])
            return sig0 * bump[..., None]
        sigma_indep = False

    def f(t, x, y):
        return -alpha(t) * y

    def g(t, x, y):
        return math.sqrt(alpha(t)) * np.eye(m)

    def f_dy(t, x, y):
        return -alpha(t) * np.broadcast_to(np.eye(m), (y.shape[0], m, m)).copy()

    def g_dy(t, x, y):
        return np.zeros((y.shape[0], m, m, m))

    fam = LinearFastFamily(rate=alpha, noise="matched", gmat=np.eye(m))
    return SlowFastModel(
        n=n, m=m, d1=n, d2=m, b=b, sigma=sigma, f=f, g=g, alpha=alpha,
        sigma_independent_of_y=sigma_indep, fast_linear_gaussian=True,
        linear_fast=fam, f_dy=f_dy, g_dy=g_dy,
        name=f"linear_nd(n={n},m={m})",
    )


# ---------------------------------------------------------------------------
# Registry (drives the CLI and the config loader)
# ---------------------------------------------------------------------------

def _build_example1(params):
    return example1(c0=params.get("c0", 1.0), beta=params.get("beta", 0.0))


def _build_example2_decaying(params):
    forcing = Forcing.decaying(p=params.get("p", 1.0), scale=params.get("scale", 1.0))
    return example2(forcing)


def _build_example2_periodic(params):
    forcing = Forcing.sinusoid(
        offset=params.get("offset", 1.0),
        amplitude=params.get("amplitude", 0.5),
        period=params.get("period", 1.0),
    )
    return example2(forcing)


def _build_example2_constant(params):
    return example2(Forcing.constant(params.get("value", 1.0)))


def _build_linear_nd(params):
    return linear_nd(
        n=int(params.get("n", 2)),
        m=int(params.get("m", 2)),
        c0=params.get("c0", 1.0),
        beta=params.get("beta", 0.0),
        slow_coupling=params.get("slow_coupling", 0.5),
        sigma_scale=params.get("sigma_scale", 1.0),
        sigma_y_coupling=params.get("sigma_y_coupling", 0.0),
    )


REGISTRY = {
    "example1": {
        "build": _build_example1,
        "params": {"c0": "float>0 (default 1.0)", "beta": "float>-1 (default 0.0)"},
        "doc": "scalar benchmark, rate c0*(1+t)^beta, quasi-stationary N(0,1/2)",
    },
    "example2-decaying": {
        "build": _build_example2_decaying,
        "params": {"p": "float>0 (default 1.0)", "scale": "float (default 1.0)"},
        "doc": "forced scalar benchmark, forcing scale*(1+|t|)^-p -> 0",
    },
    "example2-periodic": {
        "build": _build_example2_periodic,
        "params": {
            "offset": "float (default 1.0)",
            "amplitude": "float (default 0.5)",
            "period": "float>0 (default 1.0)",
        },
        "doc": "forced scalar benchmark, sinusoidal forcing of given period",
    },
    "example2-constant": {
        "build": _build_example2_constant,
        "params": {"value": "float (default 1.0)"},
        "doc": "forced scalar benchmark, constant forcing",
    },
    "linear-nd": {
        "build": _build_linear_nd,
        "params": {
            "n": "int>=1 (default 2)",
            "m": "int>=1 (default 2)",
            "c0": "float>0 (default 1.0)",
            "beta": "float>-1 (default 0.0)",
            "slow_coupling": "float (default 0.5)",
            "sigma_scale": "float (default 1.0)",
            "sigma_y_coupling": "float (default 0.0; nonzero couples sigma to y)",
        },
        "doc": "n/m-dimensional linear family with matched-noise fast OU",
    },
    "custom": {
        "build": None,
        "params": {"-": "library-only: construct SlowFastModel in Python"},
        "doc": "user-supplied coefficient evaluators (not loadable from config)",
    },
}


def build_model(model_id: str, params: Optional[dict] = None) -> SlowFastModel:
    if model_id not in REGISTRY:
        raise KeyError(f"unknown model id {model_id!r}; see list_models()")
    entry = REGISTRY[model_id]
    if entry["build"] is None:
        raise ValueError(f"model {model_id!r} cannot be built from a config")
    return entry["build"](params or {})


def model_schemas() -> dict:
    return {mid: {"params": e["params"], "doc": e["doc"]} for mid, e in REGISTRY.items()}
