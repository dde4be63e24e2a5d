"""Sampled validation of the dissipativity and growth hypotheses.

The structural constant C is existential, so the validator reports the
smallest C making each inequality hold over the sample rather than
pass/fail against a fixed value.  Hard violations are only possible in the
pure-contraction direction (equal slow states), where the inequality has
no free constant: there the one-sided bound must hold with the exact
factors 2 and 3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .models import SlowFastModel

__all__ = ["AssumptionReport", "validate_assumptions"]


@dataclass(frozen=True)
class AssumptionReport:
    checked_points: int
    dissipativity_margin: float     # worst LHS + 2*alpha*|dy|^2 (equal-x samples)
    fitted_c: float                 # smallest C for the cross-x inequality
    growth_margin_f: float          # max |f| / (alpha*(1+|x|+|y|))
    growth_margin_g: float          # max ||g||^2 / (alpha*(1+|x|^2+|y|^2))
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return len(self.violations) == 0


def _pairs(rng, count, dim, halfwidth):
    return rng.uniform(-halfwidth, halfwidth, size=(count, dim))


def validate_assumptions(
    model: SlowFastModel,
    count: int = 400,
    state_halfwidth: float = 3.0,
    t_max: float = 20.0,
    seed: int = 0,
) -> AssumptionReport:
    """Sample random tuples and evaluate the one-sided dissipativity
    inequality (factors 2 and 3) and the linear-growth inequalities."""
    rng = np.random.default_rng(seed)
    ts = rng.uniform(0.0, t_max, size=count)
    x1 = _pairs(rng, count, model.n, state_halfwidth)
    x2 = _pairs(rng, count, model.n, state_halfwidth)
    # half the samples probe the pure-contraction direction x1 == x2
    equal_x = np.arange(count) % 2 == 0
    x2[equal_x] = x1[equal_x]
    y1 = _pairs(rng, count, model.m, state_halfwidth)
    y2 = _pairs(rng, count, model.m, state_halfwidth)

    worst_margin = -math.inf
    fitted_c = 0.0
    worst_f = 0.0
    worst_g = 0.0
    violations = []
    for i in range(count):
        t = float(ts[i])
        a = float(model.alpha(t))
        xa, xb = x1[i:i + 1], x2[i:i + 1]
        ya, yb = y1[i:i + 1], y2[i:i + 1]
        df = np.asarray(model.f(t, xa, ya))[0] - np.asarray(model.f(t, xb, yb))[0]
        ga = np.asarray(model.g(t, xa, ya))
        gb = np.asarray(model.g(t, xb, yb))
        dg = (ga[0] if ga.ndim == 3 else ga) - (gb[0] if gb.ndim == 3 else gb)
        dy = (ya - yb)[0]
        dx = (xa - xb)[0]
        lhs = 2.0 * float(dy @ df) + 3.0 * float(np.sum(dg * dg))
        contraction_excess = lhs + 2.0 * a * float(dy @ dy)
        if equal_x[i]:
            worst_margin = max(worst_margin, contraction_excess)
            tol = 1e-9 * a * (1.0 + float(dy @ dy))
            if contraction_excess > tol:
                violations.append((t, xa[0].copy(), xb[0].copy(),
                                   ya[0].copy(), yb[0].copy()))
        else:
            dx2 = float(dx @ dx)
            if dx2 > 1e-12:
                fitted_c = max(fitted_c, contraction_excess / (a * dx2))
        # growth lines at (t, x1, y1)
        fv = np.asarray(model.f(t, xa, ya))[0]
        gv = ga[0] if ga.ndim == 3 else ga
        nx, ny = float(np.linalg.norm(xa)), float(np.linalg.norm(ya))
        worst_f = max(worst_f, float(np.linalg.norm(fv)) / (a * (1.0 + nx + ny)))
        worst_g = max(worst_g, float(np.sum(gv * gv)) / (a * (1.0 + nx * nx + ny * ny)))

    if model.sigma_independent_of_y:
        # spot check: sigma must not move with y
        xs = _pairs(rng, 8, model.n, state_halfwidth)
        for x in xs:
            xb = x[None, :]
            s1 = np.asarray(model.sigma(xb, _pairs(rng, 1, model.m, state_halfwidth)))
            s2 = np.asarray(model.sigma(xb, _pairs(rng, 1, model.m, state_halfwidth)))
            if not np.allclose(s1, s2, atol=1e-12):
                violations.append((0.0, x.copy(), x.copy(),
                                   np.full(model.m, np.nan), np.full(model.m, np.nan)))
                break

    return AssumptionReport(
        checked_points=count,
        dissipativity_margin=float(worst_margin),
        fitted_c=float(max(fitted_c, 0.0)),
        growth_margin_f=float(worst_f),
        growth_margin_g=float(worst_g),
        violations=violations,
    )
