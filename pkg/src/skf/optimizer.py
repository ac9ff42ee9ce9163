"""Scalar minimization over the positive half-line.

The filtering step needs the minimizer of a cost J(beta) for beta > 0.
J diverges at both ends of the half-line for non-degenerate inputs, so
the search runs in t = log(beta), where a golden-section bracket is
finite and the geometry of the problem is symmetric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
MAX_EXPANSIONS = 5
T_LIMIT = 700.0  # exp(t) stays within double range


class OptimizerError(RuntimeError):
    """Scalar search failed; the message carries bracket diagnostics."""


@dataclass(frozen=True)
class ScalarProblem:
    """A one-dimensional minimization of ``objective(beta)`` for beta > 0.

    ``bracket`` is given in t = log(beta) space.
    """

    objective: Callable[[float], float]
    bracket: tuple[float, float] = (-20.0, 20.0)
    tol: float = 1e-8
    max_iters: int = 200

    def __post_init__(self):
        lo, hi = self.bracket
        if not lo < hi:
            raise ValueError(f"bracket must satisfy lo < hi, got {self.bracket}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


def _eval(objective: Callable[[float], float], t: float) -> float:
    val = float(objective(math.exp(t)))
    if not math.isfinite(val):
        raise OptimizerError(
            f"objective is not finite at beta = exp({t:.6g}) = {math.exp(t):.6g}"
        )
    return val


def _golden(objective, lo: float, hi: float, tol: float, max_iters: int):
    """Golden-section pass on [lo, hi]; returns (t*, f*, iters, f_lo, f_hi)."""
    f_lo = _eval(objective, lo)
    f_hi = _eval(objective, hi)
    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    f_c = _eval(objective, c)
    f_d = _eval(objective, d)
    iters = 0
    while (b - a) > tol and iters < max_iters:
        if f_c < f_d:
            b, d, f_d = d, c, f_c
            c = b - INV_PHI * (b - a)
            f_c = _eval(objective, c)
        else:
            a, c, f_c = c, d, f_d
            d = a + INV_PHI * (b - a)
            f_d = _eval(objective, d)
        iters += 1
    t_star = 0.5 * (a + b)
    return t_star, _eval(objective, t_star), iters, f_lo, f_hi


def minimize_scalar(p: ScalarProblem) -> tuple[float, float, int]:
    """Minimize ``p.objective`` over beta > 0 by golden section in log space.

    If the minimum sits at a bracket endpoint the bracket is doubled on
    that side, up to ``MAX_EXPANSIONS`` times; descent that still reaches
    the endpoint afterwards is reported as an error. Returns
    ``(beta_star, value, iterations)`` and is bit-deterministic in its
    inputs.
    """
    lo, hi = p.bracket
    total_iters = 0
    for _ in range(MAX_EXPANSIONS + 1):
        t_star, f_star, iters, f_lo, f_hi = _golden(
            p.objective, lo, hi, p.tol, p.max_iters
        )
        total_iters += iters
        # Expand only on strict descent into an endpoint; a flat objective
        # must terminate rather than chase equal values outward.
        margin = 1e-12 * max(1.0, abs(f_star))
        if f_lo < f_star - margin and t_star - lo < 4.0 * p.tol:
            new_lo = max(lo - (hi - lo), -T_LIMIT)
            if new_lo == lo:
                break
            lo = new_lo
            continue
        if f_hi < f_star - margin and hi - t_star < 4.0 * p.tol:
            new_hi = min(hi + (hi - lo), T_LIMIT)
            if new_hi == hi:
                break
            hi = new_hi
            continue
        return math.exp(t_star), f_star, total_iters
    raise OptimizerError(
        "descent reaches the bracket endpoint after "
        f"{MAX_EXPANSIONS} doublings (bracket [{lo:.6g}, {hi:.6g}] in log space); "
        "the objective appears unbounded below on the half-line"
    )
