"""Ellipsoidal set calculus.

An ellipsoid is represented by its center c and a symmetric positive
semi-definite shape matrix S as {x : (x - c)^T S^{-1} (x - c) <= 1}.
This module provides affine images, membership tests, and the
trace-minimal ellipsoidal outer bound of a Minkowski sum of ellipsoids.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TOL_SYM = 1e-10  # max absolute asymmetry tolerated in a shape matrix
EPS_PD = 1e-12  # smallest eigenvalue below which a shape counts as degenerate
EPS_TRACE = 1e-14  # trace below which a summand counts as a single point


class DegenerateEllipsoidError(ValueError):
    """Operation requires a strictly positive-definite shape matrix."""


def symmetrize(m: np.ndarray) -> np.ndarray:
    """Average a matrix with its transpose to suppress floating-point drift."""
    return 0.5 * (m + m.T)


def _scale_tol(m: np.ndarray) -> float:
    # TOL_SYM at unit scale, proportionally looser for large matrices where
    # rounding alone produces deviations ~ eps * |entries|
    return TOL_SYM * max(1.0, float(np.max(np.abs(m))) if m.size else 0.0)


def _as_shape_matrix(shape, dim: int | None = None) -> np.ndarray:
    s = np.asarray(shape, dtype=float)
    if s.ndim == 0:
        s = s.reshape(1, 1)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"shape matrix must be square, got {s.shape}")
    if dim is not None and s.shape[0] != dim:
        raise ValueError(f"shape matrix is {s.shape[0]}x{s.shape[0]}, expected {dim}x{dim}")
    asym = float(np.max(np.abs(s - s.T))) if s.size else 0.0
    if asym > _scale_tol(s):
        raise ValueError(f"shape matrix asymmetry {asym:.3e} exceeds {_scale_tol(s):.3e}")
    return symmetrize(s)


@dataclass(frozen=True)
class Ellipsoid:
    """Ellipsoid {x : (x - center)^T shape^{-1} (x - center) <= 1}.

    The shape matrix must be symmetric within ``TOL_SYM`` and positive
    semi-definite. Shapes whose smallest eigenvalue falls below ``EPS_PD``
    are flagged degenerate: they remain valid operands of sums and affine
    maps but reject membership queries.
    """

    center: np.ndarray
    shape: np.ndarray
    _eigmin: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        center = np.atleast_1d(np.asarray(self.center, dtype=float))
        if center.ndim != 1:
            raise ValueError("center must be a vector")
        shape = _as_shape_matrix(self.shape, dim=center.size)
        eigmin = float(np.linalg.eigvalsh(shape)[0]) if shape.size else 0.0
        if eigmin < -_scale_tol(shape):
            raise ValueError(f"shape matrix is not PSD (min eigenvalue {eigmin:.3e})")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "_eigmin", eigmin)

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def degenerate(self) -> bool:
        return self._eigmin < EPS_PD


@dataclass(frozen=True)
class EllipsoidSum:
    """An ordered family of ellipsoids standing for their Minkowski sum."""

    terms: tuple[Ellipsoid, ...]

    def __post_init__(self):
        terms = tuple(self.terms)
        if len(terms) < 1:
            raise ValueError("a sum needs at least one term")
        dim = terms[0].dim
        if any(t.dim != dim for t in terms):
            raise ValueError("all terms of a sum must share one dimension")
        object.__setattr__(self, "terms", terms)

    @property
    def dim(self) -> int:
        return self.terms[0].dim


def affine_image(e: Ellipsoid, a, b=None) -> Ellipsoid:
    """Image of an ellipsoid under x -> a @ x + b.

    Returns the ellipsoid with center ``a @ center + b`` and shape
    ``a @ shape @ a.T`` (symmetrized). Rank-deficient maps yield a
    degenerate result, which is allowed.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.shape[1] != e.dim:
        raise ValueError(f"map has {a.shape[1]} columns, ellipsoid dimension is {e.dim}")
    if b is None:
        b = np.zeros(a.shape[0])
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if b.size != a.shape[0]:
        raise ValueError(f"offset has size {b.size}, map has {a.shape[0]} rows")
    return Ellipsoid(a @ e.center + b, symmetrize(a @ e.shape @ a.T))


def contains(e: Ellipsoid, x, slack: float = 0.0) -> bool:
    """Membership test (x - c)^T S^{-1} (x - c) <= 1 + slack.

    Solved through a Cholesky factorization, never an explicit inverse.
    Degenerate ellipsoids are rejected: the quadratic form is unbounded
    on flat directions.
    """
    if slack < 0:
        raise ValueError("slack must be nonnegative")
    if e.degenerate:
        raise DegenerateEllipsoidError(
            "membership is undefined for a degenerate (flat) ellipsoid"
        )
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size != e.dim:
        raise ValueError(f"point has dimension {x.size}, expected {e.dim}")
    from scipy.linalg import cho_factor, cho_solve

    d = x - e.center
    q = float(d @ cho_solve(cho_factor(e.shape, lower=True), d))
    return q <= 1.0 + slack


def pair_sum_shape(s1, s2, beta: float) -> np.ndarray:
    """Shape of the two-term outer bound, (1 + 1/beta) S1 + (1 + beta) S2.

    For beta = sqrt(tr S1 / tr S2) the trace of the result equals
    (sqrt(tr S1) + sqrt(tr S2))^2, the minimum over beta > 0.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    s1 = _as_shape_matrix(s1)
    s2 = _as_shape_matrix(s2, dim=s1.shape[0])
    return symmetrize((1.0 + 1.0 / beta) * s1 + (1.0 + beta) * s2)


def trace_min_sum(s: EllipsoidSum) -> Ellipsoid:
    """Trace-minimal ellipsoidal outer bound of a Minkowski sum.

    The center is the sum of the term centers. The shape is
    ``(sum_k sqrt(tr S_k)) * (sum_k S_k / sqrt(tr S_k))`` over the terms
    with positive trace; zero-trace terms are points and shift only the
    center. A single term is returned unchanged.
    """
    terms = s.terms
    center = np.sum([t.center for t in terms], axis=0)
    if len(terms) == 1:
        return terms[0]
    live = [t.shape for t in terms if float(np.trace(t.shape)) > EPS_TRACE]
    if not live:
        return Ellipsoid(center, np.zeros((s.dim, s.dim)))
    roots = [np.sqrt(float(np.trace(m))) for m in live]
    shape = sum(roots) * sum(m / r for m, r in zip(live, roots))
    return Ellipsoid(center, symmetrize(shape))


def sample_boundary(e: Ellipsoid, count: int, seed: int) -> np.ndarray:
    """Deterministic points on the boundary of an ellipsoid.

    Uniform directions on the unit sphere are mapped through the Cholesky
    factor of the shape matrix, so the quadratic form of every sample is
    exactly one up to rounding. Returns an array of ``count`` rows.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if e.degenerate:
        raise DegenerateEllipsoidError("cannot sample the boundary of a flat ellipsoid")
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((count, e.dim))
    norms = np.linalg.norm(u, axis=1)
    while np.any(norms < 1e-12):  # essentially unreachable, kept for safety
        bad = norms < 1e-12
        u[bad] = rng.standard_normal((int(bad.sum()), e.dim))
        norms = np.linalg.norm(u, axis=1)
    u /= norms[:, None]
    chol = np.linalg.cholesky(e.shape)
    return e.center + u @ chol.T
