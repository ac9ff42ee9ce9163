"""Set-membership Kalman filter recursion and a first-order EKF baseline.

Each belief carries three objects: a center estimate, a covariance C for
the Gaussian error component, and a shape matrix S bounding the set of
possible means. Prediction pushes all three through the process model,
bounding the Minkowski sum of mapped uncertainty ellipsoids by its
trace-minimal outer ellipsoid. The update blends the prior with the
measurement through a gain that is adaptive in a pairing parameter beta,
chosen each step by minimizing a weighted total-uncertainty cost

    J(beta) = (1 - eta) tr C_plus(beta) + eta tr S_plus(beta).

At eta = 0 the center and covariance recursions coincide exactly with
the extended Kalman filter.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .ellipsoid import EPS_TRACE, Ellipsoid, EllipsoidSum, symmetrize, trace_min_sum
from .model import (
    Linearization,
    NonlinearModel,
    linearize_measurement,
    linearize_process,
    wrap_angles,
)
from .optimizer import OptimizerError, ScalarProblem, minimize_scalar

HYGIENE_TOL = 1e-10  # asymmetry / PD deficits beyond this are treated as bugs
COV_FLOOR_DEFAULT = 1e-14

# Diagnostic counter: number of times a covariance had to be lifted back
# onto the PD cone. Reset freely; long runs with tiny measurement noise
# can underflow positive definiteness in floating point.
cov_floor_events = 0


def reset_floor_counter() -> None:
    global cov_floor_events
    cov_floor_events = 0


class FilterError(RuntimeError):
    """Filter step failure; carries the step index when known."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


class SingularInnovationError(FilterError):
    """The innovation-covariance bracket of the gain is not invertible."""


class NumericsError(FilterError):
    """A covariance or shape matrix violated symmetry/PD beyond tolerance."""


@dataclass(frozen=True)
class StateBelief:
    """State estimate: center, Gaussian covariance, and mean-set shape."""

    center: np.ndarray
    cov: np.ndarray
    shape: np.ndarray
    kind: Literal["prior", "posterior"]
    step: int

    def __post_init__(self):
        center = np.atleast_1d(np.asarray(self.center, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        shape = np.atleast_2d(np.asarray(self.shape, dtype=float))
        n = center.size
        if cov.shape != (n, n) or shape.shape != (n, n):
            raise ValueError("cov and shape must be square matrices matching the center")
        if self.kind not in ("prior", "posterior"):
            raise ValueError(f"kind must be 'prior' or 'posterior', got {self.kind!r}")
        for name, mat in (("cov", cov), ("shape", shape)):
            asym = float(np.max(np.abs(mat - mat.T)))
            if asym > _hygiene_bound(mat):
                raise ValueError(
                    f"{name} asymmetry {asym:.3e} exceeds {_hygiene_bound(mat):.3e}"
                )
        cov = symmetrize(cov)
        shape = symmetrize(shape)
        if float(np.linalg.eigvalsh(cov)[0]) <= 0.0:
            raise ValueError("cov must be strictly positive-definite")
        if float(np.linalg.eigvalsh(shape)[0]) < -_hygiene_bound(shape):
            raise ValueError("shape must be positive semi-definite")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "shape", shape)

    @property
    def dim(self) -> int:
        return self.center.size

    def mean_set(self) -> Ellipsoid:
        """The ellipsoid of candidate means, centered at the estimate."""
        return Ellipsoid(self.center, self.shape)


@dataclass(frozen=True)
class FilterConfig:
    """Weighting and beta-search settings for the update step."""

    eta: float = 0.5
    beta_bracket: tuple[float, float] = (-20.0, 20.0)
    beta_tol: float = 1e-8
    max_iters: int = 200
    cov_floor: float = COV_FLOOR_DEFAULT

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        lo, hi = self.beta_bracket
        if not lo < hi:
            raise ValueError("beta_bracket must satisfy lo < hi")
        if not self.beta_tol > 0:
            raise ValueError("beta_tol must be positive")


@dataclass(frozen=True)
class GainReport:
    """Diagnostics of one update: gain, chosen beta, and final traces."""

    gain: np.ndarray
    beta_star: float
    cost_at_star: float
    trace_cov: float
    trace_shape: float


def _hygiene_bound(mat: np.ndarray) -> float:
    # 1e-10 at unit scale; proportionally looser for large matrices, where
    # float products of symmetric factors carry asymmetry ~ eps * |entries|.
    return HYGIENE_TOL * max(1.0, float(np.max(np.abs(mat))))


def _condition_cov(mat: np.ndarray, floor: float, step: int, what: str) -> np.ndarray:
    """Symmetrize and floor a covariance; loud failure beyond hygiene tolerance."""
    global cov_floor_events
    bound = _hygiene_bound(mat)
    asym = float(np.max(np.abs(mat - mat.T)))
    if asym > bound:
        raise NumericsError(f"{what} asymmetry {asym:.3e} exceeds {bound:.3e}", step)
    mat = symmetrize(mat)
    eigmin = float(np.linalg.eigvalsh(mat)[0])
    if eigmin < -bound:
        raise NumericsError(f"{what} min eigenvalue {eigmin:.3e} below -{bound:.3e}", step)
    if eigmin < floor:
        mat = mat + (1.001 * floor - eigmin) * np.eye(mat.shape[0])
        cov_floor_events += 1
    return mat


def _condition_psd(mat: np.ndarray, step: int, what: str) -> np.ndarray:
    """Symmetrize a shape matrix and clamp rounding-level negative spectrum."""
    bound = _hygiene_bound(mat)
    asym = float(np.max(np.abs(mat - mat.T)))
    if asym > bound:
        raise NumericsError(f"{what} asymmetry {asym:.3e} exceeds {bound:.3e}", step)
    mat = symmetrize(mat)
    eigmin = float(np.linalg.eigvalsh(mat)[0])
    if eigmin < -bound:
        raise NumericsError(f"{what} min eigenvalue {eigmin:.3e} below -{bound:.3e}", step)
    if eigmin < 0.0:
        mat = mat - eigmin * np.eye(mat.shape[0])
    return mat


def skf_predict(
    belief: StateBelief, m: NonlinearModel, u: np.ndarray, k: int
) -> StateBelief:
    """Push a posterior belief through the process model to the next prior.

    The covariance propagates as f_x C f_x^T + f_w C_u f_w^T; the center
    through the full nonlinear map; the shape as the trace-minimal outer
    bound of the mapped mean-set ellipsoid plus every mapped bounded
    process ellipsoid.
    """
    if belief.kind != "posterior":
        raise ValueError("prediction starts from a posterior belief")
    lin = linearize_process(m, belief.center, u, k)
    f_x, f_w = lin.f_x, lin.f_w

    c_u = np.atleast_2d(np.asarray(m.process_noise_cov(k), dtype=float))
    cov = f_x @ belief.cov @ f_x.T + f_w @ c_u @ f_w.T
    cov = _condition_cov(cov, COV_FLOOR_DEFAULT, k, "predicted cov")

    w0, a0, _, _ = m.zero_disturbances(k)
    center = np.atleast_1d(np.asarray(m.f(belief.center, u, w0, a0, k), dtype=float))
    if not np.all(np.isfinite(center)):
        raise FilterError(f"predicted center is not finite: {center}", k)

    n = m.state_dim
    terms = [Ellipsoid(np.zeros(n), symmetrize(f_x @ belief.shape @ f_x.T))]
    for i, provider in enumerate(m.ubb_process_shapes):
        s_i = np.atleast_2d(np.asarray(provider(k), dtype=float))
        f_ai = lin.f_a[i]
        terms.append(Ellipsoid(np.zeros(n), symmetrize(f_ai @ s_i @ f_ai.T)))
    shape = trace_min_sum(EllipsoidSum(tuple(terms))).shape
    shape = _condition_psd(shape, k, "predicted shape")

    return StateBelief(center, cov, shape, "prior", k)


def _gain(
    belief: StateBelief,
    lin: Linearization,
    eta: float,
    p_prior: float,
    q_meas: float,
) -> np.ndarray:
    """Stationary gain for given inflation coefficients on the two set terms."""
    h_x, h_v, h_b = lin.h_x, lin.h_v, lin.h_b
    c_z, s_z = lin.meas_noise_cov, lin.meas_ubb_shape
    c_minus, s_minus = belief.cov, belief.shape

    cross = (1.0 - eta) * (c_minus @ h_x.T) + eta * p_prior * (s_minus @ h_x.T)
    bracket = (1.0 - eta) * (h_x @ c_minus @ h_x.T + h_v @ c_z @ h_v.T) + eta * (
        p_prior * (h_x @ s_minus @ h_x.T) + q_meas * (h_b @ s_z @ h_b.T)
    )
    bracket = symmetrize(bracket)
    try:
        gain = np.linalg.solve(bracket, cross.T).T
    except np.linalg.LinAlgError as err:
        raise SingularInnovationError(
            "innovation-covariance bracket is singular "
            f"(condition number {np.linalg.cond(bracket):.3e}): {err}",
            belief.step,
        ) from err
    if not np.all(np.isfinite(gain)):
        raise SingularInnovationError(
            "innovation-covariance bracket is numerically deficient "
            f"(condition number {np.linalg.cond(bracket):.3e})",
            belief.step,
        )
    return gain


def skf_gain(
    belief: StateBelief, lin: Linearization, cfg: FilterConfig, beta: float
) -> np.ndarray:
    """Adaptive gain for a given beta.

    K = [(1-eta) C H_x^T + eta (1+1/beta) S H_x^T] B^{-1} with the bracket
    B = (1-eta)(H_x C H_x^T + H_v C_z H_v^T)
        + eta [(1+1/beta) H_x S H_x^T + (1+beta) H_b S_z H_b^T],
    computed by a linear solve against the symmetrized bracket.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    return _gain(belief, lin, cfg.eta, 1.0 + 1.0 / beta, 1.0 + beta)


def _update_terms(belief: StateBelief, lin: Linearization, gain: np.ndarray):
    """Joseph-form covariance and the two shape building blocks for a gain."""
    n = belief.dim
    ikh = np.eye(n) - gain @ lin.h_x
    cov_plus = ikh @ belief.cov @ ikh.T + gain @ lin.h_v @ lin.meas_noise_cov @ lin.h_v.T @ gain.T
    t_prior = ikh @ belief.shape @ ikh.T
    t_meas = gain @ lin.h_b @ lin.meas_ubb_shape @ lin.h_b.T @ gain.T
    return cov_plus, t_prior, t_meas


def _pair_shape(t_prior: np.ndarray, t_meas: np.ndarray, beta: float) -> np.ndarray:
    """Two-term outer bound with zero-trace terms dropped (points add nothing)."""
    tr1 = float(np.trace(t_prior))
    tr2 = float(np.trace(t_meas))
    if tr1 <= EPS_TRACE and tr2 <= EPS_TRACE:
        return np.zeros_like(t_prior)
    if tr1 <= EPS_TRACE:
        return t_meas
    if tr2 <= EPS_TRACE:
        return t_prior
    return (1.0 + 1.0 / beta) * t_prior + (1.0 + beta) * t_meas


def skf_update(
    belief: StateBelief, y: np.ndarray, m: NonlinearModel, cfg: FilterConfig, k: int
) -> tuple[StateBelief, GainReport]:
    """Fold a measurement into a prior belief.

    beta is chosen by minimizing the composite cost J(beta) with the gain
    K(beta) substituted inside both trace terms. At eta = 0 the cost does
    not depend on beta; the search is skipped and beta = 1 is reported by
    convention. The same convention applies when every bounded term is
    zero and the shape recursion has collapsed to the zero matrix.
    """
    if belief.kind != "prior":
        raise ValueError("update starts from a prior belief")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.size != m.meas_dim:
        raise ValueError(f"measurement has dimension {y.size}, expected {m.meas_dim}")
    lin = linearize_measurement(m, belief.center, k)
    eta = cfg.eta

    def cost(beta: float) -> float:
        # The search objective keeps the pure pair formula: it is continuous
        # in beta, whereas the point-dropping rule applied to the final shape
        # would step by (1 + beta) * trace at the drop threshold.
        gain = skf_gain(belief, lin, cfg, beta)
        cov_plus, t_prior, t_meas = _update_terms(belief, lin, gain)
        tr_shape = (1.0 + 1.0 / beta) * float(np.trace(t_prior)) + (1.0 + beta) * float(
            np.trace(t_meas)
        )
        return (1.0 - eta) * float(np.trace(cov_plus)) + eta * tr_shape

    # A set term with (essentially) zero trace is a single point: it adds
    # nothing to the pair bound and must not inflate the gain either, or
    # the beta search would chase an inflation factor of 1 toward the
    # bracket boundary.
    prior_set_live = float(np.trace(belief.shape)) > EPS_TRACE
    meas_set_live = (
        float(np.trace(lin.h_b @ lin.meas_ubb_shape @ lin.h_b.T)) > EPS_TRACE
    )
    beta_star = 1.0
    if eta == 0.0:
        # Cost independent of beta: the gain is exactly the EKF gain.
        gain = skf_gain(belief, lin, cfg, beta_star)
    elif prior_set_live and meas_set_live:
        problem = ScalarProblem(
            objective=cost,
            bracket=cfg.beta_bracket,
            tol=cfg.beta_tol,
            max_iters=cfg.max_iters,
        )
        try:
            beta_star, _, _ = minimize_scalar(problem)
        except OptimizerError as err:
            raise FilterError(
                f"beta search failed on bracket {cfg.beta_bracket}: {err}", k
            ) from err
        gain = skf_gain(belief, lin, cfg, beta_star)
    else:
        # At most one set term is live; its inflation factor collapses to 1.
        gain = _gain(
            belief,
            lin,
            eta,
            1.0 if prior_set_live else 0.0,
            1.0 if meas_set_live else 0.0,
        )
    w0, a0, v0, b0 = m.zero_disturbances(k)
    predicted_y = np.atleast_1d(np.asarray(m.h(belief.center, v0, b0, k), dtype=float))
    innovation = wrap_angles(y - predicted_y, m.angular_mask)
    center = belief.center + gain @ innovation
    if not np.all(np.isfinite(center)):
        raise FilterError(f"updated center is not finite: {center}", k)

    cov_plus, t_prior, t_meas = _update_terms(belief, lin, gain)
    shape_plus = _pair_shape(t_prior, t_meas, beta_star)
    cov_plus = _condition_cov(cov_plus, cfg.cov_floor, k, "updated cov")
    shape_plus = _condition_psd(shape_plus, k, "updated shape")

    cost_at_star = (1.0 - eta) * float(np.trace(cov_plus)) + eta * float(
        np.trace(shape_plus)
    )
    report = GainReport(
        gain=gain,
        beta_star=float(beta_star),
        cost_at_star=cost_at_star,
        trace_cov=float(np.trace(cov_plus)),
        trace_shape=float(np.trace(shape_plus)),
    )
    return StateBelief(center, cov_plus, shape_plus, "posterior", k), report


def ekf_step(
    state: np.ndarray,
    cov: np.ndarray,
    u: np.ndarray,
    y: np.ndarray,
    m: NonlinearModel,
    k: int,
) -> tuple[np.ndarray, np.ndarray]:
    """One predict+update of a first-order EKF on the same model.

    Bounded disturbances are ignored entirely; the covariance update uses
    the Joseph form. Kept free of the set-membership code path so the two
    recursions can be cross-checked against each other.
    """
    state = np.atleast_1d(np.asarray(state, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))

    lin_p = linearize_process(m, state, u, k)
    w0, a0, v0, b0 = m.zero_disturbances(k)
    x_pred = np.atleast_1d(np.asarray(m.f(state, u, w0, a0, k), dtype=float))
    if not np.all(np.isfinite(x_pred)):
        raise FilterError(f"EKF predicted state is not finite: {x_pred}", k)
    c_u = np.atleast_2d(np.asarray(m.process_noise_cov(k), dtype=float))
    p_pred = lin_p.f_x @ cov @ lin_p.f_x.T + lin_p.f_w @ c_u @ lin_p.f_w.T
    p_pred = symmetrize(p_pred)

    lin_m = linearize_measurement(m, x_pred, k)
    h_x, h_v = lin_m.h_x, lin_m.h_v
    c_z = lin_m.meas_noise_cov
    s_inn = symmetrize(h_x @ p_pred @ h_x.T + h_v @ c_z @ h_v.T)
    try:
        gain = np.linalg.solve(s_inn, (p_pred @ h_x.T).T).T
    except np.linalg.LinAlgError as err:
        raise SingularInnovationError(
            f"EKF innovation covariance is singular: {err}", k
        ) from err

    residual = wrap_angles(
        np.atleast_1d(np.asarray(y, dtype=float))
        - np.atleast_1d(np.asarray(m.h(x_pred, v0, b0, k), dtype=float)),
        m.angular_mask,
    )
    x_post = x_pred + gain @ residual
    ikh = np.eye(m.state_dim) - gain @ h_x
    p_post = ikh @ p_pred @ ikh.T + gain @ h_v @ c_z @ h_v.T @ gain.T
    return x_post, symmetrize(p_post)
