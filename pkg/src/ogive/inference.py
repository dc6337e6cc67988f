"""MAP estimation of current proficiency from a response history.

The log-posterior objectives from `irt_core` are strictly concave whenever the
prior precision is positive, so the maximizer is unique and a damped Newton
iteration with an Armijo backtracking line search finds it quickly from any
starting point.  Batched variants solve many independent per-student problems
in lockstep; every array operation is elementwise per row, so each student's
iterates are bit-identical no matter which other students share the batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .concept_graph import StructuredPrior
from .irt_core import (
    ItemParams,
    ResponseEvent,
    ScalarPriorConfig,
    TemporalConfig,
    approx_log_posterior_scalar,
    approx_log_posterior_vector,
    bernoulli_probit_terms,
    response_probability,
)

ARMIJO_C1 = 1e-4
# near the optimum the predicted Armijo gain drops below float resolution of
# the objective value, so a strict test stalls one Newton step short of the
# gradient tolerance; accept steps within this relative slack instead
ARMIJO_SLACK = 1e-12
MAX_BACKTRACKS = 60


@dataclass(frozen=True)
class SolverConfig:
    """Newton solver settings; defaults validated by the initialization-independence property."""

    gradient_tolerance: float = 1e-8
    max_iterations: int = 100
    initial_point: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.gradient_tolerance > 0.0:
            raise ValueError("gradient_tolerance must be > 0")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")


DEFAULT_SOLVER = SolverConfig()


@dataclass(frozen=True, eq=False)
class ProficiencyEstimate:
    """MAP point estimate with optimization diagnostics.

    theta always has vector shape, length 1 for scalar models; concept_ids
    names the coordinates for vector models and is None for scalar ones.
    """

    theta: np.ndarray
    converged: bool
    iterations: int
    final_gradient_norm: float
    objective_value: float
    concept_ids: Optional[tuple[str, ...]] = None

    def coordinate(self, concept_id: str) -> float:
        if self.concept_ids is None:
            return float(self.theta[0])
        try:
            return float(self.theta[self.concept_ids.index(concept_id)])
        except ValueError:
            raise KeyError(
                f"concept {concept_id!r} is not a coordinate of this estimate"
            ) from None


Objective = Callable[[np.ndarray], tuple[float, np.ndarray, np.ndarray]]


def _newton_direction(grad: np.ndarray, hess: np.ndarray) -> np.ndarray:
    """Ascent direction -H^{-1} g, with ridge escalation if the solve misbehaves."""
    neg_h = -hess
    scale = max(1.0, float(np.max(np.abs(neg_h))))
    ridge = 0.0
    eye = np.eye(len(grad))
    for _ in range(8):
        try:
            d = np.linalg.solve(neg_h + ridge * eye, grad)
        except np.linalg.LinAlgError:
            d = None
        if d is not None and np.all(np.isfinite(d)) and float(grad @ d) > 0.0:
            return d
        ridge = scale * 1e-10 if ridge == 0.0 else ridge * 100.0
    return grad.copy()  # gradient ascent fallback


def map_estimate(
    objective: Objective,
    solver: SolverConfig = DEFAULT_SOLVER,
    n_dims: Optional[int] = None,
    concept_ids: Optional[tuple[str, ...]] = None,
) -> ProficiencyEstimate:
    """Maximize a concave objective returning (value, gradient, hessian).

    The objective follows the vector convention: it takes a length-n array and
    returns a float value, an (n,) gradient, and an (n, n) Hessian.  Scalar
    problems pass n_dims=1.  Convergence is declared when the max-abs gradient
    entry drops to solver.gradient_tolerance.
    """
    if solver.initial_point is not None:
        x = np.asarray(solver.initial_point, dtype=float).reshape(-1).copy()
    else:
        if n_dims is None:
            n_dims = len(concept_ids) if concept_ids is not None else 1
        x = np.zeros(n_dims)
    if not np.all(np.isfinite(x)):
        raise ValueError("initial point is not finite")
    val, grad, hess = objective(x)
    if not (np.isfinite(val) and np.all(np.isfinite(grad))):
        raise ValueError("objective is not finite at the initial point")
    tol = solver.gradient_tolerance
    iterations = 0
    while iterations < solver.max_iterations:
        gnorm = float(np.max(np.abs(grad)))
        if gnorm <= tol:
            break
        iterations += 1
        d = _newton_direction(grad, np.atleast_2d(hess))
        slope = float(grad @ d)
        slack = ARMIJO_SLACK * (1.0 + abs(val))
        step = 1.0
        accepted = False
        for _ in range(MAX_BACKTRACKS):
            cand = x + step * d
            v2, g2, h2 = objective(cand)
            if np.isfinite(v2) and v2 >= val + ARMIJO_C1 * step * slope - slack:
                x, val, grad, hess = cand, v2, g2, h2
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break  # no ascent step exists at this scale; keep the best iterate
    gnorm = float(np.max(np.abs(grad)))
    return ProficiencyEstimate(
        theta=x,
        converged=gnorm <= tol,
        iterations=iterations,
        final_gradient_norm=gnorm,
        objective_value=float(val),
        concept_ids=concept_ids,
    )


def map_estimate_scalar(
    history: Sequence[ResponseEvent],
    now: float,
    temporal: TemporalConfig,
    prior: ScalarPriorConfig,
    solver: SolverConfig = DEFAULT_SOLVER,
) -> ProficiencyEstimate:
    """MAP estimate of a single proficiency; empty history returns the prior mean."""
    if len(history) == 0:
        return ProficiencyEstimate(
            theta=np.array([prior.mean]),
            converged=True,
            iterations=0,
            final_gradient_norm=0.0,
            objective_value=0.0,
            concept_ids=None,
        )

    def objective(x):
        out = approx_log_posterior_scalar(float(x[0]), history, now, temporal, prior)
        return out.value, np.array([out.gradient]), np.array([[out.curvature]])

    if solver.initial_point is None and prior.mean != 0.0:
        solver = SolverConfig(
            solver.gradient_tolerance, solver.max_iterations, np.array([prior.mean])
        )
    return map_estimate(objective, solver, n_dims=1)


def map_estimate_vector(
    history: Sequence[ResponseEvent],
    now: float,
    temporal: TemporalConfig,
    prior: StructuredPrior,
    solver: SolverConfig = DEFAULT_SOLVER,
) -> ProficiencyEstimate:
    """MAP estimate of the concept-proficiency vector; empty history returns zero."""
    concept_ids = prior.graph.concepts
    if len(history) == 0:
        return ProficiencyEstimate(
            theta=np.zeros(prior.graph.n_concepts),
            converged=True,
            iterations=0,
            final_gradient_norm=0.0,
            objective_value=0.0,
            concept_ids=concept_ids,
        )

    def objective(x):
        out = approx_log_posterior_vector(x, history, now, temporal, prior)
        return out.value, out.gradient, out.hessian

    return map_estimate(objective, solver, concept_ids=concept_ids)


def predict_next(estimate: ProficiencyEstimate, item: ItemParams) -> float:
    """Probability the student answers `item` correctly right now."""
    if estimate.concept_ids is None:
        theta = float(estimate.theta[0])
    else:
        theta = estimate.coordinate(item.concept_id)
    return response_probability(theta, item)


# -- batched lockstep solvers -------------------------------------------------
#
# Shared array contract: event arrays have shape (S, T) with a boolean mask of
# valid cells; padded cells must carry a_eff == 0 so padding contributes zero
# gradient and curvature, and the mask zeroes padded log-likelihood terms.


def batched_scalar_map(
    theta0: np.ndarray,
    a_eff: np.ndarray,
    beta: np.ndarray,
    correct: np.ndarray,
    mask: np.ndarray,
    lam: float,
    mu0: float = 0.0,
    tol: float = 1e-8,
    max_iter: int = 100,
):
    """Solve S independent scalar MAP problems in lockstep.

    Returns (theta, converged, iterations) with shapes (S,), (S,) bool, (S,) int.
    """
    theta = np.array(theta0, dtype=float, copy=True)

    def evaluate(th):
        z = a_eff * (th[:, None] - beta)
        ll, d1, d2 = bernoulli_probit_terms(z, correct)
        value = -lam * (th - mu0) ** 2 + np.where(mask, ll, 0.0).sum(axis=1)
        grad = -2.0 * lam * (th - mu0) + (a_eff * d1).sum(axis=1)
        curv = -2.0 * lam + (a_eff * a_eff * d2).sum(axis=1)
        return value, grad, curv

    value, grad, curv = evaluate(theta)
    iterations = np.zeros(theta.shape[0], dtype=np.int64)
    stalled = np.zeros(theta.shape[0], dtype=bool)
    for _ in range(max_iter):
        active = (np.abs(grad) > tol) & ~stalled
        if not active.any():
            break
        iterations += active
        direction = np.where(active, -grad / curv, 0.0)
        slope = grad * direction
        slack = ARMIJO_SLACK * (1.0 + np.abs(value))
        step = np.ones_like(theta)
        need = active.copy()
        for _ in range(MAX_BACKTRACKS):
            if not need.any():
                break
            cand = theta + np.where(need, step, 0.0) * direction
            v2, g2, c2 = evaluate(cand)
            ok = need & np.isfinite(v2) & (v2 >= value + ARMIJO_C1 * step * slope - slack)
            theta = np.where(ok, cand, theta)
            value = np.where(ok, v2, value)
            grad = np.where(ok, g2, grad)
            curv = np.where(ok, c2, curv)
            need &= ~ok
            step = np.where(need, 0.5 * step, step)
        stalled |= need
    converged = np.abs(grad) <= tol
    return theta, converged, iterations


def batched_vector_map(
    theta0: np.ndarray,
    a_eff: np.ndarray,
    beta: np.ndarray,
    correct: np.ndarray,
    concept_idx: np.ndarray,
    mask: np.ndarray,
    precision: np.ndarray,
    tol: float = 1e-8,
    max_iter: int = 100,
):
    """Solve S independent vector MAP problems sharing one prior precision.

    theta0 is (S, C); event arrays are (S, T); concept_idx holds the coordinate
    each event reads (0 on padded cells).  Returns (theta, converged, iterations).
    """
    theta = np.array(theta0, dtype=float, copy=True)
    n_students, n_concepts = theta.shape
    flat_idx = (np.arange(n_students)[:, None] * n_concepts + concept_idx).ravel()
    size = n_students * n_concepts
    diag = np.arange(n_concepts)

    def evaluate(th):
        th_events = np.take_along_axis(th, concept_idx, axis=1)
        z = a_eff * (th_events - beta)
        ll, d1, d2 = bernoulli_probit_terms(z, correct)
        p_th = th @ precision
        value = -0.5 * np.einsum("sc,sc->s", th, p_th)
        value += np.where(mask, ll, 0.0).sum(axis=1)
        grad = -p_th + np.bincount(
            flat_idx, weights=(a_eff * d1).ravel(), minlength=size
        ).reshape(n_students, n_concepts)
        curv_diag = np.bincount(
            flat_idx, weights=(a_eff * a_eff * d2).ravel(), minlength=size
        ).reshape(n_students, n_concepts)
        return value, grad, curv_diag

    value, grad, curv_diag = evaluate(theta)
    iterations = np.zeros(n_students, dtype=np.int64)
    stalled = np.zeros(n_students, dtype=bool)
    for _ in range(max_iter):
        gnorm = np.max(np.abs(grad), axis=1)
        active = (gnorm > tol) & ~stalled
        if not active.any():
            break
        iterations += active
        # -H = P + diag(-curv); curvature terms are <= 0 so -H is positive definite
        neg_hess = np.broadcast_to(precision, (n_students, n_concepts, n_concepts)).copy()
        neg_hess[:, diag, diag] -= curv_diag
        direction = np.linalg.solve(neg_hess, grad[:, :, None])[:, :, 0]
        direction[~active] = 0.0
        slope = np.einsum("sc,sc->s", grad, direction)
        slack = ARMIJO_SLACK * (1.0 + np.abs(value))
        step = np.ones(n_students)
        need = active.copy()
        for _ in range(MAX_BACKTRACKS):
            if not need.any():
                break
            cand = theta + (np.where(need, step, 0.0))[:, None] * direction
            v2, g2, c2 = evaluate(cand)
            ok = need & np.isfinite(v2) & (v2 >= value + ARMIJO_C1 * step * slope - slack)
            theta[ok] = cand[ok]
            value = np.where(ok, v2, value)
            grad[ok] = g2[ok]
            curv_diag[ok] = c2[ok]
            need &= ~ok
            step = np.where(need, 0.5 * step, step)
        stalled |= need
    converged = np.max(np.abs(grad), axis=1) <= tol
    return theta, converged, iterations
