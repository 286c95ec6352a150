"""Newton projection onto the constraint surface and reverse-feasibility checks.

Projection moves a point along a prescribed basis of directions (usually the
gradient columns) until the constraints vanish.  The reverse checks answer
"could the opposite move have produced the current state?", which the
accept/reject step needs for detailed balance.  Failures are ordinary return
values here; callers turn them into proposal rejections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .geometry import ConstraintModel, TangentFrame, tangent_frame


class ProjectionStatus(Enum):
    CONVERGED = "converged"
    MAX_ITER_EXCEEDED = "max_iter_exceeded"
    SINGULAR_SYSTEM = "singular_system"


@dataclass(frozen=True)
class NewtonSettings:
    """Convergence controls for the projection solver.

    tol_q:       stop once the Euclidean norm of the constraint values is below this
    max_iter:    iteration cap; exceeding it is a recoverable failure
    reverse_tol: how close a reverse projection must land to count as a hit
    """

    tol_q: float = 1e-10
    max_iter: int = 25
    reverse_tol: float = 1e-7

    def __post_init__(self):
        if not self.tol_q > 0:
            raise ValueError("tol_q must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.reverse_tol > 0:
            raise ValueError("reverse_tol must be positive")


@dataclass
class ProjectionResult:
    status: ProjectionStatus
    a: np.ndarray
    y: np.ndarray
    iterations: int

    @property
    def converged(self) -> bool:
        return self.status is ProjectionStatus.CONVERGED


def _solve_square(J: np.ndarray, q: np.ndarray):
    """Solve J delta = q by LU with partial pivoting; None if the factorization fails."""
    m = J.shape[0]
    if m == 1:
        piv = J[0, 0]
        if piv == 0.0:
            return None
        return np.array([q[0] / piv])
    if m == 2:
        a00 = J[0, 0]
        a01 = J[0, 1]
        a10 = J[1, 0]
        a11 = J[1, 1]
        b0 = q[0]
        b1 = q[1]
        if abs(a10) > abs(a00):
            a00, a10 = a10, a00
            a01, a11 = a11, a01
            b0, b1 = b1, b0
        if a00 == 0.0:
            return None
        ell = a10 / a00
        u11 = a11 - ell * a01
        if u11 == 0.0:
            return None
        d1 = (b1 - ell * b0) / u11
        d0 = (b0 - a01 * d1) / a00
        return np.array([d0, d1])
    try:
        return np.linalg.solve(J, q)
    except np.linalg.LinAlgError:
        return None


def newton_project(
    model: ConstraintModel,
    x0: np.ndarray,
    directions: np.ndarray,
    settings: NewtonSettings,
) -> ProjectionResult:
    """Find coefficients a with q(x0 + directions @ a) = 0 by plain Newton.

    Starts from a = 0 and iterates
        a <- a - [grad(y)^T directions]^{-1} q(y),   y = x0 + directions @ a
    until the constraint norm drops below tol_q.  No damping or line search;
    non-convergence is reported through the status field.
    """
    m = directions.shape[1]
    evaluate = model.evaluate
    gradient = model.gradient
    tol_sq = settings.tol_q * settings.tol_q
    q = evaluate(x0)
    if float(q @ q) <= tol_sq:
        return ProjectionResult(ProjectionStatus.CONVERGED, np.zeros(m), x0, 0)
    a = np.zeros(m)
    y = x0
    for it in range(1, settings.max_iter + 1):
        J = gradient(y).T @ directions
        delta = _solve_square(J, q)
        if delta is None:
            return ProjectionResult(ProjectionStatus.SINGULAR_SYSTEM, a, y, it)
        a -= delta
        y = x0 + directions @ a
        q = evaluate(y)
        if float(q @ q) <= tol_sq:
            return ProjectionResult(ProjectionStatus.CONVERGED, a, y, it)
    return ProjectionResult(ProjectionStatus.MAX_ITER_EXCEEDED, a, y, settings.max_iter)


def reverse_check_surface(
    model: ConstraintModel,
    start: np.ndarray,
    target: np.ndarray,
    settings: NewtonSettings,
    frame_start: TangentFrame | None = None,
) -> bool:
    """Would a surface move from start regenerate target?

    Splits target - start into tangent and normal parts at start, reruns the
    projection from start + tangent part, and demands the solver land within
    reverse_tol of target.
    """
    if frame_start is None:
        frame_start = tangent_frame(model, start)
    diff = target - start
    tb = frame_start.tangent_basis
    v_tan = tb @ (tb.T @ diff)
    res = newton_project(model, start + v_tan, frame_start.grad, settings)
    if not res.converged:
        return False
    miss = res.y - target
    return math.sqrt(float(miss @ miss)) <= settings.reverse_tol


def reverse_check_off(
    model: ConstraintModel,
    x: np.ndarray,
    y: np.ndarray,
    settings: NewtonSettings,
) -> bool:
    """Could the surface-landing move starting from off-surface y propose x?

    First projects y back to the surface along its own gradient columns, then
    runs the surface reverse check from the landing point toward x.
    """
    res = newton_project(model, y, model.gradient(y), settings)
    if not res.converged:
        return False
    return reverse_check_surface(model, res.y, x, settings)
