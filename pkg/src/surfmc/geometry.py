"""Constraint geometry: gradient matrices, tangent/normal frames, surface density factors.

A constraint map q sends the ambient space R^da to R^m (m < da); its zero set
is the surface the sampler works with.  Everything here is a pure function of
its inputs, so the module is safe to use from concurrently running chains.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

# Relative rank threshold: smallest singular value must exceed this times the
# largest one for the gradient matrix to count as full column rank.
RANK_RTOL = 1e-10


class RankDeficient(Exception):
    """The constraint gradient lost full column rank at the evaluated point."""


class ConstraintModel(abc.ABC):
    """A smooth map q: R^da -> R^m together with its analytic gradient.

    ``evaluate`` broadcasts over leading axes, so an array of shape
    (..., ambient_dim) yields constraint values of shape (..., num_constraints).
    ``gradient`` is pointwise and returns the da x m matrix whose columns are
    the gradients of the individual constraint functions.  Implementations
    must be immutable after construction.
    """

    ambient_dim: int
    num_constraints: int

    @abc.abstractmethod
    def evaluate(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @abc.abstractmethod
    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def surface_dim(self) -> int:
        return self.ambient_dim - self.num_constraints

    def bounding_box(self):
        """(lo, hi) arrays bounding the surface, or None if unbounded."""
        return None


@dataclass(frozen=True)
class TangentFrame:
    """Local geometry of the surface at a base point.

    tangent_basis:   da x d orthonormal basis of the tangent space
    normal_basis:    da x m transpose of the pseudo-inverse of the gradient,
                     so gradient^T @ normal_basis == I_m
    singular_values: the m singular values of the gradient matrix
    grad:            the da x m gradient matrix itself (kept for reuse)
    """

    point: np.ndarray
    tangent_basis: np.ndarray
    normal_basis: np.ndarray
    singular_values: np.ndarray
    grad: np.ndarray


def _full_qr_q(a: np.ndarray) -> np.ndarray:
    """Orthogonal factor of a full QR factorization of a tall matrix."""
    qr_raw, tau, _, info = lapack.dgeqrf(a)
    if info != 0:
        raise np.linalg.LinAlgError(f"dgeqrf failed (info={info})")
    full = np.zeros((a.shape[0], a.shape[0]), order="F")
    full[:, : a.shape[1]] = qr_raw
    q, _, info = lapack.dorgqr(full, tau)
    if info != 0:
        raise np.linalg.LinAlgError(f"dorgqr failed (info={info})")
    return q


def _thin_svd(a: np.ndarray):
    u, s, vt, info = lapack.dgesdd(a, full_matrices=0)
    if info != 0:
        raise np.linalg.LinAlgError(f"dgesdd failed (info={info})")
    return u, s, vt


def singular_values(grad: np.ndarray) -> np.ndarray:
    _, s, _, info = lapack.dgesdd(grad, compute_uv=0)
    if info != 0:
        raise np.linalg.LinAlgError(f"dgesdd failed (info={info})")
    return s


def tangent_frame(model: ConstraintModel, x: np.ndarray, grad: np.ndarray | None = None) -> TangentFrame:
    """Build the tangent/normal frame at x.

    The tangent basis is the last d columns of a full QR factorization of the
    gradient matrix; the normal basis comes from its thin SVD.  Raises
    RankDeficient when the smallest singular value falls below RANK_RTOL
    times the largest.
    """
    if grad is None:
        grad = model.gradient(x)
    u, s, vt = _thin_svd(grad)
    if s[-1] <= RANK_RTOL * s[0]:
        raise RankDeficient(
            f"constraint gradient is rank deficient at {x} (singular values {s})"
        )
    q_full = _full_qr_q(grad)
    tangent = q_full[:, model.num_constraints :]
    normal = u @ (vt / s[:, None])
    return TangentFrame(
        point=x,
        tangent_basis=tangent,
        normal_basis=normal,
        singular_values=s,
        grad=grad,
    )


def gradient_factor(model: ConstraintModel, x: np.ndarray) -> float:
    """det(grad^T grad)^(-1/2), the density of the surface target w.r.t. area.

    Computed as the product of reciprocal singular values of the gradient.
    """
    s = singular_values(model.gradient(x))
    if s[-1] <= RANK_RTOL * s[0]:
        raise RankDeficient(f"constraint gradient is rank deficient at {x}")
    return math.exp(-float(np.log(s).sum()))


def log_gradient_factor(frame: TangentFrame) -> float:
    return -float(np.log(frame.singular_values).sum())


def projection_jacobian(frame_x: TangentFrame, frame_y: TangentFrame) -> float:
    """det of the overlap between the two tangent bases.

    The sign depends on basis orientation conventions; density code uses the
    absolute value.  Symmetric in its arguments because the overlap matrices
    are transposes of each other.
    """
    overlap = frame_x.tangent_basis.T @ frame_y.tangent_basis
    if overlap.shape[0] == 1:
        return float(overlap[0, 0])
    return float(np.linalg.det(overlap))


def decompose(frame: TangentFrame, v: np.ndarray):
    """Split v into its tangent and normal components at the frame's point."""
    v_tan = frame.tangent_basis @ (frame.tangent_basis.T @ v)
    return v_tan, v - v_tan
