"""Built-in constraint models: linear surfaces, two spheres, ellipsoid-sphere.

The curved models live in R^3 with two constraints each; the linear model
supports arbitrary dimensions and powers the exactness test suite.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import ConstraintModel, singular_values
from .projection import NewtonSettings, newton_project


class DegenerateProjection(Exception):
    """The point projects onto the reference axis, so its angle is undefined."""


def _readonly(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


class LinearModel(ConstraintModel):
    """q(x) = A^T x for a full-column-rank matrix A; the surface is a subspace."""

    def __init__(self, matrix):
        A = _readonly(matrix)
        if A.ndim != 2:
            raise ValueError("matrix must be 2-d (ambient_dim x num_constraints)")
        da, m = A.shape
        if not 0 < m < da:
            raise ValueError("need 0 < num_constraints < ambient_dim")
        s = singular_values(np.asarray(A))
        if s[-1] <= 1e-12 * s[0]:
            raise ValueError("matrix does not have full column rank")
        self.matrix = A
        self.ambient_dim = da
        self.num_constraints = m

    def evaluate(self, x):
        return np.asarray(x) @ self.matrix

    def gradient(self, x):
        return self.matrix

    @property
    def feasible_point(self) -> np.ndarray:
        return np.zeros(self.ambient_dim)


class TwoSpheresModel(ConstraintModel):
    """Intersection of two spheres: q_i(x) = |x - c_i|^2 - r_i^2.

    The surface is a circle whenever the spheres intersect transversally,
    which the constructor checks.  Its center, radius and axis are exposed
    because the angular coordinate around the axis is the natural observable
    on this model.
    """

    ambient_dim = 3
    num_constraints = 2

    def __init__(self, center1, center2, radius1, radius2):
        self.center1 = _readonly(center1)
        self.center2 = _readonly(center2)
        if self.center1.shape != (3,) or self.center2.shape != (3,):
            raise ValueError("centers must be points in R^3")
        if radius1 <= 0 or radius2 <= 0:
            raise ValueError("radii must be positive")
        self.radius1 = float(radius1)
        self.radius2 = float(radius2)
        axis = self.center2 - self.center1
        dist = math.sqrt(float(axis @ axis))
        if not abs(self.radius1 - self.radius2) < dist < self.radius1 + self.radius2:
            raise ValueError(
                "spheres do not intersect in a circle: "
                f"|c1-c2|={dist:.6g}, radii {self.radius1:.6g}, {self.radius2:.6g}"
            )
        # circle center sits on the segment between the sphere centers
        t = (self.radius1**2 - self.radius2**2 + dist**2) / (2 * dist**2)
        self.circle_center = _readonly(self.center1 + t * axis)
        rho2 = self.radius1**2 - t**2 * dist**2
        self.circle_radius = math.sqrt(rho2)
        self.axis = _readonly(axis / dist)
        self._r1sq = self.radius1**2
        self._r2sq = self.radius2**2

    def evaluate(self, x):
        x = np.asarray(x)
        d1 = x - self.center1
        d2 = x - self.center2
        if x.ndim == 1:
            q = np.empty(2)
            q[0] = d1 @ d1 - self._r1sq
            q[1] = d2 @ d2 - self._r2sq
            return q
        return np.stack(
            [(d1 * d1).sum(axis=-1) - self._r1sq, (d2 * d2).sum(axis=-1) - self._r2sq],
            axis=-1,
        )

    def gradient(self, x):
        g = np.empty((3, 2))
        g[:, 0] = x - self.center1
        g[:, 1] = x - self.center2
        g *= 2.0
        return g

    @property
    def reference_direction(self) -> np.ndarray:
        """A deterministic unit vector in the circle's plane."""
        for trial in (np.array([1.0, 0, 0]), np.array([0, 1.0, 0])):
            in_plane = trial - (trial @ self.axis) * self.axis
            norm = math.sqrt(float(in_plane @ in_plane))
            if norm > 1e-8:
                return in_plane / norm
        raise AssertionError("unreachable: axis cannot be parallel to both e1 and e2")

    @property
    def feasible_point(self) -> np.ndarray:
        return self.circle_center + self.circle_radius * self.reference_direction

    def bounding_box(self):
        lo1, hi1 = self.center1 - self.radius1, self.center1 + self.radius1
        lo2, hi2 = self.center2 - self.radius2, self.center2 + self.radius2
        return np.maximum(lo1, lo2), np.minimum(hi1, hi2)


def theta_coordinate(model: TwoSpheresModel, x, reference_point=None) -> float:
    """Signed angle of x around the circle's axis, in (-pi, pi].

    The angle is measured between the in-plane part of x - center and a
    reference direction, counterclockwise about the model's axis.  The
    reference defaults to the model's deterministic in-plane direction; pass
    a surface point to measure angles from it instead.  Raises
    DegenerateProjection when x projects onto the axis itself.
    """
    c = model.circle_center
    n = model.axis
    u = np.asarray(x, dtype=float) - c
    u_in = u - (u @ n) * n
    norm = math.sqrt(float(u_in @ u_in))
    if norm < 1e-12:
        raise DegenerateProjection(f"point {x} has no in-plane component")
    if reference_point is None:
        w = model.reference_direction
    else:
        w = np.asarray(reference_point, dtype=float) - c
        w = w - (w @ n) * n
    cross = np.cross(w, u_in)
    return math.atan2(float(cross @ n), float(w @ u_in))


class EllipsoidSphereModel(ConstraintModel):
    """Intersection of a sphere and an axis-aligned ellipsoid.

    q1(x) = |x - sphere_center|^2 - sphere_radius^2
    q2(x) = sum_i ((x_i - ellipsoid_center_i) / semi_axes_i)^2 - 1

    The constructor verifies the surfaces actually meet by projecting a fan
    of starting points onto the joint constraint set; the first point found
    is kept as a feasible starting location.
    """

    ambient_dim = 3
    num_constraints = 2

    def __init__(self, sphere_center, sphere_radius, ellipsoid_center, semi_axes):
        self.sphere_center = _readonly(sphere_center)
        self.ellipsoid_center = _readonly(ellipsoid_center)
        self.semi_axes = _readonly(semi_axes)
        if self.sphere_center.shape != (3,) or self.ellipsoid_center.shape != (3,):
            raise ValueError("centers must be points in R^3")
        if self.semi_axes.shape != (3,) or np.any(self.semi_axes <= 0):
            raise ValueError("semi_axes must be three positive numbers")
        if sphere_radius <= 0:
            raise ValueError("sphere_radius must be positive")
        self.sphere_radius = float(sphere_radius)
        self._rsq = self.sphere_radius**2
        self._inv_axes_sq = _readonly(1.0 / self.semi_axes**2)
        self.feasible_point = self._find_feasible_point()

    def evaluate(self, x):
        x = np.asarray(x)
        d1 = x - self.sphere_center
        d2 = x - self.ellipsoid_center
        if x.ndim == 1:
            q = np.empty(2)
            q[0] = d1 @ d1 - self._rsq
            q[1] = (d2 * d2) @ self._inv_axes_sq - 1.0
            return q
        return np.stack(
            [
                (d1 * d1).sum(axis=-1) - self._rsq,
                (d2 * d2 * self._inv_axes_sq).sum(axis=-1) - 1.0,
            ],
            axis=-1,
        )

    def gradient(self, x):
        g = np.empty((3, 2))
        g[:, 0] = x - self.sphere_center
        g[:, 1] = (x - self.ellipsoid_center) * self._inv_axes_sq
        g *= 2.0
        return g

    def _find_feasible_point(self) -> np.ndarray:
        settings = NewtonSettings()
        axis = self.ellipsoid_center - self.sphere_center
        norm = math.sqrt(float(axis @ axis))
        directions = [np.eye(3)[i] * sign for i in range(3) for sign in (1.0, -1.0)]
        if norm > 1e-12:
            directions.insert(0, axis / norm)
        for direction in directions:
            start = self.sphere_center + self.sphere_radius * direction
            res = newton_project(self, start, self.gradient(start), settings)
            if res.converged:
                return _readonly(res.y)
        raise ValueError("sphere and ellipsoid do not appear to intersect")

    def bounding_box(self):
        lo1 = self.sphere_center - self.sphere_radius
        hi1 = self.sphere_center + self.sphere_radius
        lo2 = self.ellipsoid_center - self.semi_axes
        hi2 = self.ellipsoid_center + self.semi_axes
        return np.maximum(lo1, lo2), np.minimum(hi1, hi2)
