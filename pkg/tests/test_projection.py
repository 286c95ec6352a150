import numpy as np
import pytest

from surfmc import (
    NewtonSettings,
    ProjectionStatus,
    newton_project,
    reverse_check_off,
    reverse_check_surface,
    tangent_frame,
)
from surfmc.geometry import ConstraintModel

from conftest import random_linear_model, surface_points_two_spheres


class Circle(ConstraintModel):
    """q(x) = x1^2 + x2^2 - 1 in R^2."""

    ambient_dim = 2
    num_constraints = 1

    def evaluate(self, x):
        x = np.asarray(x)
        val = (x * x).sum(axis=-1) - 1.0
        return np.atleast_1d(val) if x.ndim == 1 else val[..., None]

    def gradient(self, x):
        return (2.0 * np.asarray(x, dtype=float))[:, None]


SETTINGS = NewtonSettings()


def test_linear_model_converges_in_one_iteration(rng):
    for _ in range(10):
        model = random_linear_model(rng, da=5, m=2)
        A = model.matrix
        x0 = rng.normal(size=5)
        res = newton_project(model, x0, np.asarray(A), SETTINGS)
        assert res.status is ProjectionStatus.CONVERGED
        assert res.iterations == 1
        expected = -np.linalg.solve(A.T @ A, A.T @ x0)
        assert np.allclose(res.a, expected, atol=1e-12)
        assert np.linalg.norm(model.evaluate(res.y)) <= SETTINGS.tol_q


def test_circle_projection_along_gradient():
    # solving (2 + 4a)^2 = 1 from a=0 lands on the root a = -1/4
    model = Circle()
    res = newton_project(model, np.array([2.0, 0.0]), np.array([[4.0], [0.0]]), SETTINGS)
    assert res.converged
    assert res.a[0] == pytest.approx(-0.25, abs=1e-12)
    assert np.allclose(res.y, [1.0, 0.0], atol=1e-10)


def test_circle_no_real_root_fails():
    # along (0,1) the residual 3 + a^2 has no real zero; the solver must not converge
    model = Circle()
    res = newton_project(model, np.array([2.0, 0.0]), np.array([[0.0], [1.0]]), SETTINGS)
    assert not res.converged
    assert res.status in (
        ProjectionStatus.MAX_ITER_EXCEEDED,
        ProjectionStatus.SINGULAR_SYSTEM,
    )


def test_converged_implies_on_surface(rng, two_spheres):
    for _ in range(50):
        x0 = two_spheres.feasible_point + 0.3 * rng.normal(size=3)
        res = newton_project(two_spheres, x0, two_spheres.gradient(x0), SETTINGS)
        if res.converged:
            assert np.linalg.norm(two_spheres.evaluate(res.y)) <= SETTINGS.tol_q


def test_projection_is_deterministic(two_spheres):
    x0 = np.array([1.3, 0.1, -0.2])
    g = two_spheres.gradient(x0)
    r1 = newton_project(two_spheres, x0, g, SETTINGS)
    r2 = newton_project(two_spheres, x0, g, SETTINGS)
    assert r1.status == r2.status
    assert r1.iterations == r2.iterations
    assert np.array_equal(r1.y, r2.y)
    assert np.array_equal(r1.a, r2.a)


def test_max_iter_respected(two_spheres):
    tight = NewtonSettings(tol_q=1e-10, max_iter=1, reverse_tol=1e-7)
    x0 = np.array([4.0, 3.0, -2.0])
    res = newton_project(two_spheres, x0, two_spheres.gradient(x0), tight)
    if not res.converged:
        assert res.iterations == 1


def test_settings_validation():
    with pytest.raises(ValueError):
        NewtonSettings(tol_q=0.0)
    with pytest.raises(ValueError):
        NewtonSettings(max_iter=0)
    with pytest.raises(ValueError):
        NewtonSettings(reverse_tol=-1.0)


def test_reverse_check_surface_flat_always_true(rng):
    model = random_linear_model(rng, da=5, m=2)
    A = np.asarray(model.matrix)
    # on-surface points: project random draws onto the null space of A^T
    proj = np.eye(5) - A @ np.linalg.solve(A.T @ A, A.T)
    pts = [proj @ rng.normal(size=5) for _ in range(6)]
    for a in pts:
        for b in pts:
            assert reverse_check_surface(model, a, b, SETTINGS)
            assert reverse_check_surface(model, b, a, SETTINGS)


def test_reverse_check_surface_nearby_two_spheres(two_spheres):
    pts = surface_points_two_spheres(two_spheres, 60)
    for i in range(0, 60, 5):
        a, b = pts[i], pts[(i + 1) % 60]  # about 6 degrees apart
        assert reverse_check_surface(two_spheres, a, b, SETTINGS)


def test_reverse_check_surface_fails_for_far_pairs(two_spheres):
    # scan increasingly separated pairs; far antipodal-like targets defeat the solver
    pts = surface_points_two_spheres(two_spheres, 360)
    a = pts[0]
    failures = sum(
        not reverse_check_surface(two_spheres, a, pts[k], SETTINGS)
        for k in (170, 175, 180, 185, 190)
    )
    assert failures > 0


def test_reverse_check_off_flat_always_true(rng):
    model = random_linear_model(rng, da=4, m=2)
    A = np.asarray(model.matrix)
    proj = np.eye(4) - A @ np.linalg.solve(A.T @ A, A.T)
    for _ in range(20):
        x = proj @ rng.normal(size=4)
        y = x + rng.normal(size=4)
        if np.linalg.norm(model.evaluate(y)) <= SETTINGS.tol_q:
            continue
        assert reverse_check_off(model, x, y, SETTINGS)


def test_reverse_check_off_small_offsets_two_spheres(rng, two_spheres):
    eps = 0.022
    ok = 0
    trials = 200
    for _ in range(trials):
        x = surface_points_two_spheres(two_spheres, 1, rng)[0]
        fr = tangent_frame(two_spheres, x)
        y = x + fr.normal_basis @ (eps * rng.normal(size=2)) + fr.tangent_basis @ (
            eps * rng.normal(size=1)
        )
        ok += reverse_check_off(two_spheres, x, y, SETTINGS)
    assert ok / trials > 0.99


def test_reverse_check_off_huge_normal_displacement_fails(two_spheres):
    # scan displacements comparable to the circle radius; the check is not
    # universally true, some large jumps defeat the reverse path
    x = two_spheres.feasible_point
    fr = tangent_frame(two_spheres, x)
    failed = False
    for a in np.linspace(-3.0, 3.0, 13):
        for b in np.linspace(-3.0, 3.0, 13):
            y = x + fr.normal_basis @ np.array([a, b])
            if np.linalg.norm(two_spheres.evaluate(y)) <= SETTINGS.tol_q:
                continue
            if not reverse_check_off(two_spheres, x, y, SETTINGS):
                failed = True
    assert failed
