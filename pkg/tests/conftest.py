import math

import numpy as np
import pytest

from surfmc import (
    EllipsoidSphereModel,
    LinearModel,
    Proposal,
    TwoSpheresModel,
    log_acceptance_ratio,
    propose_hard,
    propose_off,
    propose_on,
    propose_soft,
    tangent_frame,
)
from surfmc.moves import MOVE_LABELS, log_density_f1, log_density_f2

SQRT2 = math.sqrt(2.0)


@pytest.fixture(scope="session")
def two_spheres():
    return TwoSpheresModel([0, 0, 1], [0, -1, 0], SQRT2, SQRT2)


@pytest.fixture(scope="session")
def ellipsoid_sphere():
    # quadratic-form denominators 2, 3, 5
    return EllipsoidSphereModel([0, 0, 1], SQRT2, [0, -1, 0], np.sqrt([2.0, 3.0, 5.0]))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_linear_model(rng, da=4, m=2):
    return LinearModel(rng.standard_normal((da, m)))


def finite_difference_gradient(model, x, h=1e-6):
    """Central-difference gradient matrix, column i the gradient of constraint i."""
    da = model.ambient_dim
    m = model.num_constraints
    grad = np.empty((da, m))
    for k in range(da):
        e = np.zeros(da)
        e[k] = h
        grad[k, :] = (model.evaluate(x + e) - model.evaluate(x - e)) / (2 * h)
    return grad


def surface_points_two_spheres(model, n, rng=None):
    """Points spread around the intersection circle (exact parametrization)."""
    if rng is None:
        angles = np.linspace(-math.pi, math.pi, n, endpoint=False)
    else:
        angles = rng.uniform(-math.pi, math.pi, n)
    u = model.reference_direction
    v = np.cross(model.axis, u)
    return (
        model.circle_center
        + model.circle_radius
        * (np.cos(angles)[:, None] * u + np.sin(angles)[:, None] * v)
    )


def direct_autocovariance(x, max_lag):
    """Plain O(N^2) lagged-sum estimator used as the oracle."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    xc = x - x.mean()
    out = np.empty(max_lag + 1)
    for t in range(max_lag + 1):
        out[t] = (xc[: n - t] * xc[t:]).sum() / (n - t)
    return out


def detailed_balance_pairs(model, cfg, rng, n_pairs):
    """(state, feasible proposal) pairs of every move type along a short chain."""
    from surfmc.sampler import ChainState, step

    state = ChainState(model.feasible_point, 2)
    pairs = []
    while len(pairs) < n_pairs:
        state, _ = step(state, model, cfg, rng)
        frame = state.frame
        if state.label == 2:
            makers = (propose_hard, propose_off)
            for maker in makers:
                prop = maker(model, state.x, cfg, rng, frame_x=frame)
                if prop.feasible:
                    pairs.append((state, prop))
        else:
            for maker in (propose_on, propose_soft):
                prop = maker(model, state.x, cfg, rng)
                if prop.feasible:
                    pairs.append((state, prop))
    return pairs[:n_pairs]


def reverse_proposal(prop, x, frame_x, u_x):
    reverse_type = {"hard": "hard", "soft": "soft", "off": "on", "on": "off"}[prop.move_type]
    return Proposal(
        y=x, move_type=reverse_type,
        log_forward=prop.log_reverse, log_reverse=prop.log_forward,
        feasible=True, frame_y=frame_x, u_y=u_x,
    )


def detailed_balance_gap(model, cfg, state, prop):
    """Relative mismatch between the two flux sides of the balance identity."""
    i, j = MOVE_LABELS[prop.move_type]
    frame_x = state.frame
    if frame_x is None and i == 2:
        frame_x = tangent_frame(model, state.x)
    lr_fwd = log_acceptance_ratio(cfg, model, state.x, i, prop, frame_x=frame_x, u_x=state.u)
    rev = reverse_proposal(prop, state.x, frame_x, state.u)
    lr_rev = log_acceptance_ratio(cfg, model, prop.y, j, rev, frame_x=prop.frame_y, u_x=prop.u_y)

    if i == 2:
        log_f_x = log_density_f2(cfg, frame_x)
    else:
        log_f_x = log_density_f1(cfg, model, state.x, u=state.u)
    if j == 2:
        log_f_y = log_density_f2(cfg, prop.frame_y)
    else:
        log_f_y = log_density_f1(cfg, model, prop.y, u=prop.u_y)
    lhs = (
        log_f_x + math.log(cfg.move_probability(i, j)) + prop.log_forward + min(0.0, lr_fwd)
    )
    rhs = (
        log_f_y + math.log(cfg.move_probability(j, i)) + prop.log_reverse + min(0.0, lr_rev)
    )
    return abs(math.expm1(lhs - rhs))
