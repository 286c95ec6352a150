"""Proposal generators for the four move types and the acceptance computation.

State space is augmented: a chain state is a point plus a label, 1 for
off-surface points (Lebesgue reference measure) and 2 for on-surface points
(surface area reference measure).  The four moves are

    hard: surface -> surface   tangent step + projection
    off:  surface -> ambient   anisotropic normal/tangent Gaussian jump
    on:   ambient -> surface   project, tangent step, project
    soft: ambient -> ambient   isotropic Gaussian step

Every proposal carries its forward and reverse log densities with respect to
the appropriate reference measure, including the tangent-overlap Jacobian for
moves that end on the surface.  All density work happens in log space; the
exponent scales involved underflow quickly otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    ConstraintModel,
    RankDeficient,
    TangentFrame,
    log_gradient_factor,
    projection_jacobian,
    tangent_frame,
)
from .projection import NewtonSettings, newton_project

LOG_2PI = math.log(2.0 * math.pi)

HARD, OFF, ON, SOFT = "hard", "off", "on", "soft"
MOVE_TYPES = (HARD, OFF, ON, SOFT)

# move type -> (current label, proposed label)
MOVE_LABELS = {HARD: (2, 2), OFF: (2, 1), ON: (1, 2), SOFT: (1, 1)}

# proposal failure classification used by the diagnostics counters
FAIL_NEWTON = "newton"
FAIL_REVERSE = "reverse_check"


@dataclass(frozen=True)
class SamplerConfig:
    """Step scales, label probabilities and density constants for one chain.

    epsilon is the softness scale of the off-surface target
    exp(-|q(x)|^2 / (2 epsilon^2)).  The defaults() constructor applies the
    tuning that makes on/off jumps exact on linear surfaces: sigma_prp equal
    to epsilon, sigma_tan equal to sigma_on, and
    k2 / k1 = lambda12 (2 pi)^(m/2) epsilon^m / lambda21.
    """

    epsilon: float
    sigma_prp: float
    sigma_tan: float
    sigma_on: float
    sigma_hrd: float
    sigma_sft: float
    lambda11: float
    lambda12: float
    lambda21: float
    lambda22: float
    k1: float
    k2: float
    newton: NewtonSettings = field(default_factory=NewtonSettings)
    seed: int = 0

    def __post_init__(self):
        for name in ("epsilon", "sigma_prp", "sigma_tan", "sigma_on", "sigma_hrd", "sigma_sft"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("lambda11", "lambda12", "lambda21", "lambda22"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if abs(self.lambda11 + self.lambda12 - 1.0) > 1e-12:
            raise ValueError("lambda11 + lambda12 must equal 1")
        if abs(self.lambda21 + self.lambda22 - 1.0) > 1e-12:
            raise ValueError("lambda21 + lambda22 must equal 1")
        if not self.k1 > 0 or not self.k2 > 0:
            raise ValueError("k1 and k2 must be positive")

    @classmethod
    def defaults(
        cls,
        epsilon: float,
        num_constraints: int,
        *,
        sigma_hrd: float = 1.0,
        sigma_on: float | None = None,
        sigma_sft: float | None = None,
        lambda11: float = 0.2,
        lambda21: float = 0.2,
        k1: float = 1.0,
        newton: NewtonSettings | None = None,
        seed: int = 0,
    ) -> "SamplerConfig":
        """Config with the linear-surface exactness tuning baked in."""
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        lambda12 = 1.0 - lambda11
        lambda22 = 1.0 - lambda21
        if lambda21 <= 0 or lambda12 <= 0:
            raise ValueError(
                "defaults() requires lambda21 > 0 and lambda12 > 0; "
                "construct SamplerConfig directly to pin k2 yourself"
            )
        sigma_on = epsilon if sigma_on is None else sigma_on
        sigma_sft = 0.7 * epsilon if sigma_sft is None else sigma_sft
        k2 = k1 * lambda12 * (2.0 * math.pi) ** (num_constraints / 2.0) * epsilon**num_constraints / lambda21
        return cls(
            epsilon=epsilon,
            sigma_prp=epsilon,
            sigma_tan=sigma_on,
            sigma_on=sigma_on,
            sigma_hrd=sigma_hrd,
            sigma_sft=sigma_sft,
            lambda11=lambda11,
            lambda12=lambda12,
            lambda21=lambda21,
            lambda22=lambda22,
            k1=k1,
            k2=k2,
            newton=newton if newton is not None else NewtonSettings(),
            seed=seed,
        )

    def move_probability(self, i: int, j: int) -> float:
        if i == 1:
            return self.lambda11 if j == 1 else self.lambda12
        return self.lambda21 if j == 1 else self.lambda22

    def with_seed(self, seed: int) -> "SamplerConfig":
        return replace(self, seed=seed)


@dataclass
class Proposal:
    """A candidate next state with its forward/reverse transition densities.

    log_forward and log_reverse are the log proposal densities h(x -> y) and
    h(y -> x) with respect to the reference measure of the destination label,
    Jacobian factors included.  Infeasible proposals (projection failure,
    failed reverse check, or a jump that lands exactly on the surface) have
    feasible=False and are rejected outright.
    """

    y: np.ndarray | None
    move_type: str
    log_forward: float
    log_reverse: float
    feasible: bool
    fail_reason: str | None = None
    frame_y: TangentFrame | None = None
    u_y: float | None = None

    @property
    def forward_density(self) -> float:
        return math.exp(self.log_forward)

    @property
    def reverse_density(self) -> float:
        return math.exp(self.log_reverse)


def _infeasible(move_type: str, reason: str) -> Proposal:
    return Proposal(
        y=None,
        move_type=move_type,
        log_forward=math.nan,
        log_reverse=math.nan,
        feasible=False,
        fail_reason=reason,
    )


def _log_gauss(norm_sq: float, sigma: float, dim: int) -> float:
    return -0.5 * dim * LOG_2PI - dim * math.log(sigma) - norm_sq / (2.0 * sigma * sigma)


def off_normal_log_density(frame: TangentFrame, r_n: np.ndarray, sigma_prp: float) -> float:
    """Log density of the normal component of an off-surface jump.

    The normal step is normal_basis @ r_n with r_n isotropic; expressed in
    ambient coordinates its density carries the product of the gradient's
    singular values.
    """
    m = len(r_n)
    return float(np.log(frame.singular_values).sum()) + _log_gauss(
        float(r_n @ r_n), sigma_prp, m
    )


def density_f1(config: SamplerConfig, model: ConstraintModel, x: np.ndarray) -> float:
    """Unnormalized off-surface target density k1 exp(-|q(x)|^2 / 2 eps^2)."""
    return math.exp(log_density_f1(config, model, x))


def log_density_f1(
    config: SamplerConfig, model: ConstraintModel, x: np.ndarray, u: float | None = None
) -> float:
    if u is None:
        q = model.evaluate(x)
        u = float(q @ q)
    return math.log(config.k1) - u / (2.0 * config.epsilon**2)


def density_f2(config: SamplerConfig, model: ConstraintModel, x: np.ndarray) -> float:
    """Unnormalized on-surface target density k2 det(grad^T grad)^(-1/2)."""
    return math.exp(log_density_f2(config, tangent_frame(model, x)))


def log_density_f2(config: SamplerConfig, frame: TangentFrame) -> float:
    return math.log(config.k2) + log_gradient_factor(frame)


def propose_hard(
    model: ConstraintModel,
    x: np.ndarray,
    config: SamplerConfig,
    rng: np.random.Generator,
    frame_x: TangentFrame | None = None,
) -> Proposal:
    """Surface-to-surface move: tangent Gaussian step, project back, reverse check."""
    if frame_x is None:
        frame_x = tangent_frame(model, x)
    d = model.surface_dim
    v = frame_x.tangent_basis @ (config.sigma_hrd * rng.standard_normal(d))
    res = newton_project(model, x + v, frame_x.grad, config.newton)
    if not res.converged:
        return _infeasible(HARD, FAIL_NEWTON)
    y = res.y
    try:
        frame_y = tangent_frame(model, y)
    except RankDeficient:
        return _infeasible(HARD, FAIL_NEWTON)
    diff = x - y
    tb = frame_y.tangent_basis
    v_rev = tb @ (tb.T @ diff)
    rev = newton_project(model, y + v_rev, frame_y.grad, config.newton)
    if not rev.converged:
        return _infeasible(HARD, FAIL_REVERSE)
    miss = rev.y - x
    if math.sqrt(float(miss @ miss)) > config.newton.reverse_tol:
        return _infeasible(HARD, FAIL_REVERSE)
    jac = abs(projection_jacobian(frame_x, frame_y))
    if jac == 0.0:
        return _infeasible(HARD, FAIL_REVERSE)
    log_jac = math.log(jac)
    return Proposal(
        y=y,
        move_type=HARD,
        log_forward=_log_gauss(float(v @ v), config.sigma_hrd, d) + log_jac,
        log_reverse=_log_gauss(float(v_rev @ v_rev), config.sigma_hrd, d) + log_jac,
        feasible=True,
        frame_y=frame_y,
    )


def propose_off(
    model: ConstraintModel,
    x: np.ndarray,
    config: SamplerConfig,
    rng: np.random.Generator,
    frame_x: TangentFrame | None = None,
) -> Proposal:
    """Surface-to-ambient jump with separate normal and tangent scales.

    The reverse density is that of the ambient-to-surface move from y back to
    x, which requires projecting y to the surface; that projection doubles as
    the reverse feasibility check.
    """
    if frame_x is None:
        frame_x = tangent_frame(model, x)
    m = model.num_constraints
    d = model.surface_dim
    r_n = config.sigma_prp * rng.standard_normal(m)
    r_t = config.sigma_tan * rng.standard_normal(d)
    y = x + frame_x.normal_basis @ r_n + frame_x.tangent_basis @ r_t
    q_y = model.evaluate(y)
    u_y = float(q_y @ q_y)
    if math.sqrt(u_y) <= config.newton.tol_q:
        # the proposal must actually leave the surface to get label 1
        return _infeasible(OFF, FAIL_REVERSE)
    proj = newton_project(model, y, model.gradient(y), config.newton)
    if not proj.converged:
        return _infeasible(OFF, FAIL_REVERSE)
    try:
        frame_ys = tangent_frame(model, proj.y)
    except RankDeficient:
        return _infeasible(OFF, FAIL_REVERSE)
    diff = x - proj.y
    tb = frame_ys.tangent_basis
    v_rev = tb @ (tb.T @ diff)
    rev = newton_project(model, proj.y + v_rev, frame_ys.grad, config.newton)
    if not rev.converged:
        return _infeasible(OFF, FAIL_REVERSE)
    miss = rev.y - x
    if math.sqrt(float(miss @ miss)) > config.newton.reverse_tol:
        return _infeasible(OFF, FAIL_REVERSE)
    jac = abs(projection_jacobian(frame_ys, frame_x))
    if jac == 0.0:
        return _infeasible(OFF, FAIL_REVERSE)
    log_forward = off_normal_log_density(frame_x, r_n, config.sigma_prp) + _log_gauss(
        float(r_t @ r_t), config.sigma_tan, d
    )
    log_reverse = _log_gauss(float(v_rev @ v_rev), config.sigma_on, d) + math.log(jac)
    return Proposal(
        y=y,
        move_type=OFF,
        log_forward=log_forward,
        log_reverse=log_reverse,
        feasible=True,
        u_y=u_y,
    )


def propose_on(
    model: ConstraintModel,
    x: np.ndarray,
    config: SamplerConfig,
    rng: np.random.Generator,
) -> Proposal:
    """Ambient-to-surface jump: project to the surface, then take a surface move.

    No reverse check is needed: the reverse off-surface jump from y to x
    always exists.  Its density is recovered by splitting x - y into normal
    and tangent coefficients at y.
    """
    g_x = model.gradient(x)
    proj = newton_project(model, x, g_x, config.newton)
    if not proj.converged:
        return _infeasible(ON, FAIL_NEWTON)
    x_s = proj.y
    try:
        frame_xs = tangent_frame(model, x_s)
    except RankDeficient:
        return _infeasible(ON, FAIL_NEWTON)
    d = model.surface_dim
    v = frame_xs.tangent_basis @ (config.sigma_on * rng.standard_normal(d))
    res = newton_project(model, x_s + v, frame_xs.grad, config.newton)
    if not res.converged:
        return _infeasible(ON, FAIL_NEWTON)
    y = res.y
    try:
        frame_y = tangent_frame(model, y)
    except RankDeficient:
        return _infeasible(ON, FAIL_NEWTON)
    jac = abs(projection_jacobian(frame_xs, frame_y))
    if jac == 0.0:
        return _infeasible(ON, FAIL_NEWTON)
    log_forward = _log_gauss(float(v @ v), config.sigma_on, d) + math.log(jac)
    diff = x - y
    tb = frame_y.tangent_basis
    v_tan = tb @ (tb.T @ diff)
    v_norm = diff - v_tan
    r_t = tb.T @ v_tan
    r_n = frame_y.grad.T @ v_norm
    log_reverse = off_normal_log_density(frame_y, r_n, config.sigma_prp) + _log_gauss(
        float(r_t @ r_t), config.sigma_tan, d
    )
    return Proposal(
        y=y,
        move_type=ON,
        log_forward=log_forward,
        log_reverse=log_reverse,
        feasible=True,
        frame_y=frame_y,
    )


def propose_soft(
    model: ConstraintModel,
    x: np.ndarray,
    config: SamplerConfig,
    rng: np.random.Generator,
) -> Proposal:
    """Ambient-to-ambient isotropic Gaussian step; symmetric by construction."""
    v = config.sigma_sft * rng.standard_normal(model.ambient_dim)
    y = x + v
    q_y = model.evaluate(y)
    u_y = float(q_y @ q_y)
    if math.sqrt(u_y) <= config.newton.tol_q:
        # measure-zero guard: an off-surface state may not sit on the surface
        return _infeasible(SOFT, FAIL_REVERSE)
    lg = _log_gauss(float(v @ v), config.sigma_sft, model.ambient_dim)
    return Proposal(
        y=y,
        move_type=SOFT,
        log_forward=lg,
        log_reverse=lg,
        feasible=True,
        u_y=u_y,
    )


def _log_lambda(value: float) -> float:
    return math.log(value) if value > 0.0 else -math.inf


def log_acceptance_ratio(
    config: SamplerConfig,
    model: ConstraintModel,
    x: np.ndarray,
    label: int,
    proposal: Proposal,
    frame_x: TangentFrame | None = None,
    u_x: float | None = None,
) -> float:
    """Log of the Metropolis-Hastings ratio for a feasible proposal.

    ratio = f_j(y) lambda_ji h_ji(y, x) / (f_i(x) lambda_ij h_ij(x, y))

    frame_x and u_x are optional memos for the current state (the tangent
    frame when on-surface, |q(x)|^2 when off-surface).
    """
    i, j = MOVE_LABELS[proposal.move_type]
    if i != label:
        raise ValueError(f"move {proposal.move_type} cannot start from label {label}")
    if i == 2:
        if frame_x is None:
            frame_x = tangent_frame(model, x)
        log_f_x = log_density_f2(config, frame_x)
    else:
        log_f_x = log_density_f1(config, model, x, u=u_x)
    if j == 2:
        frame_y = proposal.frame_y
        if frame_y is None:
            frame_y = tangent_frame(model, proposal.y)
        log_f_y = log_density_f2(config, frame_y)
    else:
        log_f_y = log_density_f1(config, model, proposal.y, u=proposal.u_y)
    numer = log_f_y + _log_lambda(config.move_probability(j, i)) + proposal.log_reverse
    denom = log_f_x + _log_lambda(config.move_probability(i, j)) + proposal.log_forward
    return numer - denom


def acceptance_probability(
    config: SamplerConfig,
    model: ConstraintModel,
    x: np.ndarray,
    label: int,
    proposal: Proposal,
    frame_x: TangentFrame | None = None,
    u_x: float | None = None,
) -> float:
    """min(1, MH ratio); zero for infeasible proposals."""
    if not proposal.feasible:
        return 0.0
    log_ratio = log_acceptance_ratio(config, model, x, label, proposal, frame_x, u_x)
    if log_ratio >= 0.0:
        return 1.0
    return math.exp(log_ratio)
