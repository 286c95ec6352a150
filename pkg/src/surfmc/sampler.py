"""The augmented chain driver: label selection, dispatch, accept/reject, logging.

A chain state is a point plus a label (1 off-surface, 2 on-surface) that must
stay consistent with the constraint norm at all times.  Rejected or
infeasible proposals leave both the point and the label unchanged.
"""

from __future__ import annotations

import math
from collections import namedtuple
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geometry import ConstraintModel, TangentFrame, tangent_frame
from .moves import (
    FAIL_NEWTON,
    FAIL_REVERSE,
    HARD,
    MOVE_TYPES,
    OFF,
    ON,
    SOFT,
    SamplerConfig,
    log_acceptance_ratio,
    propose_hard,
    propose_off,
    propose_on,
    propose_soft,
)
from .projection import newton_project

OFF_SURFACE = 1
ON_SURFACE = 2


class InitializationFailure(Exception):
    """The starting point could not be projected onto the constraint surface."""


@dataclass
class ChainState:
    """Current sample: ambient point plus surface/off-surface label.

    frame and u are optional memos (the tangent frame for on-surface states,
    |q(x)|^2 for off-surface ones) carried along to avoid recomputation.
    """

    x: np.ndarray
    label: int
    frame: TangentFrame | None = field(default=None, repr=False, compare=False)
    u: float | None = field(default=None, repr=False, compare=False)


# Per-step outcome: which move was tried, whether the proposal was feasible,
# whether it was accepted, the failure classification if any, and the log MH
# ratio (nan for infeasible proposals).
StepRecord = namedtuple("StepRecord", "move_type feasible accepted fail_reason log_ratio")


@dataclass
class MoveStats:
    proposed: int = 0
    accepted: int = 0
    newton_failures: int = 0
    reverse_check_failures: int = 0

    def merge(self, other: "MoveStats") -> None:
        self.proposed += other.proposed
        self.accepted += other.accepted
        self.newton_failures += other.newton_failures
        self.reverse_check_failures += other.reverse_check_failures


@dataclass
class ChainDiagnostics:
    moves: dict = field(default_factory=lambda: {m: MoveStats() for m in MOVE_TYPES})
    occupancy: dict = field(default_factory=lambda: {OFF_SURFACE: 0, ON_SURFACE: 0})

    def record(self, rec: StepRecord, new_label: int) -> None:
        stats = self.moves[rec.move_type]
        stats.proposed += 1
        if rec.accepted:
            stats.accepted += 1
        if rec.fail_reason == FAIL_NEWTON:
            stats.newton_failures += 1
        elif rec.fail_reason == FAIL_REVERSE:
            stats.reverse_check_failures += 1
        self.occupancy[new_label] += 1

    def acceptance_rate(self, move_type: str) -> float:
        stats = self.moves[move_type]
        return stats.accepted / stats.proposed if stats.proposed else math.nan

    def merge(self, other: "ChainDiagnostics") -> None:
        for move_type, stats in other.moves.items():
            self.moves[move_type].merge(stats)
        for label, count in other.occupancy.items():
            self.occupancy[label] += count

    def to_dict(self) -> dict:
        out = {"moves": {}, "occupancy": {}}
        for move_type in MOVE_TYPES:
            stats = self.moves[move_type]
            entry = {
                "proposed": stats.proposed,
                "accepted": stats.accepted,
                "newton_failures": stats.newton_failures,
                "reverse_check_failures": stats.reverse_check_failures,
            }
            if stats.proposed:
                entry["acceptance_rate"] = stats.accepted / stats.proposed
            out["moves"][move_type] = entry
        total = self.occupancy[OFF_SURFACE] + self.occupancy[ON_SURFACE]
        out["occupancy"] = {
            "off_surface": self.occupancy[OFF_SURFACE],
            "on_surface": self.occupancy[ON_SURFACE],
        }
        if total:
            out["occupancy"]["off_surface_fraction"] = self.occupancy[OFF_SURFACE] / total
        return out


@dataclass
class SampleLog:
    """Recorded chain states, one row per retained step."""

    coords: np.ndarray  # (n, ambient_dim)
    labels: np.ndarray  # (n,)
    thin: int = 1

    def __len__(self) -> int:
        return len(self.labels)


def extract_soft_samples(log: SampleLog) -> np.ndarray:
    """The off-surface subsequence: these are the draws from the soft target."""
    return log.coords[log.labels == OFF_SURFACE]


def step(
    state: ChainState,
    model: ConstraintModel,
    config: SamplerConfig,
    rng: np.random.Generator,
) -> tuple[ChainState, StepRecord]:
    """Advance the chain by one proposal and accept/reject decision."""
    u_label = rng.uniform()
    if state.label == OFF_SURFACE:
        move_type = SOFT if u_label < config.lambda11 else ON
    else:
        move_type = HARD if u_label < config.lambda22 else OFF

    if move_type == HARD:
        if state.frame is None:
            state.frame = tangent_frame(model, state.x)
        proposal = propose_hard(model, state.x, config, rng, frame_x=state.frame)
    elif move_type == OFF:
        if state.frame is None:
            state.frame = tangent_frame(model, state.x)
        proposal = propose_off(model, state.x, config, rng, frame_x=state.frame)
    elif move_type == ON:
        proposal = propose_on(model, state.x, config, rng)
    else:
        proposal = propose_soft(model, state.x, config, rng)

    if not proposal.feasible:
        return state, StepRecord(move_type, False, False, proposal.fail_reason, math.nan)

    log_ratio = log_acceptance_ratio(
        config, model, state.x, state.label, proposal,
        frame_x=state.frame, u_x=state.u,
    )
    accepted = log_ratio >= 0.0 or rng.uniform() < math.exp(log_ratio)
    if accepted:
        new_label = ON_SURFACE if move_type in (HARD, ON) else OFF_SURFACE
        state = ChainState(proposal.y, new_label, frame=proposal.frame_y, u=proposal.u_y)
    return state, StepRecord(move_type, True, accepted, None, log_ratio)


def initialize(
    model: ConstraintModel,
    config: SamplerConfig,
    init: np.ndarray,
    rng: np.random.Generator,
    label: int = ON_SURFACE,
) -> ChainState:
    """Project the user's starting point onto the surface.

    With label 1 the on-surface point is then displaced along the normal
    basis at scale epsilon so the chain starts off the surface (used by the
    pure soft-move baseline, which never visits the surface).
    """
    res = newton_project(model, np.asarray(init, dtype=float), model.gradient(init), config.newton)
    if not res.converged:
        raise InitializationFailure(
            f"could not project the initial point {init} onto the surface "
            f"(status {res.status.value})"
        )
    frame = tangent_frame(model, res.y)
    if label == ON_SURFACE:
        return ChainState(res.y, ON_SURFACE, frame=frame)
    for _ in range(100):
        r_n = config.epsilon * rng.standard_normal(model.num_constraints)
        x = res.y + frame.normal_basis @ r_n
        q = model.evaluate(x)
        u = float(q @ q)
        if math.sqrt(u) > config.newton.tol_q:
            return ChainState(x, OFF_SURFACE, u=u)
    raise InitializationFailure("could not displace the initial point off the surface")


def run(
    model: ConstraintModel,
    config: SamplerConfig,
    init: np.ndarray,
    n_steps: int,
    thin: int = 1,
    burn_in: int = 10_000,
    init_label: int = ON_SURFACE,
    rng: np.random.Generator | None = None,
) -> tuple[SampleLog, ChainDiagnostics]:
    """Run one chain for burn_in + n_steps steps, logging every thin-th state.

    Diagnostics cover the post-burn-in portion only, so reported acceptance
    rates match the logged samples.
    """
    if thin < 1:
        raise ValueError("thin must be at least 1")
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    state = initialize(model, config, init, rng, label=init_label)
    for _ in range(burn_in):
        state, _ = step(state, model, config, rng)

    n_records = n_steps // thin
    coords = np.empty((n_records, model.ambient_dim))
    labels = np.empty(n_records, dtype=np.int8)
    diagnostics = ChainDiagnostics()
    idx = 0
    for k in range(1, n_steps + 1):
        state, rec = step(state, model, config, rng)
        diagnostics.record(rec, state.label)
        if k % thin == 0:
            coords[idx] = state.x
            labels[idx] = state.label
            idx += 1
    return SampleLog(coords, labels, thin), diagnostics


def _run_worker(args):
    model, config, init, n_steps, thin, burn_in, init_label, seed = args
    return run(model, config.with_seed(seed), init, n_steps, thin, burn_in, init_label)


def run_chains(
    model: ConstraintModel,
    config: SamplerConfig,
    init: np.ndarray,
    n_steps: int,
    thin: int = 1,
    burn_in: int = 10_000,
    n_chains: int = 1,
    init_label: int = ON_SURFACE,
) -> tuple[SampleLog, ChainDiagnostics]:
    """Run n_chains independent chains (seeds seed, seed+1, ...) and merge.

    Chains run in separate processes when n_chains > 1; logs are concatenated
    in chain order and diagnostics are summed, so output is deterministic.
    """
    if n_chains < 1:
        raise ValueError("n_chains must be at least 1")
    if n_chains == 1:
        return run(model, config, init, n_steps, thin, burn_in, init_label)
    jobs = [
        (model, config, init, n_steps, thin, burn_in, init_label, config.seed + i)
        for i in range(n_chains)
    ]
    with ProcessPoolExecutor(max_workers=n_chains) as pool:
        results = list(pool.map(_run_worker, jobs))
    coords = np.concatenate([log.coords for log, _ in results])
    labels = np.concatenate([log.labels for log, _ in results])
    diagnostics = ChainDiagnostics()
    for _, diag in results:
        diagnostics.merge(diag)
    return SampleLog(coords, labels, thin), diagnostics


def flat_exactness_deviation(
    model: ConstraintModel,
    config: SamplerConfig,
    init: np.ndarray,
    n_steps: int,
    rng: np.random.Generator | None = None,
) -> float:
    """Largest |MH ratio - 1| over feasible hard/on/off proposals of a run.

    On a linear model with the defaults() tuning this should be at the level
    of floating-point round-off for every jump move.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    state = initialize(model, config, init, rng)
    worst = 0.0
    for _ in range(n_steps):
        state, rec = step(state, model, config, rng)
        if rec.feasible and rec.move_type in (HARD, ON, OFF):
            worst = max(worst, abs(math.expm1(min(rec.log_ratio, 700.0))))
    return worst
