import numpy as np
import pytest

from surfmc import (
    ChainState,
    InitializationFailure,
    SampleLog,
    SamplerConfig,
    extract_soft_samples,
    flat_exactness_deviation,
    run,
    run_chains,
    step,
)
from surfmc.sampler import OFF_SURFACE, ON_SURFACE, initialize

from conftest import random_linear_model


def make_config(m, epsilon=0.1, seed=0, **kw):
    return SamplerConfig.defaults(epsilon=epsilon, num_constraints=m, seed=seed, **kw)


def test_zero_steps_gives_empty_log(two_spheres):
    cfg = make_config(2)
    log, diag = run(two_spheres, cfg, two_spheres.feasible_point, 0, burn_in=0)
    assert len(log) == 0
    d = diag.to_dict()
    assert all(v["proposed"] == 0 for v in d["moves"].values())
    assert d["occupancy"]["off_surface"] == 0 and d["occupancy"]["on_surface"] == 0


def test_label_invariant_holds_along_chain(two_spheres):
    cfg = make_config(2, seed=9)
    log, _ = run(two_spheres, cfg, two_spheres.feasible_point, 5_000, burn_in=100)
    norms = np.linalg.norm(two_spheres.evaluate(log.coords), axis=1)
    on = log.labels == ON_SURFACE
    assert (norms[on] <= cfg.newton.tol_q).all()
    assert (norms[~on] > cfg.newton.tol_q).all()


def test_runs_are_reproducible(two_spheres):
    cfg = make_config(2, seed=123)
    log1, diag1 = run(two_spheres, cfg, two_spheres.feasible_point, 3_000, burn_in=50)
    log2, diag2 = run(two_spheres, cfg, two_spheres.feasible_point, 3_000, burn_in=50)
    assert np.array_equal(log1.coords, log2.coords)
    assert np.array_equal(log1.labels, log2.labels)
    assert diag1.to_dict() == diag2.to_dict()


def test_different_seeds_differ(two_spheres):
    cfg = make_config(2, seed=1)
    log1, _ = run(two_spheres, cfg, two_spheres.feasible_point, 1_000, burn_in=10)
    log2, _ = run(
        two_spheres, cfg.with_seed(2), two_spheres.feasible_point, 1_000, burn_in=10
    )
    assert not np.array_equal(log1.coords, log2.coords)


def test_thinning_length(two_spheres):
    cfg = make_config(2)
    log, diag = run(two_spheres, cfg, two_spheres.feasible_point, 1_000, thin=7, burn_in=0)
    assert len(log) == 1_000 // 7
    assert log.thin == 7
    total = diag.occupancy[OFF_SURFACE] + diag.occupancy[ON_SURFACE]
    assert total == 1_000


def test_counters_consistent(two_spheres):
    cfg = make_config(2, seed=4)
    _, diag = run(two_spheres, cfg, two_spheres.feasible_point, 4_000, burn_in=100)
    d = diag.to_dict()
    for entry in d["moves"].values():
        assert entry["accepted"] <= entry["proposed"]
        if entry["proposed"]:
            assert entry["acceptance_rate"] == entry["accepted"] / entry["proposed"]
    assert sum(e["proposed"] for e in d["moves"].values()) == 4_000


def test_occupancy_near_one_fifth(two_spheres):
    cfg = make_config(2, epsilon=0.05, seed=31)
    _, diag = run(two_spheres, cfg, two_spheres.feasible_point, 60_000, burn_in=2_000)
    frac = diag.to_dict()["occupancy"]["off_surface_fraction"]
    assert 0.15 < frac < 0.25


def test_extract_soft_samples_filters_exactly():
    coords = np.arange(18, dtype=float).reshape(6, 3)
    labels = np.array([2, 1, 2, 1, 1, 2], dtype=np.int8)
    log = SampleLog(coords, labels)
    soft = extract_soft_samples(log)
    assert np.array_equal(soft, coords[[1, 3, 4]])
    log_all_on = SampleLog(coords, np.full(6, 2, dtype=np.int8))
    assert len(extract_soft_samples(log_all_on)) == 0


def test_pure_surface_chain_with_degenerate_labels(two_spheres):
    cfg = SamplerConfig(
        epsilon=0.1, sigma_prp=0.1, sigma_tan=0.1, sigma_on=0.1, sigma_hrd=1.0,
        sigma_sft=0.07, lambda11=0.2, lambda12=0.8, lambda21=0.0, lambda22=1.0,
        k1=1.0, k2=1.0, seed=8,
    )
    log, diag = run(two_spheres, cfg, two_spheres.feasible_point, 2_000, burn_in=0)
    assert (log.labels == ON_SURFACE).all()
    d = diag.to_dict()
    assert d["moves"]["hard"]["proposed"] == 2_000
    assert d["moves"]["off"]["proposed"] == 0


def test_pure_soft_chain_stays_off_surface(two_spheres):
    cfg = SamplerConfig(
        epsilon=0.1, sigma_prp=0.1, sigma_tan=0.1, sigma_on=0.1, sigma_hrd=1.0,
        sigma_sft=0.07, lambda11=1.0, lambda12=0.0, lambda21=0.2, lambda22=0.8,
        k1=1.0, k2=1.0, seed=8,
    )
    log, diag = run(
        two_spheres, cfg, two_spheres.feasible_point, 2_000, burn_in=0,
        init_label=OFF_SURFACE,
    )
    assert (log.labels == OFF_SURFACE).all()
    d = diag.to_dict()
    assert d["moves"]["soft"]["proposed"] == 2_000


def test_initialization_failure_raises(two_spheres):
    cfg = make_config(2)
    # on the axis through the sphere centers the Newton system is singular
    bad = two_spheres.center1 + 0.5 * (two_spheres.center2 - two_spheres.center1)
    with pytest.raises(InitializationFailure):
        run(two_spheres, cfg, bad, 100, burn_in=0)


def test_initialize_off_surface_label(two_spheres):
    cfg = make_config(2, seed=17)
    rng = np.random.default_rng(cfg.seed)
    state = initialize(two_spheres, cfg, two_spheres.feasible_point, rng, label=OFF_SURFACE)
    assert state.label == OFF_SURFACE
    assert np.linalg.norm(two_spheres.evaluate(state.x)) > cfg.newton.tol_q


def test_rejection_keeps_state_and_label(two_spheres):
    cfg = make_config(2, epsilon=0.01, seed=3)
    rng = np.random.default_rng(0)
    state = ChainState(two_spheres.feasible_point.copy(), ON_SURFACE)
    for _ in range(200):
        new_state, rec = step(state, two_spheres, cfg, rng)
        if not rec.accepted:
            assert new_state.label == state.label
            assert np.array_equal(new_state.x, state.x)
        state = new_state


def test_run_chains_merges_deterministically(two_spheres):
    cfg = make_config(2, seed=40)
    log, diag = run_chains(
        two_spheres, cfg, two_spheres.feasible_point, 500, burn_in=20, n_chains=2
    )
    assert len(log) == 1_000
    # the merged log is the two single-seed runs stacked in order
    log_a, diag_a = run(two_spheres, cfg.with_seed(40), two_spheres.feasible_point, 500, burn_in=20)
    log_b, diag_b = run(two_spheres, cfg.with_seed(41), two_spheres.feasible_point, 500, burn_in=20)
    assert np.array_equal(log.coords, np.vstack([log_a.coords, log_b.coords]))
    total = diag.to_dict()["moves"]["hard"]["proposed"]
    assert total == (
        diag_a.to_dict()["moves"]["hard"]["proposed"]
        + diag_b.to_dict()["moves"]["hard"]["proposed"]
    )


def test_flat_chain_accepts_every_jump(rng):
    model = random_linear_model(rng, da=4, m=2)
    cfg = make_config(2, epsilon=0.05, seed=77)
    _, diag = run(model, cfg, np.zeros(4), 20_000, burn_in=500)
    d = diag.to_dict()
    for move in ("hard", "on", "off"):
        assert d["moves"][move]["acceptance_rate"] == pytest.approx(1.0, abs=1e-9)
        assert d["moves"][move]["newton_failures"] == 0
        assert d["moves"][move]["reverse_check_failures"] == 0


def test_flat_exactness_deviation_small(rng):
    model = random_linear_model(rng, da=6, m=3)
    cfg = make_config(3, epsilon=0.05, seed=13)
    assert flat_exactness_deviation(model, cfg, np.zeros(6), 5_000) < 1e-8
