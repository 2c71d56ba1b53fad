import numpy as np
import pytest

from chanswap.core import RewardModel, draw_reward_matrix, RngStream
from chanswap.engine import (
    ExperimentConfig,
    default_cfl_length,
    run_experiment,
    run_repetitions,
)
from chanswap.errors import (
    AssumptionViolationError,
    ConfigurationError,
    ProtocolViolationError,
)
from chanswap.oracle import enumerate_absorbing


def traces_equal(a, b):
    return (
        np.array_equal(a.channels, b.channels)
        and np.array_equal(a.potential, b.potential)
        and np.array_equal(a.in_smc, b.in_smc)
        and np.array_equal(a.cum_reward, b.cum_reward)
        and a.events == b.events
        and a.initial_potential == b.initial_potential
        and a.steady_collisions == b.steady_collisions
    )


def test_identical_seed_identical_trace():
    cfg = ExperimentConfig(K=5, N_initial=4, T=600, seed=13)
    assert traces_equal(run_experiment(cfg), run_experiment(cfg))


@pytest.mark.parametrize("K,N", [(3, 3), (5, 3), (6, 6), (2, 1)])
def test_per_slot_reference_path_is_bit_identical(K, N):
    for seed in range(3):
        cfg = ExperimentConfig(K=K, N_initial=N, T=50 * K, seed=seed)
        assert traces_equal(run_experiment(cfg), run_experiment(cfg, per_slot=True))


def test_per_slot_reference_path_dynamic():
    L = 11  # K=5 dynamic super-frame length
    for seed in range(3):
        cfg = ExperimentConfig(
            K=5, N_initial=3, T=80 * L, dynamic=True,
            arrivals=((10 * L, 3), (25 * L, 4)),
            departures=((40 * L, 0), (55 * L, 3)),
            seed=seed,
        )
        assert traces_equal(run_experiment(cfg), run_experiment(cfg, per_slot=True))


def test_single_user_converges_to_argmax():
    model = RewardModel(K=2, N=1, mu=np.array([[0.25, 0.75]]))
    for seed in range(3):
        cfg = ExperimentConfig(K=2, N_initial=1, T=10_000, seed=seed)
        trace = run_experiment(cfg, model)
        assert trace.final_assignment() == {0: 1}
        late = [
            e for e in trace.events
            if e.kind in ("swap", "move") and e.sf >= int(0.8 * trace.super_frames)
        ]
        assert late == []


def test_no_initiator_frames_learn_all_eligible_slots():
    # epsilon ~ 0 means no super-frame ever elects an initiator, so a
    # user samples S1 plus both slots of every mini-frame: 2K-1 per frame
    from chanswap.engine import _Simulation

    model = RewardModel(K=2, N=1, mu=np.array([[0.25, 0.75]]))
    cfg = ExperimentConfig(K=2, N_initial=1, T=400, epsilon=1e-9, seed=5)
    sim = _Simulation(cfg, model)
    sim.run_cfl()
    sim.run_steady_batched()
    assert sim.S_all.sum() == cfg.super_frames * (2 * cfg.K - 1)
    assert not any(e.kind == "election" for e in sim.events)


def test_steady_phase_has_no_collisions():
    for seed in range(4):
        cfg = ExperimentConfig(K=4, N_initial=4, T=60 * 8, seed=seed)
        trace = run_experiment(cfg, per_slot=True)
        assert trace.steady_collisions == 0


def test_at_most_one_swap_per_super_frame():
    cfg = ExperimentConfig(K=5, N_initial=5, T=200 * 10, seed=2)
    trace = run_experiment(cfg)
    per_sf = {}
    for e in trace.events:
        if e.kind in ("swap", "move"):
            per_sf[e.sf] = per_sf.get(e.sf, 0) + 1
    assert all(v == 1 for v in per_sf.values())
    elections = {e.sf for e in trace.events if e.kind == "election"}
    assert set(per_sf) <= elections


def test_potential_changes_only_with_events():
    cfg = ExperimentConfig(K=5, N_initial=4, T=150 * 10, seed=8)
    trace = run_experiment(cfg)
    event_sfs = {e.sf for e in trace.events if e.kind in ("swap", "move")}
    changes = np.nonzero(np.diff(trace.potential))[0] + 1
    assert set(changes.tolist()) <= event_sfs


def test_long_runs_end_in_enumerated_absorbing_configs():
    stable_ends = 0
    for seed in range(8):
        cfg = ExperimentConfig(K=4, N_initial=4, T=30_000, seed=seed)
        trace = run_experiment(cfg)
        if trace.in_smc[-1]:
            stable_ends += 1
            final = tuple(trace.final_assignment()[u] for u in range(4))
            assert final in {c.assignment for c in enumerate_absorbing(trace.model)}
    assert stable_ends >= 6


def test_arrival_and_departure_lifecycle():
    L = 11
    cfg = ExperimentConfig(
        K=5, N_initial=3, T=60 * L, dynamic=True,
        arrivals=((10 * L, 3),), departures=((30 * L, 0),), seed=1,
    )
    trace = run_experiment(cfg)
    arrival = next(e for e in trace.events if e.kind == "arrival")
    departure = next(e for e in trace.events if e.kind == "departure")
    assert arrival.users == (3,) and arrival.sf == 10
    assert departure.users == (0,) and departure.sf == 30
    col3 = trace.roster.index(3)
    assert np.all(trace.channels[:10, col3] == -1)
    assert np.all(trace.channels[10:, col3] >= 0)
    col0 = trace.roster.index(0)
    assert np.all(trace.channels[30:, col0] == -1)
    assert np.all(trace.channels[:30, col0] >= 0)


def test_config_validation_errors():
    with pytest.raises(ConfigurationError):
        ExperimentConfig(K=3, N_initial=4, T=100)
    with pytest.raises(ConfigurationError):
        ExperimentConfig(K=3, N_initial=1, T=2)  # shorter than one super-frame
    with pytest.raises(ConfigurationError):
        ExperimentConfig(K=3, N_initial=2, T=100, epsilon=1.5)
    with pytest.raises(ConfigurationError):
        ExperimentConfig(K=3, N_initial=2, T=100, arrivals=((10, 2),))  # not dynamic
    with pytest.raises(ConfigurationError):
        ExperimentConfig(
            K=3, N_initial=2, T=140, dynamic=True, arrivals=((10, 5),)
        )  # arrival id must be the next unused id
    with pytest.raises(AssumptionViolationError):
        ExperimentConfig(
            K=4, N_initial=1, T=500, dynamic=True,
            arrivals=((10, 1), (11, 2)),  # same boundary super-frame
        )
    with pytest.raises(ConfigurationError):
        ExperimentConfig(
            K=3, N_initial=1, T=500, dynamic=True, departures=((10, 0),)
        )  # schedule empties the system
    with pytest.raises(ConfigurationError):
        ExperimentConfig(K=3, N_initial=3, T=500, dynamic=True, arrivals=((10, 3),))


def test_horizon_padding_and_calendar_properties():
    cfg = ExperimentConfig(K=3, N_initial=2, T=13, seed=0)
    assert cfg.sf_length == 6
    assert cfg.padded_T == 18
    assert cfg.super_frames == 3
    dyn = ExperimentConfig(K=3, N_initial=2, T=14, dynamic=True, seed=0)
    assert dyn.sf_length == 7
    assert dyn.padded_T == 14
    assert ExperimentConfig(K=8, N_initial=2, T=100).epsilon_value == pytest.approx(0.125)
    assert default_cfl_length(10) == 384


def test_model_shape_must_match_roster():
    model = draw_reward_matrix(4, 2, RngStream(0, "m"))
    cfg = ExperimentConfig(K=4, N_initial=3, T=100, seed=0)
    with pytest.raises(ConfigurationError):
        run_experiment(cfg, model)


def test_too_short_warmup_raises():
    cfg = ExperimentConfig(K=3, N_initial=3, T=60, cfl_length=2, seed=1)
    with pytest.raises(ProtocolViolationError):
        run_experiment(cfg)


def test_run_repetitions_derives_seeds_and_orders_results():
    cfg = ExperimentConfig(K=4, N_initial=3, T=200, seed=100, repetitions=3)
    traces = run_repetitions(cfg)
    assert [t.config.seed for t in traces] == [100, 101, 102]
    # each repetition draws its own reward matrix
    assert not np.array_equal(traces[0].model.mu, traces[1].model.mu)
    again = run_repetitions(cfg)
    assert all(traces_equal(a, b) for a, b in zip(traces, again))


def test_run_repetitions_with_worker_pool():
    cfg = ExperimentConfig(K=4, N_initial=3, T=200, seed=7, repetitions=3)
    serial = run_repetitions(cfg)
    pooled = run_repetitions(cfg, workers=2)
    assert all(traces_equal(a, b) for a, b in zip(serial, pooled))


def test_metrics_trace_monotone_cumulative_fields():
    cfg = ExperimentConfig(K=5, N_initial=4, T=100 * 10, seed=3)
    trace = run_experiment(cfg)
    assert np.all(np.diff(trace.cum_reward) >= 0)
    switches = trace.metrics.switches
    live = ~np.isnan(switches)
    assert np.all(np.diff(np.where(live, switches, 0), axis=0) >= -1e-9)
    assert np.all(trace.potential <= 4 * (5 - 1))
    assert np.all((trace.metrics.norm_reward > 0) & (trace.metrics.norm_reward <= 1 + 1e-12))


def test_near_tie_user_keeps_switching_after_others_settle():
    mu = np.array([
        [0.9626, 0.30, 0.9569, 0.10],
        [0.20, 0.85, 0.35, 0.40],
        [0.15, 0.25, 0.40, 0.88],
    ])
    model = RewardModel(K=4, N=3, mu=mu)
    late = np.zeros(3)
    total = np.zeros(3)
    for seed in range(4):
        cfg = ExperimentConfig(K=4, N_initial=3, T=40_000, seed=seed)
        trace = run_experiment(cfg, model)
        sw = trace.metrics.switches
        total += sw[-1]
        late += sw[-1] - sw[int(0.7 * trace.super_frames)]
    assert total[0] > 5 * max(total[1], total[2])
    assert late[0] > 0
    assert late[1] == 0 and late[2] == 0
