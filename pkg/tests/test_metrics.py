from types import SimpleNamespace

import numpy as np
import pytest

from chanswap.core import RewardModel, RngStream, draw_reward_matrix
from chanswap.metrics import (
    count_switches,
    normalized_reward,
    system_potential,
    user_potential,
)
from chanswap.oracle import Configuration, optimal_assignment


def ranking_example_model():
    # three users with distinct rankings; users sit on channels (2, 0, 3)
    mu = np.array([
        [0.9, 0.8, 0.6, 0.7],   # ranks: 0 > 1 > 3 > 2, current 2 (worst)
        [0.8, 0.9, 0.7, 0.6],   # ranks: 1 > 0 > 2 > 3, current 0 (second)
        [0.8, 0.7, 0.6, 0.9],   # ranks: 3 > 0 > 1 > 2, current 3 (best)
    ])
    return RewardModel(K=4, N=3, mu=mu), Configuration(assignment=(2, 0, 3), K=4)


def chain_example_model():
    # identical rankings 0 > 1 > 2 > 3, user i on channel i
    mu = np.array([
        [0.9, 0.7, 0.5, 0.3],
        [0.8, 0.6, 0.4, 0.2],
        [0.95, 0.75, 0.55, 0.35],
        [0.85, 0.65, 0.45, 0.25],
    ])
    return RewardModel(K=4, N=4, mu=mu), Configuration(assignment=(0, 1, 2, 3), K=4)


def test_user_potential_ranking_example():
    model, config = ranking_example_model()
    assert user_potential(model, config, 0) == 3
    assert user_potential(model, config, 1) == 1
    assert user_potential(model, config, 2) == 0


def test_user_potential_zero_on_argmax():
    model, _ = ranking_example_model()
    best = Configuration(assignment=(0, 1, 3), K=4)
    for n in range(3):
        assert user_potential(model, best, n) == 0


def test_user_potential_matches_brute_count():
    model = draw_reward_matrix(5, 3, RngStream(31, "m"))
    config = Configuration(assignment=(4, 1, 2), K=5)
    for n in range(3):
        own = model.mu[n, config.assignment[n]]
        brute = sum(1 for k in range(5) if model.mu[n, k] > own)
        assert user_potential(model, config, n) == brute


def test_system_potential_examples():
    model, config = ranking_example_model()
    assert system_potential(model, config) == 4
    chain_model, chain_config = chain_example_model()
    assert system_potential(chain_model, chain_config) == 6


def test_system_potential_upper_bound():
    for seed in range(6):
        model = draw_reward_matrix(5, 4, RngStream(seed, "m"))
        config = Configuration(assignment=(0, 1, 2, 3), K=5)
        assert 0 <= system_potential(model, config) <= 4 * (5 - 1)


def fake_trace(channels, roster):
    return SimpleNamespace(
        channels=np.asarray(channels, dtype=np.int16),
        roster=tuple(roster),
    )


def test_count_switches_no_changes():
    trace = fake_trace([[0, 2], [0, 2], [0, 2]], roster=(0, 1))
    switches = count_switches(trace)
    assert np.array_equal(switches, np.zeros((3, 2)))


def test_count_switches_single_swap_steps_both_users():
    trace = fake_trace([[0, 2], [0, 2], [2, 0], [2, 0]], roster=(0, 1))
    switches = count_switches(trace)
    assert switches[:, 0].tolist() == [0, 0, 1, 1]
    assert switches[:, 1].tolist() == [0, 0, 1, 1]


def test_count_switches_ignores_arrivals_and_departures():
    trace = fake_trace([[0, -1], [0, 2], [1, 2], [-1, 2]], roster=(0, 1))
    switches = count_switches(trace)
    assert np.isnan(switches[0, 1]) and np.isnan(switches[3, 0])
    assert switches[1, 1] == 0  # appearing is not a switch
    assert switches[2, 0] == 1


def test_normalized_reward_is_one_at_the_optimum():
    model = draw_reward_matrix(4, 3, RngStream(17, "m"))
    _, best = optimal_assignment(model)
    trace = fake_trace([list(best.assignment)] * 3, roster=(0, 1, 2))
    ratio = normalized_reward(trace, model)
    assert ratio == pytest.approx([1.0, 1.0, 1.0])


def test_normalized_reward_matches_hand_computation():
    model, config = ranking_example_model()
    trace = fake_trace([list(config.assignment)], roster=(0, 1, 2))
    opt, _ = optimal_assignment(model)
    expected = (0.6 + 0.8 + 0.9) / opt
    assert normalized_reward(trace, model)[0] == pytest.approx(expected)
    assert 0.0 < expected <= 1.0


def test_normalized_reward_uses_live_subset_optimum():
    model, _ = ranking_example_model()
    # user 1 absent: denominator is the optimum of users {0, 2} only
    trace = fake_trace([[0, -1, 3]], roster=(0, 1, 2))
    sub = RewardModel(K=4, N=2, mu=model.mu[[0, 2]])
    opt, _ = optimal_assignment(sub)
    assert normalized_reward(trace, model)[0] == pytest.approx((0.9 + 0.9) / opt)
