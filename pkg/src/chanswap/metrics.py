"""Potential, stability, switch and reward metrics over run traces.

All metrics are the analyst's view: they compare configurations against
true means, not against the agents' empirical indices.  A user's
potential is the number of channels truly better than her current one;
the system potential is the sum over present users and acts as the
convergence witness.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .core import RewardModel
from .oracle import Configuration, is_smc, optimal_assignment

if TYPE_CHECKING:  # pragma: no cover
    from .engine import RunTrace


@dataclass(frozen=True)
class MetricsTrace:
    """Per-super-frame metric series for one run.

    switches[m, i] is the cumulative switch count of roster user i up
    to super-frame m (NaN while the user is absent).  Warm-up moves are
    excluded; the series starts at the first steady super-frame.
    """

    potential: np.ndarray
    in_smc: np.ndarray
    cum_reward: np.ndarray
    norm_reward: np.ndarray
    switches: np.ndarray
    roster: tuple[int, ...]


def user_potential(model: RewardModel, config: Configuration, n: int) -> int:
    """Channels truly better than user n's current one."""
    if n < 0 or n >= len(config.assignment):
        raise ValueError(f"user {n} not assigned in configuration")
    own = model.mu[n, config.assignment[n]]
    return int(np.count_nonzero(model.mu[n] > own))


def system_potential(model: RewardModel, config: Configuration) -> int:
    """Sum of user potentials over all assigned users."""
    channels = np.asarray(config.assignment, dtype=np.int64)
    own = model.mu[np.arange(len(channels)), channels]
    return int(np.count_nonzero(model.mu > own[:, None]))


def count_switches(trace: "RunTrace") -> np.ndarray:
    """Cumulative channel-switch counts per roster user, per super-frame.

    A switch is a change of assigned channel between consecutive
    super-frames while the user is present in both; joining or leaving
    is not a switch.  Absent entries are NaN.
    """
    channels = trace.channels
    n_sf, n_users = channels.shape
    out = np.full((n_sf, n_users), np.nan)
    counts = np.zeros(n_users)
    prev = channels[0] if n_sf else None
    for m in range(n_sf):
        row = channels[m]
        if m > 0:
            switched = (row >= 0) & (prev >= 0) & (row != prev)
            counts[switched] += 1
        out[m, row >= 0] = counts[row >= 0]
        prev = row
    return out


def normalized_reward(trace: "RunTrace", model: RewardModel) -> np.ndarray:
    """Per-super-frame ratio of assigned true-mean sum to the optimal value.

    The optimum is recomputed for each distinct set of present users, so
    dynamic runs are normalized against the optimum achievable by the
    users actually there.
    """
    channels = trace.channels
    n_sf, n_users = channels.shape
    mu_r = model.mu[list(trace.roster)]
    present = channels >= 0
    vals = mu_r[np.arange(n_users)[None, :], np.where(present, channels, 0)] * present
    sums = vals.sum(axis=1)
    patterns, inverse = np.unique(present, axis=0, return_inverse=True)
    opts = np.empty(len(patterns))
    for pi, pat in enumerate(patterns):
        idx = np.nonzero(pat)[0]
        sub = RewardModel(K=model.K, N=len(idx), mu=mu_r[idx])
        opts[pi] = optimal_assignment(sub)[0]
    return sums / opts[inverse]


def compile_metrics(trace: "RunTrace", model: RewardModel) -> MetricsTrace:
    """Assemble the full per-super-frame metric series for a finished run."""
    return MetricsTrace(
        potential=trace.potential,
        in_smc=trace.in_smc,
        cum_reward=trace.cum_reward,
        norm_reward=normalized_reward(trace, model),
        switches=count_switches(trace),
        roster=trace.roster,
    )


def smc_flag(model: RewardModel, assignment: tuple[int, ...]) -> bool:
    """Vacancy-extended stability of one orthogonal assignment."""
    return is_smc(Configuration(assignment=assignment, K=model.K), model)
