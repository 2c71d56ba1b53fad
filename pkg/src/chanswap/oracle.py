"""Ground-truth verifiers, independent of the simulator.

Stability here is exchange stability: a configuration is stable when no
user pair wants to swap (strict gain for one, at-least-no-loss for the
other, both measured on true means) and, under the default vacancy
extension, no user strictly prefers an empty channel over her own.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations
from math import factorial

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import RewardModel
from .errors import ConfigurationError, EnumerationSizeError

ENUMERATION_LIMIT = 10_000_000


@dataclass(frozen=True)
class Configuration:
    """Orthogonal assignment of users to channels.

    assignment maps user index to channel index; all channels distinct.
    """

    assignment: tuple[int, ...]
    K: int

    def __post_init__(self):
        channels = self.assignment
        if any(not 0 <= c < self.K for c in channels):
            raise ConfigurationError(f"channel index outside [0, {self.K})")
        if len(set(channels)) != len(channels):
            raise ConfigurationError("configuration is not orthogonal")

    @property
    def occupied(self) -> frozenset[int]:
        return frozenset(self.assignment)

    def vacant(self) -> list[int]:
        occ = self.occupied
        return [k for k in range(self.K) if k not in occ]


def _pairwise_stable(mu: np.ndarray, channels: np.ndarray) -> bool:
    # cross[i, j] = value user i places on user j's channel
    cross = mu[:, channels]
    own = np.diag(cross)
    strict = cross > own[:, None]
    weak = cross >= own[:, None]
    return not np.any(strict & weak.T)


def _no_better_vacancy(mu: np.ndarray, channels: np.ndarray, K: int) -> bool:
    if len(channels) == K:
        return True
    vacant = np.ones(K, dtype=bool)
    vacant[channels] = False
    own = mu[np.arange(len(channels)), channels]
    return not np.any(mu[:, vacant] > own[:, None])


def stable_assignment(
    mu_rows: np.ndarray, channels, K: int, *, include_vacancies: bool = True
) -> bool:
    """Stability check on raw arrays; is_smc wraps it with validation.

    mu_rows holds one row per assigned user, aligned with channels.
    """
    channels = np.asarray(channels, dtype=np.int64)
    if not _pairwise_stable(mu_rows, channels):
        return False
    if include_vacancies and not _no_better_vacancy(mu_rows, channels, K):
        return False
    return True


def is_smc(config: Configuration, model: RewardModel, *, include_vacancies: bool = True) -> bool:
    """True iff no user pair passes the strict/weak swap test and (by
    default) no user strictly prefers a vacant channel.

    include_vacancies=False restricts the check to user pairs only,
    matching the narrower pair-based definition.
    """
    if len(config.assignment) != model.N:
        raise ConfigurationError(
            f"configuration has {len(config.assignment)} users, model has {model.N}"
        )
    return stable_assignment(
        model.mu, config.assignment, model.K, include_vacancies=include_vacancies
    )


def enumerate_absorbing(
    model: RewardModel, *, include_vacancies: bool = True
) -> list[Configuration]:
    """All orthogonal configurations passing is_smc, by brute force.

    Iterates injective assignments in lexicographic order, so the
    result ordering is reproducible.  Guarded to K!/(K-N)! <= 10^7.
    """
    count = factorial(model.K) // factorial(model.K - model.N)
    if count > ENUMERATION_LIMIT:
        raise EnumerationSizeError(
            f"{count} orthogonal configurations exceed the enumeration limit"
        )
    out = []
    for channels in permutations(range(model.K), model.N):
        config = Configuration(assignment=channels, K=model.K)
        if is_smc(config, model, include_vacancies=include_vacancies):
            out.append(config)
    return out


def optimal_assignment(model: RewardModel) -> tuple[float, Configuration]:
    """Maximum total true mean over orthogonal assignments (max-weight matching)."""
    rows, cols = linear_sum_assignment(model.mu, maximize=True)
    assignment = [0] * model.N
    for n, k in zip(rows, cols):
        assignment[n] = int(k)
    value = float(model.mu[rows, cols].sum())
    return value, Configuration(assignment=tuple(assignment), K=model.K)
