"""Reward model, gap statistics and deterministic random streams.

Every random draw in the package flows through an :class:`RngStream`,
which is scoped by a (seed, stream_id) pair.  Giving each user and each
purpose its own stream keeps draw sequences stable when unrelated parts
of an experiment change (e.g. adding a user never perturbs another
user's rewards).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DegenerateGapError


class RngStream:
    """Deterministic random stream identified by (seed, stream_id).

    Identical (seed, stream_id) pairs reproduce identical draw
    sequences; distinct stream ids give statistically independent
    streams.  Batched draws consume the underlying bit stream exactly
    like the equivalent sequence of scalar draws, so callers may batch
    freely without changing results.
    """

    __slots__ = ("seed", "stream_id", "_gen")

    def __init__(self, seed: int, stream_id: str = "root"):
        self.seed = int(seed)
        self.stream_id = stream_id
        entropy = [self.seed & 0xFFFFFFFFFFFFFFFF, *stream_id.encode("utf-8")]
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))

    def spawn(self, suffix: str) -> "RngStream":
        """Derive an independent stream scoped under this one's id."""
        return RngStream(self.seed, f"{self.stream_id}/{suffix}")

    def random(self, size: int | None = None):
        """Uniform[0,1) draw(s); scalar when size is None."""
        return self._gen.random() if size is None else self._gen.random(size)

    def bernoulli(self, p: float) -> int:
        """Single 0/1 draw with success probability p (one uniform consumed)."""
        return int(self._gen.random() < p)

    def bernoulli_sum(self, n: int, p: float) -> int:
        """Sum of n Bernoulli(p) draws (consumes exactly n uniforms)."""
        if n == 0:
            return 0
        return int(np.count_nonzero(self._gen.random(n) < p))

    def integers(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        return int(self._gen.integers(n))

    def choice(self, seq):
        """Uniform choice from a non-empty sequence."""
        return seq[self.integers(len(seq))]

    def __repr__(self) -> str:  # pragma: no cover
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id!r})"


@dataclass(frozen=True)
class RewardModel:
    """Expected-reward matrix for N users over K channels.

    mu[n, k] is the mean of the binary reward user n draws when
    transmitting alone on channel k.  Orthogonal assignments require
    N <= K, enforced at construction.
    """

    K: int
    N: int
    mu: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.K < 1 or self.N < 1:
            raise ConfigurationError(f"need positive dimensions, got K={self.K}, N={self.N}")
        if self.N > self.K:
            raise ConfigurationError(f"more users than channels (N={self.N} > K={self.K})")
        mu = np.asarray(self.mu, dtype=float)
        if mu.shape != (self.N, self.K):
            raise ConfigurationError(f"mu shape {mu.shape} does not match (N={self.N}, K={self.K})")
        if np.any(mu < 0.0) or np.any(mu > 1.0):
            raise ConfigurationError("reward means must lie in [0, 1]")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)


@dataclass(frozen=True)
class GapStats:
    """Smallest absolute mean gap per user, and the minimum over users."""

    per_user: np.ndarray
    min_gap: float


def draw_reward_matrix(K: int, N: int, rng: RngStream) -> RewardModel:
    """Draw an N x K matrix of independent Uniform[0,1] means.

    Rows with exactly tied entries are redrawn (probability zero for
    continuous draws; the loop guards gap statistics downstream).
    """
    if K < 1 or N < 1 or N > K:
        raise ConfigurationError(f"invalid dimensions K={K}, N={N}")
    rows = []
    for _ in range(N):
        row = rng.random(K)
        while K > 1 and np.unique(row).size < K:
            row = rng.random(K)
        rows.append(row)
    return RewardModel(K=K, N=N, mu=np.stack(rows))


def sample_reward(model: RewardModel, n: int, k: int, rng: RngStream) -> int:
    """Binary reward draw for user n transmitting alone on channel k."""
    if not (0 <= n < model.N and 0 <= k < model.K):
        raise IndexError(f"indices (n={n}, k={k}) outside ({model.N}, {model.K})")
    return rng.bernoulli(model.mu[n, k])


def reward_gaps(model: RewardModel) -> GapStats:
    """Minimal absolute gap |mu[n,i] - mu[n,j]| per user row.

    Raises DegenerateGapError if any row has two equal means, since a
    zero gap breaks every sample-complexity expression built on it.
    """
    per_user = np.empty(model.N)
    for n in range(model.N):
        row = np.sort(model.mu[n])
        if model.K == 1:
            per_user[n] = 1.0
            continue
        gap = float(np.min(np.diff(row)))
        if gap == 0.0:
            raise DegenerateGapError(f"user {n} has tied channel means")
        per_user[n] = gap
    per_user.setflags(write=False)
    return GapStats(per_user=per_user, min_gap=float(per_user.min()))
