"""Slot calendar and shared-medium resolution.

A super-frame is [S1, S2, (S3, S4) x (K-1)] in the static layout and
[S1, Sa, S2, (S3, S4) x (K-1)] in the dynamic one.  S1 is the
availability snapshot (everyone transmits on her own channel), S2 the
initiator-flag slot, Sa the newcomer announcement slot, and each
(S3, S4) mini-frame carries one probe/response exchange.

Sensing is ideal: the binary sensing vector equals the occupancy
indicator in every slot, and transmitting while sensing is allowed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .core import RewardModel, RngStream, sample_reward
from .errors import ProtocolViolationError

S1 = "S1"
S2 = "S2"
SA = "Sa"
S3 = "S3"
S4 = "S4"


def super_frame_length(K: int, dynamic: bool) -> int:
    """Slots per super-frame: 2K static, 2K+1 dynamic."""
    return 2 * K + 1 if dynamic else 2 * K


@dataclass(frozen=True)
class SlotRole:
    """Protocol role of one slot; mini_frame_index is set for S3/S4 only."""

    kind: str
    mini_frame_index: int | None = None


@dataclass(frozen=True)
class TransmissionIntent:
    """One user's action for one slot.

    channel None means the user stays silent.  counts_as_sample marks
    whether a successful (lone) transmission feeds the user's learning
    statistics; probe transmissions set it False and their reward draw
    is discarded by the agent.
    """

    user: int
    channel: int | None
    counts_as_sample: bool = True


@dataclass(frozen=True)
class MediumOutcome:
    """Resolution of one slot: occupancy, binary sensing, per-user rewards.

    rewards has an entry for every transmitting user: a Bernoulli draw
    for lone transmitters, 0 for colliders.  Silent users get no entry.
    """

    occupancy: np.ndarray
    sensing: np.ndarray
    rewards: dict[int, int]


def slot_kind(t: int, K: int, dynamic: bool = False) -> SlotRole:
    """Role of absolute slot t (t counted from the end of the warm-up)."""
    if t < 0:
        raise ValueError("slot index must be nonnegative")
    header = 3 if dynamic else 2
    offset = t % super_frame_length(K, dynamic)
    if offset == 0:
        return SlotRole(S1)
    if dynamic and offset == 1:
        return SlotRole(SA)
    if offset == header - 1:
        return SlotRole(S2)
    m = (offset - header) // 2 + 1
    kind = S3 if (offset - header) % 2 == 0 else S4
    return SlotRole(kind, m)


def resolve_slot(
    model: RewardModel,
    intents: Iterable[TransmissionIntent],
    rng: RngStream | Mapping[int, RngStream],
) -> MediumOutcome:
    """Resolve one slot's transmissions on the shared medium.

    A lone transmitter on channel k draws a reward from mu[user, k];
    two or more transmitters on one channel all receive 0.  rng may be
    a single stream or a per-user mapping (the engine uses the latter
    so each user consumes only her own stream).
    """
    intents = sorted(intents, key=lambda i: i.user)
    seen: set[int] = set()
    for intent in intents:
        if intent.user in seen:
            raise ProtocolViolationError(f"user {intent.user} appears twice in one slot")
        seen.add(intent.user)

    occupancy = np.zeros(model.K, dtype=np.int64)
    for intent in intents:
        if intent.channel is not None:
            occupancy[intent.channel] += 1

    rewards: dict[int, int] = {}
    for intent in intents:
        if intent.channel is None:
            continue
        if occupancy[intent.channel] == 1:
            stream = rng[intent.user] if isinstance(rng, Mapping) else rng
            rewards[intent.user] = sample_reward(model, intent.user, intent.channel, stream)
        else:
            rewards[intent.user] = 0
    sensing = (occupancy > 0).astype(np.int8)
    return MediumOutcome(occupancy=occupancy, sensing=sensing, rewards=rewards)
