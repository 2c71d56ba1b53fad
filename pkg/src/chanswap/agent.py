"""Per-user policy: learning statistics, ranking, election, swaps.

Each user keeps per-channel reward sums r and sample counts s, ranks
channels by an optimism index (empirical mean plus an exploration
bonus), and coordinates channel changes through the slot calendar: a
single elected initiator per super-frame probes the channels she
prefers, occupants answer by transmitting (accept) or staying silent
(decline).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import RngStream
from .errors import ProtocolViolationError

CFL = "CFL"
STEADY = "STEADY"
NEWBIE_WAIT = "NEWBIE_WAIT"

# Coordination step outcomes.
IDLE = "idle"
MOVED = "moved"
SWAPPED = "swapped"
DECLINED = "declined"


@dataclass
class AgentState:
    """Mutable per-user state.

    pref_ptr is 1-based into pref_list; 0 means no pending coordination
    (either none started or finished for this super-frame).
    """

    K: int
    r: np.ndarray = field(default=None)
    s: np.ndarray = field(default=None)
    a: int | None = None
    pref_list: list[int] = field(default_factory=list)
    pref_ptr: int = 0
    phase: str = CFL
    cfl_satisfied: bool = False

    def __post_init__(self):
        if self.r is None:
            self.r = np.zeros(self.K, dtype=float)
        if self.s is None:
            self.s = np.zeros(self.K, dtype=np.int64)


@dataclass(frozen=True)
class UcbIndexVector:
    """Per-channel optimism index at slot count t; +inf for unsampled channels."""

    I: np.ndarray
    t: int


def ucb_indices(r: np.ndarray, s: np.ndarray, t: int) -> np.ndarray:
    """index[k] = r[k]/s[k] + sqrt(2 log10(t) / s[k]), +inf where s[k] == 0.

    The exploration term uses the common logarithm: with the natural
    logarithm the persistent optimism on rarely-sampled channels keeps
    triggering late swaps, and long-horizon runs fail to settle into a
    stable configuration at the rate the acceptance experiments demand.
    """
    if t < 1:
        raise ValueError("slot count t must be >= 1")
    out = np.full(r.shape, np.inf)
    mask = s > 0
    sm = s[mask]
    out[mask] = r[mask] / sm + np.sqrt(2.0 * math.log10(t) / sm)
    return out


def rank_channels(state: AgentState, t: int) -> tuple[list[int], UcbIndexVector]:
    """Rank channels by index and list those strictly better than the current one.

    The full ranking is a descending sort with ties broken by lower
    channel index; pref_list is its prefix of channels whose index
    strictly exceeds the current channel's, so it is empty exactly when
    the current channel maximizes the index.
    """
    if state.a is None:
        raise ProtocolViolationError("cannot rank channels before settling on one")
    I = ucb_indices(state.r, state.s, t)
    order = sorted(range(state.K), key=lambda k: (-I[k], k))
    own = I[state.a]
    pref = [k for k in order if I[k] > own]
    return pref, UcbIndexVector(I=I, t=t)


def initiator_flag(pref_list: list[int], epsilon: float, rng: RngStream) -> int:
    """Raise a candidacy flag w.p. epsilon, only when a better channel exists.

    Users with an empty preference list never flag and consume no draw.
    """
    if not 0.0 < epsilon <= 1.0:
        raise ValueError("epsilon must lie in (0, 1]")
    if not pref_list:
        return 0
    return rng.bernoulli(epsilon)


def elect_initiator(flags) -> int | None:
    """Index of the single flag-raiser, or None when zero or several flagged."""
    raised = [n for n, f in enumerate(flags) if f]
    return raised[0] if len(raised) == 1 else None


def coordinate_swap_step(
    state: AgentState,
    response: int,
    channel_available: bool,
    *,
    elected: bool = True,
) -> str:
    """Advance the initiator by one coordination mini-frame.

    The caller supplies what the initiator learned this mini-frame:
    whether the target channel was vacant in the availability snapshot
    and, if probed, the sensed response bit.  Returns one of MOVED,
    SWAPPED, DECLINED or IDLE; MOVED/SWAPPED update the current channel
    and clear the pointer for the rest of the super-frame.
    """
    if not elected:
        raise ProtocolViolationError("coordinate_swap_step called by a non-initiator")
    if state.pref_ptr < 1 or state.pref_ptr > len(state.pref_list):
        return IDLE
    target = state.pref_list[state.pref_ptr - 1]
    if channel_available:
        state.a = target
        state.pref_ptr = 0
        return MOVED
    if response:
        state.a = target
        state.pref_ptr = 0
        return SWAPPED
    state.pref_ptr += 1
    return DECLINED


def respond(I: UcbIndexVector, own_channel: int, initiator_channel: int) -> int:
    """Accept (1) iff the initiator's channel is at least as good by index."""
    return int(I.I[own_channel] <= I.I[initiator_channel])


def transmit_and_learn(state: AgentState, reward: float) -> None:
    """Record one lone transmission on the current channel."""
    state.r[state.a] += reward
    state.s[state.a] += 1


def cfl_step(state: AgentState, sensed_collision: bool, K: int, rng: RngStream) -> None:
    """One warm-up slot: stay while collision-free, rerandomize on collision.

    A colliding user becomes unsatisfied and jumps to a channel drawn
    uniformly from all K; she turns satisfied again only after a
    collision-free slot there.
    """
    if state.phase != CFL:
        raise ProtocolViolationError("cfl_step outside the warm-up phase")
    if sensed_collision:
        state.cfl_satisfied = False
        state.a = rng.integers(K)
    else:
        state.cfl_satisfied = True


def newbie_join(s1_sensing: np.ndarray, rng: RngStream) -> int | None:
    """Pick a vacant channel uniformly from the availability snapshot.

    Returns None when every channel is busy; the newcomer then waits a
    full super-frame before trying again.
    """
    available = [k for k, bit in enumerate(s1_sensing) if not bit]
    if not available:
        return None
    return rng.choice(available)


def p_initiator(epsilon: float, ell: int) -> float:
    """Probability a fixed contender among ell is elected: eps * (1-eps)^(ell-1)."""
    if ell < 1:
        raise ValueError("contender count must be >= 1")
    if not 0.0 < epsilon <= 1.0:
        raise ValueError("epsilon must lie in (0, 1]")
    return epsilon * (1.0 - epsilon) ** (ell - 1)


def default_epsilon(K: int) -> float:
    """Flagging probability used when the config asks for 'auto': 1/K."""
    return 1.0 / K
