"""Time-slotted simulation loop: calendar, medium and agents together.

Two execution paths produce bit-identical traces:

* the default batched path walks super-frames, resolving coordination
  from super-frame-start state and drawing each user's rewards for the
  frame in one batch from her own stream;
* the reference path (``per_slot=True``) walks every slot through
  :func:`chanswap.protocol.resolve_slot` and the agent routines.

They coincide because no decision inside a super-frame reads rewards
drawn inside that super-frame (rankings, flags and responses are all
fixed at its start) and because each user draws rewards from a private
stream, so batching her draws cannot disturb anyone else's.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import metrics as metrics_mod
from .agent import (
    IDLE,
    MOVED,
    NEWBIE_WAIT,
    STEADY,
    SWAPPED,
    AgentState,
    UcbIndexVector,
    cfl_step,
    coordinate_swap_step,
    default_epsilon,
    elect_initiator,
    initiator_flag,
    newbie_join,
    rank_channels,
    respond,
    ucb_indices,
)
from .core import RewardModel, RngStream, draw_reward_matrix
from .errors import (
    AssumptionViolationError,
    ConfigurationError,
    ProtocolViolationError,
)
from .oracle import stable_assignment
from .protocol import TransmissionIntent, resolve_slot, super_frame_length


def default_cfl_length(K: int) -> int:
    """Warm-up slots giving the orthogonalization an ample tail: ceil(16 K ln(K+1))."""
    return math.ceil(16.0 * K * math.log(K + 1))


@dataclass(frozen=True)
class ExperimentConfig:
    """Immutable description of one experiment.

    T is the steady-phase horizon in slots, padded up to a whole number
    of super-frames; warm-up slots are extra.  Arrival and departure
    events are (steady-slot, user-id) pairs and take effect at the
    super-frame boundary at or after their slot.  Arriving users must
    carry the next unused ids so that user id doubles as the reward-
    matrix row.
    """

    K: int
    N_initial: int
    T: int
    epsilon: float | str = "auto"
    dynamic: bool = False
    arrivals: tuple[tuple[int, int], ...] = ()
    departures: tuple[tuple[int, int], ...] = ()
    cfl_length: int | None = None
    seed: int = 0
    repetitions: int = 1

    def __post_init__(self):
        object.__setattr__(self, "arrivals", tuple((int(s), int(u)) for s, u in self.arrivals))
        object.__setattr__(self, "departures", tuple((int(s), int(u)) for s, u in self.departures))
        if self.K < 1:
            raise ConfigurationError("K must be positive")
        if not 1 <= self.N_initial <= self.K:
            raise ConfigurationError(f"need 1 <= N_initial <= K, got N={self.N_initial}, K={self.K}")
        if self.T < self.sf_length:
            raise ConfigurationError("horizon shorter than one super-frame")
        if self.repetitions < 1:
            raise ConfigurationError("repetitions must be >= 1")
        if self.cfl_length is not None and self.cfl_length < 1:
            raise ConfigurationError("cfl_length must be positive")
        if isinstance(self.epsilon, str):
            if self.epsilon != "auto":
                raise ConfigurationError(f"epsilon must be a number or 'auto', got {self.epsilon!r}")
        elif not 0.0 < float(self.epsilon) < 1.0:
            raise ConfigurationError("epsilon must lie in (0, 1)")
        if (self.arrivals or self.departures) and not self.dynamic:
            raise ConfigurationError("arrival/departure events require dynamic=True")
        self._validate_schedule()

    def _validate_schedule(self):
        arrival_ids = [u for _, u in self.arrivals]
        expected = list(range(self.N_initial, self.N_initial + len(arrival_ids)))
        if sorted(arrival_ids) != expected or [u for _, u in sorted(self.arrivals)] != expected:
            raise ConfigurationError(
                "arrival user ids must be the next unused ids, in schedule order"
            )
        if len(self.roster) > self.K:
            raise ConfigurationError("total distinct users cannot exceed K")
        arrival_sfs = [self.event_super_frame(s) for s, _ in self.arrivals]
        if len(set(arrival_sfs)) != len(arrival_sfs) or arrival_sfs != sorted(arrival_sfs):
            raise AssumptionViolationError("at most one arrival per super-frame")
        dep_ids = [u for _, u in self.departures]
        if len(set(dep_ids)) != len(dep_ids):
            raise ConfigurationError("a user cannot depart twice")
        if any(u not in self.roster for u in dep_ids):
            raise ConfigurationError("departure of an unknown user")
        for slot, _ in self.arrivals + self.departures:
            if not 0 <= slot < self.padded_T:
                raise ConfigurationError(f"event slot {slot} outside the horizon")
        # Settled count stays within [1, K] automatically (a newcomer into a
        # full system waits), but the schedule must never empty the system.
        changes: dict[int, int] = {}
        for s, _ in self.arrivals:
            changes[self.event_super_frame(s)] = changes.get(self.event_super_frame(s), 0) + 1
        for s, _ in self.departures:
            changes[self.event_super_frame(s)] = changes.get(self.event_super_frame(s), 0) - 1
        live = self.N_initial
        for sf in sorted(changes):
            live += changes[sf]
            if live < 1:
                raise ConfigurationError("schedule empties the system")

    @property
    def sf_length(self) -> int:
        return super_frame_length(self.K, self.dynamic)

    @property
    def padded_T(self) -> int:
        L = self.sf_length
        return ((self.T + L - 1) // L) * L

    @property
    def super_frames(self) -> int:
        return self.padded_T // self.sf_length

    @property
    def epsilon_value(self) -> float:
        if self.epsilon == "auto":
            return 0.5 if self.K == 1 else default_epsilon(self.K)
        return float(self.epsilon)

    @property
    def cfl_slots(self) -> int:
        return self.cfl_length if self.cfl_length is not None else default_cfl_length(self.K)

    @property
    def roster(self) -> tuple[int, ...]:
        return tuple(range(self.N_initial)) + tuple(u for _, u in self.arrivals)

    def event_super_frame(self, slot: int) -> int:
        """Boundary at or after the given steady slot."""
        return (slot + self.sf_length - 1) // self.sf_length


@dataclass(frozen=True)
class Event:
    """One logged protocol event (swap, move, election, arrival, departure)."""

    kind: str
    sf: int
    users: tuple[int, ...]
    channels: tuple[int, ...] = ()


@dataclass
class RunTrace:
    """Everything one run produced, sampled once per super-frame.

    channels[m, i] is roster user i's channel at the end of super-frame
    m, or -1 while absent.  metrics is filled when the run finishes.
    """

    config: ExperimentConfig
    model: RewardModel
    roster: tuple[int, ...]
    channels: np.ndarray
    potential: np.ndarray
    in_smc: np.ndarray
    cum_reward: np.ndarray
    initial_potential: int
    events: list[Event]
    steady_collisions: int
    metrics: "metrics_mod.MetricsTrace | None" = field(default=None, repr=False)

    @property
    def super_frames(self) -> int:
        return self.channels.shape[0]

    def final_assignment(self) -> dict[int, int]:
        row = self.channels[-1]
        return {self.roster[i]: int(c) for i, c in enumerate(row) if c >= 0}


class _Simulation:
    """Mutable state of one run; shared by both execution paths."""

    def __init__(self, config: ExperimentConfig, model: RewardModel | None):
        self.config = config
        seed = config.seed
        self.roster = config.roster
        if model is None:
            model = draw_reward_matrix(config.K, len(self.roster), RngStream(seed, "matrix"))
        if model.K != config.K or model.N != len(self.roster):
            raise ConfigurationError(
                f"model shape ({model.N}, {model.K}) does not match the "
                f"config ({len(self.roster)}, {config.K})"
            )
        self.model = model
        self.K = config.K
        self.L = config.sf_length
        self.M = config.K - 1  # coordination mini-frames per super-frame
        self.eps = config.epsilon_value
        self.roster_pos = {u: i for i, u in enumerate(self.roster)}
        self.reward_rng = {u: RngStream(seed, f"reward/{u}") for u in self.roster}
        self.flag_rng = {u: RngStream(seed, f"flag/{u}") for u in self.roster}
        self.cfl_rng = {u: RngStream(seed, f"cfl/{u}") for u in self.roster}
        self.newbie_rng = {u: RngStream(seed, f"newbie/{u}") for u in self.roster}
        # One statistics matrix per run; each agent state views its row,
        # so vectorized frame computations need no per-frame stacking.
        self.R_all = np.zeros((len(self.roster), config.K))
        self.S_all = np.zeros((len(self.roster), config.K), dtype=np.int64)
        self.states = {
            u: AgentState(K=config.K, r=self.R_all[i], s=self.S_all[i])
            for i, u in enumerate(self.roster)
        }
        self.settled: list[int] = []
        self.waiting: int | None = None
        self.arrival_at = {config.event_super_frame(s): u for s, u in config.arrivals}
        self.departure_at: dict[int, list[int]] = {}
        for s, u in config.departures:
            self.departure_at.setdefault(config.event_super_frame(s), []).append(u)
        self.events: list[Event] = []
        self.steady_collisions = 0
        n_sf = config.super_frames
        self.channels = np.full((n_sf, len(self.roster)), -1, dtype=np.int16)
        self.potential = np.zeros(n_sf, dtype=np.int32)
        self.in_smc = np.zeros(n_sf, dtype=bool)
        self.cum_reward = np.zeros(n_sf, dtype=float)
        self.total_reward = 0.0
        self.initial_potential = 0

    # -- warm-up ------------------------------------------------------

    def run_cfl(self):
        """Randomized orthogonalization; no learning, rewards discarded."""
        users = list(range(self.config.N_initial))
        for u in users:
            st = self.states[u]
            st.a = self.cfl_rng[u].integers(self.K)
        for _ in range(self.config.cfl_slots):
            intents = [TransmissionIntent(u, self.states[u].a) for u in users]
            out = resolve_slot(self.model, intents, self.reward_rng)
            for u in users:
                st = self.states[u]
                cfl_step(st, bool(out.occupancy[st.a] > 1), self.K, self.cfl_rng[u])
        assignment = [self.states[u].a for u in users]
        if len(set(assignment)) != len(assignment):
            raise ProtocolViolationError(
                "warm-up ended without an orthogonal configuration; raise cfl_length"
            )
        for u in users:
            self.states[u].phase = STEADY
        self.settled = sorted(users)
        self.initial_potential = self._live_potential()

    # -- shared helpers -----------------------------------------------

    def _live_potential(self) -> int:
        ids = self.settled
        mu = self.model.mu[ids]
        own = mu[np.arange(len(ids)), [self.states[u].a for u in ids]]
        return int(np.count_nonzero(mu > own[:, None]))

    def _boundary(self, j: int):
        for u in self.departure_at.get(j, ()):
            if u not in self.settled:
                raise ConfigurationError(f"user {u} departs at super-frame {j} but is not settled")
            st = self.states[u]
            self.events.append(Event("departure", j, (u,), (st.a,)))
            self.settled.remove(u)
            st.a = None
        if j in self.arrival_at:
            if self.waiting is not None:
                raise AssumptionViolationError(
                    f"arrival at super-frame {j} while user {self.waiting} still waits"
                )
            u = self.arrival_at[j]
            self.states[u].phase = NEWBIE_WAIT
            self.waiting = u

    def _sa_join(self, j: int, sensing: np.ndarray) -> int | None:
        """Newcomer announcement in the Sa slot; returns the joiner or None."""
        if not (self.config.dynamic and self.waiting is not None):
            return None
        u = self.waiting
        ch = newbie_join(sensing, self.newbie_rng[u])
        if ch is None:
            self.events.append(Event("arrival_wait", j, (u,)))
            return None
        st = self.states[u]
        st.a = ch
        st.phase = STEADY
        self.waiting = None
        self.settled = sorted(self.settled + [u])
        self.events.append(Event("arrival", j, (u,), (ch,)))
        return u

    def _record(self, j: int):
        ids = self.settled
        row = self.channels[j]
        chans = [self.states[u].a for u in ids]
        if len(set(chans)) != len(chans):
            raise ProtocolViolationError("orthogonality lost in steady phase")
        for u, c in zip(ids, chans):
            row[self.roster_pos[u]] = c
        mu_live = self.model.mu[ids]
        own = mu_live[np.arange(len(ids)), chans]
        self.potential[j] = int(np.count_nonzero(mu_live > own[:, None]))
        self.in_smc[j] = stable_assignment(mu_live, chans, self.K)
        self.cum_reward[j] = self.total_reward

    def finish(self) -> RunTrace:
        trace = RunTrace(
            config=self.config,
            model=self.model,
            roster=self.roster,
            channels=self.channels,
            potential=self.potential,
            in_smc=self.in_smc,
            cum_reward=self.cum_reward,
            initial_potential=self.initial_potential,
            events=self.events,
            steady_collisions=self.steady_collisions,
        )
        trace.metrics = metrics_mod.compile_metrics(trace, self.model)
        return trace

    # -- batched path --------------------------------------------------

    def run_steady_batched(self):
        for j in range(self.config.super_frames):
            self._super_frame_batched(j)

    def _super_frame_batched(self, j: int):
        self._boundary(j)
        t = j * self.L + 1
        ids = self.settled
        rows = [self.roster_pos[u] for u in ids]
        a_vec = np.array([self.states[u].a for u in ids], dtype=np.int64)
        I = ucb_indices(self.R_all[rows], self.S_all[rows], t)
        own_idx = I[np.arange(len(ids)), a_vec]
        seek = (I > own_idx[:, None]).any(axis=1)

        occupied = set(int(c) for c in a_vec)
        occupant = {int(self.states[u].a): u for u in ids}
        sensing = np.zeros(self.K, dtype=np.int8)
        sensing[list(occupied)] = 1

        joined = self._sa_join(j, sensing)
        if joined is not None:
            occupied.add(self.states[joined].a)
            occupant[self.states[joined].a] = joined

        flags = [
            self.flag_rng[u].bernoulli(self.eps) if seek[i] else 0 for i, u in enumerate(ids)
        ]
        elected = elect_initiator(flags)
        initiator = ids[elected] if elected is not None else None

        # Coordination script: walk the initiator's list against the
        # availability snapshot and the occupants' frame-start indices.
        probes: list[tuple[int, int]] = []  # (target channel, mini-frame)
        outcome = IDLE
        swap_partner: int | None = None
        m_done = 0
        init_old = None
        if initiator is not None:
            self.events.append(Event("election", j, (initiator,), (self.states[initiator].a,)))
            st = self.states[initiator]
            init_old = st.a
            st.pref_list, _ = rank_channels(st, t)
            st.pref_ptr = 1
            m_done = self.M  # overwritten unless she stays active to the last mini-frame
            for m in range(1, self.M + 1):
                if st.pref_ptr > len(st.pref_list):  # exhausted at the previous mini-frame
                    m_done = m - 1
                    break
                target = st.pref_list[st.pref_ptr - 1]
                if target not in occupied:
                    outcome = coordinate_swap_step(st, 0, True)
                    self.events.append(Event("move", j, (initiator,), (init_old, target)))
                    m_done = m
                    break
                resp_user = occupant[target]
                if resp_user == joined:
                    answer = 0  # a same-frame joiner declines; her policy starts next frame
                else:
                    ri = ids.index(resp_user)
                    answer = respond(UcbIndexVector(I=I[ri], t=t), target, init_old)
                probes.append((target, m))
                outcome = coordinate_swap_step(st, answer, False)
                if outcome == SWAPPED:
                    self.states[resp_user].a = init_old
                    swap_partner = resp_user
                    self.events.append(Event("swap", j, (initiator, resp_user), (init_old, target)))
                    m_done = m
                    break

        self._apply_frame_rewards(ids, a_vec, flags, initiator, init_old, swap_partner,
                                  probes, outcome, m_done, joined)
        self._record(j)

    def _apply_frame_rewards(self, ids, a_vec, flags, initiator, init_old, swap_partner,
                             probes, outcome, m_done, joined):
        """Draw every user's rewards for the frame in slot order, batched.

        Slot order per user is S1, (Sa), S2 if she flagged, then the
        coordination mini-frames; within one user's stream the batched
        draws consume exactly the uniforms the per-slot path would.
        """
        mu = self.model.mu
        M = self.M
        no_initiator = initiator is None
        probed_by_channel = {c: m for c, m in probes}
        swap_mf = m_done if outcome == SWAPPED else None
        for i, u in enumerate(ids):
            if u == joined:
                continue  # handled below: her frame starts at Sa
            st = self.states[u]
            rng = self.reward_rng[u]
            start_ch = int(a_vec[i])
            lead = 1 + (1 if flags[i] else 0)  # S1, plus the S2 flag transmission
            if no_initiator:
                count = lead + 2 * M
                self._credit(st, start_ch, rng.bernoulli_sum(count, mu[u, start_ch]), count)
                continue
            if u == initiator:
                self._credit(st, start_ch, rng.bernoulli_sum(lead, mu[u, start_ch]), lead)
                for target, _ in probes:
                    rng.bernoulli_sum(1, mu[u, target])  # probe; reward discarded
                # after MOVED she also learns in the move's own S4 slot
                tail = M - m_done + (1 if outcome == MOVED else 0)
                if tail:
                    ch = int(st.a)
                    self._credit(st, ch, rng.bernoulli_sum(tail, mu[u, ch]), tail)
                continue
            if u == swap_partner:
                # bystander S4 slots up to and including her accept response
                count = lead + swap_mf
                self._credit(st, start_ch, rng.bernoulli_sum(count, mu[u, start_ch]), count)
                tail = M - swap_mf
                if tail:
                    new_ch = int(st.a)
                    self._credit(st, new_ch, rng.bernoulli_sum(tail, mu[u, new_ch]), tail)
                continue
            # plain bystander: every S4 slot, minus her silent decline if probed
            count = lead + M - (1 if start_ch in probed_by_channel else 0)
            self._credit(st, start_ch, rng.bernoulli_sum(count, mu[u, start_ch]), count)
        if joined is not None:
            st = self.states[joined]
            rng = self.reward_rng[joined]
            ch = int(st.a)
            slots = 1 + (2 * M if no_initiator else M)  # Sa plus the learn slots
            if not no_initiator and ch in probed_by_channel:
                slots -= 1  # silent decline
            wins = rng.bernoulli_sum(slots, mu[joined, ch])
            self._credit(st, ch, wins, slots)

    def _credit(self, st: AgentState, channel: int, wins: int, count: int):
        st.r[channel] += wins
        st.s[channel] += count
        self.total_reward += wins

    # -- per-slot reference path ----------------------------------------

    def run_steady_per_slot(self):
        for j in range(self.config.super_frames):
            self._super_frame_per_slot(j)

    def _super_frame_per_slot(self, j: int):
        self._boundary(j)
        t = j * self.L + 1
        ids = self.settled
        indices: dict[int, UcbIndexVector] = {}
        for u in ids:
            st = self.states[u]
            st.pref_list, indices[u] = rank_channels(st, t)
            st.pref_ptr = 1

        # S1: everyone transmits on her own channel and senses.
        out = self._resolve_learn_slot(ids)
        s1_sensing = out.sensing.copy()
        available = {k for k in range(self.K) if not s1_sensing[k]}

        joined = None
        if self.config.dynamic:
            joined = self._sa_join(j, s1_sensing)
            if joined is not None:
                st = self.states[joined]
                sa_out = resolve_slot(
                    self.model, [TransmissionIntent(joined, st.a)], self.reward_rng
                )
                self._learn_from(joined, sa_out)
                available.discard(st.a)

        # S2: seekers flag by transmitting on their own channel (ids was
        # bound before the Sa join, so a same-frame joiner never flags).
        flags = [
            initiator_flag(self.states[u].pref_list, self.eps, self.flag_rng[u]) for u in ids
        ]
        intents = [
            TransmissionIntent(u, self.states[u].a)
            for u, f in zip(ids, flags)
            if f
        ]
        out = resolve_slot(self.model, intents, self.reward_rng)
        self._count_collisions(out)
        for u, f in zip(ids, flags):
            if f:
                self._learn_from(u, out)
        elected = elect_initiator(flags)
        initiator = ids[elected] if elected is not None else None
        init_old = self.states[initiator].a if initiator is not None else None
        if initiator is not None:
            self.events.append(Event("election", j, (initiator,), (init_old,)))

        occupant = {self.states[u].a: u for u in self.settled}
        for m in range(1, self.M + 1):
            self._mini_frame(j, m, initiator, init_old, occupant, indices,
                             available, joined)
        self._record(j)

    def _mini_frame(self, j, m, initiator, init_old, occupant, indices, available, joined):
        ids = self.settled
        st_init = self.states[initiator] if initiator is not None else None
        active = (
            st_init is not None
            and 1 <= st_init.pref_ptr <= len(st_init.pref_list)
        )
        # S3
        responder = None
        if initiator is None:
            out = self._resolve_learn_slot(ids)
        elif active:
            target = st_init.pref_list[st_init.pref_ptr - 1]
            if target in available:
                prev = st_init.a
                coordinate_swap_step(st_init, 0, True)
                occupant.pop(prev, None)
                occupant[st_init.a] = initiator
                available.discard(st_init.a)
                available.add(prev)
                self.events.append(Event("move", j, (initiator,), (prev, st_init.a)))
                resolve_slot(self.model, [], self.reward_rng)
            else:
                out = resolve_slot(
                    self.model,
                    [TransmissionIntent(initiator, target, counts_as_sample=False)],
                    self.reward_rng,
                )
                self._count_collisions(out)
                responder = occupant[target]
                assert out.sensing[self.states[responder].a] == 1
        else:
            resolve_slot(self.model, [], self.reward_rng)

        # S4
        if initiator is None:
            out = self._resolve_learn_slot(ids)
            return
        if responder is not None:
            target = self.states[responder].a
            if responder == joined:
                answer = 0
            else:
                answer = respond(indices[responder], target, init_old)
            intents = []
            if answer:
                intents.append(TransmissionIntent(responder, target))
            bystanders = [u for u in ids if u not in (initiator, responder)]
            intents.extend(TransmissionIntent(u, self.states[u].a) for u in bystanders)
            out = resolve_slot(self.model, intents, self.reward_rng)
            self._count_collisions(out)
            if answer:
                self._learn_from(responder, out)
            for u in bystanders:
                self._learn_from(u, out)
            sensed = int(out.sensing[target])
            result = coordinate_swap_step(st_init, sensed, False)
            if result == SWAPPED:
                self.states[responder].a = init_old
                occupant[target] = initiator
                occupant[init_old] = responder
                self.events.append(Event("swap", j, (initiator, responder), (init_old, target)))
        else:
            out = self._resolve_learn_slot(ids)

    def _resolve_learn_slot(self, users):
        intents = [TransmissionIntent(u, self.states[u].a) for u in users]
        out = resolve_slot(self.model, intents, self.reward_rng)
        self._count_collisions(out)
        for u in users:
            self._learn_from(u, out)
        return out

    def _learn_from(self, user, outcome):
        st = self.states[user]
        reward = outcome.rewards[user]
        st.r[st.a] += reward
        st.s[st.a] += 1
        self.total_reward += reward

    def _count_collisions(self, outcome):
        self.steady_collisions += int(np.count_nonzero(outcome.occupancy >= 2))


def run_experiment(
    config: ExperimentConfig,
    model: RewardModel | None = None,
    *,
    per_slot: bool = False,
) -> RunTrace:
    """Run one seeded experiment and return its trace.

    model=None draws a fresh reward matrix from the config seed.  The
    per_slot flag selects the slot-by-slot reference path; it produces
    a bit-identical trace to the default batched path.
    """
    sim = _Simulation(config, model)
    sim.run_cfl()
    if per_slot:
        sim.run_steady_per_slot()
    else:
        sim.run_steady_batched()
    return sim.finish()


def run_repetitions(
    config: ExperimentConfig,
    model: RewardModel | None = None,
    *,
    workers: int = 1,
) -> list[RunTrace]:
    """Run config.repetitions independent runs with seeds seed+i.

    Each repetition draws its own reward matrix unless an explicit model
    is given.  Results are ordered by repetition index regardless of
    worker scheduling.
    """
    configs = [replace(config, seed=config.seed + i, repetitions=1)
               for i in range(config.repetitions)]
    if workers <= 1 or len(configs) == 1:
        return [run_experiment(c, model) for c in configs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_experiment, c, model) for c in configs]
        return [f.result() for f in futures]
