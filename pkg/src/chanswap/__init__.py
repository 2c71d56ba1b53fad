"""Deterministic simulator of multi-user channel access with bandit
learning and signalling-only swap coordination, plus stability oracles
and convergence-bound calculators."""

from .core import GapStats, RewardModel, RngStream, draw_reward_matrix, reward_gaps, sample_reward
from .engine import Event, ExperimentConfig, RunTrace, run_experiment, run_repetitions
from .metrics import MetricsTrace, count_switches, normalized_reward, system_potential, user_potential
from .oracle import Configuration, enumerate_absorbing, is_smc, optimal_assignment
from .protocol import MediumOutcome, SlotRole, TransmissionIntent, resolve_slot, slot_kind
from .theory import BoundReport, bound_report

__all__ = [
    "BoundReport",
    "Configuration",
    "Event",
    "ExperimentConfig",
    "GapStats",
    "MediumOutcome",
    "MetricsTrace",
    "RewardModel",
    "RngStream",
    "RunTrace",
    "SlotRole",
    "TransmissionIntent",
    "bound_report",
    "count_switches",
    "draw_reward_matrix",
    "enumerate_absorbing",
    "is_smc",
    "normalized_reward",
    "optimal_assignment",
    "resolve_slot",
    "reward_gaps",
    "run_experiment",
    "run_repetitions",
    "sample_reward",
    "slot_kind",
    "system_potential",
    "user_potential",
]

__version__ = "0.1.0"
