"""Closed-form convergence-bound calculators.

These report worst-case guarantees alongside empirical results; nothing
in the simulator waits for them (at desk scale they are astronomically
conservative).  All logarithms are natural.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidityError


@dataclass(frozen=True)
class BoundReport:
    """All bounds for one parameter point, with domain-validity flags."""

    t_min: float
    s_min: float
    T_delta_static: float
    T_arrival: float
    T_delta_departure: float
    phi_max: int
    static_valid: bool
    arrival_valid: bool
    arrival_clamped: bool


def t_min_bound(K: int, min_gap: float) -> float:
    """Slots after which index errors are rare enough: (32K / gap^2)^2."""
    if not 0.0 < min_gap <= 1.0:
        raise ValidityError(f"gap must lie in (0, 1], got {min_gap}")
    if K < 1:
        raise ValidityError("K must be positive")
    return (32.0 * K / min_gap**2) ** 2


def s_min_bound(horizon: float, min_gap: float) -> float:
    """Samples per channel that make comparisons reliable: 8 ln T / gap^2."""
    if horizon < 2:
        raise ValidityError("horizon must be >= 2")
    if not 0.0 < min_gap <= 1.0:
        raise ValidityError(f"gap must lie in (0, 1], got {min_gap}")
    return 8.0 * math.log(horizon) / min_gap**2


def _election_margin(epsilon: float, N: int, t_min: float) -> float:
    return epsilon * (1.0 - epsilon) ** (N - 1) - 2.0 * t_min**-4


def T_delta_static(K: int, N: int, epsilon: float, delta: float, t_min: float) -> float:
    """Slots until the system is stable w.p. >= 1 - delta (fixed population)."""
    _check_delta_domain(epsilon, delta, t_min)
    p = _election_margin(epsilon, N, t_min)
    if p <= 0.0:
        raise ValidityError("election margin is nonpositive at this t_min")
    T_SF = 2 * K
    bracket = math.log(1.0 / (delta - 6.0 * t_min**-4)) / (4.0 * p) + 2.0 * N * (K - 1)
    return t_min + T_SF / p * bracket


def T_delta_departure(K: int, N: int, epsilon: float, delta: float, t_min: float) -> float:
    """Re-stabilization bound after a departure; N(N-1) replaces 2N(K-1)."""
    _check_delta_domain(epsilon, delta, t_min)
    p = _election_margin(epsilon, N, t_min)
    if p <= 0.0:
        raise ValidityError("election margin is nonpositive at this t_min")
    T_SF = 2 * K
    bracket = math.log(1.0 / (delta - 6.0 * t_min**-4)) / (4.0 * p) + N * (N - 1)
    return t_min + T_SF / p * bracket


def T_arrival_bound(K: int, N: int, epsilon: float, delta: float, min_gap: float) -> float:
    """Slots until a newcomer has learned the vacant channels well enough.

    Negative inner brackets (vacuous parameter points, e.g. delta close
    to 1) are clamped to 0 so grid sweeps complete.
    """
    if N >= K:
        raise ValidityError("an arrival cannot settle without a vacant channel (N >= K)")
    if not 0.0 < min_gap <= 1.0:
        raise ValidityError(f"gap must lie in (0, 1], got {min_gap}")
    if not 0.0 < epsilon < 1.0:
        raise ValidityError("epsilon must lie in (0, 1)")
    if not 0.0 < delta < 1.0:
        raise ValidityError("delta must lie in (0, 1)")
    inner = math.log(1.0 / delta) / math.log(1.0 / (1.0 - epsilon)) - 1.0
    if inner < 0.0:
        return 0.0
    return (4.0 / min_gap**2 * (K - N) / (K - 1) * inner) ** 2


def phi_max(N: int) -> int:
    """Largest potential any stable configuration can carry: N(N-1)/2."""
    if N < 1:
        raise ValidityError("N must be positive")
    return N * (N - 1) // 2


def _check_delta_domain(epsilon: float, delta: float, t_min: float) -> None:
    if not 0.0 < epsilon < 1.0:
        raise ValidityError("epsilon must lie in (0, 1)")
    if t_min <= 0:
        raise ValidityError("t_min must be positive")
    if delta <= 6.0 * t_min**-4:
        raise ValidityError(f"delta={delta} not above the floor 6*t_min^-4")


def bound_report(
    K: int,
    N: int,
    epsilon: float,
    delta: float,
    min_gap: float,
    horizon: float,
) -> BoundReport:
    """Evaluate every bound at one parameter point, flagging invalid domains."""
    tmin = t_min_bound(K, min_gap)
    smin = s_min_bound(horizon, min_gap)
    pmax = phi_max(N)
    try:
        static = T_delta_static(K, N, epsilon, delta, tmin)
        departure = T_delta_departure(K, N, epsilon, delta, tmin)
        static_valid = True
    except ValidityError:
        static = departure = float("nan")
        static_valid = False
    arrival_clamped = False
    try:
        arrival = T_arrival_bound(K, N, epsilon, delta, min_gap)
        arrival_clamped = arrival == 0.0
        arrival_valid = True
    except ValidityError:
        arrival = float("nan")
        arrival_valid = False
    return BoundReport(
        t_min=tmin,
        s_min=smin,
        T_delta_static=static,
        T_arrival=arrival,
        T_delta_departure=departure,
        phi_max=pmax,
        static_valid=static_valid,
        arrival_valid=arrival_valid,
        arrival_clamped=arrival_clamped,
    )
