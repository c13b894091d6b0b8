"""
Exact stationary statistics of the trap-state Markov chain.

Used as the reference the event-driven simulation is checked against.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from app.core.exceptions import ConfigError, NumericalError
from app.schemas.dynamics_schemas import RateModel, TrapState
from app.schemas.optics_schemas import Illumination
from app.services.trap_service import EVENT_DELTAS, propensities

logger = logging.getLogger(__name__)

MAX_STATES = 2000


@dataclass(frozen=True)
class SteadyState:
    """Stationary distribution(s); one per recurrent class of the chain."""

    classes: List[np.ndarray]

    @property
    def connected(self) -> bool:
        return len(self.classes) == 1

    @property
    def distribution(self) -> np.ndarray:
        if not self.connected:
            raise NumericalError(
                f"Chain has {len(self.classes)} recurrent classes; pick one from `classes`"
            )
        return self.classes[0]


def generator_from_transitions(transitions: Mapping[Tuple[int, int], float], n_states: int) -> np.ndarray:
    """Build the rate matrix Q (rows sum to zero) from {(i, j): rate}."""
    Q = np.zeros((n_states, n_states))
    for (i, j), rate in transitions.items():
        if rate < 0:
            raise ConfigError(f"Negative rate {rate} for transition {i}->{j}")
        if not (0 <= i < n_states and 0 <= j < n_states):
            raise ConfigError(f"Transition {i}->{j} outside the {n_states}-state space")
        if i != j:
            Q[i, j] += rate
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return Q


def _solve_class(Q: np.ndarray, members: np.ndarray) -> np.ndarray:
    sub = Q[np.ix_(members, members)]
    size = members.size
    if size == 1:
        return np.ones(1)
    # pi Q = 0 with sum(pi) = 1: replace one balance equation by the normalisation
    A = sub.T.copy()
    A[-1, :] = 1.0
    b = np.zeros(size)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Balance equations are singular: {exc}") from exc
    return np.clip(pi, 0.0, None) / np.clip(pi, 0.0, None).sum()


def steady_state_from_generator(Q: np.ndarray) -> SteadyState:
    """Stationary distribution of the chain with rate matrix Q, per recurrent class."""
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[0]
    if Q.shape != (n, n):
        raise ConfigError("Generator must be square")

    adjacency = csr_matrix((Q > 0) & ~np.eye(n, dtype=bool))
    n_comp, labels = connected_components(adjacency, directed=True, connection="strong")

    recurrent = []
    for c in range(n_comp):
        members = np.flatnonzero(labels == c)
        outside = np.setdiff1d(np.arange(n), members)
        if outside.size == 0 or not np.any(Q[np.ix_(members, outside)] > 0):
            recurrent.append(members)

    if len(recurrent) > 1:
        logger.warning(f"Chain is disconnected: {len(recurrent)} recurrent classes")

    classes = []
    for members in recurrent:
        pi = np.zeros(n)
        pi[members] = _solve_class(Q, members)
        classes.append(pi)
    return SteadyState(classes=classes)


def master_equation_steady_state(
    transitions: Mapping[Tuple[int, int], float],
    n_states: int,
) -> SteadyState:
    """
    Stationary occupancy of a continuous-time Markov chain.

    Args:
        transitions: rate per transition {(from, to): 1/s}
        n_states: size of the state space

    Returns:
        SteadyState with one distribution per recurrent class
    """
    return steady_state_from_generator(generator_from_transitions(transitions, n_states))


# ============================================================================
# Trap chain
# ============================================================================

def trap_states(initial: TrapState) -> List[Tuple[int, int]]:
    return [
        (n_trapped, n_ionized)
        for n_trapped in range(initial.capacity + 1)
        for n_ionized in range(initial.donor_total + 1)
    ]


def trap_generator(
    rates: RateModel,
    light: Illumination,
    initial: TrapState,
    wavelength: Optional[float] = None,
    shutter_open: bool = True,
) -> Tuple[np.ndarray, List[Tuple[int, int]]]:
    """
    Rate matrix of the (n_trapped, n_ionized) chain at a fixed wavelength.

    Returns:
        (Q, states) with states[i] the (n_trapped, n_ionized) pair of row i
    """
    states = trap_states(initial)
    if len(states) > MAX_STATES:
        raise ConfigError(f"State space of {len(states)} states is too large to enumerate")
    index: Dict[Tuple[int, int], int] = {state: i for i, state in enumerate(states)}
    wavelength = light.wavelength_um if wavelength is None else wavelength

    transitions: Dict[Tuple[int, int], float] = {}
    for i, (n_trapped, n_ionized) in enumerate(states):
        a = propensities(
            rates, light, wavelength, shutter_open,
            n_trapped, n_ionized, initial.capacity, initial.donor_total,
        )
        for rate, (d_trap, d_ion) in zip(a, EVENT_DELTAS):
            if rate > 0:
                j = index[(n_trapped + d_trap, n_ionized + d_ion)]
                transitions[(i, j)] = transitions.get((i, j), 0.0) + rate
    return generator_from_transitions(transitions, len(states)), states


def occupancy_variance_rate(Q: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """
    Asymptotic variance rate of time-averaged state occupancy.

    For a run of length T the time fraction spent in state j has variance
    approximately 2 pi_j Z_jj / T, Z = (1 pi^T - Q)^-1 - 1 pi^T the
    fundamental matrix. Returns 2 pi_j Z_jj (units of s).
    """
    n = Q.shape[0]
    Pi = np.outer(np.ones(n), pi)
    try:
        Z = np.linalg.inv(Pi - Q) - Pi
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Fundamental matrix is singular: {exc}") from exc
    return 2.0 * pi * np.diag(Z)
