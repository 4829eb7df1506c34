"""Core game model: arenas, opponent policy sets, and switch models.

A game instance bundles a concurrent two-player arena with a finite set of
stochastic opponent policies and a Markov switch model over those policies.
All probability data is stored dense; instances are immutable after
construction and safe to share between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PROB_TOL = 1e-9


class GameFormatError(ValueError):
    """Raised when on-disk game data is malformed or out of tolerance."""


@dataclass(frozen=True)
class Observation:
    """One observable step of the opponent: (game state, opponent action)."""

    state: int
    p2_action: int

    def key(self):
        return (self.state, self.p2_action)


@dataclass(frozen=True)
class GameArena:
    """Two-player concurrent arena with joint transitions and player-1 rewards.

    transition[s, a1, a2] is a distribution over successor states;
    reward[s, a1, a2] is the (unitless) reward paid to player 1.
    """

    state_names: tuple
    p1_action_names: tuple
    p2_action_names: tuple
    transition: np.ndarray  # [S, A1, A2, S]
    reward: np.ndarray      # [S, A1, A2]
    initial_state: int = 0

    def __post_init__(self):
        self.transition.setflags(write=False)
        self.reward.setflags(write=False)

    @property
    def n_states(self):
        return len(self.state_names)

    @property
    def n_p1_actions(self):
        return len(self.p1_action_names)

    @property
    def n_p2_actions(self):
        return len(self.p2_action_names)


@dataclass(frozen=True)
class OpponentPolicy:
    """A stationary stochastic policy for player 2: choice[s, a2]."""

    name: str
    choice: np.ndarray  # [S, A2]

    def __post_init__(self):
        self.choice.setflags(write=False)


@dataclass(frozen=True)
class SwitchModel:
    """Markov chain over opponent policies; matrix[i, j] = P(next=j | cur=i)."""

    matrix: np.ndarray  # [n, n]

    def __post_init__(self):
        self.matrix.setflags(write=False)

    @property
    def n(self):
        return self.matrix.shape[0]

    def min_entry(self) -> float:
        return float(self.matrix.min())


@dataclass(frozen=True)
class GameInstance:
    """Arena + ordered opponent policy set + switch model."""

    arena: GameArena
    policies: tuple  # tuple[OpponentPolicy, ...]
    switch: SwitchModel
    # policy_choice[i, s, a2] stacks the per-policy tables for fast access.
    policy_choice: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        stacked = np.stack([p.choice for p in self.policies])
        stacked.setflags(write=False)
        object.__setattr__(self, "policy_choice", stacked)

    @property
    def n_policies(self):
        return len(self.policies)

    def alphas(self, obs: Observation) -> np.ndarray:
        """Per-policy probability of the observation: alpha_i = pi_i(s, a2)."""
        return self.policy_choice[:, obs.state, obs.p2_action]

    def size_tuple(self):
        a = self.arena
        return (a.n_states, a.n_p1_actions, a.n_p2_actions, self.n_policies)


@dataclass
class ValidationReport:
    errors: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def _check_rows(report, rows, what):
    """Append violations for any distribution row that is negative or off-sum."""
    flat = rows.reshape(-1, rows.shape[-1])
    sums = flat.sum(axis=1)
    for idx in np.flatnonzero(np.abs(sums - 1.0) > PROB_TOL):
        multi = np.unravel_index(idx, rows.shape[:-1])
        report.errors.append(f"{what}{tuple(int(i) for i in multi)} sums to {sums[idx]:.12g}, expected 1")
    if (flat < 0).any():
        bad = np.argwhere(flat < 0)[0]
        multi = np.unravel_index(bad[0], rows.shape[:-1])
        report.errors.append(f"{what}{tuple(int(i) for i in multi)} has a negative entry")


def validate(instance: GameInstance) -> ValidationReport:
    """Check all distribution invariants; returns a report, never raises.

    A switch matrix containing a zero entry is flagged as a warning
    ("positivity"), not an error: synthesis termination guarantees and the
    belief lower-bound property both need a strictly positive switch matrix.
    """
    report = ValidationReport()
    a = instance.arena
    n = instance.n_policies

    if n < 1:
        report.errors.append("instance has no opponent policies")
        return report
    if instance.switch.matrix.shape != (n, n):
        report.errors.append(
            f"switch matrix is {instance.switch.matrix.shape}, expected ({n}, {n})")
        return report
    for p in instance.policies:
        if p.choice.shape != (a.n_states, a.n_p2_actions):
            report.errors.append(
                f"policy {p.name!r} shaped {p.choice.shape}, "
                f"expected ({a.n_states}, {a.n_p2_actions})")
            return report
    if a.transition.shape != (a.n_states, a.n_p1_actions, a.n_p2_actions, a.n_states):
        report.errors.append(f"transition tensor shaped {a.transition.shape}")
        return report
    if not (0 <= a.initial_state < a.n_states):
        report.errors.append(f"initial state {a.initial_state} out of range")

    _check_rows(report, a.transition, "transition")
    for p in instance.policies:
        _check_rows(report, p.choice, f"policy {p.name!r} at state ")
    _check_rows(report, instance.switch.matrix, "switch row ")
    if not np.isfinite(a.reward).all():
        report.errors.append("reward table contains non-finite entries")

    if (instance.switch.matrix <= 0).any():
        report.warnings.append(
            "positivity: switch matrix has a zero entry; belief lower bounds "
            "and the termination guarantee do not apply")
    return report


def nonzero_observations(instance: GameInstance) -> list:
    """All observations some policy plays with positive probability.

    Ordered by (state index, action index); this ordering is the canonical
    iteration order used by synthesis and everything downstream.
    """
    positive = (instance.policy_choice > 0).any(axis=0)  # [S, A2]
    return [Observation(int(s), int(a))
            for s, a in np.argwhere(positive)]


def renormalize_rows(rows: np.ndarray, what: str) -> np.ndarray:
    """Renormalize distribution rows within PROB_TOL of 1; reject beyond."""
    sums = rows.sum(axis=-1)
    if (rows < -PROB_TOL).any():
        raise GameFormatError(f"{what}: negative probability entry")
    bad = np.abs(sums - 1.0) > PROB_TOL
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise GameFormatError(
            f"{what}{idx}: probabilities sum to {sums[bad][0]:.12g}, "
            f"outside tolerance {PROB_TOL}")
    out = np.clip(rows, 0.0, None)
    return out / out.sum(axis=-1, keepdims=True)
