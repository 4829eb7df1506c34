"""Product-MDP construction and player-1 policy optimization.

The game composed with a belief machine is a finite MDP over (game state,
machine state) pairs: the opponent's action distribution is the machine
belief's mixture of the candidate policies. Alongside the composed MDP, this
module provides the exact-belief oracles (expected reward and one-step
transition under the true history-conditioned belief) used for discrepancy
bounds and value-gap estimation.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import belief as bel
from .game import GameInstance, Observation
from .synthesis import InformationStateMachine

PROB_EPS = 1e-12
DENSE_SOLVE_LIMIT = 5000


class IsmMismatchError(RuntimeError):
    """The machine lacks a transition the composed game needs."""


@dataclass
class ComposedMDP:
    states: list                 # [(game_state, machine_state), ...]
    index: dict                  # (s, m) -> row
    n_actions: int
    transitions: list            # per action: csr_matrix [N, N]
    rewards: np.ndarray          # [N, A1]
    initial: int

    @property
    def n_states(self):
        return len(self.states)


@dataclass
class PlannerPolicy:
    """Deterministic finite-memory policy: one player-1 action per (s, m)."""

    actions: np.ndarray          # [N] action indices
    states: list
    index: dict = field(repr=False)

    def action(self, s: int, m: int) -> int:
        return int(self.actions[self.index[(s, m)]])


@dataclass
class ValueTable:
    values: np.ndarray
    states: list
    index: dict = field(repr=False)

    def value(self, s: int, m: int) -> float:
        return float(self.values[self.index[(s, m)]])


def action_distribution(b: np.ndarray, s: int, instance: GameInstance) -> np.ndarray:
    """P(a2 | belief, state): the belief-weighted policy mixture."""
    return b @ instance.policy_choice[:, s, :]


def exact_expected_reward(s: int, b: np.ndarray, a1: int,
                          instance: GameInstance) -> float:
    """Expected player-1 reward at s under the belief's opponent mixture."""
    return float(action_distribution(b, s, instance) @ instance.arena.reward[s, a1])


def exact_transition(s: int, b: np.ndarray, a1: int, instance: GameInstance):
    """Successor distribution over (s', a2, b') under the exact belief.

    Returns [((s', a2, b'), prob), ...]; probabilities sum to one.
    """
    out = []
    probs = action_distribution(b, s, instance)
    for a2, pa in enumerate(probs):
        if pa <= PROB_EPS:
            continue
        b_next = bel.transform(b, Observation(s, a2), instance)
        row = instance.arena.transition[s, a1, a2]
        for s_next in np.flatnonzero(row > PROB_EPS):
            out.append(((int(s_next), a2, b_next), float(pa * row[s_next])))
    return out


def compose(instance: GameInstance, ism: InformationStateMachine) -> ComposedMDP:
    """Reachable product of the game and the machine, from (s0, m0)."""
    arena = instance.arena
    n_a1 = arena.n_p1_actions
    start = (arena.initial_state, ism.initial)
    index = {start: 0}
    states = [start]
    rows = [[] for _ in range(n_a1)]  # per action: (row, col, prob) triples
    reward_rows = {}

    frontier = deque([start])
    while frontier:
        s, m = frontier.popleft()
        row_id = index[(s, m)]
        b = ism.belief(m)
        act_probs = action_distribution(b, s, instance)
        rewards_row = np.zeros(n_a1)
        succ_obs = []
        for a2, pa in enumerate(act_probs):
            if pa <= PROB_EPS:
                continue
            m_next = ism.advance(m, Observation(s, a2))
            if m_next is None:
                raise IsmMismatchError(
                    f"machine state {m} has no transition for observation "
                    f"({s}, {a2}) which has probability {pa:.3g} under its belief")
            succ_obs.append((a2, pa, m_next))
            rewards_row += pa * arena.reward[s, :, a2]
        reward_rows[row_id] = rewards_row

        for a1 in range(n_a1):
            acc = {}
            for a2, pa, m_next in succ_obs:
                trans_row = arena.transition[s, a1, a2]
                for s_next in np.flatnonzero(trans_row > PROB_EPS):
                    key = (int(s_next), m_next)
                    acc[key] = acc.get(key, 0.0) + pa * trans_row[s_next]
            for key, p in acc.items():
                if key not in index:
                    index[key] = len(states)
                    states.append(key)
                    frontier.append(key)
                rows[a1].append((row_id, index[key], p))

    n = len(states)
    transitions = []
    for a1 in range(n_a1):
        data = np.array([p for _, _, p in rows[a1]])
        ij = np.array([(r, c) for r, c, _ in rows[a1]]).T
        transitions.append(sparse.csr_matrix((data, ij), shape=(n, n)))
    rewards = np.vstack([reward_rows[i] for i in range(n)])
    return ComposedMDP(states=states, index=index, n_actions=n_a1,
                       transitions=transitions, rewards=rewards, initial=0)


def _evaluate_policy(mdp: ComposedMDP, policy: np.ndarray, gamma: float,
                     tol: float) -> np.ndarray:
    n = mdp.n_states
    rows = sparse.vstack([mdp.transitions[policy[i]][i] for i in range(n)])
    r = mdp.rewards[np.arange(n), policy]
    if n <= DENSE_SOLVE_LIMIT:
        a = np.eye(n) - gamma * rows.toarray()
        return np.linalg.solve(a, r)
    v = np.zeros(n)
    p = rows.tocsr()
    while True:
        v_next = r + gamma * (p @ v)
        if np.max(np.abs(v_next - v)) <= tol:
            return v_next
        v = v_next


def _q_values(mdp: ComposedMDP, v: np.ndarray, gamma: float) -> np.ndarray:
    q = np.empty((mdp.n_states, mdp.n_actions))
    for a in range(mdp.n_actions):
        q[:, a] = mdp.rewards[:, a] + gamma * (mdp.transitions[a] @ v)
    return q


def bellman_residual(mdp: ComposedMDP, v: np.ndarray, gamma: float) -> float:
    return float(np.max(np.abs(_q_values(mdp, v, gamma).max(axis=1) - v)))


def policy_iteration(mdp: ComposedMDP, gamma: float = 0.95,
                     tol: float = 1e-10):
    """Howard policy iteration; ties in improvement go to the lowest action.

    Returns (PlannerPolicy, ValueTable) with the optimal deterministic policy.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must be in (0, 1), got {gamma}")
    policy = np.argmax(mdp.rewards, axis=1)
    budget = 10 * mdp.n_states
    for _ in range(budget):
        v = _evaluate_policy(mdp, policy, gamma, tol)
        improved = np.argmax(_q_values(mdp, v, gamma), axis=1)
        if np.array_equal(improved, policy):
            return (PlannerPolicy(policy, mdp.states, mdp.index),
                    ValueTable(v, mdp.states, mdp.index))
        policy = improved
    raise RuntimeError(f"policy iteration did not converge in {budget} improvements")


def save_policy(path, policy: PlannerPolicy, values: ValueTable, gamma: float):
    doc = {
        "gamma": gamma,
        "entries": [{"state": s, "machine": m,
                     "action": int(policy.actions[i]),
                     "value": float(values.values[i])}
                    for i, (s, m) in enumerate(policy.states)],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_policy(path):
    with open(path) as fh:
        doc = json.load(fh)
    states = [(e["state"], e["machine"]) for e in doc["entries"]]
    index = {sm: i for i, sm in enumerate(states)}
    actions = np.array([e["action"] for e in doc["entries"]], dtype=int)
    values = np.array([e["value"] for e in doc["entries"]])
    return (PlannerPolicy(actions, states, index),
            ValueTable(values, states, index), doc["gamma"])


@dataclass
class ValueGapReport:
    mean_composed: float
    mean_exact: float
    gap: float
    se_composed: float
    se_exact: float
    se_gap: float
    truncation_bound: float
    episodes: int
    horizon: int


def value_gap_estimate(instance: GameInstance, ism: InformationStateMachine,
                       gamma: float, episodes: int, horizon: int,
                       seed: int) -> ValueGapReport:
    """Monte-Carlo discounted return of the composed-optimal policy under
    (a) the composed-MDP dynamics and (b) the exact belief-MDP dynamics.

    Episode e of each arm uses generator seed [seed, e], pairing the arms
    for a low-variance gap estimate; the exact arm draws the opponent action
    from the exactly tracked belief while the policy still reads the machine.
    """
    mdp = compose(instance, ism)
    policy, _ = policy_iteration(mdp, gamma)
    arena = instance.arena
    r_max = float(np.abs(arena.reward).max())
    discounts = gamma ** np.arange(horizon)

    def run(exact_arm: bool, rng):
        s, m = arena.initial_state, ism.initial
        b = bel.uniform_belief(instance.n_policies)
        total = 0.0
        for t in range(horizon):
            a1 = policy.action(s, m)
            dist_b = b if exact_arm else ism.belief(m)
            probs = action_distribution(dist_b, s, instance)
            a2 = _draw(rng, probs)
            total += discounts[t] * arena.reward[s, a1, a2]
            obs = Observation(s, a2)
            if exact_arm:
                b = bel.transform(b, obs, instance)
            m = ism.advance(m, obs)
            if m is None:
                raise IsmMismatchError(f"undefined transition for {obs}")
            s = _draw(rng, arena.transition[s, a1, a2])
        return total

    comp = np.empty(episodes)
    exact = np.empty(episodes)
    for e in range(episodes):
        comp[e] = run(False, np.random.default_rng([seed, e]))
        exact[e] = run(True, np.random.default_rng([seed, e]))
    diff = comp - exact

    def se(x):
        return float(x.std(ddof=1) / np.sqrt(len(x))) if len(x) > 1 else 0.0

    return ValueGapReport(
        mean_composed=float(comp.mean()), mean_exact=float(exact.mean()),
        gap=float(diff.mean()), se_composed=se(comp), se_exact=se(exact),
        se_gap=se(diff),
        truncation_bound=gamma ** horizon * r_max / (1.0 - gamma),
        episodes=episodes, horizon=horizon)


def _draw(rng, probs):
    u = rng.random() * probs.sum()
    return min(int(np.searchsorted(np.cumsum(probs), u, side="right")),
               len(probs) - 1)
