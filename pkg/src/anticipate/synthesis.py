"""Worklist synthesis of consistent belief machines.

Starting from the uniform belief, explore belief space one observation at a
time: each popped machine state spawns, per observation, either an edge to a
nearby existing state (when that edge is provably consistent) or a new state
carrying the freshly computed belief. A failed consistency check on a fresh
edge aborts the whole construction, since that edge would be forced into any
machine extending the current one.
"""

from __future__ import annotations

import json
import time
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import belief as bel
from .consistency import EdgeChecker, EdgeQuery, Verdict
from .game import GameInstance, Observation, validate
from .game import nonzero_observations as _nonzero_obs

SKIP_OBS_PROB = 1e-12


class IsmParseError(ValueError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class InformationStateMachine:
    """Deterministic machine over observations, one belief per state.

    Transitions are a partial map (state, observation) -> state; observations
    outside the machine's alphabet have no successor.
    """

    def __init__(self, beliefs, edges, initial: int = 0):
        self.beliefs = [np.asarray(b, dtype=float) for b in beliefs]
        self.edges = dict(edges)  # (state, obs_state, obs_action) -> state
        self.initial = initial

    @property
    def n_states(self):
        return len(self.beliefs)

    @property
    def n_edges(self):
        return len(self.edges)

    def belief(self, m: int) -> np.ndarray:
        return self.beliefs[m]

    def advance(self, m: int, obs: Observation):
        """Successor state for one observation, or None when undefined."""
        if not 0 <= m < len(self.beliefs):
            raise IndexError(f"machine state {m} out of range")
        return self.edges.get((m, obs.state, obs.p2_action))

    def run(self, sigma):
        """Fold advance over a sequence; None as soon as a step is undefined."""
        m = self.initial
        for obs in sigma:
            m = self.advance(m, obs)
            if m is None:
                return None
        return m

    def trace_states(self, sigma):
        """States visited along sigma and the index of the undefined step, if any."""
        path = [self.initial]
        for i, obs in enumerate(sigma):
            nxt = self.advance(path[-1], obs)
            if nxt is None:
                return path, i
            path.append(nxt)
        return path, None


@dataclass
class SynthesisStats:
    states: int = 0
    edges: int = 0
    consistency_checks: int = 0
    cache_hits: int = 0
    elapsed: float = 0.0


@dataclass
class SynthesisOutcome:
    """Either a machine, a consistency failure, or an exhausted budget."""

    status: str  # "machine" | "failure" | "budget"
    ism: InformationStateMachine | None = None
    stats: SynthesisStats = field(default_factory=SynthesisStats)
    # failure payload: the inconsistent fresh edge and its refutation witness
    source_belief: np.ndarray | None = None
    observation: Observation | None = None
    attempted_target_belief: np.ndarray | None = None
    witness: np.ndarray | None = None

    @property
    def ok(self):
        return self.status == "machine"


def synthesize(instance: GameInstance, lam: float,
               max_states: int = 100_000, max_seconds: float = 3600.0,
               checker: EdgeChecker | None = None) -> SynthesisOutcome:
    """Build a lam-consistent machine for the instance, or report why not.

    FIFO worklist, observations visited in canonical (state, action) order,
    closest-state ties broken toward the lowest creation index: identical
    inputs always produce the identical machine.
    """
    report = validate(instance)
    if not report.ok:
        raise ValueError("invalid instance: " + "; ".join(report.errors))
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    checker = checker or EdgeChecker()
    t0 = time.perf_counter()

    obs_order = _nonzero_obs(instance)
    n = instance.n_policies
    beliefs = [bel.uniform_belief(n)]
    edges = {}
    worklist = deque([0])

    def stats():
        return SynthesisStats(states=len(beliefs), edges=len(edges),
                              consistency_checks=checker.checks,
                              cache_hits=checker.cache_hits,
                              elapsed=time.perf_counter() - t0)

    while worklist:
        m = worklist.popleft()
        bm = beliefs[m]
        for obs in obs_order:
            if bel.observation_probability(bm, obs, instance) <= SKIP_OBS_PROB:
                warnings.warn(
                    f"observation {obs} has ~zero probability at state {m}; no edge",
                    stacklevel=2)
                continue
            fresh = bel.transform(bm, obs, instance)
            verdict = checker.check(
                EdgeQuery.from_instance(instance, bm, obs, fresh, lam))
            if not verdict:
                return SynthesisOutcome(
                    status="failure", stats=stats(), source_belief=bm,
                    observation=obs, attempted_target_belief=fresh,
                    witness=verdict.witness)

            target = _closest_state(beliefs, fresh, lam)
            if target is not None and checker.check(
                    EdgeQuery.from_instance(instance, bm, obs,
                                            beliefs[target], lam)):
                edges[(m, obs.state, obs.p2_action)] = target
            else:
                if len(beliefs) >= max_states:
                    return SynthesisOutcome(status="budget", stats=stats())
                beliefs.append(fresh)
                new = len(beliefs) - 1
                edges[(m, obs.state, obs.p2_action)] = new
                worklist.append(new)
            if time.perf_counter() - t0 > max_seconds:
                return SynthesisOutcome(status="budget", stats=stats())

    ism = InformationStateMachine(beliefs, edges, initial=0)
    return SynthesisOutcome(status="machine", ism=ism, stats=stats())


def _closest_state(beliefs, target, lam):
    """Index of the nearest existing belief within lam; ties to lowest index."""
    stacked = np.array(beliefs)
    dists = np.abs(stacked - target[None, :]).sum(axis=1)
    best = int(np.argmin(dists))  # argmin returns the first minimizer
    return best if dists[best] <= lam else None


@dataclass
class ConsistencyReport:
    max_observed_gap: float
    violations: int
    sequences: int
    inconsistent_edges: list  # [(state, Observation, target, Verdict), ...]

    @property
    def ok(self):
        return self.violations == 0 and not self.inconsistent_edges


def verify_consistency(ism: InformationStateMachine, instance: GameInstance,
                       lam: float, num_sequences: int, max_len: int, seed: int,
                       checker: EdgeChecker | None = None) -> ConsistencyReport:
    """Two independent checks that the machine tracks exact beliefs within lam.

    (a) re-decide every edge with the consistency checker;
    (b) Monte-Carlo: random positive-probability observation sequences,
        comparing the machine's belief against the exactly tracked one at
        every prefix. Violations count sequences whose worst gap exceeds
        lam + 1e-6.
    """
    checker = checker or EdgeChecker()
    inconsistent = []
    for (m, s, a), target in sorted(ism.edges.items()):
        obs = Observation(s, a)
        verdict = checker.check(EdgeQuery.from_instance(
            instance, ism.belief(m), obs, ism.belief(target), lam))
        if not verdict:
            inconsistent.append((m, obs, target, verdict))

    rng = np.random.default_rng(seed)
    max_gap = 0.0
    violations = 0
    n = instance.n_policies
    succ_union = _successor_union(instance)
    for _ in range(num_sequences):
        length = int(rng.integers(1, max_len + 1))
        state = instance.arena.initial_state
        b = bel.uniform_belief(n)
        m = ism.initial
        worst = 0.0
        for _ in range(length):
            obs = _sample_observation(rng, b, state, instance)
            if obs is None:
                break
            b = bel.transform(b, obs, instance)
            m = ism.advance(m, obs)
            if m is None:
                worst = np.inf  # machine failed to cover a legal sequence
                break
            worst = max(worst, bel.tv_distance(ism.belief(m), b))
            state = _sample_successor(rng, succ_union, state, obs.p2_action)
        max_gap = max(max_gap, worst)
        if worst > lam + 1e-6:
            violations += 1
    return ConsistencyReport(max_observed_gap=float(max_gap),
                             violations=violations,
                             sequences=num_sequences,
                             inconsistent_edges=inconsistent)


def _successor_union(instance):
    """successor_union[s, a2, s'] = 1 iff some player-1 action reaches s'."""
    return (instance.arena.transition > 0).any(axis=1)


def _sample_observation(rng, b, state, instance):
    """Draw an opponent action at `state` proportional to P(a2 | belief)."""
    probs = b @ instance.policy_choice[:, state, :]
    total = probs.sum()
    if total <= SKIP_OBS_PROB:
        return None
    u = rng.random() * total
    a2 = min(int(np.searchsorted(np.cumsum(probs), u, side="right")),
             len(probs) - 1)
    return Observation(state, a2)


def _sample_successor(rng, succ_union, state, a2):
    """Any game state reachable from (state, a2) under some player-1 action."""
    options = np.flatnonzero(succ_union[state, a2])
    return int(options[rng.integers(len(options))])


def serialize(ism: InformationStateMachine) -> str:
    """JSON text; belief floats round-trip exactly through repr."""
    doc = {
        "states": [{"index": i, "belief": list(map(float, b))}
                   for i, b in enumerate(ism.beliefs)],
        "initial": ism.initial,
        "edges": [{"src": m, "state": s, "action": a, "dst": d}
                  for (m, s, a), d in sorted(ism.edges.items())],
    }
    return json.dumps(doc, indent=1)


def deserialize(text: str) -> InformationStateMachine:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise IsmParseError(exc.msg, line=exc.lineno, column=exc.colno) from exc
    try:
        states = sorted(doc["states"], key=lambda s: s["index"])
        if [s["index"] for s in states] != list(range(len(states))):
            raise IsmParseError("state indices must be 0..n-1 without gaps")
        beliefs = [np.array(s["belief"], dtype=float) for s in states]
        edges = {}
        for e in doc["edges"]:
            src, dst = e["src"], e["dst"]
            if not (0 <= src < len(states) and 0 <= dst < len(states)):
                raise IsmParseError(f"edge {e} references an unknown state")
            key = (src, e["state"], e["action"])
            if key in edges:
                raise IsmParseError(f"duplicate transition for {key}")
            edges[key] = dst
        initial = doc.get("initial", 0)
    except KeyError as exc:
        raise IsmParseError(f"missing field {exc}") from exc
    return InformationStateMachine(beliefs, edges, initial=initial)


def export_dot(ism: InformationStateMachine, state_names=None,
               action_names=None) -> str:
    """Graphviz rendering; node labels carry beliefs rounded to 3 decimals."""

    def obs_label(s, a):
        sn = state_names[s] if state_names else f"s{s}"
        an = action_names[a] if action_names else f"a{a}"
        return an if state_names is not None and len(state_names) == 1 else f"{sn}/{an}"

    lines = ["digraph ism {", "  rankdir=LR;"]
    for i, b in enumerate(ism.beliefs):
        label = "(" + ", ".join(f"{x:.3f}" for x in b) + ")"
        shape = "doublecircle" if i == ism.initial else "circle"
        lines.append(f'  m{i} [shape={shape}, label="{i}\\n{label}"];')
    for (m, s, a), d in sorted(ism.edges.items()):
        lines.append(f'  m{m} -> m{d} [label="{obs_label(s, a)}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
