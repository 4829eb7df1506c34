"""Simulation against a switching oblivious opponent, and experiment grids.

The opponent draws actions from its current policy and hops between policies
by the *actual* switch matrix; the player follows a planned finite-memory
policy while the machine and an exactly tracked belief (using the *design*
matrix, the only one the agent knows) run alongside. Random streams derive
from numpy seed sequences: episode e of root seed r uses default_rng([r, e]).
"""

from __future__ import annotations

import csv
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import belief as bel
from .builders import build_switch
from .game import GameInstance, Observation, SwitchModel
from .planner import PlannerPolicy, compose, policy_iteration
from .synthesis import InformationStateMachine, synthesize

GRID_COLUMNS = ["lambda", "stay_design", "stay_actual", "seed", "horizon",
                "r_avg", "ap_avg", "policy_pred", "ism_states",
                "synth_seconds", "plan_seconds"]


class ReplayScriptError(ValueError):
    def __init__(self, message, index):
        self.index = index
        super().__init__(f"{message} (script index {index})")


@dataclass
class EpisodeTrace:
    states: np.ndarray            # [T] game state per step
    policy_indices: np.ndarray    # [T] opponent policy index (-1 when scripted)
    p1_actions: np.ndarray        # [T]
    p2_actions: np.ndarray        # [T]
    rewards: np.ndarray           # [T]
    machine_states: np.ndarray    # [T]
    machine_beliefs: np.ndarray   # [T, n] belief annotated on the machine state
    exact_beliefs: np.ndarray     # [T, n] exactly tracked, design matrix
    action_probs: np.ndarray      # [T] P(a2_t | machine belief) at each step
    actual_beliefs: np.ndarray | None = None  # [T, n] tracked with T_actual
    resets: list = field(default_factory=list)  # steps where the machine fell off
    policy_fallbacks: int = 0

    def __len__(self):
        return len(self.rewards)


@dataclass
class MetricsReport:
    r_avg: float
    ap_avg: float
    policy_pred: float


def metrics(trace: EpisodeTrace) -> MetricsReport:
    """Mean reward per move, mean probability the machine belief assigned to
    the opponent's realized action, and mean belief mass on its true policy."""
    if len(trace) == 0:
        raise ValueError("cannot compute metrics of an empty trace")
    known = trace.policy_indices >= 0
    if known.any():
        pred = trace.machine_beliefs[known, trace.policy_indices[known]].mean()
    else:
        pred = float("nan")
    return MetricsReport(r_avg=float(trace.rewards.mean()),
                         ap_avg=float(trace.action_probs.mean()),
                         policy_pred=float(pred))


class _Sim:
    """Precomputed sampling tables shared by simulate and replay."""

    def __init__(self, instance, ism, policy1):
        self.instance = instance
        arena = instance.arena
        self.reward = arena.reward
        self.pi_cum = np.cumsum(instance.policy_choice, axis=2)   # [n, S, A2]
        self.trans_cum = np.cumsum(arena.transition, axis=3)      # [S, A1, A2, S]
        self.machine_beliefs = np.array(ism.beliefs)
        self.ism = ism
        self.act = np.full((arena.n_states, ism.n_states), -1, dtype=int)
        for (s, m), i in policy1.index.items():
            self.act[s, m] = policy1.actions[i]

    def p1_action(self, s, m):
        a = self.act[s, m]
        if a >= 0:
            return int(a), False
        a = self.act[s, self.ism.initial]
        return (int(a), True) if a >= 0 else (0, True)


def _pick(rng, cum_row):
    u = rng.random() * cum_row[-1]
    return min(int(np.searchsorted(cum_row, u, side="right")), len(cum_row) - 1)


def simulate(instance_design: GameInstance, ism: InformationStateMachine,
             policy1: PlannerPolicy, t_actual: SwitchModel, horizon: int,
             seed, track_actual: bool = False) -> EpisodeTrace:
    """Play `horizon` simultaneous moves against the switching opponent.

    The opponent's initial policy is uniform; beliefs start uniform. An
    observation the machine cannot follow (possible only off-model) resets
    machine and beliefs to their initial values and the episode continues.
    """
    inst = instance_design
    if t_actual.n != inst.n_policies:
        raise ValueError("actual switch matrix has the wrong dimension")
    sim = _Sim(inst, ism, policy1)
    rng = np.random.default_rng(seed)
    n = inst.n_policies
    t_actual_cum = np.cumsum(t_actual.matrix, axis=1)

    states = np.empty(horizon, dtype=int)
    policy_idx = np.empty(horizon, dtype=int)
    p1_act = np.empty(horizon, dtype=int)
    p2_act = np.empty(horizon, dtype=int)
    rewards = np.empty(horizon)
    machine_states = np.empty(horizon, dtype=int)
    exact = np.empty((horizon, n))
    actual = np.empty((horizon, n)) if track_actual else None
    action_probs = np.empty(horizon)
    resets = []
    fallbacks = 0

    s = inst.arena.initial_state
    m = ism.initial
    b_exact = bel.uniform_belief(n)
    b_actual = bel.uniform_belief(n)
    j = int(rng.integers(n))

    for t in range(horizon):
        states[t], policy_idx[t], machine_states[t] = s, j, m
        exact[t] = b_exact
        if track_actual:
            actual[t] = b_actual
        a1, fell_back = sim.p1_action(s, m)
        fallbacks += fell_back
        a2 = _pick(rng, sim.pi_cum[j, s])
        p1_act[t], p2_act[t] = a1, a2
        rewards[t] = sim.reward[s, a1, a2]
        bm = sim.machine_beliefs[m]
        action_probs[t] = bm @ inst.policy_choice[:, s, a2]

        obs = Observation(s, a2)
        m_next = ism.advance(m, obs)
        try:
            if m_next is None:
                raise bel.ZeroProbabilityObservation(obs)
            b_exact = bel.transform(b_exact, obs, inst)
            if track_actual:
                b_actual = bel.transform(b_actual, obs, inst, switch=t_actual)
            m = m_next
        except bel.ZeroProbabilityObservation:
            resets.append(t)
            m = ism.initial
            b_exact = bel.uniform_belief(n)
            b_actual = bel.uniform_belief(n)

        j = _pick(rng, t_actual_cum[j])
        s = _pick(rng, sim.trans_cum[s, a1, a2])

    return EpisodeTrace(states=states, policy_indices=policy_idx,
                        p1_actions=p1_act, p2_actions=p2_act, rewards=rewards,
                        machine_states=machine_states,
                        machine_beliefs=sim.machine_beliefs[machine_states],
                        exact_beliefs=exact, action_probs=action_probs,
                        actual_beliefs=actual, resets=resets,
                        policy_fallbacks=fallbacks)


def replay(instance_design: GameInstance, ism: InformationStateMachine,
           policy1: PlannerPolicy, script, horizon: int | None = None,
           seed=0) -> EpisodeTrace:
    """Like simulate, but the opponent's actions come from a script.

    Script entries are (state_index_or_None, a2_index); a scripted state must
    match the simulated one. Actions no opponent policy could produce are
    rejected, since the oblivious-opponent model cannot explain them.
    """
    inst = instance_design
    sim = _Sim(inst, ism, policy1)
    rng = np.random.default_rng(seed)
    n = inst.n_policies
    steps = len(script) if horizon is None else min(horizon, len(script))

    states = np.empty(steps, dtype=int)
    p1_act = np.empty(steps, dtype=int)
    p2_act = np.empty(steps, dtype=int)
    rewards = np.empty(steps)
    machine_states = np.empty(steps, dtype=int)
    exact = np.empty((steps, n))
    action_probs = np.empty(steps)
    resets = []
    fallbacks = 0

    s = inst.arena.initial_state
    m = ism.initial
    b_exact = bel.uniform_belief(n)

    for t in range(steps):
        scripted_state, a2 = script[t]
        if scripted_state is not None and scripted_state != s:
            raise ReplayScriptError(
                f"script expects state {scripted_state} but play reached {s}", t)
        if not 0 <= a2 < inst.arena.n_p2_actions:
            raise ReplayScriptError(f"action index {a2} out of range", t)
        if inst.alphas(Observation(s, a2)).max() <= 0:
            raise ReplayScriptError(
                f"no opponent policy can play action {a2} at state {s}", t)
        states[t], machine_states[t] = s, m
        exact[t] = b_exact
        a1, fell_back = sim.p1_action(s, m)
        fallbacks += fell_back
        p1_act[t], p2_act[t] = a1, a2
        rewards[t] = sim.reward[s, a1, a2]
        action_probs[t] = sim.machine_beliefs[m] @ inst.policy_choice[:, s, a2]

        obs = Observation(s, a2)
        m_next = ism.advance(m, obs)
        try:
            if m_next is None:
                raise bel.ZeroProbabilityObservation(obs)
            b_exact = bel.transform(b_exact, obs, inst)
            m = m_next
        except bel.ZeroProbabilityObservation:
            resets.append(t)
            m = ism.initial
            b_exact = bel.uniform_belief(n)
        s = _pick(rng, sim.trans_cum[s, a1, a2])

    return EpisodeTrace(states=states,
                        policy_indices=np.full(steps, -1, dtype=int),
                        p1_actions=p1_act, p2_actions=p2_act, rewards=rewards,
                        machine_states=machine_states,
                        machine_beliefs=sim.machine_beliefs[machine_states],
                        exact_beliefs=exact, action_probs=action_probs,
                        resets=resets, policy_fallbacks=fallbacks)


def load_script(path, instance: GameInstance):
    """Parse `state_name action_name` lines (state optional for 1-state games)."""
    arena = instance.arena
    s_idx = {name: i for i, name in enumerate(arena.state_names)}
    a_idx = {name: i for i, name in enumerate(arena.p2_action_names)}
    script = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#")[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) == 1:
                if arena.n_states != 1:
                    raise ReplayScriptError(
                        f"line {lineno}: state name required for multi-state games",
                        lineno)
                state, action = None, parts[0]
            elif len(parts) == 2:
                state, action = parts
            else:
                raise ReplayScriptError(f"line {lineno}: expected 1 or 2 fields", lineno)
            if action not in a_idx:
                raise ReplayScriptError(f"line {lineno}: unknown action {action!r}", lineno)
            if state is not None and state not in s_idx:
                raise ReplayScriptError(f"line {lineno}: unknown state {state!r}", lineno)
            script.append((None if state is None else s_idx[state], a_idx[action]))
    return script


def with_switch(instance: GameInstance, switch: SwitchModel) -> GameInstance:
    return GameInstance(arena=instance.arena, policies=instance.policies,
                        switch=switch)


def run_grid(instance: GameInstance, lambdas, stays, stays_actual,
             horizon: int, seeds, gamma: float = 0.95, checker=None,
             max_states: int = 100_000, max_seconds: float = 3600.0,
             log=sys.stderr):
    """Synthesize/plan per (lambda, stay_design) and simulate per actual stay.

    Returns one row dict per (cell, seed) with GRID_COLUMNS keys; cells whose
    synthesis fails are reported to `log` and skipped. Episode streams derive
    from (seed, cell_index) so grids are reproducible regardless of order.
    """
    rows = []
    cell = 0
    for lam in lambdas:
        for stay in stays:
            designed = with_switch(instance, build_switch(instance.n_policies, stay))
            t0 = time.perf_counter()
            outcome = synthesize(designed, lam, max_states=max_states,
                                 max_seconds=max_seconds, checker=checker)
            synth_seconds = time.perf_counter() - t0
            if not outcome.ok:
                print(f"grid cell lambda={lam} stay={stay}: synthesis "
                      f"{outcome.status}; skipping", file=log)
                cell += len(stays_actual)
                continue
            ism = outcome.ism
            t0 = time.perf_counter()
            policy, _ = policy_iteration(compose(designed, ism), gamma)
            plan_seconds = time.perf_counter() - t0
            for stay_actual in stays_actual:
                t_act = build_switch(instance.n_policies, stay_actual)
                for seed in seeds:
                    trace = simulate(designed, ism, policy, t_act, horizon,
                                     seed=[seed, cell])
                    rep = metrics(trace)
                    rows.append({
                        "lambda": lam, "stay_design": stay,
                        "stay_actual": stay_actual, "seed": seed,
                        "horizon": horizon, "r_avg": rep.r_avg,
                        "ap_avg": rep.ap_avg, "policy_pred": rep.policy_pred,
                        "ism_states": ism.n_states,
                        "synth_seconds": round(synth_seconds, 4),
                        "plan_seconds": round(plan_seconds, 4),
                    })
                cell += 1
    return rows


def write_grid_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=GRID_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def aggregate_grid(rows):
    """Collapse seeds: one summary per cell with mean and stderr of r_avg."""
    cells = {}
    for row in rows:
        key = (row["lambda"], row["stay_design"], row["stay_actual"])
        cells.setdefault(key, []).append(row)
    summary = []
    for key in sorted(cells):
        group = cells[key]
        r = np.array([g["r_avg"] for g in group])
        ap = np.array([g["ap_avg"] for g in group])
        stderr = r.std(ddof=1) / np.sqrt(len(r)) if len(r) > 1 else 0.0
        summary.append({"lambda": key[0], "stay_design": key[1],
                        "stay_actual": key[2], "n_seeds": len(group),
                        "r_avg_mean": float(r.mean()),
                        "r_avg_stderr": float(stderr),
                        "ap_avg_mean": float(ap.mean()),
                        "ism_states": group[0]["ism_states"]})
    return summary
