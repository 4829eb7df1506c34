"""On-disk game format: JSON with named states and actions.

Omitted transition triples default to a probability-one self-loop and
omitted rewards to zero, so task-graph-style games stay compact. Distribution
rows are renormalized when within tolerance of one and rejected otherwise.
"""

from __future__ import annotations

import json

import numpy as np

from .game import (GameArena, GameFormatError, GameInstance, OpponentPolicy,
                   SwitchModel, renormalize_rows)


def _index(names, what):
    idx = {}
    for i, name in enumerate(names):
        if name in idx:
            raise GameFormatError(f"duplicate {what} name {name!r}")
        idx[name] = i
    return idx


def _lookup(idx, name, what):
    try:
        return idx[name]
    except KeyError:
        raise GameFormatError(f"unknown {what} {name!r}") from None


def load_game(path) -> GameInstance:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GameFormatError(f"{path}: {exc}") from exc
    return game_from_dict(doc)


def game_from_dict(doc: dict) -> GameInstance:
    try:
        states = list(doc["states"])
        p1_actions = list(doc["p1_actions"])
        p2_actions = list(doc["p2_actions"])
        policies_doc = doc["policies"]
        switch_doc = doc["switch"]
    except KeyError as exc:
        raise GameFormatError(f"missing top-level key {exc}") from exc

    s_idx = _index(states, "state")
    a1_idx = _index(p1_actions, "p1 action")
    a2_idx = _index(p2_actions, "p2 action")
    n_s, n_a1, n_a2 = len(states), len(p1_actions), len(p2_actions)

    transition = np.zeros((n_s, n_a1, n_a2, n_s))
    specified = np.zeros((n_s, n_a1, n_a2), dtype=bool)
    for entry in doc.get("transitions", []):
        s = _lookup(s_idx, entry["s"], "state")
        a1 = _lookup(a1_idx, entry["a1"], "p1 action")
        a2 = _lookup(a2_idx, entry["a2"], "p2 action")
        if specified[s, a1, a2]:
            raise GameFormatError(f"duplicate transition for ({entry['s']}, "
                                  f"{entry['a1']}, {entry['a2']})")
        specified[s, a1, a2] = True
        for name, prob in entry["next"].items():
            transition[s, a1, a2, _lookup(s_idx, name, "state")] = prob
    for s, a1, a2 in np.argwhere(~specified):
        transition[s, a1, a2, s] = 1.0  # default: self-loop
    transition = renormalize_rows(transition, "transition")

    reward = np.zeros((n_s, n_a1, n_a2))
    for entry in doc.get("rewards", []):
        s = _lookup(s_idx, entry["s"], "state")
        a1 = _lookup(a1_idx, entry["a1"], "p1 action")
        a2 = _lookup(a2_idx, entry["a2"], "p2 action")
        reward[s, a1, a2] = float(entry["r"])

    policies = []
    for pol in policies_doc:
        name = pol.get("name", f"policy_{len(policies)}")
        choice = np.zeros((n_s, n_a2))
        by_state = pol["choice"]
        for state_name in states:
            if state_name not in by_state:
                raise GameFormatError(
                    f"policy {name!r} gives no distribution for state {state_name!r}")
            for action_name, prob in by_state[state_name].items():
                choice[s_idx[state_name], _lookup(a2_idx, action_name, "p2 action")] = prob
        choice = renormalize_rows(choice, f"policy {name!r} state ")
        policies.append(OpponentPolicy(name, choice))
    if not policies:
        raise GameFormatError("game defines no opponent policies")

    switch = np.array(switch_doc, dtype=float)
    if switch.shape != (len(policies), len(policies)):
        raise GameFormatError(
            f"switch matrix is {switch.shape}, expected square of size {len(policies)}")
    switch = renormalize_rows(switch, "switch row ")

    initial = 0
    if "initial_state" in doc:
        initial = _lookup(s_idx, doc["initial_state"], "state")

    arena = GameArena(state_names=tuple(states),
                      p1_action_names=tuple(p1_actions),
                      p2_action_names=tuple(p2_actions),
                      transition=transition, reward=reward,
                      initial_state=initial)
    return GameInstance(arena=arena, policies=tuple(policies),
                        switch=SwitchModel(switch))


def game_to_dict(instance: GameInstance) -> dict:
    arena = instance.arena
    states = list(arena.state_names)
    doc = {
        "states": states,
        "p1_actions": list(arena.p1_action_names),
        "p2_actions": list(arena.p2_action_names),
        "initial_state": states[arena.initial_state],
        "transitions": [],
        "rewards": [],
        "policies": [],
        "switch": [list(map(float, row)) for row in instance.switch.matrix],
    }
    for s in range(arena.n_states):
        for a1 in range(arena.n_p1_actions):
            for a2 in range(arena.n_p2_actions):
                row = arena.transition[s, a1, a2]
                is_self_loop = row[s] == 1.0
                if not is_self_loop:
                    doc["transitions"].append({
                        "s": states[s],
                        "a1": arena.p1_action_names[a1],
                        "a2": arena.p2_action_names[a2],
                        "next": {states[t]: float(row[t])
                                 for t in np.flatnonzero(row)},
                    })
                r = arena.reward[s, a1, a2]
                if r != 0.0:
                    doc["rewards"].append({
                        "s": states[s],
                        "a1": arena.p1_action_names[a1],
                        "a2": arena.p2_action_names[a2],
                        "r": float(r),
                    })
    for pol in instance.policies:
        choice = {}
        for s in range(arena.n_states):
            choice[states[s]] = {
                arena.p2_action_names[a2]: float(pol.choice[s, a2])
                for a2 in np.flatnonzero(pol.choice[s])}
        doc["policies"].append({"name": pol.name, "choice": choice})
    return doc


def save_game(instance: GameInstance, path):
    with open(path, "w") as fh:
        json.dump(game_to_dict(instance), fh, indent=1)
