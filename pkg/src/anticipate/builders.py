"""Built-in benchmark instances and the uniform-switch family."""

from __future__ import annotations

import numpy as np

from .game import GameArena, GameInstance, OpponentPolicy, SwitchModel

# Rock-paper-scissors reward, rows = player-1 action, cols = player-2 action.
_RPS_REWARD = np.array([
    [0.0, -1.0, 1.0],   # r1 vs r2, p2, s2
    [1.0, 0.0, -1.0],   # p1
    [-1.0, 1.0, 0.0],   # s1
])

_RPS_POLICY_ROWS = {
    "p1": [0.5, 0.5, 0.0],
    "p2": [0.0, 0.5, 0.5],
    "p3": [0.5, 0.0, 0.5],
    "p4": [1 / 3, 1 / 3, 1 / 3],
}


def build_switch(n: int, stay: float) -> SwitchModel:
    """Switch matrix with `stay` on the diagonal, uniform elsewhere."""
    if n < 2:
        raise ValueError(f"need at least 2 policies, got {n}")
    if not 0.0 < stay < 1.0:
        raise ValueError(f"stay probability must be in (0, 1), got {stay}")
    m = np.full((n, n), (1.0 - stay) / (n - 1))
    np.fill_diagonal(m, stay)
    return SwitchModel(m)


def rps_switch() -> SwitchModel:
    """The four-policy switch chain used by the plain RPS benchmark."""
    m = np.empty((4, 4))
    m[:2] = 0.15
    m[2:] = 0.12
    m[0, 0] = m[1, 1] = 0.55
    m[2, 2] = m[3, 3] = 0.64
    return SwitchModel(m)


def build_rps() -> GameInstance:
    """Single-state RPS against four mixed opponent policies."""
    arena = GameArena(
        state_names=("t",),
        p1_action_names=("r1", "p1", "s1"),
        p2_action_names=("r2", "p2", "s2"),
        transition=np.ones((1, 3, 3, 1)),
        reward=_RPS_REWARD.reshape(1, 3, 3),
    )
    policies = tuple(
        OpponentPolicy(name, np.array([row]))
        for name, row in _RPS_POLICY_ROWS.items()
    )
    return GameInstance(arena=arena, policies=policies, switch=rps_switch())


def _mem_policy_table(kind: str) -> np.ndarray:
    """Choice table [9, 3] for one rps-mem policy, states ordered a1-major.

    State (a, b) remembers the previous round: a = player-1 action index,
    b = player-2 action index. `beats[x]` is the action that defeats x.
    """
    beats = {0: 1, 1: 2, 2: 0}  # paper beats rock, scissors beat paper, ...
    table = np.empty((9, 3))
    for a in range(3):
        for b in range(3):
            s = 3 * a + b
            if kind == "const_rp":
                row = [0.45, 0.45, 0.1]
            elif kind == "const_rs":
                row = [0.45, 0.1, 0.45]
            elif kind == "const_ps":
                row = [0.1, 0.45, 0.45]
            elif kind == "repeat_p1":
                row = [0.1, 0.1, 0.1]
                row[a] = 0.8
            elif kind == "beat_p1":
                row = [0.1, 0.1, 0.1]
                row[beats[a]] = 0.8
            elif kind == "avoid_p1":
                row = [0.45, 0.45, 0.45]
                row[a] = 0.1
            elif kind == "repeat_p2":
                row = [0.1, 0.1, 0.1]
                row[b] = 0.8
            elif kind == "beat_p2":
                row = [0.1, 0.1, 0.1]
                row[beats[b]] = 0.8
            elif kind == "avoid_p2":
                row = [0.45, 0.45, 0.45]
                row[b] = 0.1
            else:
                raise ValueError(kind)
            table[s] = row
    return table


def build_rps_mem(switch: SwitchModel | None = None) -> GameInstance:
    """RPS where the state remembers the previous joint move.

    Nine opponent policies react to the remembered actions (repeat / beat /
    avoid either player's last move, or play a fixed mix). The switch model
    is supplied by the caller; defaults to build_switch(9, 0.5).
    """
    states = tuple(f"{a}_{b}" for a in ("r1", "p1", "s1")
                   for b in ("r2", "p2", "s2"))
    transition = np.zeros((9, 3, 3, 9))
    for s in range(9):
        for a1 in range(3):
            for a2 in range(3):
                transition[s, a1, a2, 3 * a1 + a2] = 1.0
    reward = np.broadcast_to(_RPS_REWARD, (9, 3, 3)).copy()
    arena = GameArena(
        state_names=states,
        p1_action_names=("r1", "p1", "s1"),
        p2_action_names=("r2", "p2", "s2"),
        transition=transition,
        reward=reward,
    )
    kinds = ["const_rp", "const_rs", "const_ps", "repeat_p1", "beat_p1",
             "avoid_p1", "repeat_p2", "beat_p2", "avoid_p2"]
    policies = tuple(OpponentPolicy(k, _mem_policy_table(k)) for k in kinds)
    if switch is None:
        switch = build_switch(9, 0.5)
    return GameInstance(arena=arena, policies=policies, switch=switch)


def ring_distance(i: int, j: int, n_rooms: int) -> int:
    """Circular distance between rooms i and j on a ring of n_rooms cells."""
    d = abs(i - j)
    return min(d, n_rooms - d)


def _move_kernel(n_rooms: int) -> np.ndarray:
    """Single-player position kernel [rooms, 2 actions, rooms]: 0.2 stay, 0.8 move."""
    k = np.zeros((n_rooms, 2, n_rooms))
    for i in range(n_rooms):
        left = (i - 1) % n_rooms
        right = (i + 1) % n_rooms
        k[i, 0, i] = 0.2
        k[i, 0, left] = 0.8
        k[i, 1, i] = 0.2
        k[i, 1, right] = 0.8
    return k


def _target_row(j: int, t: int, n_rooms: int) -> list:
    """Action mix steering a player at room j toward target room t.

    First-match tie handling: when both directions are equally short the
    left-leaning branch wins, matching the written case order.
    """
    if j == t:
        return [0.5, 0.5]
    if j > t:
        direct_left = j - t
        wrap_right = t - j + n_rooms
        if wrap_right >= direct_left:
            return [0.8, 0.2]
        return [0.2, 0.8]
    direct_right = t - j
    wrap_left = j - t + n_rooms
    if wrap_left <= direct_right:
        return [0.8, 0.2]
    return [0.2, 0.8]


def build_anticipate_avoid(n_rooms: int,
                           switch: SwitchModel | None = None) -> GameInstance:
    """Circular pursuit-avoidance game on a ring of rooms.

    State (i, j) holds both players' rooms (1-based in names, row-major by
    player 1's room). Player 1 earns more the farther it is from player 2;
    player 2 follows one of four policies homing in on fixed meeting rooms.
    """
    if n_rooms < 10:
        raise ValueError(f"need at least 10 rooms for the reward tiers, got {n_rooms}")
    kernel = _move_kernel(n_rooms)
    n_states = n_rooms * n_rooms
    # transition[(i,j), a1, a2, (i',j')] = p(i'|i,a1) * p(j'|j,a2)
    transition = np.einsum("iam,jbn->iajbmn", kernel, kernel)
    transition = transition.transpose(0, 2, 1, 3, 4, 5).reshape(
        n_states, 2, 2, n_states)

    reward = np.empty((n_states, 2, 2))
    for i in range(n_rooms):
        for j in range(n_rooms):
            if i == j:
                r = -10.0
            else:
                rho = ring_distance(i + 1, j + 1, n_rooms)
                if rho <= n_rooms / 10:
                    r = -5.0
                elif rho <= 3 * n_rooms / 10:
                    r = 0.0
                else:
                    r = 1.0
            reward[i * n_rooms + j] = r

    arena = GameArena(
        state_names=tuple(f"{i + 1}_{j + 1}" for i in range(n_rooms)
                          for j in range(n_rooms)),
        p1_action_names=("L", "R"),
        p2_action_names=("L", "R"),
        transition=transition,
        reward=reward,
    )
    targets = [1, -(-n_rooms // 4), -(-2 * n_rooms // 4), -(-3 * n_rooms // 4)]
    policies = []
    for t in targets:
        choice = np.empty((n_states, 2))
        for j in range(n_rooms):
            row = _target_row(j + 1, t, n_rooms)
            choice[np.arange(n_rooms) * n_rooms + j] = row
        policies.append(OpponentPolicy(f"target_{t}", choice))
    if switch is None:
        switch = build_switch(4, 0.5)
    return GameInstance(arena=arena, policies=tuple(policies), switch=switch)
