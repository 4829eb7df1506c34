"""Closed-form constants and empirical bound checks for belief machines.

Collects the quantities that control belief mixing and machine synthesis:
the switch matrix's minimum entry t*, the per-observation threshold
kappa(o) = alpha_max / (alpha_sum + n * alpha_max), the one-step contraction
factor of the belief update, and the degraded consistency level retained
when the opponent switches by a different matrix than the one designed for.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import belief as bel
from .game import GameInstance, Observation, SwitchModel
from .game import nonzero_observations as _nonzero_obs
from .planner import action_distribution, exact_expected_reward
from .synthesis import InformationStateMachine, _sample_observation, \
    _sample_successor, _successor_union


def min_entry(switch: SwitchModel) -> float:
    """t*: the smallest entry of the switch matrix."""
    return switch.min_entry()


def _alpha_stats(instance: GameInstance, obs: Observation):
    alphas = instance.alphas(obs)
    a_max = float(alphas.max())
    if a_max <= 0:
        raise ValueError(f"observation {obs} has zero probability under every policy")
    return a_max, float(alphas.sum())


def kappa(obs: Observation, instance: GameInstance) -> float:
    """Mixing threshold for one observation; t* > kappa(o) makes the belief
    update contract on that observation."""
    a_max, a_sum = _alpha_stats(instance, obs)
    return a_max / (a_sum + instance.n_policies * a_max)


def kappa_max(instance: GameInstance) -> float:
    return max(kappa(o, instance) for o in _nonzero_obs(instance))


@dataclass
class TerminationGuarantee:
    guaranteed: bool
    t_star: float
    kappa_max: float


def termination_guarantee(instance: GameInstance) -> TerminationGuarantee:
    """Synthesis terminates with a finite consistent machine for every
    lambda > 0 whenever t* exceeds kappa_max."""
    t_star = min_entry(instance.switch)
    k = kappa_max(instance)
    return TerminationGuarantee(guaranteed=t_star > k, t_star=t_star, kappa_max=k)


def contraction_factor(obs: Observation, instance: GameInstance) -> float:
    """Lipschitz factor of b -> transform(b, o) on beliefs with entries >= t*.

    (1 - n t*) alpha_max / (t* alpha_sum); below one exactly when t* > kappa(o).
    """
    t_star = min_entry(instance.switch)
    if t_star <= 0:
        raise ValueError("contraction factor needs a strictly positive switch matrix")
    a_max, a_sum = _alpha_stats(instance, obs)
    n = instance.n_policies
    return (1.0 - n * t_star) * a_max / (t_star * a_sum)


def induced_one_norm(matrix: np.ndarray) -> float:
    """Maximum absolute column sum."""
    return float(np.abs(np.asarray(matrix)).sum(axis=0).max())


def robustness_L(t_actual: SwitchModel, t_design: SwitchModel,
                 instance: GameInstance) -> float:
    """Worst-case per-step expansion when tracking with the wrong matrix."""
    t_a, t_d = t_actual.min_entry(), t_design.min_entry()
    if t_a <= 0 or t_d <= 0:
        raise ValueError("robustness needs strictly positive switch matrices")
    n = instance.n_policies
    hi, lo = max(t_a, t_d), min(t_a, t_d)
    worst = 0.0
    for obs in _nonzero_obs(instance):
        a_max, a_sum = _alpha_stats(instance, obs)
        worst = max(worst, (1.0 - n * hi) * a_max / (lo * a_sum))
    return worst


def robust_lambda(t_actual: SwitchModel, t_design: SwitchModel,
                  instance: GameInstance, lam: float):
    """Consistency level a lam-consistent machine retains under t_actual.

    (lam + ||(T_A - T_D)^t||_1) / (1 - L); None when L >= 1 and the
    guarantee collapses.
    """
    big_l = robustness_L(t_actual, t_design, instance)
    if big_l >= 1.0:
        return None
    shift_norm = induced_one_norm((t_actual.matrix - t_design.matrix).T)
    return (lam + shift_norm) / (1.0 - big_l)


@dataclass
class BoundReport:
    t_star: float
    kappa_max: float
    rows: list          # (Observation, alpha_max, alpha_sum, kappa, contraction|None)
    r_max_state: np.ndarray      # per game state: max |reward|
    alpha_max_state: np.ndarray  # per game state: sum_a2 max_i pi_i(s, a2)


def bound_report(instance: GameInstance) -> BoundReport:
    t_star = min_entry(instance.switch)
    rows = []
    k_max = 0.0
    for obs in _nonzero_obs(instance):
        a_max, a_sum = _alpha_stats(instance, obs)
        k = a_max / (a_sum + instance.n_policies * a_max)
        k_max = max(k_max, k)
        contr = (1.0 - instance.n_policies * t_star) * a_max / (t_star * a_sum) \
            if t_star > 0 else None
        rows.append((obs, a_max, a_sum, k, contr))
    reward = instance.arena.reward
    r_max_state = np.abs(reward).max(axis=(1, 2))
    alpha_max_state = instance.policy_choice.max(axis=0).sum(axis=1)
    return BoundReport(t_star=t_star, kappa_max=k_max, rows=rows,
                       r_max_state=r_max_state, alpha_max_state=alpha_max_state)


@dataclass
class DiscrepancyReport:
    histories: int
    max_reward_ratio: float
    max_transition_ratio: float
    max_reward_discrepancy: float
    max_transition_discrepancy: float


def check_discrepancy_bounds(instance: GameInstance,
                             ism: InformationStateMachine, lam: float,
                             histories: int, max_len: int,
                             seed: int) -> DiscrepancyReport:
    """Empirical check of the per-step reward and transition bounds.

    Samples positive-probability histories, tracks the exact belief next to
    the machine's, and compares (a) expected rewards per action against the
    R_max(s) * alpha_max(s) * lam bound and (b) the opponent-action
    distributions in total variation against alpha_max(s) * lam. Ratios
    above one would falsify the machine's advertised consistency level.
    """
    report = bound_report(instance)
    rng = np.random.default_rng(seed)
    succ_union = _successor_union(instance)
    n = instance.n_policies
    n_a1 = instance.arena.n_p1_actions

    max_r_ratio = max_t_ratio = 0.0
    max_r_disc = max_t_disc = 0.0
    for _ in range(histories):
        length = int(rng.integers(1, max_len + 1))
        s = instance.arena.initial_state
        b = bel.uniform_belief(n)
        m = ism.initial
        for _ in range(length):
            obs = _sample_observation(rng, b, s, instance)
            if obs is None:
                break
            b = bel.transform(b, obs, instance)
            m = ism.advance(m, obs)
            if m is None:
                raise ValueError(f"machine undefined on sampled observation {obs}")
            s = _sample_successor(rng, succ_union, s, obs.p2_action)

        bm = ism.belief(m)
        r_bound = report.r_max_state[s] * report.alpha_max_state[s] * lam
        t_bound = report.alpha_max_state[s] * lam
        r_disc = max(abs(exact_expected_reward(s, b, a1, instance)
                         - exact_expected_reward(s, bm, a1, instance))
                     for a1 in range(n_a1))
        t_disc = float(np.abs(action_distribution(b, s, instance)
                              - action_distribution(bm, s, instance)).sum())
        max_r_disc = max(max_r_disc, r_disc)
        max_t_disc = max(max_t_disc, t_disc)
        max_r_ratio = max(max_r_ratio, _ratio(r_disc, r_bound))
        max_t_ratio = max(max_t_ratio, _ratio(t_disc, t_bound))

    return DiscrepancyReport(histories=histories,
                             max_reward_ratio=max_r_ratio,
                             max_transition_ratio=max_t_ratio,
                             max_reward_discrepancy=max_r_disc,
                             max_transition_discrepancy=max_t_disc)


def _ratio(disc, bound):
    if bound <= 1e-15:
        return 0.0 if disc <= 1e-12 else float("inf")
    return disc / bound
