"""Exact belief arithmetic over the opponent-policy simplex.

Beliefs are plain 1-D numpy arrays summing to one. Every operation returns a
freshly renormalized array so that drift cannot accumulate over long
observation sequences.
"""

from __future__ import annotations

import numpy as np

from .game import GameInstance, Observation, SwitchModel

# Denominators below this are structural zeros, not rounding noise.
ZERO_DENOM = 1e-12


class ZeroProbabilityObservation(ValueError):
    """The current belief assigns zero probability to the observation."""

    def __init__(self, obs, index=None):
        self.obs = obs
        self.index = index
        where = f" at sequence index {index}" if index is not None else ""
        super().__init__(f"observation {obs} has zero probability under the belief{where}")


def uniform_belief(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError(f"need at least one policy, got n={n}")
    return np.full(n, 1.0 / n)


def normalize(b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if (b < -ZERO_DENOM).any():
        raise ValueError(f"belief has negative entries: {b}")
    b = np.clip(b, 0.0, None)
    s = b.sum()
    if s <= ZERO_DENOM:
        raise ValueError("belief has no mass to normalize")
    return b / s


def tv_distance(b1: np.ndarray, b2: np.ndarray) -> float:
    """Unhalved L1 distance between beliefs."""
    if len(b1) != len(b2):
        raise ValueError(f"belief lengths differ: {len(b1)} vs {len(b2)}")
    return float(np.abs(np.asarray(b1) - np.asarray(b2)).sum())


def condition(b: np.ndarray, obs: Observation, instance: GameInstance) -> np.ndarray:
    """Bayes update of the policy belief on one observation."""
    alphas = instance.alphas(obs)
    w = alphas * b
    s = w.sum()
    if s < ZERO_DENOM:
        raise ZeroProbabilityObservation(obs)
    return w / s


def shift(b: np.ndarray, switch: SwitchModel) -> np.ndarray:
    """Mix the belief through one step of the policy-switch chain."""
    m = switch.matrix
    if m.shape[0] != len(b):
        raise ValueError(f"switch is {m.shape} but belief has length {len(b)}")
    return normalize(m.T @ b)


def transform(b: np.ndarray, obs: Observation, instance: GameInstance,
              switch: SwitchModel | None = None) -> np.ndarray:
    """One full belief step: condition on the observation, then mix.

    `switch` overrides the instance's switch model; the evaluation harness
    uses this to track beliefs under a different actual switch matrix.
    """
    return shift(condition(b, obs, instance),
                 instance.switch if switch is None else switch)


def transform_seq(b: np.ndarray, sigma, instance: GameInstance,
                  switch: SwitchModel | None = None) -> np.ndarray:
    """Left fold of transform over an observation sequence."""
    for i, obs in enumerate(sigma):
        try:
            b = transform(b, obs, instance, switch)
        except ZeroProbabilityObservation as exc:
            raise ZeroProbabilityObservation(obs, index=i) from exc
    return b


def observation_probability(b: np.ndarray, obs: Observation,
                            instance: GameInstance) -> float:
    """P(o | b) = sum_i alpha_i(o) * b_i."""
    return float(instance.alphas(obs) @ b)
