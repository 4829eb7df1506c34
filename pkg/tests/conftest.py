import numpy as np
import pytest

import anticipate as ant
from anticipate.consistency import EdgeChecker, per_policy_margin


@pytest.fixture(scope="session")
def rps():
    return ant.build_rps()


@pytest.fixture(scope="session")
def rps_stay05(rps):
    return ant.with_switch(rps, ant.build_switch(4, 0.5))


@pytest.fixture(scope="session")
def machine_stay05(rps_stay05):
    """Exactly-checked machine for the stay-0.5 RPS instance at lam=0.1."""
    out = ant.synthesize(rps_stay05, 0.1)
    assert out.ok
    return out.ism


@pytest.fixture(scope="session")
def plan_stay05(rps_stay05, machine_stay05):
    mdp = ant.compose(rps_stay05, machine_stay05)
    policy, values = ant.policy_iteration(mdp, 0.95)
    return mdp, policy, values


@pytest.fixture(scope="session")
def margin_checker():
    return lambda n: EdgeChecker(delta=per_policy_margin(n))


def single_policy_instance():
    """One-state game with a single opponent policy; beliefs are degenerate."""
    arena = ant.GameArena(
        state_names=("s",),
        p1_action_names=("a", "b"),
        p2_action_names=("x", "y"),
        transition=np.ones((1, 2, 2, 1)),
        reward=np.array([[[1.0, -1.0], [0.5, 0.0]]]),
    )
    policy = ant.OpponentPolicy("only", np.array([[0.7, 0.3]]))
    return ant.GameInstance(arena=arena, policies=(policy,),
                            switch=ant.SwitchModel(np.array([[1.0]])))


def random_instance(rng, n_states=2, n_a1=2, n_a2=3, n_policies=3,
                    t_star_margin=None):
    """Random valid instance; optionally with switch t* above kappa_max."""
    transition = rng.dirichlet(np.ones(n_states), size=(n_states, n_a1, n_a2))
    reward = rng.normal(size=(n_states, n_a1, n_a2))
    policies = tuple(
        ant.OpponentPolicy(f"pi{i}", rng.dirichlet(np.ones(n_a2), size=n_states))
        for i in range(n_policies))
    arena = ant.GameArena(
        state_names=tuple(f"s{i}" for i in range(n_states)),
        p1_action_names=tuple(f"a{i}" for i in range(n_a1)),
        p2_action_names=tuple(f"b{i}" for i in range(n_a2)),
        transition=transition, reward=reward)
    switch = ant.SwitchModel(np.array([[1.0]])) if n_policies == 1 \
        else ant.build_switch(n_policies, 0.5)
    inst = ant.GameInstance(arena=arena, policies=policies, switch=switch)
    if t_star_margin is not None:
        k = ant.kappa_max(inst)
        # pick stay so min(stay, (1-stay)/(n-1)) clears kappa_max by the margin
        target = min(k + t_star_margin, 1.0 / n_policies)
        stay = 1.0 - (n_policies - 1) * target
        inst = ant.with_switch(inst, ant.build_switch(n_policies, stay))
        assert ant.min_entry(inst.switch) > k
    return inst
