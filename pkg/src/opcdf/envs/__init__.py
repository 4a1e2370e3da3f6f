"""Reference environments, policies and seeded dataset generation."""

from .chain import chain_env, chain_policies, chain_pomdp
from .core import (
    Environment,
    PomdpEnv,
    PomdpSpec,
    TabularPolicy,
    Trajectory,
    generate_dataset,
    mixture_policy,
    softmax_policy,
    uniform_policy,
)
from .gridworld import Gridworld, gridworld
from .recommender import Recommender, recommender

__all__ = [
    "Environment",
    "Gridworld",
    "PomdpEnv",
    "PomdpSpec",
    "Recommender",
    "TabularPolicy",
    "Trajectory",
    "chain_env",
    "chain_policies",
    "chain_pomdp",
    "generate_dataset",
    "gridworld",
    "mixture_policy",
    "recommender",
    "softmax_policy",
    "uniform_policy",
]
