"""A small aliased chain: the reference target for exact enumeration.

Five states, two actions. States 1 and 2 emit the same behavior-side
observation but respond oppositely to the actions, so the behavior policy
cannot tell them apart. The evaluation policy sees a different, noisy
observation that groups states {1, 4} and {2, 3}. With probability
``noise`` the next state is drawn uniformly instead of following the table.
"""

from __future__ import annotations

from typing import Tuple

import numpy as np

from .core import PomdpEnv, PomdpSpec, TabularPolicy

#: Deterministic successor of (state, action).
_NEXT = np.array([[1, 2], [3, 4], [4, 3], [0, 1], [2, 0]])
#: Deterministic reward of (state, action).
_REWARD = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 3.0], [0.0, 1.0], [4.0, 0.0]])
#: Behavior-side observation of each state (states 1 and 2 are aliased).
_OBS = np.array([0, 1, 1, 2, 3])
#: Evaluation-side observation before noise.
_EVAL_OBS = np.array([0, 1, 2, 2, 1])
_EVAL_OBS_ACCURACY = 0.85

#: Evaluation policy over the 3 evaluation-side observations: Pr[action 1].
EVAL_ACTION1 = np.array([0.7, 0.2, 0.85])
#: Behavior policy over the 4 behavior-side observations: Pr[action 1].
BEHAVIOR_ACTION1 = np.array([0.4, 0.5, 0.5, 0.6])


def chain_pomdp(depth: int = 3, noise: float = 0.1) -> PomdpSpec:
    """Enumerable POMDP with horizon ``depth`` (2 to 4) and undiscounted returns."""
    if not 2 <= depth <= 4:
        raise ValueError("depth must be between 2 and 4")
    if not 0.0 <= noise <= 1.0:
        raise ValueError("noise must lie in [0, 1]")
    S, A = 5, 2
    P = np.full((S, A, S), noise / S)
    for s in range(S):
        for a in range(A):
            P[s, a, _NEXT[s, a]] += 1.0 - noise
    omega = np.zeros((S, 4))
    omega[np.arange(S), _OBS] = 1.0
    omega2 = np.zeros((S, 4, 3))
    for s in range(S):
        row = np.full(3, (1.0 - _EVAL_OBS_ACCURACY) / 2.0)
        row[_EVAL_OBS[s]] = _EVAL_OBS_ACCURACY
        omega2[s, :, :] = row
    start = np.zeros(S)
    start[0] = 1.0
    return PomdpSpec(
        transition=P,
        observation=omega,
        eval_observation=omega2,
        reward_values=_REWARD[:, :, None],
        reward_probs=np.ones((S, A, 1)),
        start=start,
        horizon=depth,
        gamma=1.0,
    )


def chain_policies() -> Tuple[TabularPolicy, TabularPolicy]:
    """``(evaluation, behavior)`` policies for :func:`chain_pomdp`."""
    pi = TabularPolicy(np.stack((1.0 - EVAL_ACTION1, EVAL_ACTION1), axis=1))
    beta = TabularPolicy(np.stack((1.0 - BEHAVIOR_ACTION1, BEHAVIOR_ACTION1), axis=1))
    return pi, beta


def chain_env(depth: int = 3, noise: float = 0.1) -> PomdpEnv:
    return PomdpEnv(chain_pomdp(depth, noise), name="chain")
