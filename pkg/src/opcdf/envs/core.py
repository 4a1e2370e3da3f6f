"""Policies, finite POMDP specifications and seeded dataset generation.

Rollouts are vectorized across episodes. Episodes are processed in chunks
of fixed size; chunk ``k`` draws from its own random stream derived from
``(seed, k)``, so the generated data do not depend on how many workers
process the chunks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Protocol, Sequence, Tuple

import numpy as np

from ..returns import ReturnDataset

CHUNK_SIZE = 4096
_SUM_TOL = 1e-12


def _check_stochastic(p: np.ndarray, what: str) -> None:
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError(f"{what}: probabilities must be finite and non-negative")
    if np.any(np.abs(p.sum(axis=-1) - 1.0) > _SUM_TOL):
        raise ValueError(f"{what}: probabilities must sum to 1")


@dataclass(frozen=True, eq=False)
class TabularPolicy:
    """Action distribution per observation: ``probs[obs, action]``."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        p = np.array(self.probs, dtype=float)
        if p.ndim != 2:
            raise ValueError("policy table must be 2-D (observations x actions)")
        _check_stochastic(p, "policy")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def num_obs(self) -> int:
        return self.probs.shape[0]

    @property
    def num_actions(self) -> int:
        return self.probs.shape[1]

    def __call__(self, obs, actions):
        return self.probs[obs, actions]


def uniform_policy(num_obs: int, num_actions: int) -> TabularPolicy:
    return TabularPolicy(np.full((num_obs, num_actions), 1.0 / num_actions))


def softmax_policy(scores: np.ndarray, temperature: float = 1.0) -> TabularPolicy:
    z = np.asarray(scores, dtype=float) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)
    return TabularPolicy(p / p.sum(axis=-1, keepdims=True))


def mixture_policy(pi: TabularPolicy, alpha: float) -> TabularPolicy:
    """``alpha * pi + (1 - alpha) * uniform``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if alpha == 1.0:
        return pi
    mixed = alpha * pi.probs + (1.0 - alpha) / pi.num_actions
    return TabularPolicy(mixed / mixed.sum(axis=1, keepdims=True))


def sample_rows(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row of ``probs``; zero-probability entries are never drawn."""
    cum = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[0]) * cum[:, -1]
    return np.count_nonzero(cum <= u[:, None], axis=1)


def check_support(behaviors: Sequence[TabularPolicy], evaluation: TabularPolicy, cooccur: np.ndarray) -> None:
    """Raise if some action has ``pi > 0`` but ``beta = 0`` for co-occurring observations."""
    for beh in behaviors:
        obs, eval_obs = np.nonzero(cooccur)
        bad = (beh.probs[obs] == 0) & (evaluation.probs[eval_obs] > 0)
        if np.any(bad):
            raise ValueError("support violation")


@dataclass
class RolloutBatch:
    g: np.ndarray
    rho: np.ndarray
    #: Optional per-step logs, each of shape (episodes, horizon).
    obs: Optional[np.ndarray] = None
    actions: Optional[np.ndarray] = None
    beta_probs: Optional[np.ndarray] = None
    rewards: Optional[np.ndarray] = None


@dataclass(frozen=True)
class Trajectory:
    """One logged episode as seen by the evaluator."""

    episode: int
    obs: Tuple[int, ...]
    actions: Tuple[int, ...]
    beta_probs: Tuple[float, ...]
    rewards: Tuple[float, ...]

    def __post_init__(self) -> None:
        n = len(self.obs)
        if not (len(self.actions) == len(self.beta_probs) == len(self.rewards) == n):
            raise ValueError("trajectory fields must have equal length")
        if any(not b > 0 for b in self.beta_probs):
            raise ValueError("support violation")

    def ratio(self, evaluation: TabularPolicy) -> float:
        rho = 1.0
        for o, a, b in zip(self.obs, self.actions, self.beta_probs):
            rho *= evaluation.probs[o, a] / b
        return rho

    def discounted_return(self, gamma: float) -> float:
        g, disc = 0.0, 1.0
        for r in self.rewards:
            g += disc * r
            disc *= gamma
        return g


class Environment(Protocol):
    """What :func:`generate_dataset` needs from an environment."""

    num_actions: int
    num_obs: int
    num_eval_obs: int
    default_gamma: float

    def return_bounds(self, gamma: float) -> Tuple[float, float]: ...

    def rollout(
        self,
        behaviors: Sequence[TabularPolicy],
        assignment: np.ndarray,
        evaluation: TabularPolicy,
        episodes: np.ndarray,
        gamma: float,
        rng: np.random.Generator,
        log: bool,
    ) -> RolloutBatch: ...

    def check_support(self, behaviors: Sequence[TabularPolicy], evaluation: TabularPolicy) -> None: ...


# ---------------------------------------------------------------------------
# Finite POMDPs
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PomdpSpec:
    """Finite-horizon POMDP with separate behavior-side and evaluation-side observations.

    Attributes:
        transition: ``P[s, a, s']``.
        observation: ``Omega[s, o]``, what the behavior policy sees.
        eval_observation: ``Omega2[s, o, o~]``, what the evaluation policy sees.
        reward_values: ``R[s, a, k]``, reward support per state-action pair.
        reward_probs: ``Pr[k | s, a]`` matching ``reward_values``.
        start: initial state distribution.
        horizon: number of steps per episode.
        gamma: default discount.
    """

    transition: np.ndarray
    observation: np.ndarray
    eval_observation: np.ndarray
    reward_values: np.ndarray
    reward_probs: np.ndarray
    start: np.ndarray
    horizon: int
    gamma: float = 1.0

    def __post_init__(self) -> None:
        arrays = {}
        for name in ("transition", "observation", "eval_observation", "reward_values", "reward_probs", "start"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            arrays[name] = a
            object.__setattr__(self, name, a)
        S = arrays["start"].size
        P = arrays["transition"]
        if P.ndim != 3 or P.shape[0] != S or P.shape[2] != S:
            raise ValueError("transition must have shape (S, A, S)")
        A = P.shape[1]
        if arrays["observation"].shape[0] != S:
            raise ValueError("observation must have shape (S, O)")
        O = arrays["observation"].shape[1]
        if arrays["eval_observation"].shape[:2] != (S, O):
            raise ValueError("eval_observation must have shape (S, O, O~)")
        if arrays["reward_values"].shape[:2] != (S, A) or arrays["reward_values"].shape != arrays["reward_probs"].shape:
            raise ValueError("reward arrays must have shape (S, A, K)")
        _check_stochastic(P, "transition")
        _check_stochastic(arrays["observation"], "observation")
        _check_stochastic(arrays["eval_observation"], "eval_observation")
        _check_stochastic(arrays["reward_probs"], "reward")
        _check_stochastic(arrays["start"], "start")
        if not np.all(np.isfinite(arrays["reward_values"])):
            raise ValueError("rewards must be finite")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")

    @property
    def num_states(self) -> int:
        return self.start.size

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def num_obs(self) -> int:
        return self.observation.shape[1]

    @property
    def num_eval_obs(self) -> int:
        return self.eval_observation.shape[2]

    def reward_range(self) -> Tuple[float, float]:
        support = self.reward_values[self.reward_probs > 0]
        return float(support.min()), float(support.max())

    def return_bounds(self, gamma: Optional[float] = None) -> Tuple[float, float]:
        gamma = self.gamma if gamma is None else gamma
        disc = float(sum(gamma**t for t in range(self.horizon)))
        r_lo, r_hi = self.reward_range()
        return r_lo * disc, r_hi * disc

    def cooccurrence(self) -> np.ndarray:
        """``[o, o~]`` is True when both observations can be emitted in the same state."""
        joint = np.einsum("so,sot->ot", self.observation, self.eval_observation)
        return joint > 0


class PomdpEnv:
    """Simulator for a :class:`PomdpSpec`."""

    def __init__(self, spec: PomdpSpec, name: str = "pomdp") -> None:
        self.spec = spec
        self.name = name
        self.num_actions = spec.num_actions
        self.num_obs = spec.num_obs
        self.num_eval_obs = spec.num_eval_obs
        self.default_gamma = spec.gamma

    def return_bounds(self, gamma: float) -> Tuple[float, float]:
        return self.spec.return_bounds(gamma)

    def check_support(self, behaviors, evaluation) -> None:
        check_support(behaviors, evaluation, self.spec.cooccurrence())

    def rollout(self, behaviors, assignment, evaluation, episodes, gamma, rng, log) -> RolloutBatch:
        spec = self.spec
        N, T = episodes.size, spec.horizon
        beta = np.stack([b.probs for b in behaviors])
        rows = np.arange(N)
        s = sample_rows(np.broadcast_to(spec.start, (N, spec.num_states)), rng)
        g = np.zeros(N)
        rho = np.ones(N)
        disc = 1.0
        logs = [np.empty((N, T), dtype=np.int64), np.empty((N, T), dtype=np.int64), np.empty((N, T)), np.empty((N, T))]
        for t in range(T):
            o = sample_rows(spec.observation[s], rng)
            ot = sample_rows(spec.eval_observation[s, o], rng)
            b_rows = beta[assignment, o]
            a = sample_rows(b_rows, rng)
            b_prob = b_rows[rows, a]
            rho = rho * (evaluation.probs[ot, a] / b_prob)
            k = sample_rows(spec.reward_probs[s, a], rng)
            r = spec.reward_values[s, a, k]
            g = g + disc * r
            disc *= gamma
            s = sample_rows(spec.transition[s, a], rng)
            if log:
                logs[0][:, t], logs[1][:, t], logs[2][:, t], logs[3][:, t] = ot, a, b_prob, r
        if not log:
            return RolloutBatch(g, rho)
        return RolloutBatch(g, rho, *logs)


# ---------------------------------------------------------------------------
# Dataset generation
# ---------------------------------------------------------------------------


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(chunk),))))


def generate_dataset(
    env: Environment,
    behaviors: Sequence[TabularPolicy],
    n: int,
    evaluation: TabularPolicy,
    gamma: Optional[float] = None,
    seed: int = 0,
    *,
    start_episode: int = 1,
    workers: int = 1,
    return_trajectories: bool = False,
    chunk_size: int = CHUNK_SIZE,
):
    """Roll out ``n`` episodes and reduce them to ``(G, rho, episode)`` triples.

    Episode ``start_episode + j`` uses ``behaviors[j % len(behaviors)]``.
    With ``return_trajectories=True`` a ``(dataset, trajectories)`` pair is
    returned, where each :class:`Trajectory` carries the evaluation-side
    observations, actions, behavior probabilities and rewards.
    """
    if isinstance(behaviors, TabularPolicy):
        behaviors = [behaviors]
    behaviors = list(behaviors)
    if not behaviors:
        raise ValueError("need at least one behavior policy")
    if n < 0:
        raise ValueError("n must be non-negative")
    gamma = env.default_gamma if gamma is None else float(gamma)
    env.check_support(behaviors, evaluation)
    g_min, g_max = env.return_bounds(gamma)
    episodes = np.arange(start_episode, start_episode + n, dtype=np.int64)
    assignment = (episodes - start_episode) % len(behaviors)
    n_chunks = (n + chunk_size - 1) // chunk_size

    def run(c: int) -> RolloutBatch:
        sl = slice(c * chunk_size, min(n, (c + 1) * chunk_size))
        return env.rollout(
            behaviors, assignment[sl], evaluation, episodes[sl], gamma, chunk_rng(seed, c), return_trajectories
        )

    if workers > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            batches: List[RolloutBatch] = list(pool.map(run, range(n_chunks)))
    else:
        batches = [run(c) for c in range(n_chunks)]
    g = np.concatenate([b.g for b in batches]) if batches else np.zeros(0)
    rho = np.concatenate([b.rho for b in batches]) if batches else np.zeros(0)
    # Guard against round-off pushing a return past the analytic bounds.
    g = np.clip(g, g_min, g_max)
    data = ReturnDataset(g, rho, episodes, g_min, g_max)
    if not return_trajectories:
        return data
    trajs = []
    for b, start in zip(batches, range(0, n, chunk_size)):
        for j in range(b.g.size):
            trajs.append(
                Trajectory(
                    int(episodes[start + j]),
                    tuple(int(v) for v in b.obs[j]),
                    tuple(int(v) for v in b.actions[j]),
                    tuple(float(v) for v in b.beta_probs[j]),
                    tuple(float(v) for v in b.rewards[j]),
                )
            )
    return data, trajs
