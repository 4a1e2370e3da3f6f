"""Bandit-style recommender whose item rewards may drift over episodes.

Each episode the system recommends one of ``num_items`` items and observes
a rating in ``{0, 1, ..., 10}``. Item ``k``'s rating at episode ``i`` is drawn
from a mixture of a high and a low binomial distribution with weight

    lambda_k(i) = 0.5 + amplitude * sin(2 pi * speed * i / period + phase_k),

so every point of the episode-``i`` CDF is a combination of a constant and one
sine/cosine pair with frequency ``speed / period``. With ``speed = 0`` the
process is stationary.
"""

from __future__ import annotations

import math
from typing import Sequence, Tuple

import numpy as np

from .core import PomdpSpec, RolloutBatch, TabularPolicy, check_support, sample_rows, softmax_policy

RATINGS = np.arange(11, dtype=float)


def _binom_pmf(p: float) -> np.ndarray:
    return np.array([math.comb(10, k) * p**k * (1 - p) ** (10 - k) for k in range(11)])


class Recommender:
    num_obs = 1
    num_eval_obs = 1
    default_gamma = 1.0

    def __init__(
        self, num_items: int = 5, speed: float = 0.0, period: float = 1001.0, amplitude: float = 0.45
    ) -> None:
        if num_items < 2:
            raise ValueError("need at least two items")
        if speed < 0:
            raise ValueError("speed must be non-negative")
        if not 0 <= amplitude <= 0.5:
            raise ValueError("amplitude must lie in [0, 0.5]")
        self.name = "recommender"
        self.num_items = self.num_actions = int(num_items)
        self.speed = float(speed)
        self.period = float(period)
        self.amplitude = float(amplitude)
        self.phases = 2.0 * np.pi * np.arange(num_items) / num_items
        self.p_high = np.linspace(0.7, 0.85, num_items)
        self.p_low = np.linspace(0.15, 0.3, num_items)
        self._pmf_high = np.stack([_binom_pmf(p) for p in self.p_high])
        self._pmf_low = np.stack([_binom_pmf(p) for p in self.p_low])

    def mixture_weight(self, episode) -> np.ndarray:
        """``lambda_k(i)``, shape ``(len(episode), num_items)``."""
        i = np.asarray(episode, dtype=float).reshape(-1, 1)
        return 0.5 + self.amplitude * np.sin(2.0 * np.pi * self.speed * i / self.period + self.phases)

    def reward_pmf(self, episode: int) -> np.ndarray:
        """Rating distribution of every item at ``episode``, shape ``(num_items, 11)``."""
        lam = self.mixture_weight([episode])[0][:, None]
        return lam * self._pmf_high + (1.0 - lam) * self._pmf_low

    def mean_rewards(self, episode) -> np.ndarray:
        lam = self.mixture_weight(episode)
        return lam * (10 * self.p_high) + (1.0 - lam) * (10 * self.p_low)

    def return_bounds(self, gamma: float) -> Tuple[float, float]:
        return 0.0, 10.0

    def check_support(self, behaviors: Sequence[TabularPolicy], evaluation: TabularPolicy) -> None:
        check_support(behaviors, evaluation, np.ones((1, 1), dtype=bool))

    def rollout(self, behaviors, assignment, evaluation, episodes, gamma, rng, log) -> RolloutBatch:
        N = episodes.size
        beta = np.stack([b.probs for b in behaviors])
        b_rows = beta[assignment, 0]
        a = sample_rows(b_rows, rng)
        b_prob = b_rows[np.arange(N), a]
        rho = evaluation.probs[0, a] / b_prob
        lam = self.mixture_weight(episodes)[np.arange(N), a]
        high = rng.random(N) < lam
        r = np.where(high, rng.binomial(10, self.p_high[a]), rng.binomial(10, self.p_low[a])).astype(float)
        if not log:
            return RolloutBatch(r, rho)
        col = lambda v: np.asarray(v).reshape(N, 1)
        return RolloutBatch(r, rho, col(np.zeros(N, dtype=np.int64)), col(a), col(b_prob), col(r))

    def spec_at(self, episode: int) -> PomdpSpec:
        """Single-step finite specification of episode ``episode`` for exact enumeration."""
        K = self.num_items
        return PomdpSpec(
            transition=np.ones((1, K, 1)),
            observation=np.ones((1, 1)),
            eval_observation=np.ones((1, 1, 1)),
            reward_values=np.broadcast_to(RATINGS, (1, K, 11)),
            reward_probs=self.reward_pmf(episode)[None, :, :] / self.reward_pmf(episode).sum(axis=1)[None, :, None],
            start=np.ones(1),
            horizon=1,
            gamma=1.0,
        )

    def near_optimal_policy(self, episode: int, temperature: float = 0.5) -> TabularPolicy:
        """Softmax over the items' mean ratings at ``episode``."""
        return softmax_policy(self.mean_rewards([episode]), temperature)

    def uniform_policy(self) -> TabularPolicy:
        return TabularPolicy(np.full((1, self.num_items), 1.0 / self.num_items))


def recommender(num_items: int = 5, speed: float = 0.0, period: float = 1001.0) -> Recommender:
    return Recommender(num_items=num_items, speed=speed, period=period)
