"""Continuous-state gridworld with partial observability and eight actions.

The agent moves in the unit square. It observes only which cell of a
``cells x cells`` grid it occupies. Each action moves it a fixed step in one
of eight compass directions, perturbed by Gaussian noise and clipped to the
square. Every step inside the goal corner earns ``goal_reward``; every other
step costs ``step_cost``. Episodes last a fixed number of steps.

This is a representative instance, not a reproduction of any particular
published layout.
"""

from __future__ import annotations

from typing import Sequence, Tuple

import numpy as np

from .core import RolloutBatch, TabularPolicy, check_support, sample_rows, softmax_policy

_DIRS = np.array(
    [[1, 0], [1, 1], [0, 1], [-1, 1], [-1, 0], [-1, -1], [0, -1], [1, -1]], dtype=float
)
DIRECTIONS = _DIRS / np.linalg.norm(_DIRS, axis=1, keepdims=True)


class Gridworld:
    num_actions = 8

    def __init__(
        self,
        cells: int = 4,
        horizon: int = 20,
        step: float = 0.1,
        move_noise: float = 0.03,
        goal: Tuple[float, float] = (0.75, 0.75),
        goal_reward: float = 1.0,
        step_cost: float = 0.05,
        gamma: float = 0.95,
    ) -> None:
        self.name = "gridworld"
        self.cells = int(cells)
        self.horizon = int(horizon)
        self.step = float(step)
        self.move_noise = float(move_noise)
        self.goal = np.asarray(goal, dtype=float)
        self.goal_reward = float(goal_reward)
        self.step_cost = float(step_cost)
        self.default_gamma = float(gamma)
        self.num_obs = self.cells * self.cells
        self.num_eval_obs = self.num_obs

    def observe(self, pos: np.ndarray) -> np.ndarray:
        """Grid-cell index of each position (row-major, ``x`` fastest)."""
        ij = np.minimum((pos * self.cells).astype(np.int64), self.cells - 1)
        return ij[:, 0] + self.cells * ij[:, 1]

    def return_bounds(self, gamma: float) -> Tuple[float, float]:
        disc = float(sum(gamma**t for t in range(self.horizon)))
        return -self.step_cost * disc, self.goal_reward * disc

    def check_support(self, behaviors: Sequence[TabularPolicy], evaluation: TabularPolicy) -> None:
        check_support(behaviors, evaluation, np.eye(self.num_obs, dtype=bool))

    def rollout(self, behaviors, assignment, evaluation, episodes, gamma, rng, log) -> RolloutBatch:
        N, T = episodes.size, self.horizon
        beta = np.stack([b.probs for b in behaviors])
        rows = np.arange(N)
        pos = 0.05 + 0.1 * rng.random((N, 2))
        g = np.zeros(N)
        rho = np.ones(N)
        disc = 1.0
        logs = [np.empty((N, T), dtype=np.int64), np.empty((N, T), dtype=np.int64), np.empty((N, T)), np.empty((N, T))]
        for t in range(T):
            o = self.observe(pos)
            b_rows = beta[assignment, o]
            a = sample_rows(b_rows, rng)
            b_prob = b_rows[rows, a]
            rho = rho * (evaluation.probs[o, a] / b_prob)
            move = self.step * DIRECTIONS[a] + self.move_noise * rng.standard_normal((N, 2))
            pos = np.clip(pos + move, 0.0, 1.0)
            in_goal = np.all(pos >= self.goal, axis=1)
            r = np.where(in_goal, self.goal_reward, -self.step_cost)
            g = g + disc * r
            disc *= gamma
            if log:
                logs[0][:, t], logs[1][:, t], logs[2][:, t], logs[3][:, t] = o, a, b_prob, r
        if not log:
            return RolloutBatch(g, rho)
        return RolloutBatch(g, rho, *logs)

    def evaluation_policy(self, temperature: float = 0.25) -> TabularPolicy:
        """Fixed stochastic policy that heads from each cell towards the goal corner."""
        idx = np.arange(self.num_obs)
        centers = (np.stack((idx % self.cells, idx // self.cells), axis=1) + 0.5) / self.cells
        target = (self.goal + 1.0) / 2.0
        heading = target - centers
        norm = np.linalg.norm(heading, axis=1, keepdims=True)
        heading = np.where(norm > 0, heading / np.maximum(norm, 1e-12), 0.0)
        return softmax_policy(heading @ DIRECTIONS.T, temperature)


def gridworld(**kwargs) -> Gridworld:
    return Gridworld(**kwargs)
