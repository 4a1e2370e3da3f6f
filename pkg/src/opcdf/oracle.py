"""Ground truth for testing: exact return distributions and brute-force bounds.

:func:`enumerate_return_cdf` computes the exact return CDF of a policy on a
finite POMDP by dynamic programming over ``(state, return so far)``.
Probabilities reaching the same ``(state, return)`` are combined with an
exactly rounded sum, so the result does not depend on iteration order.
:func:`iter_trajectories` is a slower, independent enumerator of every
trajectory, used to cross-check the dynamic program.

:func:`bruteforce_bound` samples many step CDFs inside a band and reports the
extreme parameter values it finds; it exists only to validate the closed-form
bounds.
"""

from __future__ import annotations

import math
from collections import defaultdict
from typing import Dict, Iterator, List, Tuple

import numpy as np

from .band import ConfidenceBand
from .envs.core import PomdpSpec, TabularPolicy
from .returns import Parameter, StepCdf

MAX_TRAJECTORIES = 10**7
_PRUNE = 1e-300


def _step_branches(spec: PomdpSpec, policy: TabularPolicy, s: int) -> List[Tuple[float, float, int]]:
    """``(probability, reward, next_state)`` for one step from state ``s``."""
    out = []
    for o in np.flatnonzero(spec.observation[s]):
        p_o = spec.observation[s, o]
        for ot in np.flatnonzero(spec.eval_observation[s, o]):
            p_ot = p_o * spec.eval_observation[s, o, ot]
            for a in np.flatnonzero(policy.probs[ot]):
                p_a = p_ot * policy.probs[ot, a]
                for k in np.flatnonzero(spec.reward_probs[s, a]):
                    p_r = p_a * spec.reward_probs[s, a, k]
                    r = float(spec.reward_values[s, a, k])
                    for s2 in np.flatnonzero(spec.transition[s, a]):
                        out.append((p_r * spec.transition[s, a, s2], r, int(s2)))
    return out


def count_trajectories(spec: PomdpSpec, policy: TabularPolicy) -> int:
    """Number of positive-probability trajectories."""
    successors = {s: [s2 for _, _, s2 in _step_branches(spec, policy, s)] for s in range(spec.num_states)}
    counts = {int(s): 1 for s in np.flatnonzero(spec.start)}
    for _ in range(spec.horizon):
        nxt: Dict[int, int] = defaultdict(int)
        for s, c in counts.items():
            for s2 in successors[s]:
                nxt[s2] += c
        counts = nxt
    return sum(counts.values())


def _check_policy(spec: PomdpSpec, policy: TabularPolicy) -> None:
    if policy.probs.shape != (spec.num_eval_obs, spec.num_actions):
        raise ValueError("policy shape does not match the evaluation-side observations and actions")


def enumerate_return_cdf(
    spec: PomdpSpec, policy: TabularPolicy, gamma: float = None, max_trajectories: int = MAX_TRAJECTORIES
) -> StepCdf:
    """Exact CDF of the discounted return of ``policy`` (acting on evaluation-side observations)."""
    _check_policy(spec, policy)
    gamma = spec.gamma if gamma is None else float(gamma)
    if count_trajectories(spec, policy) > max_trajectories:
        raise ValueError("trajectory enumeration guard exceeded")
    branches = {s: _step_branches(spec, policy, s) for s in range(spec.num_states)}
    dist: Dict[Tuple[int, float], float] = {(int(s), 0.0): float(spec.start[s]) for s in np.flatnonzero(spec.start)}
    disc = 1.0
    for _ in range(spec.horizon):
        parts: Dict[Tuple[int, float], List[float]] = defaultdict(list)
        for (s, g), p in dist.items():
            for q, r, s2 in branches[s]:
                pq = p * q
                if pq > _PRUNE:
                    parts[(s2, g + disc * r)].append(pq)
        dist = {key: math.fsum(v) for key, v in parts.items()}
        disc *= gamma
    by_return: Dict[float, List[float]] = defaultdict(list)
    for (_, g), p in dist.items():
        by_return[g].append(p)
    return _normalized_cdf(by_return)


def _normalized_cdf(by_return: Dict[float, List[float]]) -> StepCdf:
    points = np.array(sorted(by_return))
    masses = np.array([math.fsum(by_return[g]) for g in points])
    total = math.fsum(masses.tolist())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"enumerated probabilities sum to {total!r}, expected 1")
    cum = np.cumsum(masses.astype(np.longdouble)).astype(float)
    cum = np.minimum(np.maximum.accumulate(cum), 1.0)
    cum[-1] = 1.0
    return StepCdf(points, cum, 0.0, sample_g=points, sample_w=masses, norm=total)


def iter_trajectories(
    spec: PomdpSpec, policy: TabularPolicy, gamma: float = None, max_trajectories: int = MAX_TRAJECTORIES
) -> Iterator[Tuple[float, float]]:
    """Yield ``(probability, return)`` for every positive-probability trajectory."""
    _check_policy(spec, policy)
    gamma = spec.gamma if gamma is None else float(gamma)
    if count_trajectories(spec, policy) > max_trajectories:
        raise ValueError("trajectory enumeration guard exceeded")
    branches = {s: _step_branches(spec, policy, s) for s in range(spec.num_states)}

    def walk(s: int, t: int, p: float, g: float, disc: float):
        if t == spec.horizon:
            yield p, g
            return
        for q, r, s2 in branches[s]:
            yield from walk(s2, t + 1, p * q, g + disc * r, disc * gamma)

    for s in np.flatnonzero(spec.start):
        yield from walk(int(s), 0, float(spec.start[s]), 0.0, 1.0)


def return_cdf_from_trajectories(spec: PomdpSpec, policy: TabularPolicy, gamma: float = None) -> StepCdf:
    by_return: Dict[float, List[float]] = defaultdict(list)
    for p, g in iter_trajectories(spec, policy, gamma):
        by_return[g].append(p)
    return _normalized_cdf(by_return)


def true_parameter(cdf: StepCdf, parameter: Parameter) -> float:
    """Parameter of a normalized discrete distribution, with the plug-in formulas."""
    return parameter(cdf)


# ---------------------------------------------------------------------------
# Brute-force bounds
# ---------------------------------------------------------------------------


def sample_in_band(band: ConfidenceBand, num_samples: int, grid_size: int, rng: np.random.Generator):
    """Random step CDFs inside ``band`` on a grid refined with the band's knots.

    Returns ``(knots, masses)``: masses on the knots, one row per sampled
    CDF. Four families are mixed: sorted uniform levels clamped into the
    band, a flat level clamped into the band, a jump from the lower to the
    upper edge, and a few random jumps.
    """
    grid = np.linspace(band.g_min, band.g_max, max(int(grid_size), 2))
    x, lo, up = band.pieces(grid)
    m = lo.size
    kind = rng.integers(0, 4, num_samples)
    levels = np.sort(rng.random((num_samples, m)), axis=1)
    flat = kind == 1
    levels[flat] = rng.random((int(flat.sum()), 1))
    jump = kind == 2
    cut = rng.integers(0, m + 1, int(jump.sum()))
    cols = np.arange(m)
    levels[jump] = np.where(cols[None, :] < cut[:, None], 0.0, 1.0)
    few = kind == 3
    k = int(few.sum())
    heights = np.zeros((k, m))
    for _ in range(3):
        heights[np.arange(k), rng.integers(0, m, k)] += rng.random(k)
    levels[few] = np.cumsum(heights, axis=1)
    levels[few] /= np.maximum(levels[few][:, -1:], 1e-300)
    levels = np.clip(np.maximum.accumulate(levels, axis=1), lo, up)
    zero = np.zeros((num_samples, 1))
    one = np.ones((num_samples, 1))
    masses = np.diff(np.concatenate((zero, levels, one), axis=1), axis=1)
    return x, masses


def bruteforce_bound(
    band: ConfidenceBand, parameter: Parameter, num_samples: int = 10_000, grid_size: int = 64, seed: int = 0
) -> Tuple[float, float]:
    """Smallest and largest parameter value over randomly sampled in-band CDFs."""
    if band.g_min == band.g_max:
        v = float(parameter.on_pmf(np.array([band.g_min]), np.array([1.0])))
        return v, v
    rng = np.random.default_rng(seed)
    lo_val, hi_val = math.inf, -math.inf
    block = 2000
    for start in range(0, num_samples, block):
        x, masses = sample_in_band(band, min(block, num_samples - start), grid_size, rng)
        vals = np.asarray(parameter.on_pmf(x, masses), dtype=float)
        lo_val = min(lo_val, float(vals.min()))
        hi_val = max(hi_val, float(vals.max()))
    return lo_val, hi_val
