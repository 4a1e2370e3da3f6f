"""Bounds on distributional parameters implied by a confidence band.

If the true CDF lies in a band, any parameter of it lies between the
infimum and supremum of that parameter over all CDFs in the band. Because
one band is used for every parameter, the resulting intervals hold
simultaneously with the band's confidence.

All computations work on :meth:`ConfidenceBand.pieces`: knots
``x_0 = g_min < ... < x_m = g_max`` and the band levels on each open interval
between knots. A CDF in the band is described by its levels ``v_j`` on those
intervals, ``lo_j <= v_j <= up_j`` and non-decreasing, which makes it a
discrete distribution on the knots. Integrals of step functions are exact
sums of level times interval length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Tuple

import numpy as np

from .band import ConfidenceBand
from .returns import (
    PROB_ATOL,
    CVaR,
    Entropy,
    InterQuantileRange,
    Mean,
    Parameter,
    Quantile,
    Variance,
)


@dataclass(frozen=True)
class Bounds:
    """A ``(lower, upper)`` pair; ``guaranteed`` is False for search-based results."""

    lower: float
    upper: float
    guaranteed: bool = True

    def __iter__(self) -> Iterator[float]:
        yield self.lower
        yield self.upper

    @property
    def width(self) -> float:
        return self.upper - self.lower


def levels_to_masses(levels: np.ndarray) -> np.ndarray:
    """Masses on the ``m + 1`` knots of CDFs given by levels on ``m`` intervals."""
    v = np.asarray(levels, dtype=float)
    zero = np.zeros(v.shape[:-1] + (1,))
    one = np.ones(v.shape[:-1] + (1,))
    return np.diff(np.concatenate((zero, v, one), axis=-1), axis=-1)


def _area(x: np.ndarray, v: np.ndarray) -> float:
    return math.fsum((v * np.diff(x)).tolist())


def _mean_of_levels(x: np.ndarray, v: np.ndarray) -> float:
    """``g_max - integral of F`` over ``[g_min, g_max]``."""
    return float(x[-1]) - _area(x, v)


def _quantile_index(v: np.ndarray, alpha: float) -> int:
    hit = np.flatnonzero(v >= alpha - PROB_ATOL)
    return int(hit[0]) if hit.size else v.size


def _quantile_of_levels(x: np.ndarray, v: np.ndarray, alpha: float) -> float:
    return float(x[_quantile_index(v, alpha)])


def _cvar_of_levels(x: np.ndarray, v: np.ndarray, alpha: float) -> float:
    j = _quantile_index(v, alpha)
    return float(x[j]) - _area(x[: j + 1], v[:j]) / alpha


def _check_prob(alpha: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    return float(alpha)


def _point_band(band: ConfidenceBand) -> bool:
    return band.g_max == band.g_min


def mean_bounds(band: ConfidenceBand) -> Tuple[float, float]:
    """``(mean(F_upper), mean(F_lower))``: the upper edge is the smallest CDF in first-order dominance."""
    if _point_band(band):
        return band.g_min, band.g_min
    x, lo, up = band.pieces()
    return _mean_of_levels(x, up), _mean_of_levels(x, lo)


def quantile_bounds(band: ConfidenceBand, alpha: float) -> Tuple[float, float]:
    """``(inf{nu: F_upper >= alpha}, inf{nu: F_lower >= alpha})``, clipped to ``g_max``."""
    alpha = _check_prob(alpha)
    if _point_band(band):
        return band.g_min, band.g_min
    x, lo, up = band.pieces()
    return _quantile_of_levels(x, up, alpha), _quantile_of_levels(x, lo, alpha)


def cvar_bounds(band: ConfidenceBand, alpha: float) -> Tuple[float, float]:
    """CVaR is monotone in first-order dominance: ``(cvar(F_upper), cvar(F_lower))``."""
    alpha = _check_prob(alpha)
    if _point_band(band):
        return band.g_min, band.g_min
    x, lo, up = band.pieces()
    return _cvar_of_levels(x, up, alpha), _cvar_of_levels(x, lo, alpha)


def interquantile_bounds(band: ConfidenceBand, alpha1: float, alpha2: float) -> Tuple[float, float]:
    _check_prob(alpha1)
    _check_prob(alpha2)
    if not alpha1 < alpha2:
        raise ValueError("need alpha1 < alpha2")
    q1_lo, q1_hi = quantile_bounds(band, alpha1)
    q2_lo, q2_hi = quantile_bounds(band, alpha2)
    return max(0.0, q2_lo - q1_hi), q2_hi - q1_lo


def _variance(points: np.ndarray, masses: np.ndarray) -> np.ndarray:
    mu = masses @ points
    dev = points - np.expand_dims(mu, -1)
    return np.maximum(np.sum(masses * dev * dev, axis=-1), 0.0)


def _variance_upper(x: np.ndarray, lo: np.ndarray, up: np.ndarray) -> float:
    """Maximum variance over the family ``clip(h, lo, up)``.

    The maximizing CDF follows the upper edge until it reaches some level
    ``h``, stays flat at ``h`` and then follows the lower edge. Between two
    consecutive edge levels, the masses are affine in ``h``, so the variance
    is a concave quadratic whose maximizer is found in closed form.
    """
    hs = np.unique(np.concatenate(([0.0, 1.0], lo, up)))
    a, b = hs[:-1], hs[1:]
    mid = 0.5 * (a + b)

    def var_at(h: np.ndarray) -> np.ndarray:
        levels = np.clip(h[:, None], lo[None, :], up[None, :])
        return _variance(x, levels_to_masses(levels))

    v0, vm, v1 = var_at(a), var_at(mid), var_at(b)
    quad = 2.0 * (v1 - 2.0 * vm + v0)
    lin = v1 - v0 - quad
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(quad < 0, -lin / (2.0 * quad), 0.0)
    t = np.clip(np.nan_to_num(t), 0.0, 1.0)
    vt = var_at(a + t * (b - a))
    return float(max(v0.max(), v1.max(), vm.max(), vt.max()))


def _variance_lower(x: np.ndarray, lo: np.ndarray, up: np.ndarray) -> float:
    """Minimum variance over CDFs that follow the lower edge, jump at ``c``, then follow the upper edge.

    For ``c`` inside interval ``J`` every atom is fixed except one of mass
    ``w = up_J - lo_J`` located at ``c``; the variance is the convex
    quadratic ``const + w(1 - w)c^2 - 2 w S c`` in ``c``, minimized at
    ``S / (1 - w)`` and then clipped to the interval.
    """
    m = lo.size
    best = math.inf
    lo_mass = levels_to_masses(lo)
    up_mass = levels_to_masses(up)
    for J in range(m):
        # atoms at knots 0..J from the lower edge (mass up to lo_J), at c the
        # jump up_J - lo_J, at knots J+1..m from the upper edge.
        masses = np.concatenate((lo_mass[: J + 1], [0.0], up_mass[J + 1 :]))
        w = up[J] - lo[J]
        pts_fixed = np.concatenate((x[: J + 1], [0.0], x[J + 1 :]))
        s_other = float(masses @ pts_fixed)
        cands = [x[J], x[J + 1]]
        if w < 1.0:
            cands.append(min(max(s_other / (1.0 - w), x[J]), x[J + 1]))
        masses[J + 1] = w
        for c in cands:
            pts = pts_fixed.copy()
            pts[J + 1] = c
            best = min(best, float(_variance(pts, masses)))
    return max(best, 0.0)


def variance_bounds(band: ConfidenceBand) -> Tuple[float, float]:
    if _point_band(band):
        return 0.0, 0.0
    x, lo, up = band.pieces()
    return _variance_lower(x, lo, up), _variance_upper(x, lo, up)


class ForcedPointMass(ValueError):
    pass


def taut_string(x: np.ndarray, a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Shortest path from ``(x_0, a_0)`` to ``(x_m, b_m)`` through windows ``[a_j, b_j]`` at ``x_j``.

    Returns the vertices of the piecewise-linear path. Uses the funnel
    algorithm: from the current apex, keep the steepest lower slope and the
    shallowest upper slope seen so far; when they cross, the path bends at
    the window edge that caused the crossing.
    """
    m = x.size - 1
    vx, vy = [float(x[0])], [float(a[0])]
    apex, ay = 0, float(a[0])
    while apex < m:
        s_lo, s_hi = -math.inf, math.inf
        j_lo = j_hi = apex + 1
        k = apex + 1
        bent = False
        while k <= m:
            dx = x[k] - x[apex]
            lo_s = (a[k] - ay) / dx
            hi_s = (b[k] - ay) / dx
            if lo_s > s_hi:
                apex, ay = j_hi, float(b[j_hi])
                bent = True
                break
            if hi_s < s_lo:
                apex, ay = j_lo, float(a[j_lo])
                bent = True
                break
            if lo_s >= s_lo:
                s_lo, j_lo = lo_s, k
            if hi_s <= s_hi:
                s_hi, j_hi = hi_s, k
            k += 1
        if not bent:
            apex, ay = m, float(b[m])
        vx.append(float(x[apex]))
        vy.append(ay)
    return np.array(vx), np.array(vy)


def entropy_upper_bound(band: ConfidenceBand) -> float:
    """Largest differential entropy of a continuous CDF inside the band.

    The maximizer is the taut string through the band from ``(g_min, 0)`` to
    ``(g_max, 1)``; its density is piecewise constant and the entropy is
    ``-sum slope * length * log(slope)`` over its segments.
    """
    x, lo, up = band.pieces()
    if x.size < 2:
        raise ForcedPointMass("band forces point mass")
    m = lo.size
    a = np.concatenate((lo, [1.0]))
    b = np.concatenate(([0.0], up))
    if np.any(a > b + 1e-12):
        raise ForcedPointMass("band forces point mass")
    a = np.minimum(a, b)
    px, py = taut_string(x, a, b)
    dx, dy = np.diff(px), np.diff(py)
    keep = dy > 0
    slope = dy[keep] / dx[keep]
    return 0.0 - math.fsum((dy[keep] * np.log(slope)).tolist())


def entropy_bounds(band: ConfidenceBand) -> Tuple[float, float]:
    """Lower bound is ``-inf``: a band that allows a point mass allows arbitrarily low entropy."""
    return -math.inf, entropy_upper_bound(band)


# ---------------------------------------------------------------------------
# Dispatch and search-based bounds
# ---------------------------------------------------------------------------


def parameter_bounds(band: ConfidenceBand, parameter: Parameter) -> Tuple[float, float]:
    """Closed-form bounds for the built-in parameters, search otherwise."""
    if isinstance(parameter, Mean):
        return mean_bounds(band)
    if isinstance(parameter, Variance):
        return variance_bounds(band)
    if isinstance(parameter, CVaR):
        return cvar_bounds(band, parameter.alpha)
    if isinstance(parameter, Quantile):
        return quantile_bounds(band, parameter.alpha)
    if isinstance(parameter, InterQuantileRange):
        return interquantile_bounds(band, parameter.alpha1, parameter.alpha2)
    if isinstance(parameter, Entropy):
        return entropy_bounds(band)
    return tuple(generic_bounds(band, parameter))


def generic_bounds(
    band: ConfidenceBand,
    parameter: Parameter,
    grid_size: int = 128,
    search_budget: int = 4000,
    seed: int = 0,
) -> Bounds:
    """Approximate bounds by black-box search over step CDFs inside the band.

    Candidates are non-decreasing levels on a grid refined with the band's
    knots, clamped into the band. The search starts from the flat-level
    family ``clip(h, lo, up)``, the jump family (lower edge then upper edge)
    and random sorted levels, then refines the incumbents with block
    perturbations. The search finds inner approximations of the infimum and
    supremum, so the result is flagged ``guaranteed=False``.
    """
    if _point_band(band):
        v = float(parameter.on_pmf(np.array([band.g_min]), np.array([1.0])))
        return Bounds(v, v, guaranteed=False)
    grid = np.linspace(band.g_min, band.g_max, max(int(grid_size), 2))
    x, lo, up = band.pieces(grid)
    m = lo.size
    rng = np.random.default_rng(seed)

    def evaluate(levels: np.ndarray) -> np.ndarray:
        return np.asarray(parameter.on_pmf(x, levels_to_masses(levels)), dtype=float)

    def clamp(levels: np.ndarray) -> np.ndarray:
        return np.clip(np.maximum.accumulate(np.clip(levels, 0.0, 1.0), axis=-1), lo, up)

    hs = np.linspace(0.0, 1.0, 65)
    pop = [np.clip(hs[:, None], lo, up)]
    jumps = np.unique(np.linspace(0, m, min(m + 1, 129)).astype(int))
    pop.append(np.array([np.concatenate((lo[:j], up[j:])) for j in jumps]))
    n_init = sum(p.shape[0] for p in pop)
    n_rand = max(0, min(256, search_budget // 4 - n_init))
    if n_rand:
        pop.append(clamp(np.sort(rng.random((n_rand, m)), axis=1)))
    pop = np.concatenate(pop)
    vals = evaluate(pop)
    used = pop.shape[0]

    results = []
    for sign in (1.0, -1.0):
        obj = sign * vals
        best = pop[int(np.argmin(obj))].copy()
        best_val = float(obj.min())
        step_budget = max(0, (search_budget - used) // 2)
        batch = 32
        while step_budget > 0:
            k = min(batch, step_budget)
            step_budget -= k
            cand = np.repeat(best[None, :], k, axis=0)
            starts = rng.integers(0, m, k)
            lengths = rng.integers(1, max(2, m // 4 + 1), k)
            noise = rng.normal(0.0, 0.1, k)
            mode = rng.random(k)
            target = rng.random(k)
            for r in range(k):
                s, e = starts[r], min(m, starts[r] + lengths[r])
                if mode[r] < 0.5:
                    cand[r, s:e] += noise[r]
                else:
                    cand[r, s:e] = target[r]
            cand = clamp(cand)
            cv = sign * evaluate(cand)
            j = int(np.argmin(cv))
            if cv[j] < best_val:
                best, best_val = cand[j].copy(), float(cv[j])
        results.append(sign * best_val)
    return Bounds(results[0], results[1], guaranteed=False)
