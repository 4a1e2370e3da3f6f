"""Bias-corrected and accelerated (BCa) bootstrap intervals over WIS plug-ins.

Each replicate resamples the logged returns with replacement, forms the
weighted importance sampling CDF and evaluates the parameter on it. The
percentile levels are then adjusted by the bias correction ``z0`` (from the
fraction of replicates below the full-sample estimate) and the acceleration
``a`` (from jackknife skewness). The intervals are approximate: they have no
finite-sample guarantee, but are usually much narrower than band-based
bounds.
"""

from __future__ import annotations

import math
from statistics import NormalDist
from typing import Optional, Tuple

import numpy as np

from .returns import Parameter, ReturnDataset

_NORMAL = NormalDist()

#: Replicate matrices are processed in row blocks of about this many cells.
_BLOCK_CELLS = 2_000_000
#: Above this many distinct (G, rho) pairs the jackknife deletes groups of samples.
_MAX_JACKKNIFE_UNITS = 2000


def _phi(z: float) -> float:
    return _NORMAL.cdf(z)


def _phi_inv(p: float) -> float:
    return _NORMAL.inv_cdf(p)


def bias_correction(replicates: np.ndarray, estimate: float) -> float:
    """``z0 = Phi^-1(p)`` with ``p`` the fraction below ``estimate``, ties counted half."""
    b = replicates.size
    p = (np.count_nonzero(replicates < estimate) + 0.5 * np.count_nonzero(replicates == estimate)) / b
    p = min(max(p, 0.5 / b), 1.0 - 0.5 / b)
    return _phi_inv(p)


def acceleration(jackknife: np.ndarray, weights: Optional[np.ndarray] = None) -> float:
    """Jackknife skewness estimate of the acceleration; 0 when degenerate."""
    theta = np.asarray(jackknife, dtype=float)
    w = np.ones_like(theta) if weights is None else np.asarray(weights, dtype=float)
    center = np.sum(w * theta) / np.sum(w)
    d = center - theta
    num = np.sum(w * d**3)
    den = np.sum(w * d**2)
    if not den > 0 or not np.isfinite(den):
        return 0.0
    return float(num / (6.0 * den**1.5))


def bca_interval(
    replicates: np.ndarray, estimate: float, delta: float, accel: float = 0.0, z0: Optional[float] = None
) -> Tuple[float, float]:
    """Two-sided ``1 - delta`` BCa interval from precomputed replicates."""
    reps = np.asarray(replicates, dtype=float)
    if np.ptp(reps) == 0:
        v = float(reps[0])
        return v, v
    if z0 is None:
        z0 = bias_correction(reps, estimate)
    levels = []
    for z in (_phi_inv(delta / 2.0), _phi_inv(1.0 - delta / 2.0)):
        shift = z0 + z
        denom = 1.0 - accel * shift
        levels.append(_phi(z0 + shift / denom) if denom > 0 else (0.0 if z < 0 else 1.0))
    lo, hi = np.quantile(reps, levels)
    return float(lo), float(max(lo, hi))


class _Grouped:
    """Returns sorted ascending with the start index of each distinct value."""

    def __init__(self, data: ReturnDataset) -> None:
        order = np.argsort(data.g, kind="stable")
        self.g = data.g[order]
        self.rho = data.rho[order]
        self.points, self.starts = np.unique(self.g, return_index=True)

    def masses(self, weights: np.ndarray) -> np.ndarray:
        """Normalized per-value masses, one row per row of sample-level ``weights``."""
        grouped = np.add.reduceat(weights, self.starts, axis=-1)
        total = grouped.sum(axis=-1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return grouped / total


def bootstrap_replicates(
    data: ReturnDataset, parameter: Parameter, replicates: int, seed: int = 0
) -> np.ndarray:
    """Parameter values on ``replicates`` resampled WIS estimates (NaN for all-zero resamples)."""
    grp = _Grouped(data)
    n = data.n
    rng = np.random.default_rng(seed)
    rows_per_block = max(1, _BLOCK_CELLS // max(n, 1))
    out = np.empty(replicates)
    done = 0
    while done < replicates:
        k = min(rows_per_block, replicates - done)
        idx = rng.integers(0, n, size=(k, n))
        flat = (idx + n * np.arange(k)[:, None]).ravel()
        counts = np.bincount(flat, minlength=k * n).reshape(k, n)
        masses = grp.masses(counts * grp.rho)
        vals = np.asarray(parameter.on_pmf(grp.points, np.nan_to_num(masses)), dtype=float)
        vals[~np.isfinite(masses).all(axis=1)] = np.nan
        out[done : done + k] = vals
        done += k
    return out


def jackknife_values(data: ReturnDataset, parameter: Parameter, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Leave-one-out WIS estimates and their multiplicities.

    Samples with identical ``(G, rho)`` share one leave-one-out value, so
    each distinct pair is evaluated once. When there are more than
    ``_MAX_JACKKNIFE_UNITS`` distinct pairs, samples are split into that many
    seeded groups and whole groups are deleted instead.
    """
    grp = _Grouped(data)
    n = data.n
    pairs = np.stack((grp.g, grp.rho), axis=1)
    uniq, inverse, mult = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    base = grp.rho.astype(float)
    if uniq.shape[0] <= _MAX_JACKKNIFE_UNITS:
        first = np.zeros(uniq.shape[0], dtype=np.int64)
        first[inverse[::-1]] = np.arange(n)[::-1]
        weights_of = lambda rows: _drop_rows(base, first[rows][:, None])
        units = uniq.shape[0]
        unit_weights = mult.astype(float)
    else:
        labels = np.random.default_rng(seed).permutation(n) % _MAX_JACKKNIFE_UNITS
        members = [np.flatnonzero(labels == u) for u in range(_MAX_JACKKNIFE_UNITS)]
        weights_of = lambda rows: _drop_groups(base, [members[r] for r in rows])
        units = _MAX_JACKKNIFE_UNITS
        unit_weights = np.ones(units)
    values = np.empty(units)
    rows_per_block = max(1, _BLOCK_CELLS // max(n, 1))
    for s in range(0, units, rows_per_block):
        rows = np.arange(s, min(units, s + rows_per_block))
        masses = grp.masses(weights_of(rows))
        vals = np.asarray(parameter.on_pmf(grp.points, np.nan_to_num(masses)), dtype=float)
        vals[~np.isfinite(masses).all(axis=1)] = np.nan
        values[rows] = vals
    ok = np.isfinite(values)
    return values[ok], unit_weights[ok]


def _drop_rows(base: np.ndarray, cols: np.ndarray) -> np.ndarray:
    w = np.repeat(base[None, :], cols.shape[0], axis=0)
    np.put_along_axis(w, cols, 0.0, axis=1)
    return w


def _drop_groups(base: np.ndarray, groups) -> np.ndarray:
    w = np.repeat(base[None, :], len(groups), axis=0)
    for r, g in enumerate(groups):
        w[r, g] = 0.0
    return w


def bca_bounds(
    data: ReturnDataset, parameter: Parameter, delta: float, replicates: int = 2000, seed: int = 0
) -> Tuple[float, float]:
    """Approximate two-sided ``1 - delta`` interval for ``parameter``."""
    if replicates < 100:
        raise ValueError("insufficient replicates")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if data.n == 0:
        raise ValueError("no samples")
    if math.fsum(data.rho.tolist()) <= 0:
        raise ValueError("degenerate weights")
    grp = _Grouped(data)
    estimate = float(parameter.on_pmf(grp.points, grp.masses(grp.rho)))
    reps = bootstrap_replicates(data, parameter, replicates, seed)
    reps = reps[np.isfinite(reps)]
    if reps.size < 100:
        raise ValueError("degenerate weights")
    jk, jk_w = jackknife_values(data, parameter, seed)
    accel = acceleration(jk, jk_w) if jk.size > 1 else 0.0
    return bca_interval(reps, estimate, delta, accel)
