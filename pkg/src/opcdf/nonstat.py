"""Forecasting the return CDF of a future episode under smooth drift.

Under the assumption that ``F^(i)(nu)`` is a linear function of a fixed
feature vector ``phi(i)`` of the episode index, the unbiased per-episode
estimates ``rho_i 1{G_i <= kappa}`` can be regressed on ``phi(i)`` and
extrapolated to episode ``L + ell``. Confidence intervals come from a wild
bootstrap with Rademacher multipliers, and a band is assembled from the
key-point intervals with the same envelope as the stationary band.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .band import ConfidenceBand, KeyPointPlan, _check_plan, band_from_intervals
from .returns import ReturnDataset


def fourier_basis(index: np.ndarray, order: int, period: float) -> np.ndarray:
    """Rows ``[1, sin(2 pi i / P), cos(2 pi i / P), sin(4 pi i / P), ...]`` truncated to ``order`` columns."""
    i = np.asarray(index, dtype=float).reshape(-1)
    if order < 1:
        raise ValueError("basis order must be at least 1")
    cols = [np.ones_like(i)]
    k = 1
    while len(cols) < order:
        angle = 2.0 * np.pi * k * i / period
        cols.append(np.sin(angle))
        if len(cols) < order:
            cols.append(np.cos(angle))
        k += 1
    return np.stack(cols, axis=1)


@dataclass(frozen=True, eq=False)
class NsModel:
    """Least-squares fit of one key point's per-episode sequence."""

    basis_order: int
    horizon: int
    lead: int
    weights: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    forecast_row: np.ndarray
    #: Linear map from the observed sequence to the forecast.
    forecast_weights: np.ndarray

    @property
    def period(self) -> int:
        return self.horizon + self.lead

    @property
    def forecast(self) -> float:
        return float(self.forecast_row @ self.weights)


def fit_model(points: Sequence[float], basis_order: int, lead: int) -> NsModel:
    y = np.asarray(points, dtype=float).reshape(-1)
    L = y.size
    if lead < 0:
        raise ValueError("lead must be non-negative")
    if L < basis_order:
        raise ValueError("degenerate basis")
    period = L + lead if L + lead > 0 else 1
    phi = fourier_basis(np.arange(1, L + 1), basis_order, period)
    if np.linalg.matrix_rank(phi) < basis_order:
        raise ValueError("degenerate basis")
    pinv = np.linalg.pinv(phi)
    w = pinv @ y
    fitted = phi @ w
    row = fourier_basis(np.array([L + lead]), basis_order, period)[0]
    return NsModel(basis_order, L, lead, w, fitted, y - fitted, row, row @ pinv)


def per_episode_cdf_points(data: ReturnDataset, kappa: float) -> np.ndarray:
    """``rho_i 1{G_i <= kappa}`` ordered by episode; episodes must be exactly ``1..L``."""
    order = np.argsort(data.episode, kind="stable")
    ep = data.episode[order]
    if not np.array_equal(ep, np.arange(1, data.n + 1)):
        raise ValueError("episode indices must be exactly 1..L with no duplicates")
    return data.rho[order] * (data.g[order] <= kappa)


def forecast_cdf_point(points: Sequence[float], basis_order: int = 3, lead: int = 1) -> float:
    """OLS forecast ``phi(L + ell)^T w`` of the sequence at episode ``L + ell``."""
    return fit_model(points, basis_order, lead).forecast


def wild_bootstrap_ci(
    points: Sequence[float],
    basis_order: int = 3,
    lead: int = 1,
    delta_i: float = 0.05,
    replicates: int = 1000,
    seed: int = 0,
) -> Tuple[float, float]:
    """Percentile interval of wild-bootstrap forecasts, clipped to ``[0, 1]``.

    Pseudo-series are ``fitted + s * residual`` with independent Rademacher
    signs ``s``. Refitting is linear in the series, so each replicate
    forecast is ``forecast + sum_i s_i r_i c_i`` where ``c`` is the forecast
    row of the hat matrix; this equals refitting every pseudo-series.
    """
    if replicates < 200:
        raise ValueError("insufficient replicates")
    if not 0.0 < delta_i <= 1.0:
        raise ValueError("delta_i must lie in (0, 1]")
    model = fit_model(points, basis_order, lead)
    rng = np.random.default_rng(seed)
    contrib = model.residuals * model.forecast_weights
    signs = rng.integers(0, 2, size=(replicates, contrib.size), dtype=np.int8) * 2 - 1
    reps = model.forecast + signs @ contrib
    lo, hi = np.quantile(reps, [delta_i / 2.0, 1.0 - delta_i / 2.0])
    lo, hi = float(np.clip(lo, 0.0, 1.0)), float(np.clip(hi, 0.0, 1.0))
    return lo, max(lo, hi)


def forecast_band(
    data: ReturnDataset,
    plan: KeyPointPlan,
    basis_order: int = 3,
    lead: int = 1,
    delta: float = 0.05,
    replicates: int = 1000,
    seed: int = 0,
) -> ConfidenceBand:
    """Band for the CDF of episode ``L + lead`` from wild-bootstrap key-point intervals."""
    _check_plan(plan, delta, data.g_min, data.g_max)
    seeds = np.random.SeedSequence(seed).spawn(plan.size)
    lows, ups = [], []
    for kappa, d_i, ss in zip(plan.key_points, plan.budgets, seeds):
        pts = per_episode_cdf_points(data, kappa)
        lo, hi = wild_bootstrap_ci(pts, basis_order, lead, d_i, replicates, ss)
        lows.append(lo)
        ups.append(hi)
    return band_from_intervals(plan.key_points, lows, ups, delta, data.g_min, data.g_max)
