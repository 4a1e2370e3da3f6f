"""One-sided confidence bounds on ``F(kappa)`` from importance-weighted indicators.

For a key point ``kappa`` the variables ``X_i = min(rho_i, c) * 1{G_i <= kappa}``
are bounded in ``[0, c]`` and, because truncation only lowers a non-negative
variable, ``E[X] <= F(kappa)``. Any lower confidence bound on ``E[X]`` is
therefore a lower confidence bound on ``F(kappa)``. Upper bounds follow from
the complementary variables ``Y_i = min(rho_i, c) * 1{G_i > kappa}`` and
``E[rho 1{G > kappa}] = 1 - F(kappa)``.

The functions accept an ``n_effective`` override so that a plan optimizer can
predict interval widths for a larger evaluation set than the one at hand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple, Union

import numpy as np

from .returns import ReturnDataset


class CiKind(str, Enum):
    TRUNCATED_EMPIRICAL_BERNSTEIN = "truncated_empirical_bernstein"
    HOEFFDING_WITH_CAP = "hoeffding_with_cap"


@dataclass(frozen=True)
class CiMethod:
    """Concentration inequality and weight-truncation threshold ``cap``."""

    kind: CiKind = CiKind.TRUNCATED_EMPIRICAL_BERNSTEIN
    cap: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", CiKind(self.kind))
        if not (self.cap > 0 and math.isfinite(self.cap)):
            raise ValueError(f"cap must be positive and finite, got {self.cap!r}")

    def with_cap(self, cap: float) -> "CiMethod":
        return CiMethod(self.kind, float(cap))


def mean_lower_bound(
    total: Union[float, np.ndarray],
    total_sq: Union[float, np.ndarray],
    n: int,
    cap: float,
    delta: Union[float, np.ndarray],
    kind: CiKind = CiKind.TRUNCATED_EMPIRICAL_BERNSTEIN,
    n_effective: Optional[float] = None,
) -> Union[float, np.ndarray]:
    """Lower ``1 - delta`` confidence bound on the mean of variables in ``[0, cap]``.

    The sample is summarized by ``total = sum x_i`` and ``total_sq = sum x_i^2``.
    Width terms use ``n_effective`` (default ``n``); the sample mean and
    variance use the actual ``n``. Inputs broadcast; results are clipped to
    ``[0, 1]``.
    """
    kind = CiKind(kind)
    if n < 1:
        raise ValueError("no samples")
    m = n if n_effective is None else float(n_effective)
    delta = np.asarray(delta, dtype=float)
    if np.any((delta <= 0) | (delta >= 1)):
        raise ValueError("delta must lie in (0, 1)")
    total = np.asarray(total, dtype=float)
    mean = total / n
    if kind is CiKind.TRUNCATED_EMPIRICAL_BERNSTEIN:
        if n < 2 or m < 2:
            raise ValueError("empirical Bernstein bound needs at least 2 samples")
        var = np.maximum(0.0, (np.asarray(total_sq, dtype=float) - n * mean * mean) / (n - 1))
        log_term = np.log(2.0 / delta)
        bound = mean - np.sqrt(2.0 * var * log_term / m) - 7.0 * cap * log_term / (3.0 * (m - 1))
    else:
        bound = mean - cap * np.sqrt(np.log(1.0 / delta) / (2.0 * m))
    out = np.clip(bound, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


class WeightedIndicatorStats:
    """Prefix sums of truncated weights over returns sorted ascending.

    Answers ``sum_i min(rho_i, c) 1{G_i <= kappa}`` (and the sum of squares)
    for many ``kappa`` in ``O(log n)`` each.
    """

    def __init__(self, data: ReturnDataset, cap: float) -> None:
        order = np.argsort(data.g, kind="stable")
        self.g = data.g[order]
        w = np.minimum(data.rho[order], cap)
        self.cap = float(cap)
        self.n = data.n
        self._cum = np.concatenate(([0.0], np.cumsum(w)))
        self._cum_sq = np.concatenate(([0.0], np.cumsum(w * w)))

    def below(self, kappa) -> Tuple[np.ndarray, np.ndarray]:
        idx = np.searchsorted(self.g, kappa, side="right")
        return self._cum[idx], self._cum_sq[idx]

    def above(self, kappa) -> Tuple[np.ndarray, np.ndarray]:
        s, s2 = self.below(kappa)
        return self._cum[-1] - s, self._cum_sq[-1] - s2

    def intervals(
        self, kappa, delta, kind: CiKind, n_effective: Optional[float] = None
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Per-point (lower, upper) bounds, each at level ``1 - delta``."""
        s, s2 = self.below(kappa)
        lo = mean_lower_bound(s, s2, self.n, self.cap, delta, kind, n_effective)
        t, t2 = self.above(kappa)
        up = 1.0 - mean_lower_bound(t, t2, self.n, self.cap, delta, kind, n_effective)
        return np.asarray(lo, dtype=float), np.clip(np.asarray(up, dtype=float), 0.0, 1.0)


def _check(data: ReturnDataset, delta_i: float) -> None:
    if not 0.0 < delta_i < 1.0:
        raise ValueError(f"delta_i must lie in (0, 1), got {delta_i!r}")
    if data.n == 0:
        raise ValueError("no samples")


def ci_lower(
    data: ReturnDataset,
    kappa: float,
    delta_i: float,
    method: CiMethod = CiMethod(),
    n_effective: Optional[float] = None,
) -> float:
    """Lower ``1 - delta_i`` confidence bound on ``F(kappa)``."""
    _check(data, delta_i)
    x = np.minimum(data.rho, method.cap) * (data.g <= kappa)
    return mean_lower_bound(
        math.fsum(x.tolist()), math.fsum((x * x).tolist()), data.n, method.cap, delta_i, method.kind, n_effective
    )


def ci_upper(
    data: ReturnDataset,
    kappa: float,
    delta_i: float,
    method: CiMethod = CiMethod(),
    n_effective: Optional[float] = None,
) -> float:
    """Upper ``1 - delta_i`` confidence bound on ``F(kappa)`` via the complement."""
    _check(data, delta_i)
    y = np.minimum(data.rho, method.cap) * (data.g > kappa)
    lo = mean_lower_bound(
        math.fsum(y.tolist()), math.fsum((y * y).tolist()), data.n, method.cap, delta_i, method.kind, n_effective
    )
    return min(1.0, 1.0 - lo)
