"""Confidence bands for a return CDF built from key-point intervals.

A :class:`KeyPointPlan` fixes key points ``kappa_1 < ... < kappa_K`` and
failure budgets ``delta_i``. At each key point a two-sided interval on
``F(kappa_i)`` is computed from two one-sided bounds at level ``delta_i / 2``
each (see :mod:`opcdf.concentration`); the band is the monotone envelope of
those intervals:

* ``F_lower(nu) = max{ lower_i : kappa_i <= nu }`` (0 left of ``kappa_1``) and
  ``1`` above ``g_max``;
* ``F_upper(nu) = min{ upper_i : kappa_i >= nu }`` (1 right of ``kappa_K``) and
  ``0`` below ``g_min``.

If every interval holds, which by the union bound happens with probability
at least ``1 - sum(delta_i)``, the true CDF lies inside the band everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .concentration import CiKind, CiMethod, WeightedIndicatorStats
from .returns import Parameter, ReturnDataset, StepCdf, parse_parameter

#: Tolerance on ``sum(delta_i) <= delta`` (softmax budgets carry rounding error).
BUDGET_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class KeyPointPlan:
    """Key points, per-point failure budgets and the interval method."""

    key_points: np.ndarray
    budgets: np.ndarray
    ci_method: CiMethod = CiMethod()

    def __post_init__(self) -> None:
        kp = np.array(self.key_points, dtype=float).reshape(-1)
        b = np.array(self.budgets, dtype=float).reshape(-1)
        if kp.shape != b.shape:
            raise ValueError("key_points and budgets must have the same length")
        if kp.size > 1 and np.any(np.diff(kp) <= 0):
            raise ValueError("key points must be strictly increasing")
        if np.any(b <= 0) or np.any(b >= 1):
            raise ValueError("budgets must lie in (0, 1)")
        kp.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "key_points", kp)
        object.__setattr__(self, "budgets", b)

    @property
    def size(self) -> int:
        return int(self.key_points.size)

    @property
    def total_budget(self) -> float:
        return math.fsum(self.budgets.tolist())


def uniform_plan(
    g_min: float, g_max: float, num_points: int, delta: float, ci_method: CiMethod = CiMethod()
) -> KeyPointPlan:
    """Equally spaced interior key points with budget ``delta / K`` each."""
    if num_points < 1:
        raise ValueError("need at least one key point")
    if not g_min < g_max:
        raise ValueError("uniform plan needs g_min < g_max")
    frac = np.arange(1, num_points + 1) / (num_points + 1)
    kp = g_min + frac * (g_max - g_min)
    return KeyPointPlan(kp, np.full(num_points, delta / num_points), ci_method)


def default_num_points(eval_size: int) -> int:
    """``ceil(ln n)``, at least one."""
    return max(1, int(math.ceil(math.log(max(int(eval_size), 1)))))


# ---------------------------------------------------------------------------
# Band
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ConfidenceBand:
    """Pair of step functions enclosing a CDF on ``[g_min, g_max]``.

    ``lower`` and ``upper`` may be right- or left-continuous. The tail rules
    (``lower = 1`` above ``g_max`` and ``upper = 0`` below ``g_min``) are
    applied by :meth:`lower_at` and :meth:`upper_at`; always evaluate the
    band through those.
    """

    lower: StepCdf
    upper: StepCdf
    delta: float
    g_min: float
    g_max: float

    def __post_init__(self) -> None:
        if not self.g_min <= self.g_max:
            raise ValueError("g_min must not exceed g_max")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")
        t = self._probe_points()
        lo, up = self.lower_at(t), self.upper_at(t)
        if np.any(lo < -1e-12) or np.any(up > 1 + 1e-12) or np.any(lo > up + 1e-12):
            raise ValueError("band violates 0 <= lower <= upper <= 1")

    # -- evaluation ---------------------------------------------------------

    def lower_at(self, nu) -> Union[float, np.ndarray]:
        x = np.asarray(nu, dtype=float)
        out = np.where(x > self.g_max, 1.0, np.clip(self.lower(x), 0.0, 1.0))
        return float(out) if out.ndim == 0 else out

    def upper_at(self, nu) -> Union[float, np.ndarray]:
        x = np.asarray(nu, dtype=float)
        out = np.where(x < self.g_min, 0.0, np.clip(self.upper(x), 0.0, 1.0))
        return float(out) if out.ndim == 0 else out

    def knots(self) -> np.ndarray:
        """``g_min``, ``g_max`` and every breakpoint strictly between them."""
        pts = np.concatenate(([self.g_min, self.g_max], self.lower.breakpoints, self.upper.breakpoints))
        pts = pts[(pts >= self.g_min) & (pts <= self.g_max)]
        return np.unique(pts)

    def pieces(self, extra_points: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Knots ``x_0 < ... < x_m`` and band levels on each open interval.

        Returns ``(x, lo, up)`` with ``lo[j]``/``up[j]`` the lower/upper edge
        on ``(x_j, x_{j+1})``. Both edges are constant there. Any CDF in the
        band, viewed on these intervals, is a distribution on the knots with
        mass ``v_0`` at ``g_min``, ``v_j - v_{j-1}`` at ``x_j`` and
        ``1 - v_{m-1}`` at ``g_max``.
        """
        x = self.knots()
        if extra_points is not None:
            extra = np.asarray(extra_points, dtype=float)
            extra = extra[(extra >= self.g_min) & (extra <= self.g_max)]
            x = np.unique(np.concatenate((x, extra)))
        if x.size < 2:
            return x, np.zeros(0), np.zeros(0)
        mid = 0.5 * (x[:-1] + x[1:])
        lo = np.asarray(self.lower_at(mid), dtype=float)
        up = np.asarray(self.upper_at(mid), dtype=float)
        lo = np.maximum.accumulate(lo)
        up = np.maximum(np.minimum.accumulate(up[::-1])[::-1], lo)
        return x, lo, up

    def _probe_points(self, extra: Optional[np.ndarray] = None) -> np.ndarray:
        pts = [self.lower.breakpoints, self.upper.breakpoints, np.array([self.g_min, self.g_max])]
        if extra is not None:
            pts.append(np.asarray(extra, dtype=float))
        t = np.unique(np.concatenate(pts))
        mids = 0.5 * (t[:-1] + t[1:])
        outer = np.array([t[0] - 1.0 - abs(t[0]), t[-1] + 1.0 + abs(t[-1])])
        return np.concatenate((t, mids, outer))

    def contains(self, cdf: StepCdf, atol: float = 1e-12) -> bool:
        """Whether ``lower <= cdf <= upper`` holds on the whole real line."""
        t = self._probe_points(cdf.breakpoints)
        f = np.asarray(cdf(t), dtype=float)
        return bool(np.all(f >= self.lower_at(t) - atol) and np.all(f <= self.upper_at(t) + atol))

    def area(self) -> float:
        """Area enclosed between the edges over ``[g_min, g_max]``."""
        x, lo, up = self.pieces()
        return math.fsum(((up - lo) * np.diff(x)).tolist())

    def max_width(self) -> float:
        t = self._probe_points()
        return float(np.max(self.upper_at(t) - self.lower_at(t)))

    # -- constructors -------------------------------------------------------

    @classmethod
    def vacuous(cls, g_min: float, g_max: float, delta: float = 0.0) -> "ConfidenceBand":
        empty = np.zeros(0)
        return cls(
            StepCdf(empty, empty, 0.0), StepCdf(empty, empty, 1.0, right_continuous=False), delta, g_min, g_max
        )

    @classmethod
    def degenerate(cls, cdf: StepCdf, g_min: float, g_max: float, delta: float = 0.0) -> "ConfidenceBand":
        """Band whose edges coincide with a (normalized) CDF."""
        plain = StepCdf(cdf.breakpoints, np.minimum(cdf.values, 1.0), cdf.value_before_first)
        return cls(plain, plain, delta, g_min, g_max)


def band_from_intervals(
    key_points: Sequence[float],
    lower: Sequence[float],
    upper: Sequence[float],
    delta: float,
    g_min: float,
    g_max: float,
) -> ConfidenceBand:
    """Monotone envelope of per-key-point intervals.

    Where a running lower maximum exceeds the running upper minimum (the
    intervals cannot all hold), the upper edge is raised to the lower one so
    the band stays well formed; this only widens the band.
    """
    kp = np.asarray(key_points, dtype=float).reshape(-1)
    lo = np.clip(np.asarray(lower, dtype=float).reshape(-1), 0.0, 1.0)
    up = np.clip(np.asarray(upper, dtype=float).reshape(-1), 0.0, 1.0)
    if not (kp.shape == lo.shape == up.shape):
        raise ValueError("key_points, lower and upper must have equal length")
    if kp.size and (kp[0] <= g_min or kp[-1] >= g_max):
        raise ValueError("key points must lie strictly inside (g_min, g_max)")
    if kp.size == 0:
        return ConfidenceBand.vacuous(g_min, g_max, delta)
    env_lo = np.maximum.accumulate(lo)
    env_up = np.minimum.accumulate(up[::-1])[::-1]
    env_up = np.maximum(env_up, env_lo)
    lower_cdf = StepCdf(kp, env_lo, 0.0, right_continuous=True)
    upper_cdf = StepCdf(kp, np.concatenate((env_up[1:], [1.0])), float(env_up[0]), right_continuous=False)
    return ConfidenceBand(lower_cdf, upper_cdf, float(delta), float(g_min), float(g_max))


def _check_plan(plan: KeyPointPlan, delta: float, g_min: float, g_max: float) -> None:
    if plan.total_budget > delta * (1 + BUDGET_RTOL):
        raise ValueError("budget exceeded")
    if plan.size and (plan.key_points[0] <= g_min or plan.key_points[-1] >= g_max):
        raise ValueError("key points must lie strictly inside (g_min, g_max)")


def key_point_intervals(
    data: ReturnDataset, plan: KeyPointPlan, n_effective: Optional[float] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """Two-sided intervals at each key point; each side gets half of ``delta_i``."""
    stats = WeightedIndicatorStats(data, plan.ci_method.cap)
    return stats.intervals(plan.key_points, plan.budgets / 2.0, plan.ci_method.kind, n_effective)


def build_band(data: ReturnDataset, plan: KeyPointPlan, delta: float) -> ConfidenceBand:
    """Band with coverage at least ``1 - delta`` for the evaluation-policy CDF."""
    _check_plan(plan, delta, data.g_min, data.g_max)
    if data.n == 0:
        raise ValueError("no samples")
    lo, up = key_point_intervals(data, plan)
    return band_from_intervals(plan.key_points, lo, up, delta, data.g_min, data.g_max)


def shift_band(band: ConfidenceBand, epsilon: float) -> ConfidenceBand:
    """Widen a band by ``epsilon`` in Kolmogorov-Smirnov distance.

    If the target CDF is within sup-distance ``epsilon`` of the CDF the band
    covers (and shares its return bounds), the shifted band covers it too.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    lower = band.lower.map_values(lambda v: np.clip(v - epsilon, 0.0, 1.0))
    upper = band.upper.map_values(lambda v: np.clip(v + epsilon, 0.0, 1.0))
    return ConfidenceBand(lower, upper, band.delta, band.g_min, band.g_max)


def split_train_eval(
    data: ReturnDataset, train_fraction: float = 0.05, seed: int = 0
) -> Tuple[ReturnDataset, ReturnDataset]:
    """Seeded random partition; each part keeps the original sample order."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    n = data.n
    if n < 2:
        raise ValueError("need at least two samples to split")
    n_train = min(max(int(math.floor(train_fraction * n + 0.5)), 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    train_idx = np.sort(perm[:n_train])
    eval_idx = np.sort(perm[n_train:])
    return data.subset(train_idx), data.subset(eval_idx)


# ---------------------------------------------------------------------------
# Plan search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Specialize:
    """Objective that tightens one side of one parameter's bound."""

    parameter: Parameter
    side: str = "lower"

    def __post_init__(self) -> None:
        if isinstance(self.parameter, str):
            object.__setattr__(self, "parameter", parse_parameter(self.parameter))
        if self.side not in ("lower", "upper"):
            raise ValueError("side must be 'lower' or 'upper'")


Objective = Union[str, Specialize]


def parse_objective(text: Objective) -> Objective:
    """``"area"`` or ``"specialize:<parameter>:<side>"``."""
    if isinstance(text, Specialize):
        return text
    text = text.strip().lower()
    if text == "area":
        return "area"
    if text.startswith("specialize:"):
        _, rest = text.split(":", 1)
        param, _, side = rest.rpartition(":")
        if side not in ("lower", "upper"):
            param, side = rest, "lower"
        return Specialize(parse_parameter(param), side)
    raise ValueError(f"unknown objective {text!r}")


def envelope_area(
    key_points: np.ndarray, lower: np.ndarray, upper: np.ndarray, g_min: float, g_max: float
) -> np.ndarray:
    """Enclosed area of the envelope band, one value per row of candidate plans."""
    kp = np.atleast_2d(key_points)
    env_lo = np.maximum.accumulate(np.clip(np.atleast_2d(lower), 0, 1), axis=1)
    env_up = np.flip(np.minimum.accumulate(np.flip(np.clip(np.atleast_2d(upper), 0, 1), 1), axis=1), 1)
    env_up = np.maximum(env_up, env_lo)
    area = env_up[:, 0] * (kp[:, 0] - g_min) + (1.0 - env_lo[:, -1]) * (g_max - kp[:, -1])
    if kp.shape[1] > 1:
        area = area + np.sum((env_up[:, 1:] - env_lo[:, :-1]) * np.diff(kp, axis=1), axis=1)
    return area


def default_cap(train: ReturnDataset) -> float:
    """95th percentile of the observed ratios (1 when they are all zero)."""
    if train.n == 0:
        return 1.0
    c = float(np.quantile(train.rho, 0.95))
    return c if c > 0 else 1.0


def _candidate_caps(train: ReturnDataset) -> np.ndarray:
    qs = np.quantile(train.rho, [0.5, 0.75, 0.9, 0.95, 1.0])
    caps = np.unique(np.concatenate((qs, [default_cap(train)])))
    return caps[caps > 0]


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def optimize_plan(
    train: ReturnDataset,
    eval_size: int,
    delta: float,
    objective: Objective = "area",
    search_budget: int = 200,
    seed: int = 0,
    ci_method: Optional[CiMethod] = None,
    num_points: Optional[int] = None,
) -> KeyPointPlan:
    """Search key points, budgets and truncation cap on training data.

    Interval widths are predicted as if the intervals were computed on
    ``eval_size`` samples. Candidate 0 is the uniform plan; the remaining
    budget is split between random candidates and Gaussian perturbations of
    the incumbent. The best candidate under ``(objective, index)`` ordering
    is returned, so the result never scores worse than the uniform plan.

    If ``ci_method`` is given its cap is kept fixed; otherwise the cap is
    searched over quantiles of the training ratios.
    """
    if train.n == 0:
        raise ValueError("no samples")
    objective = parse_objective(objective)
    g_min, g_max = train.g_min, train.g_max
    K = num_points or default_num_points(eval_size)
    base = ci_method or CiMethod(CiKind.TRUNCATED_EMPIRICAL_BERNSTEIN, default_cap(train))
    fallback = uniform_plan(g_min, g_max, K, delta, base)
    if search_budget <= 1 or train.n < 2 or eval_size < 2:
        return fallback
    caps = np.array([base.cap]) if ci_method is not None else _candidate_caps(train)
    stats = {float(c): WeightedIndicatorStats(train, float(c)) for c in caps}
    rng = np.random.default_rng(seed)
    span = g_max - g_min
    lo_open, hi_open = np.nextafter(g_min, np.inf), np.nextafter(g_max, -np.inf)
    interior = np.unique(train.g[(train.g > g_min) & (train.g < g_max)])

    def repair(kp: np.ndarray) -> np.ndarray:
        kp = np.unique(np.clip(kp, lo_open, hi_open))
        while kp.size < K:
            kp = np.unique(np.concatenate((kp, rng.uniform(g_min, g_max, K - kp.size))))
            kp = kp[(kp > g_min) & (kp < g_max)]
        return kp[:K]

    def random_points() -> np.ndarray:
        pick_atom = rng.random(K) < 0.5 if interior.size else np.zeros(K, bool)
        kp = rng.uniform(g_min, g_max, K)
        if interior.size:
            kp[pick_atom] = rng.choice(interior, int(pick_atom.sum()))
        return repair(kp)

    def score(kps: np.ndarray, zs: np.ndarray, cs: np.ndarray) -> np.ndarray:
        half = _softmax(zs) * (delta / 2.0)
        lo = np.empty_like(kps)
        up = np.empty_like(kps)
        for c in np.unique(cs):
            rows = cs == c
            lo[rows], up[rows] = stats[float(c)].intervals(kps[rows], half[rows], base.kind, eval_size)
        if objective == "area":
            return envelope_area(kps, lo, up, g_min, g_max)
        from .bounds import parameter_bounds

        out = np.empty(kps.shape[0])
        for r in range(kps.shape[0]):
            band = band_from_intervals(kps[r], lo[r], up[r], delta, g_min, g_max)
            low, high = parameter_bounds(band, objective.parameter)
            out[r] = -low if objective.side == "lower" else high
        return out

    n_random = max(1, search_budget // 2)
    kps = [fallback.key_points]
    zs = [np.zeros(K)]
    cs = [base.cap]
    for _ in range(n_random - 1):
        kps.append(random_points())
        zs.append(rng.normal(0.0, 1.0, K))
        cs.append(float(rng.choice(caps)))
    kps_a, zs_a, cs_a = np.array(kps), np.array(zs), np.array(cs)
    scores = score(kps_a, zs_a, cs_a)
    best = int(np.argmin(scores))
    best_kp, best_z, best_c, best_s = kps_a[best], zs_a[best], cs_a[best], scores[best]

    remaining = search_budget - n_random
    batch = 8
    while remaining > 0:
        m = min(batch, remaining)
        remaining -= m
        new_kp = np.array([repair(best_kp + rng.normal(0.0, 0.05 * span, K)) for _ in range(m)])
        new_z = best_z + rng.normal(0.0, 0.5, (m, K))
        new_c = np.where(rng.random(m) < 0.2, rng.choice(caps, m), best_c)
        s = score(new_kp, new_z, new_c)
        j = int(np.argmin(s))
        if s[j] < best_s:
            best_kp, best_z, best_c, best_s = new_kp[j], new_z[j], new_c[j], s[j]

    if best_s >= scores[0]:
        return fallback
    budgets = _softmax(best_z) * (delta * (1.0 - 1e-12))
    return KeyPointPlan(best_kp, budgets, base.with_cap(float(best_c)))
