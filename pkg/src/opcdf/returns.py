"""Return-level data model, importance-weighted CDF estimators and plug-ins.

A logged episode is reduced to a triple ``(G, rho, episode)``: its return,
the product of per-step action-probability ratios between the evaluation and
behavior policies, and its position in time. Everything downstream (bands,
bounds, bootstrap, forecasting) works with these triples only.

Two CDF estimators are provided:

* :func:`estimate_cdf_is` -- ``nu -> (1/n) sum_i rho_i 1{G_i <= nu}``. Unbiased
  for every ``nu`` but not a proper CDF: the terminal value is the sample mean
  of ``rho`` and may exceed one.
* :func:`estimate_cdf_wis` -- the self-normalized variant, which always ends
  at exactly one.

Plug-in estimates of distributional parameters are computed on the step
heights of either estimate (see :class:`Parameter` and its subclasses).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np

ArrayLike = Union[float, Sequence[float], np.ndarray]

#: Slack used when comparing accumulated probabilities against a level alpha.
#: Cumulative sums of weights such as 1/3 + 1/3 may land one ulp below 2/3;
#: without slack the inverse CDF would skip an order statistic.
PROB_ATOL = 1e-12


# ---------------------------------------------------------------------------
# Data model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReturnSample:
    """One logged episode: return ``g``, importance ratio ``rho``, index ``episode``."""

    g: float
    rho: float
    episode: int = 0

    def __post_init__(self) -> None:
        if not math.isfinite(self.g):
            raise ValueError(f"return must be finite, got {self.g!r}")
        if not math.isfinite(self.rho) or self.rho < 0:
            raise ValueError(f"importance ratio must be finite and >= 0, got {self.rho!r}")
        if self.episode < 0:
            raise ValueError(f"episode index must be >= 0, got {self.episode!r}")


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ReturnDataset:
    """Immutable column store of logged ``(G, rho, episode)`` triples.

    Attributes:
        g: returns, shape ``(n,)``.
        rho: importance ratios, shape ``(n,)``.
        episode: non-negative integer episode indices, shape ``(n,)``.
        g_min: declared lower bound on every return.
        g_max: declared upper bound on every return.
    """

    g: np.ndarray
    rho: np.ndarray
    episode: np.ndarray
    g_min: float
    g_max: float

    def __init__(
        self,
        g: ArrayLike,
        rho: ArrayLike,
        episode: Optional[ArrayLike] = None,
        g_min: Optional[float] = None,
        g_max: Optional[float] = None,
    ) -> None:
        g_arr = np.array(g, dtype=float).reshape(-1)
        rho_arr = np.array(rho, dtype=float).reshape(-1)
        if g_arr.shape != rho_arr.shape:
            raise ValueError("g and rho must have the same length")
        if episode is None:
            ep_arr = np.arange(1, g_arr.size + 1, dtype=np.int64)
        else:
            ep_arr = np.array(episode, dtype=np.int64).reshape(-1)
            if ep_arr.shape != g_arr.shape:
                raise ValueError("episode must have the same length as g")
        if not np.all(np.isfinite(g_arr)):
            raise ValueError("returns must be finite")
        if not np.all(np.isfinite(rho_arr)) or np.any(rho_arr < 0):
            raise ValueError("importance ratios must be finite and >= 0")
        if np.any(ep_arr < 0):
            raise ValueError("episode indices must be >= 0")
        if g_min is None:
            g_min = float(g_arr.min()) if g_arr.size else 0.0
        if g_max is None:
            g_max = float(g_arr.max()) if g_arr.size else 1.0
        g_min, g_max = float(g_min), float(g_max)
        if not (math.isfinite(g_min) and math.isfinite(g_max)) or g_min > g_max:
            raise ValueError(f"invalid return bounds [{g_min}, {g_max}]")
        if g_arr.size and (g_arr.min() < g_min or g_arr.max() > g_max):
            raise ValueError(
                f"returns outside declared bounds [{g_min}, {g_max}]: "
                f"observed [{g_arr.min()}, {g_arr.max()}]"
            )
        object.__setattr__(self, "g", _frozen(g_arr))
        object.__setattr__(self, "rho", _frozen(rho_arr))
        object.__setattr__(self, "episode", _frozen(ep_arr))
        object.__setattr__(self, "g_min", g_min)
        object.__setattr__(self, "g_max", g_max)

    @classmethod
    def from_samples(
        cls, samples: Iterable[ReturnSample], g_min: Optional[float] = None, g_max: Optional[float] = None
    ) -> "ReturnDataset":
        samples = list(samples)
        return cls(
            [s.g for s in samples],
            [s.rho for s in samples],
            [s.episode for s in samples],
            g_min=g_min,
            g_max=g_max,
        )

    @property
    def samples(self) -> Tuple[ReturnSample, ...]:
        return tuple(
            ReturnSample(float(g), float(r), int(e)) for g, r, e in zip(self.g, self.rho, self.episode)
        )

    @property
    def n(self) -> int:
        return int(self.g.size)

    def __len__(self) -> int:
        return self.n

    def subset(self, index: ArrayLike) -> "ReturnDataset":
        """Samples at ``index`` (order preserved), with the same declared bounds."""
        idx = np.asarray(index)
        return ReturnDataset(self.g[idx], self.rho[idx], self.episode[idx], self.g_min, self.g_max)

    def sorted_by_return(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stable sort by return; returns ``(order, g_sorted, rho_sorted)``."""
        order = np.argsort(self.g, kind="stable")
        return order, self.g[order], self.rho[order]


def is_mean(data: ReturnDataset) -> float:
    """Ordinary per-trajectory importance sampling estimate ``(1/n) sum rho_i G_i``.

    The sum is exactly rounded (``math.fsum``), so the result does not depend
    on the order of the samples.
    """
    if data.n == 0:
        raise ValueError("no samples")
    return math.fsum((data.rho * data.g).tolist()) / data.n


# ---------------------------------------------------------------------------
# Step functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StepCdf:
    """Piecewise-constant non-decreasing function on the real line.

    With ``right_continuous=True`` (the default) the function equals
    ``values[i]`` on ``[breakpoints[i], breakpoints[i+1])``. With
    ``right_continuous=False`` it equals ``values[i]`` on
    ``(breakpoints[i], breakpoints[i+1]]``; this form is used for the upper
    edge of a confidence band. Left of the first breakpoint the function
    equals ``value_before_first``.

    Estimates built from samples additionally keep the sample-level support
    (``sample_g`` sorted ascending, ``sample_w`` the matching weights and the
    normalizer ``norm``) so that plug-ins can be computed from the per-sample
    masses ``sample_w / norm`` without a round trip through differences of
    accumulated values.
    """

    breakpoints: np.ndarray
    values: np.ndarray
    value_before_first: float = 0.0
    right_continuous: bool = True
    unnormalized: bool = False
    sample_g: Optional[np.ndarray] = field(default=None, repr=False)
    sample_w: Optional[np.ndarray] = field(default=None, repr=False)
    norm: float = 1.0

    def __post_init__(self) -> None:
        bp = np.array(self.breakpoints, dtype=float).reshape(-1)
        vals = np.array(self.values, dtype=float).reshape(-1)
        if bp.shape != vals.shape:
            raise ValueError("breakpoints and values must have the same length")
        if bp.size > 1 and np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if not np.all(np.isfinite(bp)) or not np.all(np.isfinite(vals)):
            raise ValueError("breakpoints and values must be finite")
        seq = np.concatenate(([float(self.value_before_first)], vals))
        if np.any(np.diff(seq) < 0):
            raise ValueError("values must be non-decreasing")
        if seq[0] < 0:
            raise ValueError("values must be non-negative")
        if not self.unnormalized and seq[-1] > 1.0 + PROB_ATOL:
            raise ValueError("values exceed 1 on a CDF not flagged as unnormalized")
        object.__setattr__(self, "breakpoints", _frozen(bp))
        object.__setattr__(self, "values", _frozen(vals))
        object.__setattr__(self, "value_before_first", float(self.value_before_first))
        if self.sample_g is not None:
            sg = np.array(self.sample_g, dtype=float)
            sw = np.array(self.sample_w, dtype=float)
            if sg.shape != sw.shape:
                raise ValueError("sample_g and sample_w must have the same length")
            object.__setattr__(self, "sample_g", _frozen(sg))
            object.__setattr__(self, "sample_w", _frozen(sw))

    # -- evaluation ---------------------------------------------------------

    def __call__(self, nu: ArrayLike) -> Union[float, np.ndarray]:
        x = np.asarray(nu, dtype=float)
        side = "right" if self.right_continuous else "left"
        idx = np.searchsorted(self.breakpoints, x, side=side)
        table = np.concatenate(([self.value_before_first], self.values))
        out = table[idx]
        return float(out) if out.ndim == 0 else out

    @property
    def terminal_value(self) -> float:
        return float(self.values[-1]) if self.values.size else self.value_before_first

    def map_values(self, fn) -> "StepCdf":
        """Apply a monotone map to every level; continuity and breakpoints are kept."""
        vals = fn(np.concatenate(([self.value_before_first], self.values)))
        return StepCdf(
            self.breakpoints,
            vals[1:],
            float(vals[0]),
            right_continuous=self.right_continuous,
            unnormalized=self.unnormalized,
        )

    # -- constructors -------------------------------------------------------

    @classmethod
    def from_pmf(cls, points: ArrayLike, masses: ArrayLike) -> "StepCdf":
        """Right-continuous CDF of a discrete distribution (masses normalized to one)."""
        pts = np.asarray(points, dtype=float).reshape(-1)
        m = np.asarray(masses, dtype=float).reshape(-1)
        if pts.shape != m.shape or pts.size == 0:
            raise ValueError("points and masses must be non-empty and of equal length")
        if np.any(m < 0) or m.sum() <= 0:
            raise ValueError("masses must be non-negative with positive total")
        order = np.argsort(pts, kind="stable")
        pts, m = pts[order], m[order]
        uniq, start = np.unique(pts, return_index=True)
        grouped = np.add.reduceat(m, start)
        total = math.fsum(m.tolist())
        vals = np.maximum.accumulate(np.minimum(np.cumsum(grouped) / total, 1.0))
        vals[-1] = 1.0
        return cls(uniq, vals, 0.0, sample_g=pts, sample_w=m, norm=total)

    @classmethod
    def point_mass(cls, c: float) -> "StepCdf":
        return cls.from_pmf([c], [1.0])


def _weighted_step_cdf(g: np.ndarray, w: np.ndarray, norm: float, unnormalized: bool) -> StepCdf:
    order = np.argsort(g, kind="stable")
    gs, ws = g[order], w[order]
    uniq, start = np.unique(gs, return_index=True)
    grouped = np.add.reduceat(ws, start)
    # Accumulate in extended precision, then pin the terminal value to the
    # exactly rounded total so it matches the per-sample sum bit for bit.
    acc = np.cumsum(grouped.astype(np.longdouble)) / np.longdouble(norm)
    vals = acc.astype(float)
    vals[-1] = math.fsum(ws.tolist()) / norm
    vals = np.maximum.accumulate(vals)
    if not unnormalized:
        vals = np.minimum(vals, 1.0)
        vals[-1] = 1.0
    return StepCdf(uniq, vals, 0.0, True, unnormalized, sample_g=gs, sample_w=ws, norm=norm)


def estimate_cdf_is(data: ReturnDataset) -> StepCdf:
    """Importance sampling CDF estimate ``nu -> (1/n) sum rho_i 1{G_i <= nu}``.

    The result is flagged ``unnormalized``: its terminal value is the sample
    mean of ``rho`` and is not clipped.
    """
    if data.n == 0:
        raise ValueError("no samples")
    return _weighted_step_cdf(data.g, data.rho, float(data.n), unnormalized=True)


def estimate_cdf_wis(data: ReturnDataset) -> StepCdf:
    """Weighted (self-normalized) importance sampling CDF estimate; ends at exactly 1."""
    if data.n == 0:
        raise ValueError("no samples")
    total = math.fsum(data.rho.tolist())
    if total <= 0:
        raise ValueError("degenerate weights")
    return _weighted_step_cdf(data.g, data.rho, total, unnormalized=False)


def estimate_cdf(data: ReturnDataset, kind: str = "is") -> StepCdf:
    kind = kind.lower()
    if kind == "is":
        return estimate_cdf_is(data)
    if kind == "wis":
        return estimate_cdf_wis(data)
    raise ValueError(f"unknown estimator {kind!r}; expected 'is' or 'wis'")


# ---------------------------------------------------------------------------
# Inverse CDF and point masses
# ---------------------------------------------------------------------------


def _check_alpha(alpha: float, *, allow_one: bool = True) -> float:
    alpha = float(alpha)
    ok = 0.0 < alpha <= 1.0 if allow_one else 0.0 < alpha < 1.0
    if not ok:
        bounds = "(0, 1]" if allow_one else "(0, 1)"
        raise ValueError(f"alpha must lie in {bounds}, got {alpha!r}")
    return alpha


def inverse_cdf(cdf: StepCdf, alpha: float, sample_values: Optional[ArrayLike] = None) -> float:
    """Smallest order statistic ``g`` with ``cdf(g) >= alpha``.

    An importance sampling estimate may end below ``alpha``; the largest
    order statistic is returned in that case. ``sample_values`` defaults to
    the breakpoints of ``cdf``.
    """
    alpha = _check_alpha(alpha)
    if sample_values is None:
        support = cdf.breakpoints
        levels = cdf.values
    else:
        support = np.unique(np.asarray(sample_values, dtype=float))
        levels = np.asarray(cdf(support), dtype=float).reshape(-1)
    if support.size == 0:
        raise ValueError("no samples")
    hit = np.flatnonzero(levels >= alpha - PROB_ATOL)
    return float(support[hit[0]] if hit.size else support[-1])


def pmf_arrays(cdf: StepCdf) -> Tuple[np.ndarray, np.ndarray]:
    """Support points and step heights of a step CDF, as arrays.

    For sample-backed estimates each mass is the exact group sum of
    ``rho_i / n`` (or ``rho_i / sum rho``) over tied returns.
    """
    if cdf.sample_g is not None and cdf.sample_g.size:
        uniq, start = np.unique(cdf.sample_g, return_index=True)
        masses = np.add.reduceat(cdf.sample_w, start) / cdf.norm
        return uniq, masses
    levels = np.concatenate(([cdf.value_before_first], cdf.values))
    return cdf.breakpoints.copy(), np.diff(levels)


def discrete_pmf(cdf: StepCdf) -> list:
    """List of ``(value, mass)`` pairs; the masses sum to the terminal value."""
    pts, masses = pmf_arrays(cdf)
    return [(float(p), float(m)) for p, m in zip(pts, masses)]


# ---------------------------------------------------------------------------
# Parameters (functionals of a distribution)
# ---------------------------------------------------------------------------


def _quantile_index(masses: np.ndarray, alpha: float) -> np.ndarray:
    cum = np.cumsum(masses, axis=-1)
    hit = cum >= alpha - PROB_ATOL
    idx = np.argmax(hit, axis=-1)
    none = ~hit.any(axis=-1)
    return np.where(none, masses.shape[-1] - 1, idx)


class Parameter:
    """A functional of a return distribution.

    Subclasses implement :meth:`on_pmf`, which evaluates the functional on
    a discrete distribution given by ascending distinct ``points`` and
    ``masses``. ``masses`` may be two-dimensional, one distribution per row,
    in which case one value per row is returned. Masses are used as given;
    an importance sampling estimate whose masses do not sum to one is
    evaluated with the plug-in formulas verbatim.
    """

    name: str = "parameter"
    #: Whether the band module has a closed-form bound for this functional.
    closed_form: bool = False
    #: Whether the value is a location on the return axis (bounded by [g_min, g_max]).
    location: bool = True

    def on_pmf(self, points: np.ndarray, masses: np.ndarray):
        raise NotImplementedError

    def __call__(self, cdf: StepCdf) -> float:
        pts, masses = pmf_arrays(cdf)
        return float(self.on_pmf(pts, masses))

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name!r})"


class Mean(Parameter):
    name = "mean"
    closed_form = True

    def on_pmf(self, points, masses):
        return masses @ points

    def __call__(self, cdf: StepCdf) -> float:
        if cdf.sample_g is not None and cdf.sample_g.size:
            return math.fsum((cdf.sample_w * cdf.sample_g).tolist()) / cdf.norm
        pts, masses = pmf_arrays(cdf)
        return math.fsum((masses * pts).tolist())


class Variance(Parameter):
    name = "variance"
    closed_form = True
    location = False

    def on_pmf(self, points, masses):
        mu = masses @ points
        dev = points - np.expand_dims(mu, -1)
        return np.sum(masses * dev * dev, axis=-1)

    def __call__(self, cdf: StepCdf) -> float:
        pts, masses = pmf_arrays(cdf)
        mu = Mean()(cdf)
        return math.fsum((masses * (pts - mu) ** 2).tolist())


class Quantile(Parameter):
    closed_form = True

    def __init__(self, alpha: float, name: Optional[str] = None) -> None:
        self.alpha = _check_alpha(alpha, allow_one=False)
        self.name = name or f"quantile@{alpha:g}"

    def on_pmf(self, points, masses):
        return points[_quantile_index(masses, self.alpha)]

    def __call__(self, cdf: StepCdf) -> float:
        return inverse_cdf(cdf, self.alpha)


class CVaR(Parameter):
    """Lower-tail conditional value at risk: mean of the worst ``alpha`` fraction."""

    closed_form = True

    def __init__(self, alpha: float, name: Optional[str] = None) -> None:
        self.alpha = _check_alpha(alpha, allow_one=False)
        self.name = name or f"cvar@{alpha:g}"

    def _from_q(self, q, points, masses):
        short = np.maximum(0.0, np.expand_dims(q, -1) - points)
        return q - np.sum(masses * short, axis=-1) / self.alpha

    def on_pmf(self, points, masses):
        q = points[_quantile_index(masses, self.alpha)]
        return self._from_q(q, points, masses)

    def __call__(self, cdf: StepCdf) -> float:
        q = inverse_cdf(cdf, self.alpha)
        pts, masses = pmf_arrays(cdf)
        return q - math.fsum((masses * np.maximum(0.0, q - pts)).tolist()) / self.alpha


class InterQuantileRange(Parameter):
    closed_form = True
    location = False

    def __init__(self, alpha1: float = 0.25, alpha2: float = 0.75, name: Optional[str] = None) -> None:
        a1 = _check_alpha(alpha1, allow_one=False)
        a2 = _check_alpha(alpha2, allow_one=False)
        if not a1 < a2:
            raise ValueError("need alpha1 < alpha2")
        self.alpha1, self.alpha2 = a1, a2
        self.name = name or f"iqr@{a1:g}:{a2:g}"

    def on_pmf(self, points, masses):
        hi = points[_quantile_index(masses, self.alpha2)]
        lo = points[_quantile_index(masses, self.alpha1)]
        return hi - lo

    def __call__(self, cdf: StepCdf) -> float:
        return inverse_cdf(cdf, self.alpha2) - inverse_cdf(cdf, self.alpha1)


class Entropy(Parameter):
    """Shannon entropy (natural log) of the discrete step heights."""

    name = "entropy"
    closed_form = False
    location = False

    def on_pmf(self, points, masses):
        m = np.asarray(masses, dtype=float)
        safe = np.where(m > 0, m, 1.0)
        return -np.sum(np.where(m > 0, m * np.log(safe), 0.0), axis=-1)


_PARAM_RE = re.compile(r"^(?P<kind>[a-z]+)(?:@(?P<a>[0-9.eE+-]+)(?::(?P<b>[0-9.eE+-]+))?)?$")


def parse_parameter(spec: str) -> Parameter:
    """Build a :class:`Parameter` from a short name.

    Accepted forms: ``mean``, ``variance``, ``median``, ``entropy``,
    ``quantile@0.9``, ``cvar@0.1`` and ``iqr@0.25:0.75`` (``iqr`` alone
    means the quartile range).
    """
    text = spec.strip().lower()
    m = _PARAM_RE.match(text)
    if not m:
        raise ValueError(f"cannot parse parameter {spec!r}")
    kind, a, b = m.group("kind"), m.group("a"), m.group("b")
    if kind == "mean" and a is None:
        return Mean()
    if kind in ("variance", "var") and a is None:
        return Variance()
    if kind == "median" and a is None:
        return Quantile(0.5, name="median")
    if kind == "entropy" and a is None:
        return Entropy()
    if kind == "quantile" and a is not None and b is None:
        return Quantile(float(a), name=text)
    if kind == "cvar" and a is not None and b is None:
        return CVaR(float(a), name=text)
    if kind == "iqr":
        if a is None:
            return InterQuantileRange(0.25, 0.75, name="iqr")
        if b is not None:
            return InterQuantileRange(float(a), float(b), name=text)
    raise ValueError(f"cannot parse parameter {spec!r}")


# Functional-style aliases ---------------------------------------------------


def plugin_mean(cdf: StepCdf) -> float:
    """``sum dF(G) * G`` over the support; equals the per-trajectory IS mean for IS estimates."""
    return Mean()(cdf)


def plugin_variance(cdf: StepCdf) -> float:
    return Variance()(cdf)


def plugin_quantile(cdf: StepCdf, alpha: float) -> float:
    return inverse_cdf(cdf, alpha)


def plugin_cvar(cdf: StepCdf, alpha: float) -> float:
    return CVaR(alpha)(cdf)


def plugin_entropy(cdf: StepCdf) -> float:
    return Entropy()(cdf)
