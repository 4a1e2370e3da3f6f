"""Monte Carlo harness for coverage and width experiments.

Each trial draws a fresh dataset from its own seed, derived from the sweep
seed and the ``(size index, trial index)`` pair. Trials can therefore run in
any order or in parallel and the aggregated results stay identical.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .band import (
    ConfidenceBand,
    Objective,
    build_band,
    default_cap,
    default_num_points,
    optimize_plan,
    split_train_eval,
    uniform_plan,
)
from .bounds import parameter_bounds
from .concentration import CiKind, CiMethod
from .envs.core import TabularPolicy, generate_dataset
from .returns import Parameter, ReturnDataset, StepCdf


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 63-bit seed for a sub-task identified by ``keys``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class BandSettings:
    """How a stationary band is built from one dataset."""

    delta: float = 0.05
    optimize: bool = True
    train_fraction: float = 0.05
    search_budget: int = 200
    objective: Objective = "area"
    ci_kind: CiKind = CiKind.TRUNCATED_EMPIRICAL_BERNSTEIN
    cap: Optional[float] = None
    num_points: Optional[int] = None


def stationary_band(data: ReturnDataset, settings: BandSettings, seed: int) -> ConfidenceBand:
    """Band for the evaluation policy's CDF from one logged dataset.

    With ``optimize`` the data are split; the plan is searched on the
    training part and the band is built on the rest. Otherwise a uniform
    plan is applied to all of the data.
    """
    method = None if settings.cap is None else CiMethod(settings.ci_kind, settings.cap)
    if settings.optimize:
        train, evaluation = split_train_eval(data, settings.train_fraction, seed)
        if method is None and settings.ci_kind is not CiKind.TRUNCATED_EMPIRICAL_BERNSTEIN:
            method = CiMethod(settings.ci_kind, default_cap(train))
        plan = optimize_plan(
            train,
            evaluation.n,
            settings.delta,
            settings.objective,
            settings.search_budget,
            seed,
            ci_method=method,
            num_points=settings.num_points,
        )
        return build_band(evaluation, plan, settings.delta)
    if method is None:
        method = CiMethod(settings.ci_kind, default_cap(data))
    k = settings.num_points or default_num_points(data.n)
    plan = uniform_plan(data.g_min, data.g_max, k, settings.delta, method)
    return build_band(data, plan, settings.delta)


@dataclass
class TrialResult:
    band_covers: bool
    bounds: List[Tuple[float, float]]
    covered: List[bool]
    area: float


def run_trial(
    env,
    behaviors: Sequence[TabularPolicy],
    evaluation: TabularPolicy,
    truth: StepCdf,
    parameters: Sequence[Parameter],
    n: int,
    settings: BandSettings,
    seed: int,
) -> TrialResult:
    data = generate_dataset(env, behaviors, n, evaluation, seed=seed)
    band = stationary_band(data, settings, seed)
    bounds, covered = [], []
    for p in parameters:
        lo, hi = parameter_bounds(band, p)
        v = p(truth)
        bounds.append((float(lo), float(hi)))
        covered.append(bool(lo - 1e-9 <= v <= hi + 1e-9))
    return TrialResult(band.contains(truth), bounds, covered, band.area())


def _run_trial_packed(args) -> TrialResult:
    return run_trial(*args)


@dataclass
class SweepResult:
    sizes: List[int]
    parameters: List[str]
    rows: List[Dict[str, float]] = field(default_factory=list)


def coverage_sweep(
    env,
    behaviors: Sequence[TabularPolicy],
    evaluation: TabularPolicy,
    truth: StepCdf,
    parameters: Sequence[Parameter],
    sizes: Sequence[int],
    trials: int,
    settings: BandSettings,
    seed: int,
    workers: int = 1,
) -> SweepResult:
    """Failure rates and median bound widths for every dataset size."""
    result = SweepResult(list(sizes), [p.name for p in parameters])
    for si, n in enumerate(sizes):
        jobs = [
            (env, behaviors, evaluation, truth, parameters, int(n), settings, derive_seed(seed, si, t))
            for t in range(trials)
        ]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                outs = list(pool.map(_run_trial_packed, jobs, chunksize=max(1, trials // (4 * workers))))
        else:
            outs = [_run_trial_packed(j) for j in jobs]
        row: Dict[str, float] = {"n": int(n), "trials": trials}
        row["band_failure_rate"] = sum(not o.band_covers for o in outs) / trials
        row["joint_failure_rate"] = sum(not all(o.covered) for o in outs) / trials
        row["median_area"] = float(np.median([o.area for o in outs]))
        for j, p in enumerate(parameters):
            row[f"{p.name}_failure_rate"] = sum(not o.covered[j] for o in outs) / trials
            row[f"{p.name}_median_width"] = float(np.median([o.bounds[j][1] - o.bounds[j][0] for o in outs]))
        result.rows.append(row)
    return result


def binomial_slack(p: float, trials: int, k: float = 3.0) -> float:
    """``k`` standard errors of a binomial proportion ``p`` over ``trials``."""
    return k * math.sqrt(p * (1.0 - p) / trials)
