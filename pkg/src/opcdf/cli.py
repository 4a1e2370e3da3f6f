"""Batch command line front end.

Usage: ``opcdf <command> [--config FILE] [--input F] [--out F] [--section.key=value ...]``.

Exit status is 0 on success, 2 on invalid input or configuration and 1 on
any other failure. Numbers are written with 17 significant digits.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

import numpy as np

from . import io
from .band import ConfidenceBand, default_num_points, shift_band, uniform_plan
from .bootstrap import bca_bounds
from .bounds import parameter_bounds
from .config import Config, ConfigError, default_config_text, load_config
from .envs import generate_dataset
from .experiments import coverage_sweep, derive_seed, stationary_band
from .nonstat import forecast_band
from .oracle import enumerate_return_cdf
from .returns import ReturnDataset, estimate_cdf
from .svg import Plot

COMMANDS = ("gen", "estimate", "band", "bound", "boot", "forecast", "coverage", "plot", "config")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="opcdf",
        description="Off-policy return distribution estimates, bands and parameter bounds.",
        epilog="Any config key can be overridden with --section.key=value (or --key=value when unambiguous).",
    )
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="INI-style configuration file")
    p.add_argument("--input", action="append", default=[], help="input file (plot accepts several)")
    p.add_argument("--out", help="main output file; standard output when omitted")
    p.add_argument("--params-out", help="estimate: parameter JSON output")
    p.add_argument("--band", help="bound: band CSV produced by the band command")
    p.add_argument("--trajectories", action="store_true", help="gen: write full trajectory records")
    return p


def _emit(path: Optional[str], text: str) -> None:
    if path:
        io.write_text(path, text)
    else:
        sys.stdout.write(text)


def _single_input(args) -> str:
    if len(args.input) != 1:
        raise ConfigError(f"{args.command} needs exactly one --input")
    return args.input[0]


def _load_data(args, cfg: Config) -> ReturnDataset:
    env = cfg.environment()
    evaluation, _ = cfg.policies(env)
    data, _ = io.read_dataset(_single_input(args), evaluation)
    return data


def _param_record(name, estimate, lower, upper, delta, method) -> dict:
    return {"name": name, "estimate": estimate, "lower": lower, "upper": upper, "delta": delta, "method": method}


def _band(data: ReturnDataset, cfg: Config) -> ConfidenceBand:
    settings = cfg.band_settings()
    seed = cfg.seed() if settings.optimize else 0
    band = stationary_band(data, settings, seed)
    eps = cfg.get_float("band", "shift")
    return shift_band(band, eps) if eps > 0 else band


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_gen(args, cfg: Config) -> None:
    if not args.out:
        raise ConfigError("gen needs --out")
    env = cfg.environment()
    evaluation, behavior = cfg.policies(env)
    gamma = cfg.gamma()
    gamma = env.default_gamma if gamma is None else gamma
    out = generate_dataset(
        env,
        [behavior],
        cfg.get_int("experiment", "n"),
        evaluation,
        gamma,
        cfg.seed(),
        workers=cfg.get_int("experiment", "workers"),
        return_trajectories=args.trajectories,
    )
    data, trajs = out if args.trajectories else (out, None)
    io.write_dataset(args.out, data, gamma, trajs)


def cmd_estimate(args, cfg: Config) -> None:
    data = _load_data(args, cfg)
    kind = cfg.get_str("estimator", "kind")
    cdf = estimate_cdf(data, kind)
    _emit(args.out, io.cdf_csv(cdf))
    if args.params_out:
        recs = [_param_record(p.name, p(cdf), None, None, None, f"plugin_{kind}") for p in cfg.parameters()]
        io.write_text(args.params_out, io.dumps(recs) + "\n")


def cmd_band(args, cfg: Config) -> None:
    _emit(args.out, io.band_csv(_band(_load_data(args, cfg), cfg)))


def cmd_bound(args, cfg: Config) -> None:
    data = _load_data(args, cfg) if args.input else None
    if args.band:
        band = io.read_band(args.band, cfg.get_float("band", "delta"))
    elif data is not None:
        band = _band(data, cfg)
    else:
        raise ConfigError("bound needs --band or --input")
    cdf = None if data is None else estimate_cdf(data, cfg.get_str("estimator", "kind"))
    recs = []
    for p in cfg.parameters():
        lo, hi = parameter_bounds(band, p)
        recs.append(_param_record(p.name, None if cdf is None else p(cdf), lo, hi, band.delta, "band"))
    _emit(args.out, io.dumps(recs) + "\n")


def cmd_boot(args, cfg: Config) -> None:
    data = _load_data(args, cfg)
    seed = cfg.seed()
    delta = cfg.get_float("band", "delta")
    reps = cfg.get_int("bootstrap", "replicates")
    cdf = estimate_cdf(data, "wis")
    recs = []
    for j, p in enumerate(cfg.parameters()):
        lo, hi = bca_bounds(data, p, delta, reps, derive_seed(seed, j))
        recs.append(_param_record(p.name, p(cdf), lo, hi, delta, "bca"))
    _emit(args.out, io.dumps(recs) + "\n")


def cmd_forecast(args, cfg: Config) -> None:
    data = _load_data(args, cfg)
    delta = cfg.get_float("band", "delta")
    k = cfg.get_optional_int("band", "num_points") or default_num_points(data.n)
    plan = uniform_plan(data.g_min, data.g_max, k, delta)
    band = forecast_band(
        data,
        plan,
        cfg.get_int("nonstat", "basis_order"),
        cfg.get_int("nonstat", "lead"),
        delta,
        cfg.get_int("nonstat", "replicates"),
        cfg.seed(),
    )
    _emit(args.out, io.band_csv(band))


def cmd_coverage(args, cfg: Config) -> None:
    env = cfg.environment()
    evaluation, behavior = cfg.policies(env)
    name = cfg.get_str("env", "name")
    if name == "chain":
        truth = enumerate_return_cdf(env.spec, evaluation, cfg.gamma())
    elif name == "recommender":
        if env.speed != 0:
            raise ConfigError("coverage needs a stationary recommender (env.speed = 0)")
        truth = enumerate_return_cdf(env.spec_at(1), evaluation)
    else:
        raise ConfigError(f"coverage needs an environment with an enumerable return distribution, not {name!r}")
    sizes = [int(s) for s in cfg.get_list("experiment", "sizes")]
    result = coverage_sweep(
        env,
        [behavior],
        evaluation,
        truth,
        cfg.parameters(),
        sizes,
        cfg.get_int("experiment", "trials"),
        cfg.band_settings(),
        cfg.seed(),
        workers=cfg.get_int("experiment", "workers"),
    )
    header = list(result.rows[0].keys()) if result.rows else ["n"]
    _emit(args.out, io.csv_text(header, [[row[h] for h in header] for row in result.rows]))


def cmd_plot(args, cfg: Config) -> None:
    if not args.input:
        raise ConfigError("plot needs at least one --input")
    tables = [(path, *io.read_csv(path)) for path in args.input]
    sweep = [t for t in tables if t[1][:1] == ["n"]]
    if sweep and len(sweep) != len(tables):
        raise ConfigError("plot cannot mix sweep tables with CDF or band tables")
    if sweep:
        ns = np.concatenate([t[2][:, 0] for t in tables])
        plot = Plot((max(ns.min(), 1.0), max(ns.max(), 1.0)), (0.0, 1.0), title="Failure rate", x_label="n", log_x=True)
        for path, header, rows in tables:
            for j, h in enumerate(header):
                if h.endswith("failure_rate"):
                    plot.line(rows[:, 0], rows[:, j], label=h)
    else:
        lo = min(float(t[2][0, 0]) for t in tables if t[2].size)
        hi = max(float(t[2][-1, 0]) for t in tables if t[2].size)
        plot = Plot((lo, hi), (0.0, 1.0), title="Return CDF", x_label="return", y_label="probability")
        for path, header, rows in tables:
            if header == ["nu", "cdf"]:
                plot.step(rows[:, 0], rows[:, 1], label=path.rsplit("/", 1)[-1])
            elif header == ["nu", "f_lower", "f_upper"]:
                plot.band(rows[:, 0], rows[:, 1], rows[:, 2], label=path.rsplit("/", 1)[-1])
            else:
                raise io.InputError(f"{path}:1: unrecognized table header {','.join(header)}")
    _emit(args.out, plot.render())


def cmd_config(args, cfg: Config) -> None:
    _emit(args.out, default_config_text())


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args, rest = _parser().parse_known_args(argv)
    try:
        cfg = load_config(args.config, rest)
        HANDLERS[args.command](args, cfg)
    except (ValueError, OSError) as exc:
        print(f"opcdf {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - top-level boundary
        print(f"opcdf {args.command}: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
