"""File formats used by the command line tool.

* Datasets are JSON Lines. The first record is a header
  ``{"g_min": ..., "g_max": ..., "gamma": ...}``. Each further record is
  either a reduced episode ``{"episode", "return", "rho"}`` or a full
  trajectory ``{"episode", "obs", "actions", "beta_probs", "rewards"}``; for
  the latter the return and ratio are derived at load time, which needs the
  evaluation policy.
* CDF CSV: ``nu,cdf`` with one row per breakpoint.
* Band CSV: ``nu,f_lower,f_upper`` with one row per knot. The lower edge is
  read back as right-continuous and the upper edge as left-continuous.

Every number is written with 17 significant digits.
"""

from __future__ import annotations

import json
import math
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .band import ConfidenceBand
from .envs.core import TabularPolicy, Trajectory
from .returns import ReturnDataset, StepCdf


class InputError(ValueError):
    """Malformed input file; the message carries the file name and line number."""


def fmt(x) -> str:
    """17 significant digits; integers stay integers."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """Deterministic JSON with numbers formatted by :func:`fmt`."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (bool, np.bool_, int, float, np.integer, np.floating)):
        return fmt(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _compact(obj) -> str:
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(k)}: {_compact(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_compact(v) for v in obj) + "]"
    return dumps(obj)


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------


def write_dataset(
    path: str,
    data: ReturnDataset,
    gamma: float,
    trajectories: Optional[Sequence[Trajectory]] = None,
    extra_header: Optional[dict] = None,
) -> None:
    header = {"g_min": data.g_min, "g_max": data.g_max, "gamma": gamma}
    if extra_header:
        header.update(extra_header)
    lines = [_compact(header)]
    if trajectories is None:
        for g, r, e in zip(data.g, data.rho, data.episode):
            lines.append(_compact({"episode": int(e), "return": float(g), "rho": float(r)}))
    else:
        for t in trajectories:
            lines.append(
                _compact(
                    {
                        "episode": t.episode,
                        "obs": list(t.obs),
                        "actions": list(t.actions),
                        "beta_probs": list(t.beta_probs),
                        "rewards": list(t.rewards),
                    }
                )
            )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _num(rec: dict, key: str, where: str) -> float:
    if key not in rec:
        raise InputError(f"{where}: missing field {key!r}")
    v = rec[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise InputError(f"{where}: field {key!r} must be a number")
    return float(v)


def read_dataset(path: str, evaluation: Optional[TabularPolicy] = None) -> Tuple[ReturnDataset, dict]:
    """Parse a JSON Lines dataset; returns ``(dataset, header)``."""
    g, rho, ep = [], [], []
    header = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            where = f"{path}:{lineno}"
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{where}: invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise InputError(f"{where}: expected a JSON object")
            if header is None:
                header = rec
                lo, hi = _num(rec, "g_min", where), _num(rec, "g_max", where)
                if "gamma" in rec:
                    _num(rec, "gamma", where)
                if lo > hi:
                    raise InputError(f"{where}: g_min exceeds g_max")
                continue
            episode = rec.get("episode", len(g) + 1)
            if isinstance(episode, bool) or not isinstance(episode, int) or episode < 0:
                raise InputError(f"{where}: episode must be a non-negative integer")
            if "obs" in rec:
                if evaluation is None:
                    raise InputError(f"{where}: trajectory records need an evaluation policy")
                try:
                    traj = Trajectory(
                        episode,
                        tuple(int(v) for v in rec["obs"]),
                        tuple(int(v) for v in rec["actions"]),
                        tuple(float(v) for v in rec["beta_probs"]),
                        tuple(float(v) for v in rec["rewards"]),
                    )
                    if max(traj.obs, default=0) >= evaluation.num_obs or max(traj.actions, default=0) >= evaluation.num_actions:
                        raise InputError(f"{where}: observation or action outside the policy table")
                except KeyError as exc:
                    raise InputError(f"{where}: missing field {exc.args[0]!r}") from None
                except (TypeError, ValueError) as exc:
                    raise InputError(f"{where}: {exc}") from None
                g.append(traj.discounted_return(float(header.get("gamma", 1.0))))
                rho.append(traj.ratio(evaluation))
            else:
                gv, rv = _num(rec, "return", where), _num(rec, "rho", where)
                if not math.isfinite(gv) or not math.isfinite(rv) or rv < 0:
                    raise InputError(f"{where}: return must be finite and rho finite and >= 0")
                if gv < header["g_min"] or gv > header["g_max"]:
                    raise InputError(f"{where}: return {gv!r} outside [g_min, g_max]")
                g.append(gv)
                rho.append(rv)
            ep.append(episode)
    if header is None:
        raise InputError(f"{path}:1: missing header record")
    lo, hi = float(header["g_min"]), float(header["g_max"])
    g_arr = np.clip(np.array(g, dtype=float), lo, hi)
    return ReturnDataset(g_arr, np.array(rho, dtype=float), np.array(ep, dtype=np.int64), lo, hi), header


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    out = [",".join(header)]
    for row in rows:
        out.append(",".join(v if isinstance(v, str) else fmt(v) for v in row))
    return "\n".join(out) + "\n"


def write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def cdf_csv(cdf: StepCdf) -> str:
    return csv_text(["nu", "cdf"], zip(cdf.breakpoints, cdf.values))


def band_csv(band: ConfidenceBand) -> str:
    x = band.knots()
    return csv_text(["nu", "f_lower", "f_upper"], zip(x, band.lower_at(x), band.upper_at(x)))


def read_csv(path: str) -> Tuple[List[str], np.ndarray]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines:
        raise InputError(f"{path}:1: empty file")
    header = lines[0].split(",")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise InputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise InputError(f"{path}:{lineno}: non-numeric field") from None
    return header, np.array(rows, dtype=float).reshape(-1, len(header))


def read_band(path: str, delta: float) -> ConfidenceBand:
    header, rows = read_csv(path)
    if header != ["nu", "f_lower", "f_upper"]:
        raise InputError(f"{path}:1: expected header nu,f_lower,f_upper")
    if rows.shape[0] < 1:
        raise InputError(f"{path}:2: band has no rows")
    x, lo, up = rows[:, 0], rows[:, 1], rows[:, 2]
    bad = np.flatnonzero(np.diff(x) <= 0)
    if bad.size:
        raise InputError(f"{path}:{int(bad[0]) + 3}: nu must be strictly increasing")
    for name, col in (("f_lower", lo), ("f_upper", up)):
        dec = np.flatnonzero(np.diff(col) < 0)
        if dec.size:
            raise InputError(f"{path}:{int(dec[0]) + 3}: {name} must be non-decreasing")
    lower = StepCdf(x, lo, 0.0, right_continuous=True)
    upper = StepCdf(x, np.concatenate((up[1:], [1.0])), float(up[0]), right_continuous=False)
    try:
        return ConfidenceBand(lower, upper, float(delta), float(x[0]), float(x[-1]))
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
