"""Flat INI-style configuration for the command line tool.

Every key and its default is listed in :data:`DEFAULTS`; ``default_config_text``
renders them as a documented file. Values given on the command line as
``--section.key=value`` (or ``--key=value`` when the key name is unique
across sections) override the file.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

from .band import parse_objective
from .concentration import CiKind
from .envs import TabularPolicy, chain_env, chain_policies, gridworld, recommender
from .envs.core import mixture_policy, uniform_policy
from .experiments import BandSettings
from .returns import Parameter, parse_parameter


class ConfigError(ValueError):
    """Invalid or missing configuration value."""


#: ``section -> [(key, default, description)]``. An empty default means "unset".
DEFAULTS: Dict[str, List[Tuple[str, str, str]]] = {
    "env": [
        ("name", "chain", "chain, gridworld or recommender"),
        ("depth", "3", "chain: number of steps (2 to 4)"),
        ("noise", "0.1", "chain: transition noise"),
        ("gamma", "", "discount factor; empty uses the environment default"),
        ("num_items", "5", "recommender: number of items"),
        ("speed", "0", "recommender: drift speed (0 is stationary)"),
        ("period", "1001", "recommender: drift period in episodes"),
    ],
    "policies": [
        ("evaluation", "default", "default, uniform or softmax (recommender/gridworld)"),
        ("behavior", "default", "default, uniform or mixture@<alpha> (alpha weight on the evaluation policy)"),
        ("temperature", "0.5", "softmax temperature of the evaluation policy"),
        ("target_episode", "1", "recommender: episode whose mean ratings define the softmax evaluation policy"),
    ],
    "estimator": [
        ("kind", "is", "is or wis"),
        ("parameters", "mean,median,variance,cvar@0.1,iqr", "comma separated parameter list"),
    ],
    "band": [
        ("delta", "0.05", "total failure probability of the band"),
        ("optimize", "true", "search key points and budgets on a training split"),
        ("train_fraction", "0.05", "fraction of the data used for the search"),
        ("search_budget", "200", "number of candidate plans scored"),
        ("objective", "area", "area or specialize:<parameter>:<lower|upper>"),
        ("ci", "truncated_empirical_bernstein", "truncated_empirical_bernstein or hoeffding_with_cap"),
        ("cap", "", "truncation level for the ratios; empty searches it"),
        ("num_points", "", "number of key points; empty uses ceil(ln n)"),
        ("shift", "0", "Kolmogorov-Smirnov radius added to the band"),
    ],
    "bootstrap": [
        ("replicates", "2000", "bootstrap resamples (at least 100)"),
    ],
    "nonstat": [
        ("basis_order", "3", "number of Fourier features"),
        ("lead", "1", "forecast horizon in episodes"),
        ("replicates", "1000", "wild bootstrap resamples (at least 200)"),
    ],
    "experiment": [
        ("seed", "", "master seed; required by every randomized command"),
        ("n", "1000", "episodes generated by gen"),
        ("sizes", "100,300,1000", "dataset sizes of the coverage sweep"),
        ("trials", "100", "trials per size in the coverage sweep"),
        ("workers", "1", "parallel workers; results do not depend on it"),
    ],
}


def default_config_text() -> str:
    out = []
    for section, keys in DEFAULTS.items():
        out.append(f"[{section}]")
        for key, default, doc in keys:
            out.append(f"# {doc}")
            out.append(f"{key} = {default}")
        out.append("")
    return "\n".join(out)


def _unique_sections() -> Dict[str, Optional[str]]:
    where: Dict[str, Optional[str]] = {}
    for section, keys in DEFAULTS.items():
        for key, _, _ in keys:
            where[key] = None if key in where else section
    return where


@dataclass
class Config:
    values: Dict[str, Dict[str, str]]

    def raw(self, section: str, key: str) -> str:
        return self.values[section][key].strip()

    def get_str(self, section: str, key: str) -> str:
        return self.raw(section, key)

    def _convert(self, section, key, fn, what):
        text = self.raw(section, key)
        try:
            return fn(text)
        except ValueError:
            raise ConfigError(f"{section}.{key}: expected {what}, got {text!r}") from None

    def get_int(self, section: str, key: str) -> int:
        return self._convert(section, key, int, "an integer")

    def get_float(self, section: str, key: str) -> float:
        return self._convert(section, key, float, "a number")

    def get_optional_float(self, section: str, key: str) -> Optional[float]:
        return None if not self.raw(section, key) else self.get_float(section, key)

    def get_optional_int(self, section: str, key: str) -> Optional[int]:
        return None if not self.raw(section, key) else self.get_int(section, key)

    def get_bool(self, section: str, key: str) -> bool:
        text = self.raw(section, key).lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{section}.{key}: expected a boolean, got {text!r}")

    def get_list(self, section: str, key: str) -> List[str]:
        return [p.strip() for p in self.raw(section, key).split(",") if p.strip()]

    def seed(self) -> int:
        if not self.raw("experiment", "seed"):
            raise ConfigError("experiment.seed is required for this command")
        return self.get_int("experiment", "seed")

    # -- derived objects ---------------------------------------------------

    def parameters(self) -> List[Parameter]:
        try:
            return [parse_parameter(p) for p in self.get_list("estimator", "parameters")]
        except ValueError as exc:
            raise ConfigError(f"estimator.parameters: {exc}") from None

    def band_settings(self) -> BandSettings:
        try:
            kind = CiKind(self.raw("band", "ci"))
        except ValueError:
            raise ConfigError(f"band.ci: unknown interval {self.raw('band', 'ci')!r}") from None
        try:
            objective = parse_objective(self.raw("band", "objective"))
        except ValueError as exc:
            raise ConfigError(f"band.objective: {exc}") from None
        return BandSettings(
            delta=self.get_float("band", "delta"),
            optimize=self.get_bool("band", "optimize"),
            train_fraction=self.get_float("band", "train_fraction"),
            search_budget=self.get_int("band", "search_budget"),
            objective=objective,
            ci_kind=kind,
            cap=self.get_optional_float("band", "cap"),
            num_points=self.get_optional_int("band", "num_points"),
        )

    def gamma(self) -> Optional[float]:
        return self.get_optional_float("env", "gamma")

    def environment(self):
        name = self.raw("env", "name")
        if name == "chain":
            return chain_env(self.get_int("env", "depth"), self.get_float("env", "noise"))
        if name == "gridworld":
            return gridworld()
        if name == "recommender":
            return recommender(
                self.get_int("env", "num_items"), self.get_float("env", "speed"), self.get_float("env", "period")
            )
        raise ConfigError(f"env.name: unknown environment {name!r}")

    def policies(self, env) -> Tuple[TabularPolicy, TabularPolicy]:
        """``(evaluation, behavior)`` for ``env``."""
        name = self.raw("env", "name")
        ev_kind, beh_kind = self.raw("policies", "evaluation"), self.raw("policies", "behavior")
        temp = self.get_float("policies", "temperature")
        uniform = uniform_policy(env.num_eval_obs, env.num_actions)
        if ev_kind == "uniform":
            evaluation = uniform
        elif ev_kind in ("default", "softmax"):
            if name == "chain":
                evaluation = chain_policies()[0]
            elif name == "gridworld":
                evaluation = env.evaluation_policy(temp)
            else:
                evaluation = env.near_optimal_policy(self.get_int("policies", "target_episode"), temp)
        else:
            raise ConfigError(f"policies.evaluation: unknown policy {ev_kind!r}")
        if beh_kind == "default":
            behavior = chain_policies()[1] if name == "chain" else uniform_policy(env.num_obs, env.num_actions)
        elif beh_kind == "uniform":
            behavior = uniform_policy(env.num_obs, env.num_actions)
        elif beh_kind.startswith("mixture@"):
            if env.num_obs != env.num_eval_obs:
                raise ConfigError("policies.behavior: mixture needs matching observation spaces")
            try:
                alpha = float(beh_kind.split("@", 1)[1])
                behavior = mixture_policy(evaluation, alpha)
            except ValueError as exc:
                raise ConfigError(f"policies.behavior: {exc}") from None
        else:
            raise ConfigError(f"policies.behavior: unknown policy {beh_kind!r}")
        return evaluation, behavior


def load_config(path: Optional[str] = None, overrides: Iterable[str] = ()) -> Config:
    values = {s: {k: d for k, d, _ in keys} for s, keys in DEFAULTS.items()}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, "r", encoding="utf-8") as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for section in parser.sections():
            if section not in values:
                raise ConfigError(f"{path}: unknown section [{section}]")
            for key, val in parser.items(section):
                if key not in values[section]:
                    raise ConfigError(f"{path}: unknown key {section}.{key}")
                values[section][key] = val
    unique = _unique_sections()
    for item in overrides:
        if not item.startswith("--") or "=" not in item:
            raise ConfigError(f"unrecognized argument {item!r}; overrides look like --section.key=value")
        name, val = item[2:].split("=", 1)
        name = name.replace("-", "_")
        if "." in name:
            section, key = name.split(".", 1)
        else:
            key = name
            if key not in unique:
                raise ConfigError(f"unknown option --{name}")
            section = unique[key]
            if section is None:
                raise ConfigError(f"option --{name} is ambiguous; use --<section>.{key}=...")
        if section not in values or key not in values[section]:
            raise ConfigError(f"unknown option --{name}")
        values[section][key] = val
    return Config(values)
