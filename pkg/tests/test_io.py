import json
import math

import numpy as np
import pytest

from opcdf import io
from opcdf.band import band_from_intervals
from opcdf.config import ConfigError, default_config_text, load_config
from opcdf.envs import chain_policies
from opcdf.returns import ReturnDataset


def test_fmt():
    assert io.fmt(0.1) == "0.10000000000000001"
    assert io.fmt(3) == "3"
    assert io.fmt(2.0) == "2"
    assert io.fmt(-math.inf) == '"-inf"'
    assert io.fmt(True) == "true"


def test_dumps_is_valid_json():
    obj = [{"a": 1.5, "b": None, "c": [1, 2]}, {}]
    assert json.loads(io.dumps(obj)) == obj


def test_dataset_roundtrip(tmp_path):
    d = ReturnDataset([0.1, 2.0, 3.5], [0.3, 1.0, 2.0 / 3.0], g_min=0.0, g_max=4.0)
    p = tmp_path / "d.jsonl"
    io.write_dataset(str(p), d, 0.9)
    back, header = io.read_dataset(str(p))
    assert header["gamma"] == 0.9
    assert np.array_equal(back.g, d.g) and np.array_equal(back.rho, d.rho)
    assert np.array_equal(back.episode, d.episode)


@pytest.mark.parametrize(
    "lines,lineno",
    [
        (['{"g_min": 0, "g_max": 1}', '{"episode": 1, "return": 0.5}'], 2),
        (['{"g_min": 0, "g_max": 1}', '{"episode": 1, "return": 0.5, "rho": 1}', "not json"], 3),
        (['{"g_min": 0, "g_max": 1}', '{"episode": 1, "return": 2, "rho": 1}'], 2),
        (['{"g_min": 0, "g_max": 1}', '{"episode": 1, "return": 0.5, "rho": -1}'], 2),
        (['{"g_max": 1}'], 1),
        (['{"g_min": 0, "g_max": 1}', '{"episode": 1, "obs": [0], "actions": [0], "beta_probs": [0.0], "rewards": [0]}'], 2),
    ],
)
def test_malformed_dataset_reports_line(tmp_path, lines, lineno):
    p = tmp_path / "bad.jsonl"
    p.write_text("\n".join(lines) + "\n")
    pi, _ = chain_policies()
    with pytest.raises(io.InputError, match=f"bad.jsonl:{lineno}:"):
        io.read_dataset(str(p), pi)


def test_trajectory_records_need_policy(tmp_path):
    p = tmp_path / "t.jsonl"
    p.write_text('{"g_min": 0, "g_max": 4, "gamma": 1}\n{"episode": 1, "obs": [0], "actions": [1], "beta_probs": [0.5], "rewards": [4]}\n')
    with pytest.raises(io.InputError, match="t.jsonl:2"):
        io.read_dataset(str(p))
    pi, _ = chain_policies()
    d, _ = io.read_dataset(str(p), pi)
    assert d.g[0] == 4.0 and d.rho[0] == pytest.approx(0.7 / 0.5)


def test_band_csv_roundtrip(tmp_path):
    band = band_from_intervals([1.0, 2.5, 3.0], [0.1, 0.4, 0.35], [0.5, 0.7, 0.95], 0.1, 0.0, 4.0)
    p = tmp_path / "b.csv"
    io.write_text(str(p), io.band_csv(band))
    back = io.read_band(str(p), 0.1)
    t = np.concatenate((np.linspace(-1, 5, 121), band.knots()))
    assert np.array_equal(back.lower_at(t), band.lower_at(t))
    assert np.array_equal(back.upper_at(t), band.upper_at(t))


def test_band_csv_errors(tmp_path):
    p = tmp_path / "b.csv"
    p.write_text("nu,f_lower,f_upper\n0,0,1\n2,0.5,0.4\n")
    with pytest.raises(io.InputError, match="b.csv"):
        io.read_band(str(p), 0.1)
    p.write_text("nu,f_lower,f_upper\n0,0,1\n0,0,1\n")
    with pytest.raises(io.InputError, match="b.csv:3"):
        io.read_band(str(p), 0.1)
    p.write_text("nu,f_lower\n0,0\n")
    with pytest.raises(io.InputError, match="b.csv:1"):
        io.read_band(str(p), 0.1)


class TestConfig:
    def test_defaults(self):
        cfg = load_config()
        assert cfg.get_float("band", "delta") == 0.05
        with pytest.raises(ConfigError, match="seed"):
            cfg.seed()

    def test_overrides(self):
        cfg = load_config(None, ["--seed=4", "--band.delta=0.2", "--bootstrap.replicates=300"])
        assert cfg.seed() == 4 and cfg.get_float("band", "delta") == 0.2
        assert cfg.get_int("bootstrap", "replicates") == 300

    @pytest.mark.parametrize("arg", ["--replicates=3", "--nope=1", "--band.nope=1", "seed=1"])
    def test_bad_overrides(self, arg):
        with pytest.raises(ConfigError):
            load_config(None, [arg])

    def test_file(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("[experiment]\nseed = 9\n[band]\noptimize = false\n")
        cfg = load_config(str(p))
        assert cfg.seed() == 9 and not cfg.band_settings().optimize
        p.write_text("[experiment]\ncolour = red\n")
        with pytest.raises(ConfigError):
            load_config(str(p))

    def test_default_text_parses(self, tmp_path):
        p = tmp_path / "d.ini"
        p.write_text(default_config_text())
        assert load_config(str(p)).values == load_config().values

    def test_bad_values(self):
        with pytest.raises(ConfigError):
            load_config(None, ["--delta=abc"]).band_settings()
        with pytest.raises(ConfigError):
            load_config(None, ["--env.name=moon"]).environment()
