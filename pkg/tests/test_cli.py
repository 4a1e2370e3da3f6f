import csv
import json
import os
from pathlib import Path

import pytest

from opcdf.cli import main
from opcdf.experiments import binomial_slack
from opcdf.io import read_dataset

DATA = Path(__file__).parent / "data"


def run(*args):
    return main([str(a) for a in args])


def test_golden_identity_estimate(tmp_path):
    out = tmp_path / "cdf.csv"
    assert run("estimate", "--input", DATA / "identity.jsonl", "--out", out) == 0
    assert out.read_bytes() == (DATA / "identity_cdf.csv").read_bytes()


def test_estimate_params(tmp_path):
    params = tmp_path / "p.json"
    assert run("estimate", "--input", DATA / "identity.jsonl", "--out", tmp_path / "c.csv", "--params-out", params,
               "--parameters=mean,median") == 0
    recs = json.loads(params.read_text())
    assert [r["name"] for r in recs] == ["mean", "median"]
    assert recs[0]["estimate"] == 2.25 and recs[1]["estimate"] == 2.5
    assert set(recs[0]) == {"name", "estimate", "lower", "upper", "delta", "method"}


def test_gen_roundtrip_preserves_count(tmp_path):
    d = tmp_path / "d.jsonl"
    assert run("gen", "--out", d, "--seed=1", "--n=321") == 0
    data, header = read_dataset(str(d))
    assert data.n == 321 and header["g_max"] == 12
    t = tmp_path / "t.jsonl"
    assert run("gen", "--out", t, "--seed=1", "--n=321", "--trajectories") == 0
    assert run("estimate", "--input", t, "--out", tmp_path / "a.csv") == 0
    assert run("estimate", "--input", d, "--out", tmp_path / "b.csv") == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_bound_four_rows_from_one_band(tmp_path):
    d, band, out = tmp_path / "d.jsonl", tmp_path / "band.csv", tmp_path / "b.json"
    run("gen", "--out", d, "--seed=2", "--n=2000")
    assert run("band", "--input", d, "--out", band, "--seed=2") == 0
    assert run("bound", "--band", band, "--out", out, "--parameters=mean,median,variance,cvar@0.1") == 0
    recs = json.loads(out.read_text())
    assert [r["name"] for r in recs] == ["mean", "median", "variance", "cvar@0.1"]
    assert all(r["lower"] <= r["upper"] and r["delta"] == 0.05 and r["method"] == "band" for r in recs)


def test_coverage_failure_rate(tmp_path):
    out = tmp_path / "cov.csv"
    assert run("coverage", "--out", out, "--seed=3", "--sizes=300", "--trials=200", "--band.delta=0.05",
               "--search_budget=40") == 0
    rows = list(csv.DictReader(out.open()))
    for r in rows:
        assert float(r["band_failure_rate"]) <= 0.05 + binomial_slack(0.05, 200)
        assert float(r["joint_failure_rate"]) <= 0.05 + binomial_slack(0.05, 200)


def test_forecast_and_plot(tmp_path):
    d, f, svg = tmp_path / "r.jsonl", tmp_path / "f.csv", tmp_path / "f.svg"
    common = ["--env.name=recommender", "--speed=1", "--seed=5"]
    assert run("gen", "--out", d, "--n=300", *common) == 0
    assert run("forecast", "--input", d, "--out", f, "--nonstat.replicates=300", *common) == 0
    assert f.read_text().startswith("nu,f_lower,f_upper\n")
    assert run("plot", "--input", f, "--out", svg) == 0
    assert svg.read_text().startswith("<svg")


def test_boot(tmp_path):
    d, out = tmp_path / "d.jsonl", tmp_path / "boot.json"
    run("gen", "--out", d, "--seed=1", "--n=300")
    assert run("boot", "--input", d, "--out", out, "--seed=1", "--parameters=mean", "--bootstrap.replicates=500") == 0
    rec = json.loads(out.read_text())[0]
    assert rec["method"] == "bca" and rec["lower"] <= rec["upper"]


def test_config_command_prints_defaults(capsys):
    assert run("config") == 0
    assert "[experiment]" in capsys.readouterr().out


class TestErrors:
    def test_missing_seed(self, tmp_path, capsys):
        assert run("gen", "--out", tmp_path / "x") == 2
        assert "experiment.seed" in capsys.readouterr().err

    def test_malformed_input_line(self, tmp_path, capsys):
        p = tmp_path / "bad.jsonl"
        p.write_text('{"g_min": 0, "g_max": 4}\n{"episode": 1, "return": 1, "rho": 1}\n{"episode": 2}\n')
        assert run("estimate", "--input", p) == 2
        assert "bad.jsonl:3" in capsys.readouterr().err

    def test_support_violation_in_trajectory(self, tmp_path, capsys):
        p = tmp_path / "t.jsonl"
        p.write_text('{"g_min": 0, "g_max": 12}\n'
                     '{"episode": 1, "obs": [0], "actions": [1], "beta_probs": [0], "rewards": [0]}\n')
        assert run("estimate", "--input", p) == 2
        err = capsys.readouterr().err
        assert "t.jsonl:2" in err and "support violation" in err

    def test_unknown_override(self, capsys):
        assert run("config", "--colour=red") == 2

    def test_missing_file(self, tmp_path):
        assert run("estimate", "--input", tmp_path / "none.jsonl") == 2

    def test_bound_needs_band(self):
        assert run("bound") == 2

    def test_runtime_error_exit_code(self, monkeypatch):
        import opcdf.cli as cli

        def boom(args, cfg):
            raise RuntimeError("boom")

        monkeypatch.setitem(cli.HANDLERS, "config", boom)
        assert run("config") == 1

    def test_argparse_error(self):
        with pytest.raises(SystemExit) as exc:
            run("launch")
        assert exc.value.code == 2
