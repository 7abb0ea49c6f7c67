import csv
import io
import json

import numpy as np
import pytest

from radmaxlab import InvalidInputError
from radmaxlab.dyadic import Grid, GridFunction
from radmaxlab.harness import EXPERIMENTS
from radmaxlab.harness.cli import main
from radmaxlab.harness.config import (ExperimentConfig, load_config, parse_config_text, parse_p_list,
                                      thread_cap)
from radmaxlab.harness.experiments import quadratic_member, run_counterexample, run_rmf, unperturbed_member
from radmaxlab.harness.selftest import run_selftest


def _cfg(experiment, **kw):
    base = dict(J=3, ensemble=2, restarts=1, sweeps=3)
    base.update(kw)
    return ExperimentConfig.build(experiment, overrides=base)


class TestConfig:
    def test_parse_text(self):
        d = parse_config_text("""
            [run]
            space = "lq:1.5:4"   # comment
            p = 1.5, 2, 3
            J: 4
            check-quadrature = true
        """)
        assert d == {"space": "lq:1.5:4", "p": [1.5, 2, 3], "J": 4, "check_quadrature": True}

    def test_bad_line(self):
        with pytest.raises(InvalidInputError):
            parse_config_text("just words")

    def test_missing_file(self, tmp_path):
        with pytest.raises(InvalidInputError):
            load_config(tmp_path / "missing.toml")

    def test_overrides_win(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text("J = 4\nspace = hilbert:2\nseed = 9\n")
        cfg = ExperimentConfig.build("rmf", load_config(path), {"J": 3, "seed": None})
        assert cfg.J == 3 and cfg.seed == 9 and cfg.space == "hilbert:2"

    @pytest.mark.parametrize("bad", [{"colour": 1}, {"space": "lq:0:2"}, {"p": [0.5]}, {"J": 2.5},
                                     {"seed": -1}, {"format": "xml"}, {"lam": 5.0, "Lam": 1.0}])
    def test_rejected(self, bad):
        with pytest.raises(InvalidInputError):
            ExperimentConfig.build("rmf", overrides=bad)

    def test_p_list(self):
        assert parse_p_list("1.5,2") == [1.5, 2.0]
        assert parse_p_list(3) == [3.0]
        with pytest.raises(InvalidInputError):
            parse_p_list([])

    def test_thread_cap(self, monkeypatch):
        monkeypatch.delenv("RADMAXLAB_THREADS", raising=False)
        assert thread_cap() == 1
        monkeypatch.setenv("RADMAXLAB_THREADS", "3")
        assert thread_cap() == 3
        for bad in ("0", "many"):
            monkeypatch.setenv("RADMAXLAB_THREADS", bad)
            with pytest.raises(InvalidInputError):
                thread_cap()

    def test_echo_excludes_paths(self):
        e = _cfg("rmf", out="/tmp/x", format="csv").echo()
        assert "out" not in e and "format" not in e and e["J"] == 3


class TestReports:
    def test_counterexample_rows(self):
        rep = run_counterexample(_cfg("counterexample", m=3))
        vals = [r["value"] for r in rep.rows]
        assert len(vals) == 3 and vals == sorted(vals) and vals[0] == pytest.approx(0.5)
        assert rep.passed and rep.aggregates["chain_bounds"] == [r["lower"] for r in rep.rows]

    def test_counterexample_resource_failure(self):
        rep = run_counterexample(_cfg("counterexample", m=5))
        assert len(rep.rows) == 4 and rep.errors and not rep.passed

    def test_passed_recomputable(self):
        rep = run_rmf(_cfg("rmf", space="hilbert:2", p=[1.5, 2.0]))
        for r in rep.rows:
            if r["passed"] != "":
                assert r["passed"] == (r["lower"] <= r["ratio"] <= r["upper"])
                assert r["ratio"] == pytest.approx(r["value"])

    def test_json_and_csv(self):
        rep = run_rmf(_cfg("rmf"))
        body = json.loads(rep.to_json())
        assert body["columns"] == rep.columns and len(body["rows"]) == len(rep.rows)
        assert body["config"]["J"] == 3
        rows = list(csv.DictReader(io.StringIO(rep.to_csv())))
        assert len(rows) == len(rep.rows)
        assert float(rows[0]["value"]) == rep.rows[0]["value"]

    def test_deterministic_across_threads(self, monkeypatch):
        cfg = _cfg("unperturbed", ensemble=3, p=[2.0])
        monkeypatch.setenv("RADMAXLAB_THREADS", "1")
        a = EXPERIMENTS["unperturbed"](cfg).to_json()
        monkeypatch.setenv("RADMAXLAB_THREADS", "3")
        b = EXPERIMENTS["unperturbed"](cfg).to_json()
        assert a == b

    @pytest.mark.parametrize("name", sorted(EXPERIMENTS))
    def test_empty_ensemble(self, name):
        cfg = _cfg(name, ensemble=0, m=0)
        rep = EXPERIMENTS[name](cfg)
        assert rep.rows == [] and rep.config == cfg.echo()

    @pytest.mark.parametrize("name", ["rmf", "carleson", "paraproduct"])
    def test_row_count_follows_ensemble(self, name):
        cfg = _cfg(name, ensemble=3, space="lq:1.5:2")
        rep = EXPERIMENTS[name](cfg)
        cases = {r["case"] for r in rep.rows}
        assert cases == {0, 1, 2}


class TestMembers:
    def test_unperturbed_constant_vanishes(self):
        cfg = _cfg("unperturbed", p=[2.0])
        u = GridFunction.constant(Grid(1, 3), 2.0)
        res = unperturbed_member(cfg, 0, u)[2.0]
        for name in ("A_minus_P", "A_minus_I_after_P", "A_after_P_minus_I", "poincare_m0"):
            assert res[name][0] < 1e-12

    def test_quadratic_identity_coefficient(self):
        cfg = _cfg("quadratic", J=4, lam=1.0, Lam=1.0, p=[2.0])
        res = quadratic_member(cfg, 0)[2.0]
        val, ref, _ = res["main_range_gamma"]
        assert 0 < val / ref < 10
        # with B = I the resolvent is a Fourier multiplier and the high-frequency part is bounded as well
        assert res["high_frequency"][0] / ref < 10


class TestCli:
    def test_counterexample_csv(self, capsys):
        assert main(["counterexample", "--m", "3", "--format", "csv"]) == 0
        rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
        vals = [float(r["value"]) for r in rows]
        assert len(rows) == 3 and vals == sorted(vals)

    def test_partial_report_on_failure(self, capsys):
        assert main(["counterexample", "--m", "5"]) == 1
        body = json.loads(capsys.readouterr().out)
        assert len(body["rows"]) == 4 and body["errors"]

    @pytest.mark.parametrize("argv", [
        ["kato", "--config", "missing.toml"],
        ["rmf", "--space", "lq:zero:3"],
        ["rmf", "--bogus"],
        ["rmf", "--p", "0.5"],
        ["rmf", "--seed", "-3"],
        ["nosuch"],
    ])
    def test_usage_errors(self, argv, capsys):
        assert main(argv) == 2

    def test_bad_threads_env(self, monkeypatch, capsys):
        monkeypatch.setenv("RADMAXLAB_THREADS", "zero")
        assert main(["counterexample", "--m", "1"]) == 2

    def test_out_dir(self, tmp_path):
        assert main(["rmf", "--grid", "3", "--ensemble", "2", "--space", "hilbert:2", "--out", str(tmp_path),
                     "--format", "json", "--seed", "5"]) == 0
        body = json.loads((tmp_path / "rmf.json").read_text())
        meta = json.loads((tmp_path / "rmf.meta.json").read_text())
        assert body["config"]["seed"] == 5 and body["passed"]
        assert meta["experiment"] == "rmf" and "created" in meta

    def test_same_seed_same_body(self, capsys):
        argv = ["paraproduct", "--grid", "4", "--ensemble", "2", "--seed", "11"]
        main(argv)
        a = capsys.readouterr().out
        main(argv)
        assert capsys.readouterr().out == a

    def test_config_file(self, tmp_path, capsys):
        path = tmp_path / "c.toml"
        path.write_text("m = 2\n")
        assert main(["counterexample", "--config", str(path)]) == 0
        assert len(json.loads(capsys.readouterr().out)["rows"]) == 2


def test_selftest_suite():
    results = run_selftest()
    failed = [(n, d) for n, ok, d in results if not ok]
    assert not failed
    assert len(results) >= 15


def test_cli_selftest(capsys):
    assert main(["selftest"]) == 0
    assert all(line.startswith("PASS") for line in capsys.readouterr().out.splitlines())
