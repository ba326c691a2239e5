import json
from importlib import resources

import numpy as np
import pytest

from conftest import period_set, star_spec
from dhretro import cli, runner
from dhretro.io import read_sweep_table, write_design, write_periods, write_timeseries
from dhretro.network import Scenario, build_graph
from dhretro.optimizer.problem import RetrofitProblem
from dhretro.timeagg import TimeSeries

DESK = resources.files("dhretro.data").joinpath("desk")


@pytest.fixture
def small_files(tmp_path):
    spec = star_spec(2, techs=("GB", "HP"))
    net = tmp_path / "net.json"
    net.write_text(json.dumps({"schema": "dhretro.network/1", **spec}))
    graph = build_graph(spec)
    ps = period_set([[1.5e5, 2e5]], t_air=(5.0,), weights=(1.0,))
    per = write_periods(ps, tmp_path / "periods.json", graph.consumer_ids)
    return tmp_path, net, per, graph, ps


class TestValidate:
    def test_desk_files(self, capsys):
        code = cli.main(["validate", "--network", str(DESK / "network.json"), "--periods", str(DESK / "periods.json")])
        assert code == 0
        out = capsys.readouterr().out
        assert "ok" in out and "periods" in out

    def test_bad_file_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "n.json"
        bad.write_text("{}")
        assert cli.main(["validate", "--network", str(bad)]) == cli.EXIT_INPUT
        assert "expected schema" in capsys.readouterr().err

    def test_nothing_to_validate(self):
        assert cli.main(["validate"]) == cli.EXIT_INPUT


class TestAggregate:
    def test_writes_period_file(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        n = 24 * 20
        d = rng.uniform(1e4, 5e4, size=(n, 2))
        d[200:260] = 0.0
        ts = TimeSeries(d, rng.normal(5, 4, n), rng.uniform(0, 400, n), ("C1", "C2"))
        src = write_timeseries(ts, tmp_path / "ts.csv")
        out = tmp_path / "p.json"
        assert cli.main(["aggregate", str(src), "--clusters", "3", "--out", str(out)]) == 0
        data = json.loads(out.read_text())
        assert len(data["periods"]) == 4 and data["peak_index"] == 3
        assert data["consumers"] == ["C1", "C2"]
        assert data["excluded_fraction"] == pytest.approx(60 / n)
        assert "K = " in capsys.readouterr().out

    def test_too_many_clusters(self, tmp_path):
        ts = TimeSeries(np.ones((3, 1)), np.zeros(3), np.zeros(3), ("C1",))
        src = write_timeseries(ts, tmp_path / "ts.csv")
        assert cli.main(["aggregate", str(src), "--clusters", "5"]) == cli.EXIT_INPUT


class TestSimulate:
    def test_design_file(self, small_files, capsys):
        tmp, net, per, graph, ps = small_files
        prob = RetrofitProblem(graph, ps, Scenario(enabled=frozenset({"GB", "HP"})), threads=1)
        design = write_design(prob.design(prob.initial_design()), graph, tmp / "d.json")
        out = tmp / "sim"
        code = cli.main(["simulate", "--network", str(net), "--periods", str(per), "--design", str(design),
                         "--out", str(out)])
        assert code == 0
        assert (out / "nodes.csv").is_file() and (out / "edges.csv").is_file()
        summary = json.loads((out / "summary.json").read_text())
        assert summary["J"] > 0
        assert "converged=True" in capsys.readouterr().out

    def test_period_count_mismatch(self, small_files):
        tmp, net, per, graph, ps = small_files
        two = period_set([[1e5, 1e5], [2e5, 2e5]])
        prob = RetrofitProblem(graph, two, Scenario(), threads=1)
        design = write_design(prob.design(prob.lb), graph, tmp / "d2.json")
        assert cli.main(["simulate", "--network", str(net), "--periods", str(per),
                         "--design", str(design)]) == cli.EXIT_INPUT

    def test_custom_network_needs_periods(self, small_files):
        tmp, net, *_ = small_files
        assert cli.main(["optimize", "--network", str(net)]) == cli.EXIT_INPUT


class TestOptimize:
    def test_single_boiler(self, small_files, capsys):
        tmp, net, per, *_ = small_files
        out = tmp / "opt"
        code = cli.main(["optimize", "--network", str(net), "--periods", str(per), "--set", 'enabled=["GB"]',
                         "--starts", "1", "--threads", "1", "--out", str(out)])
        assert code == 0
        rows = read_sweep_table(out / "sweep.csv")
        assert rows[0]["status"] == "converged" and rows[0]["share_GB"] == pytest.approx(1.0)
        for name in ("design.json", "summary.json", "nodes.csv", "edges.csv", "shares.csv"):
            assert (out / "point_00" / name).is_file()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["overrides"] == {"enabled": ["GB"]}

    def test_rerun_is_byte_identical(self, small_files):
        tmp, net, per, *_ = small_files
        args = ["optimize", "--network", str(net), "--periods", str(per), "--set", 'enabled=["GB"]',
                "--starts", "1", "--threads", "1"]
        assert cli.main(args + ["--out", str(tmp / "a")]) == 0
        assert cli.main(args + ["--out", str(tmp / "b")]) == 0
        for name in ("sweep.csv", "point_00/design.json", "point_00/summary.json", "point_00/edges.csv"):
            assert (tmp / "a" / name).read_bytes() == (tmp / "b" / name).read_bytes()

    def test_bad_override(self, small_files):
        tmp, net, per, *_ = small_files
        assert cli.main(["optimize", "--network", str(net), "--periods", str(per), "--set", "nonsense"]) == 2
        assert cli.main(["optimize", "--network", str(net), "--periods", str(per), "--set", "co2=1"]) == 2

    def test_negative_sweep_price(self, small_files):
        tmp, net, per, *_ = small_files
        assert cli.main(["sweep", "--network", str(net), "--periods", str(per), "--co2", "-0.1"]) == 2

    def test_partial_sweep_exit_code(self, small_files, monkeypatch):
        tmp, net, per, *_ = small_files
        real = runner._run_point

        def flaky(graph, periods, sc, m, init=None):
            if sc.co2_price > 0:
                return runner.SweepPoint(sc.co2_price, "failed", None, "StalledProgress: injected")
            return real(graph, periods, sc, m, init)

        monkeypatch.setattr(runner, "_run_point", flaky)
        out = tmp / "sw"
        code = cli.main(["sweep", "--network", str(net), "--periods", str(per), "--set", 'enabled=["GB"]',
                         "--co2", "0", "0.1", "--starts", "1", "--threads", "1", "--out", str(out)])
        assert code == cli.EXIT_PARTIAL
        rows = read_sweep_table(out / "sweep.csv")
        assert [r["status"] for r in rows] == ["converged", "failed"]

    def test_all_points_failed(self, small_files, monkeypatch):
        tmp, net, per, *_ = small_files
        monkeypatch.setattr(runner, "_run_point",
                            lambda g, p, sc, m, init=None: runner.SweepPoint(sc.co2_price, "failed", None, "x"))
        assert cli.main(["sweep", "--network", str(net), "--periods", str(per), "--co2", "0"]) == cli.EXIT_SOLVER


class TestManifest:
    def test_relative_paths(self, small_files):
        tmp, net, per, *_ = small_files
        (tmp / "run.json").write_text(json.dumps({
            "schema": "dhretro.manifest/1", "network": "net.json", "periods": "periods.json",
            "sweep": [0.0, 0.1], "starts": 2, "overrides": {"enabled": ["GB"]},
        }))
        m = runner.load_manifest(tmp / "run.json")
        assert m.network == tmp / "net.json" and m.sweep == [0.0, 0.1] and m.starts == 2

    def test_missing_file(self, tmp_path):
        (tmp_path / "run.json").write_text(json.dumps({"schema": "dhretro.manifest/1", "network": "none.json"}))
        with pytest.raises(runner.InputError, match="does not exist"):
            runner.load_manifest(tmp_path / "run.json")

    def test_unknown_tolerance(self):
        with pytest.raises(runner.InputError, match="unknown solver options"):
            runner.RunManifest(tolerances={"gtol": 1.0})
