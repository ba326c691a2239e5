import json

import numpy as np
import pytest

from conftest import period_set, star_spec
from dhretro.economics import total_objective
from dhretro.errors import InputError
from dhretro.forward import solve_all_periods
from dhretro.io import (
    design_from_dict, design_to_dict, desk_case, load_design, load_network, load_periods, load_scenario,
    read_sweep_table, read_timeseries, scenario_from_dict, write_design, write_periods, write_scenario,
    write_state_tables, write_sweep_table, write_timeseries,
)
from dhretro.network import Scenario, build_graph, unpack_design, design_size
from dhretro.optimizer.problem import RetrofitProblem
from dhretro.timeagg import TimeSeries


def write_network(tmp_path, spec, name="net.json"):
    p = tmp_path / name
    p.write_text(json.dumps({"schema": "dhretro.network/1", **spec}))
    return p


class TestNetworkFile:
    def test_load(self, tmp_path):
        g = load_network(write_network(tmp_path, star_spec(2, techs=("GB", "HP"))))
        assert g.n_consumers == 2 and g.producer_ids == ("GB", "HP")

    def test_wrong_schema(self, tmp_path):
        p = tmp_path / "n.json"
        p.write_text(json.dumps({"schema": "dhretro.periods/1", **star_spec(2)}))
        with pytest.raises(InputError, match="expected schema"):
            load_network(p)

    def test_invalid_json_reports_line(self, tmp_path):
        p = tmp_path / "n.json"
        p.write_text('{\n "schema": "dhretro.network/1",\n "nodes": [,]\n}')
        with pytest.raises(InputError, match=r"n\.json:3"):
            load_network(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError, match="not found"):
            load_network(tmp_path / "none.json")

    def test_missing_field(self, tmp_path):
        spec = star_spec(2)
        del spec["edges"][0]["id"]
        with pytest.raises(InputError, match="missing field"):
            load_network(write_network(tmp_path, spec))

    def test_geometry_error_names_the_file(self, tmp_path):
        spec = star_spec(2)
        spec["edges"][0]["length"] = -3.0
        with pytest.raises(InputError, match="net.json"):
            load_network(write_network(tmp_path, spec))

    def test_desk_case(self):
        g, ps, sc = desk_case()
        assert g.n_consumers == 6
        assert sorted(g.producer_tech) == ["EB", "GB", "HP", "ST"]
        assert len(ps) == 4 and ps[ps.peak_index].weight == 0.0
        assert sum(p.weight for p in ps) == pytest.approx(1.0)
        assert ps.hours == 8208


class TestScenarioFile:
    def test_round_trip(self, tmp_path):
        sc = Scenario(co2_price=0.2, enabled=frozenset({"GB", "HP"}), fixed_phi={"GB": 0.3},
                      prices={"gas": 0.05, "electricity": 0.2}, alpha_bounds=(2.0, 1e5))
        p = write_scenario(sc, tmp_path / "sc.json")
        back = load_scenario(p)
        assert back == sc

    def test_partial_prices_merge_with_defaults(self):
        sc = scenario_from_dict({"prices": {"gas": 0.04}})
        assert sc.prices == {"gas": 0.04, "electricity": 0.1}

    def test_unknown_field(self):
        with pytest.raises(InputError, match="unknown scenario fields"):
            scenario_from_dict({"co2": 0.1})

    def test_invalid_value_names_the_file(self, tmp_path):
        p = tmp_path / "s.json"
        p.write_text(json.dumps({"schema": "dhretro.scenario/1", "discount_rate": 2.0}))
        with pytest.raises(InputError, match="s.json"):
            load_scenario(p)


class TestPeriodFile:
    def test_round_trip_and_reorder(self, tmp_path):
        g = build_graph(star_spec(3))
        ps = period_set([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]], t_air=(1.0, 2.0), g_irr=(0.0, 10.0), weights=(0.4, 0.6))
        p = write_periods(ps, tmp_path / "p.json", ["C1", "C2", "C3"])
        data = json.loads(p.read_text())
        # shuffle the consumer order in the file; loading realigns to the graph
        data["consumers"] = ["C3", "C1", "C2"]
        for rec in data["periods"]:
            d = rec["demand"]
            rec["demand"] = [d[2], d[0], d[1]]
        p.write_text(json.dumps(data))
        back = load_periods(p, g)
        np.testing.assert_array_equal(back[1].demand, [4.0, 5.0, 6.0])
        assert back[1].weight == 0.6 and back.hours == ps.hours

    def test_consumer_mismatch(self, tmp_path):
        g = build_graph(star_spec(2))
        ps = period_set([[1.0, 2.0]])
        p = write_periods(ps, tmp_path / "p.json", ["C1", "X"])
        with pytest.raises(InputError, match="consumers"):
            load_periods(p, g)

    def test_missing_field(self, tmp_path):
        p = tmp_path / "p.json"
        p.write_text(json.dumps({"schema": "dhretro.periods/1", "periods": [{"t_air": 0.0}]}))
        with pytest.raises(InputError, match="missing period field"):
            load_periods(p)


class TestTimeSeriesFile:
    def test_round_trip_is_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        ts = TimeSeries(rng.random((48, 2)) * 1e5, rng.normal(size=48), rng.random(48) * 600, ("A", "B"))
        back = read_timeseries(write_timeseries(ts, tmp_path / "ts.csv"))
        np.testing.assert_array_equal(back.demand, ts.demand)
        np.testing.assert_array_equal(back.t_air, ts.t_air)
        assert back.consumers == ("A", "B")

    def test_header_lines(self, tmp_path):
        ts = TimeSeries(np.ones((2, 1)), np.zeros(2), np.zeros(2), ("A",))
        lines = write_timeseries(ts, tmp_path / "ts.csv").read_text().splitlines()
        assert lines[0] == "# dhretro.timeseries/1"
        assert lines[1].startswith("# units:")

    def test_missing_column(self, tmp_path):
        p = tmp_path / "ts.csv"
        p.write_text("# dhretro.timeseries/1\nhour,t_air,A\n0,1.0,5.0\n")
        with pytest.raises(InputError, match="g_irr"):
            read_timeseries(p)

    def test_non_numeric(self, tmp_path):
        p = tmp_path / "ts.csv"
        p.write_text("# dhretro.timeseries/1\nt_air,g_irr,A\n1.0,x,5.0\n")
        with pytest.raises(InputError, match="non-numeric"):
            read_timeseries(p)


class TestDesignFile:
    @pytest.fixture
    def graph(self):
        return build_graph(star_spec(3, techs=("GB", "HP", "ST")))

    def test_round_trip(self, graph, tmp_path):
        flat = np.random.default_rng(1).random(design_size(graph, 2))
        d = unpack_design(flat, graph, 2)
        back = load_design(write_design(d, graph, tmp_path / "d.json"), graph)
        np.testing.assert_array_equal(back.to_flat(), flat)

    def test_keyed_by_id(self, graph):
        d = unpack_design(np.arange(design_size(graph, 1), dtype=float), graph, 1)
        data = design_to_dict(d, graph)
        assert data["phi"] == {"GB": 0.0, "HP": 1.0, "ST": 2.0}
        assert set(data["periods"][0]["tau"]) == {"GB", "HP"}

    def test_missing_entry(self, graph):
        d = unpack_design(np.zeros(design_size(graph, 1)), graph, 1)
        data = design_to_dict(d, graph)
        del data["periods"][0]["alpha"]["C2"]
        with pytest.raises(InputError, match="C2"):
            design_from_dict(data, graph)


class TestResults:
    def test_objective_reproduced_after_reimport(self, tmp_path):
        graph = build_graph(star_spec(2, techs=("GB", "HP")))
        ps = period_set([[2e5, 3e5], [1e5, 1.5e5]], t_air=(-2.0, 8.0), weights=(0.3, 0.7))
        sc = Scenario(enabled=frozenset({"GB", "HP"}), co2_price=0.1)
        prob = RetrofitProblem(graph, ps, sc, threads=1)
        design = prob.design(prob.initial_design())
        states, _ = solve_all_periods(graph, design, ps, sc, threads=1)
        J, _ = total_objective(graph, design, states, ps, sc)

        net = write_network(tmp_path, star_spec(2, techs=("GB", "HP")))
        g2 = load_network(net)
        ps2 = load_periods(write_periods(ps, tmp_path / "p.json", graph.consumer_ids), g2)
        sc2 = load_scenario(write_scenario(sc, tmp_path / "s.json"))
        d2 = load_design(write_design(design, graph, tmp_path / "d.json"), g2)
        st2, _ = solve_all_periods(g2, d2, ps2, sc2, threads=1)
        J2, _ = total_objective(g2, d2, st2, ps2, sc2)
        assert J2 == pytest.approx(J, rel=1e-12)

    def test_state_tables_are_deterministic(self, tmp_path):
        graph = build_graph(star_spec(2))
        ps = period_set([[2e5, 3e5]], weights=(1.0,))
        prob = RetrofitProblem(graph, ps, Scenario(enabled=frozenset({"GB"})), threads=1)
        design = prob.design(prob.initial_design())
        states, _ = solve_all_periods(graph, design, ps, Scenario(), threads=1)
        a = write_state_tables(graph, states, ps, tmp_path / "a")
        b = write_state_tables(graph, states, ps, tmp_path / "b")
        for x, y in zip(a, b):
            assert x.read_bytes() == y.read_bytes()
        lines = a[1].read_text().splitlines()
        assert lines[2] == "period,label,edge,kind,flow,exit_temperature"
        assert len(lines) == 3 + graph.n_edges

    def test_sweep_table_round_trip(self, tmp_path):
        rows = [{"co2_price": 0.0, "status": "converged", "J": 1.5e6, "share_GB": 1.0},
                {"co2_price": 0.1, "status": "failed"}]
        back = read_sweep_table(write_sweep_table(rows, ["GB"], tmp_path / "s.csv"))
        assert back[0]["J"] == 1.5e6 and back[0]["share_GB"] == 1.0
        assert back[1]["status"] == "failed" and np.isnan(back[1]["J"])


def test_csv_schema_line_is_checked(tmp_path):
    p = tmp_path / "ts.csv"
    p.write_text("t_air,g_irr,A\n1.0,0.0,5.0\n")
    with pytest.raises(InputError, match=r"ts\.csv:1"):
        read_timeseries(p)
