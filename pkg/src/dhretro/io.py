"""File formats: network, scenario, period-set and design files (JSON), hourly
time series (CSV) and result tables (CSV plus JSON summaries).

Every file carries a versioned schema tag: a ``"schema"`` key in JSON files
and a leading ``# <schema>`` comment line in CSV files. Floats are written
with ``repr`` so that re-imported files reproduce values bit for bit.
"""

from __future__ import annotations

import csv
import io as _io
import json
from dataclasses import fields
from importlib import resources
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .errors import InputError, ShapeMismatch
from .network import DesignVector, NetworkGraph, Scenario, build_graph, pack_design
from .periods import PeriodEnvironment, PeriodSet
from .timeagg import TimeSeries

NETWORK_SCHEMA = "dhretro.network/1"
PERIODS_SCHEMA = "dhretro.periods/1"
SCENARIO_SCHEMA = "dhretro.scenario/1"
DESIGN_SCHEMA = "dhretro.design/1"
TIMESERIES_SCHEMA = "dhretro.timeseries/1"
SUMMARY_SCHEMA = "dhretro.summary/1"
SWEEP_SCHEMA = "dhretro.sweep/1"
NODES_SCHEMA = "dhretro.nodes/1"
EDGES_SCHEMA = "dhretro.edges/1"
SHARES_SCHEMA = "dhretro.shares/1"


# --------------------------------------------------------------------------
# helpers


def _read_json(path, schema: str) -> dict:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise InputError(f"{path}: file not found") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(data, dict):
        raise InputError(f"{path}: expected a JSON object")
    found = data.get("schema")
    if found != schema:
        raise InputError(f"{path}: expected schema {schema!r}, found {found!r}")
    return data


def _write_json(path, data: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=1, sort_keys=False, allow_nan=True) + "\n")
    return path


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, schema: str, header: list[str], rows: Iterable[Iterable[Any]], units: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = _io.StringIO()
    buf.write(f"# {schema}\n")
    if units:
        buf.write(f"# units: {units}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    path.write_text(buf.getvalue())
    return path


def _read_csv(path, schema: str) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except FileNotFoundError as exc:
        raise InputError(f"{path}: file not found") from exc
    if not lines or lines[0].strip() != f"# {schema}":
        raise InputError(f"{path}:1: expected header line '# {schema}'")
    body = [ln for ln in lines[1:] if not ln.startswith("#")]
    rows = list(csv.reader(body))
    if not rows:
        raise InputError(f"{path}: no column header")
    return rows[0], rows[1:]


# --------------------------------------------------------------------------
# network


def load_network(path) -> NetworkGraph:
    """Read and validate a network file."""
    data = _read_json(path, NETWORK_SCHEMA)
    try:
        return build_graph(data)
    except KeyError as exc:
        raise InputError(f"{path}: missing field {exc}") from exc
    except InputError as exc:
        raise type(exc)(f"{path}: {exc}") from exc


# --------------------------------------------------------------------------
# scenario

_SCENARIO_FIELDS = {f.name for f in fields(Scenario)} - {"parameters"}


def scenario_from_dict(data: dict, base: Scenario | None = None) -> Scenario:
    """Scenario from a mapping of field overrides (unknown keys are errors)."""
    data = {k: v for k, v in data.items() if k not in ("schema", "units", "name")}
    unknown = set(data) - _SCENARIO_FIELDS
    if unknown:
        raise InputError(f"unknown scenario fields: {sorted(unknown)}")
    if "enabled" in data:
        data["enabled"] = frozenset(data["enabled"])
    if "alpha_bounds" in data:
        data["alpha_bounds"] = tuple(float(v) for v in data["alpha_bounds"])
    if "prices" in data or "emission_factors" in data:
        ref = base or Scenario()
        for key in ("prices", "emission_factors"):
            if key in data:
                data[key] = {**getattr(ref, key), **data[key]}
    base = base or Scenario()
    try:
        return base.with_overrides(**data)
    except TypeError as exc:
        raise InputError(str(exc)) from exc


def scenario_to_dict(sc: Scenario) -> dict:
    out = {"schema": SCENARIO_SCHEMA}
    for name in sorted(_SCENARIO_FIELDS):
        v = getattr(sc, name)
        if isinstance(v, frozenset):
            v = sorted(v)
        elif isinstance(v, tuple):
            v = list(v)
        elif hasattr(v, "items"):
            v = dict(v)
        out[name] = v
    return out


def load_scenario(path, base: Scenario | None = None) -> Scenario:
    data = _read_json(path, SCENARIO_SCHEMA)
    try:
        return scenario_from_dict(data, base)
    except InputError as exc:
        raise type(exc)(f"{path}: {exc}") from exc


def write_scenario(sc: Scenario, path) -> Path:
    return _write_json(path, scenario_to_dict(sc))


# --------------------------------------------------------------------------
# period sets


def periods_from_dict(data: dict, graph: NetworkGraph | None = None) -> PeriodSet:
    """Period set from its file representation.

    With ``graph`` the demand columns are reordered to the graph's consumer
    order using the file's ``consumers`` list.
    """
    try:
        recs = data["periods"]
        consumers = data.get("consumers")
        periods = []
        for rec in recs:
            dem = np.asarray(rec["demand"], float)
            if graph is not None:
                if consumers is None:
                    if dem.size != graph.n_consumers:
                        raise ShapeMismatch("demand vector length differs from the consumer count")
                else:
                    if sorted(consumers) != sorted(graph.consumer_ids):
                        raise InputError("period consumers do not match the network consumers")
                    pos = {c: i for i, c in enumerate(consumers)}
                    dem = dem[[pos[c] for c in graph.consumer_ids]]
            periods.append(PeriodEnvironment(float(rec["t_air"]), float(rec["g_irr"]), dem,
                                             float(rec["weight"]), rec.get("label", "")))
        return PeriodSet(tuple(periods), data.get("peak_index"), float(data.get("hours", 8760)),
                         float(data.get("excluded_fraction", 0.0)),
                         meta={"consumers": list(consumers) if consumers else None})
    except KeyError as exc:
        raise InputError(f"missing period field {exc}") from exc


def periods_to_dict(ps: PeriodSet, consumers=None) -> dict:
    consumers = list(consumers) if consumers is not None else ps.meta.get("consumers")
    out = {
        "schema": PERIODS_SCHEMA,
        "units": {"t_air": "degC", "g_irr": "W/m2", "demand": "W", "hours": "h/yr"},
        "hours": ps.hours,
        "excluded_fraction": ps.excluded_fraction,
        "peak_index": ps.peak_index,
    }
    if consumers:
        out["consumers"] = list(consumers)
    out["periods"] = [
        {"label": p.label, "t_air": p.t_air, "g_irr": p.g_irr, "weight": p.weight,
         "demand": [float(v) for v in p.demand]}
        for p in ps
    ]
    return out


def load_periods(path, graph: NetworkGraph | None = None) -> PeriodSet:
    data = _read_json(path, PERIODS_SCHEMA)
    try:
        return periods_from_dict(data, graph)
    except InputError as exc:
        raise type(exc)(f"{path}: {exc}") from exc


def write_periods(ps: PeriodSet, path, consumers=None) -> Path:
    return _write_json(path, periods_to_dict(ps, consumers))


# --------------------------------------------------------------------------
# time series


def read_timeseries(path) -> TimeSeries:
    """Hourly CSV: columns ``t_air``, ``g_irr`` and one demand column per consumer.

    An optional leading ``hour`` column is ignored.
    """
    header, rows = _read_csv(path, TIMESERIES_SCHEMA)
    for col in ("t_air", "g_irr"):
        if col not in header:
            raise InputError(f"{path}: missing column {col!r}")
    skip = {"hour", "t_air", "g_irr"}
    cons = [c for c in header if c not in skip]
    if not cons:
        raise InputError(f"{path}: no consumer demand columns")
    idx = {c: i for i, c in enumerate(header)}
    try:
        arr = np.array([[float(v) for v in r] for r in rows if r], float)
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric value ({exc})") from exc
    if arr.ndim != 2 or arr.shape[1] != len(header):
        raise InputError(f"{path}: ragged rows")
    return TimeSeries(arr[:, [idx[c] for c in cons]], arr[:, idx["t_air"]], arr[:, idx["g_irr"]], tuple(cons))


def write_timeseries(ts: TimeSeries, path) -> Path:
    header = ["hour", "t_air", "g_irr", *ts.consumers]
    rows = ([h, ts.t_air[h], ts.g_irr[h], *ts.demand[h]] for h in range(len(ts)))
    return _write_csv(path, TIMESERIES_SCHEMA, header, rows, "t_air degC, g_irr W/m2, demand W")


# --------------------------------------------------------------------------
# designs


def design_to_dict(design: DesignVector, graph: NetworkGraph) -> dict:
    tc_ids = [graph.producer_ids[k] for k in graph.temp_controlled]
    return {
        "schema": DESIGN_SCHEMA,
        "units": {"phi": "-", "alpha": "-", "gamma": "m3/s", "tau": "degC"},
        "phi": dict(zip(graph.producer_ids, map(float, design.phi))),
        "periods": [
            {
                "alpha": dict(zip(graph.consumer_ids, map(float, design.alpha[t]))),
                "gamma": dict(zip(graph.producer_ids, map(float, design.gamma[t]))),
                "tau": dict(zip(tc_ids, map(float, design.tau[t]))),
            }
            for t in range(design.n_periods)
        ],
    }


def design_from_dict(data: dict, graph: NetworkGraph) -> DesignVector:
    tc_ids = [graph.producer_ids[k] for k in graph.temp_controlled]
    try:
        phi = [data["phi"][k] for k in graph.producer_ids]
        per = data["periods"]
        alpha = [[p["alpha"][c] for c in graph.consumer_ids] for p in per]
        gamma = [[p["gamma"][k] for k in graph.producer_ids] for p in per]
        tau = [[p["tau"][k] for k in tc_ids] for p in per]
    except KeyError as exc:
        raise InputError(f"design lacks a value for {exc}") from exc
    return pack_design(phi, alpha, gamma, np.asarray(tau, float).reshape(len(per), len(tc_ids)),
                       len(per), graph)


def load_design(path, graph: NetworkGraph) -> DesignVector:
    data = _read_json(path, DESIGN_SCHEMA)
    try:
        return design_from_dict(data, graph)
    except InputError as exc:
        raise type(exc)(f"{path}: {exc}") from exc


def write_design(design: DesignVector, graph: NetworkGraph, path) -> Path:
    return _write_json(path, design_to_dict(design, graph))


# --------------------------------------------------------------------------
# result tables


def write_state_tables(graph: NetworkGraph, states, periods: PeriodSet, directory) -> tuple[Path, Path]:
    """Per-period node (pressure, temperature) and edge (flow, exit temperature) tables."""
    d = Path(directory)
    node_rows, edge_rows = [], []
    for t, (s, env) in enumerate(zip(states, periods)):
        for i, n in enumerate(graph.nodes):
            node_rows.append([t, env.label, n.id, n.side, s.p[i], s.theta_node[i] + env.t_air])
        for e, edge in enumerate(graph.edges):
            edge_rows.append([t, env.label, edge.id, edge.kind, s.q[e], s.theta_exit[e] + env.t_air])
    nodes = _write_csv(d / "nodes.csv", NODES_SCHEMA,
                       ["period", "label", "node", "side", "pressure", "temperature"], node_rows,
                       "pressure Pa, temperature degC")
    edges = _write_csv(d / "edges.csv", EDGES_SCHEMA,
                       ["period", "label", "edge", "kind", "flow", "exit_temperature"], edge_rows,
                       "flow m3/s, exit_temperature degC")
    return nodes, edges


def write_period_shares(breakdown, periods: PeriodSet, path) -> Path:
    """Per-period heat and heat share of every producer."""
    shares = breakdown.period_heat_shares()
    rows = []
    for t, env in enumerate(periods):
        for k, pid in enumerate(breakdown.producer_ids):
            rows.append([t, env.label, pid, breakdown.heat[t, k], shares[t, k]])
    return _write_csv(path, SHARES_SCHEMA, ["period", "label", "producer", "heat", "share"], rows, "heat W")


def sweep_columns(producer_ids) -> list[str]:
    cols = ["co2_price", "status", "J", "lcoh", "specific_emissions", "emissions", "delivered_heat",
            "violation", "complementarity", "projected_gradient"]
    cols += [f"capacity_{p}" for p in producer_ids]
    cols += [f"share_{p}" for p in producer_ids]
    return cols


def write_sweep_table(rows: list[dict], producer_ids, path) -> Path:
    """One row per sweep point; failed points keep ``status`` and NaN values."""
    cols = sweep_columns(producer_ids)
    body = [[r.get(c, float("nan")) for c in cols] for r in rows]
    return _write_csv(path, SWEEP_SCHEMA, cols, body,
                      "co2_price EUR/kg, J EUR, lcoh EUR/kWh, specific_emissions kg/kWh, emissions kg/yr, "
                      "delivered_heat kWh/yr, capacity W (m2 for ST), share -")


def read_sweep_table(path) -> list[dict]:
    header, rows = _read_csv(path, SWEEP_SCHEMA)
    out = []
    for r in rows:
        rec = {}
        for k, v in zip(header, r):
            rec[k] = v if k == "status" else float(v)
        out.append(rec)
    return out


def write_summary(record: dict, path) -> Path:
    return _write_json(path, {"schema": SUMMARY_SCHEMA, **record})


# --------------------------------------------------------------------------
# bundled desk fixture


def desk_case(scenario: Scenario | None = None):
    """The bundled desk-scale case: ``(graph, periods, scenario)``."""
    root = resources.files("dhretro.data").joinpath("desk")
    with resources.as_file(root / "network.json") as p:
        graph = load_network(p)
    with resources.as_file(root / "periods.json") as p:
        periods = load_periods(p, graph)
    return graph, periods, scenario or Scenario()
