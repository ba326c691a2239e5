"""Scenario runs: manifests, single optimisations and CO2-price sweeps, result export."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DHRetroError, InputError
from .io import (
    _read_json, desk_case, load_network, load_periods, load_scenario, read_timeseries,
    scenario_from_dict, scenario_to_dict, write_design, write_period_shares, write_state_tables,
    write_summary, write_sweep_table,
)
from .network import NetworkGraph, Scenario
from .optimizer.auglag import AugLagOptions, OuterResult, optimize
from .periods import PeriodSet
from .timeagg import aggregate

log = logging.getLogger(__name__)

MANIFEST_SCHEMA = "dhretro.manifest/1"
_OPTION_KEYS = {f for f in AugLagOptions.__dataclass_fields__}


@dataclass
class RunManifest:
    """Everything needed to reproduce a run.

    ``network``/``periods``/``scenario``/``timeseries`` are file paths
    (``None`` for the bundled desk case). With ``timeseries`` the periods are
    aggregated into ``n_clusters`` representative periods first.
    """

    network: Path | None = None
    periods: Path | None = None
    scenario: Path | None = None
    timeseries: Path | None = None
    n_clusters: int = 3
    overrides: dict = field(default_factory=dict)
    sweep: list = field(default_factory=list)
    seed: int = 0
    starts: int = 3
    output: Path | None = None
    tolerances: dict = field(default_factory=dict)
    threads: int | None = None
    sweep_workers: int = 1

    def __post_init__(self):
        if any(float(c) < 0 for c in self.sweep):
            raise InputError("sweep CO2 prices must be >= 0")
        unknown = set(self.tolerances) - _OPTION_KEYS
        if unknown:
            raise InputError(f"unknown solver options: {sorted(unknown)}")
        if self.starts < 1:
            raise InputError("starts must be >= 1")
        for name in ("network", "periods", "scenario", "timeseries"):
            p = getattr(self, name)
            if p is not None and not Path(p).is_file():
                raise InputError(f"{name} file {p} does not exist")

    def options(self) -> AugLagOptions:
        return AugLagOptions(**self.tolerances)

    def to_dict(self) -> dict:
        out = {"schema": MANIFEST_SCHEMA}
        for k in ("network", "periods", "scenario", "timeseries", "output"):
            v = getattr(self, k)
            out[k] = None if v is None else str(v)
        out.update(n_clusters=self.n_clusters, overrides=dict(self.overrides), sweep=[float(c) for c in self.sweep],
                   seed=self.seed, starts=self.starts, tolerances=dict(self.tolerances),
                   threads=self.threads, sweep_workers=self.sweep_workers)
        return out


def load_manifest(path) -> RunManifest:
    """Read a manifest; relative file paths resolve against the manifest's directory."""
    path = Path(path)
    data = _read_json(path, MANIFEST_SCHEMA)
    base = path.parent
    kw = {}
    for k in ("network", "periods", "scenario", "timeseries", "output"):
        if data.get(k) is not None:
            p = Path(data[k])
            kw[k] = p if p.is_absolute() else base / p
    for k in ("n_clusters", "overrides", "sweep", "seed", "starts", "tolerances", "threads", "sweep_workers"):
        if k in data:
            kw[k] = data[k]
    try:
        return RunManifest(**kw)
    except InputError as exc:
        raise InputError(f"{path}: {exc}") from exc


# --------------------------------------------------------------------------
# inputs


def load_inputs(m: RunManifest) -> tuple[NetworkGraph, PeriodSet, Scenario]:
    """Network, periods and scenario described by a manifest (desk case for missing files)."""
    d_graph, d_periods, d_sc = desk_case()
    graph = load_network(m.network) if m.network else d_graph
    if m.timeseries is not None:
        ts = read_timeseries(m.timeseries)
        if sorted(ts.consumers) != sorted(graph.consumer_ids):
            raise InputError(f"{m.timeseries}: consumer columns do not match the network consumers")
        order = [ts.consumers.index(c) for c in graph.consumer_ids]
        ts = type(ts)(ts.demand[:, order], ts.t_air, ts.g_irr, graph.consumer_ids)
        periods = aggregate(ts, m.n_clusters, seed=m.seed)
    elif m.periods is not None:
        periods = load_periods(m.periods, graph)
    elif m.network is None:
        periods = d_periods
    else:
        raise InputError("a periods or timeseries file is required with a custom network")
    sc = load_scenario(m.scenario) if m.scenario else d_sc
    if m.overrides:
        sc = scenario_from_dict(dict(m.overrides), sc)
    return graph, periods, sc


# --------------------------------------------------------------------------
# runs


@dataclass
class SweepPoint:
    co2_price: float
    status: str  # "converged", "not_converged" or "failed"
    result: OuterResult | None = None
    error: str = ""


@dataclass
class ResultBundle:
    manifest: RunManifest
    graph: NetworkGraph
    periods: PeriodSet
    scenario: Scenario
    points: list

    @property
    def n_failed(self) -> int:
        return sum(p.status != "converged" for p in self.points)


def _run_point(graph, periods, sc, m: RunManifest, init=None) -> SweepPoint:
    try:
        r = optimize(graph, periods, sc, starts=m.starts, seed=m.seed, init=init, options=m.options(),
                     threads=m.threads)
    except DHRetroError as exc:
        log.warning("CO2 price %g failed: %s", sc.co2_price, exc)
        return SweepPoint(sc.co2_price, "failed", None, f"{type(exc).__name__}: {exc}")
    return SweepPoint(sc.co2_price, "converged" if r.converged else "not_converged", r, r.message)


def run_scenario(m: RunManifest) -> ResultBundle:
    """Optimise the manifest's scenario at every sweep price (or once at its own price).

    With ``sweep_workers == 1`` the points run in order and each one also
    starts from the previous optimum; otherwise the points are independent
    and run concurrently. Failed points are kept in the bundle.
    """
    graph, periods, sc = load_inputs(m)
    prices = [float(c) for c in m.sweep] or [sc.co2_price]
    points: list[SweepPoint] = []
    if m.sweep_workers > 1 and len(prices) > 1:
        def job(c):
            return _run_point(graph, periods, replace(sc, co2_price=c), m)

        with ThreadPoolExecutor(max_workers=m.sweep_workers) as pool:
            points = list(pool.map(job, prices))
    else:
        prev = None
        for c in prices:
            pt = _run_point(graph, periods, replace(sc, co2_price=c), m,
                            init=None if prev is None else prev.z)
            points.append(pt)
            if pt.result is not None:
                prev = pt.result
    return ResultBundle(m, graph, periods, sc, points)


# --------------------------------------------------------------------------
# export


def point_row(pt: SweepPoint, producer_ids) -> dict:
    row = {"co2_price": pt.co2_price, "status": pt.status}
    r = pt.result
    if r is None:
        return row
    bd = r.breakdown
    row.update(J=r.J, lcoh=bd.lcoh, specific_emissions=bd.specific_emissions, emissions=bd.emissions,
               delivered_heat=bd.delivered_heat, violation=r.violation,
               complementarity=r.complementarity, projected_gradient=r.projected_gradient)
    shares = bd.heat_shares()
    for k, pid in enumerate(producer_ids):
        row[f"capacity_{pid}"] = float(bd.extra.get("installed", np.full(len(producer_ids), np.nan))[k])
        row[f"share_{pid}"] = float(shares[k])
    return row


def _point_summary(pt: SweepPoint, graph: NetworkGraph) -> dict:
    rec = {"co2_price": pt.co2_price, "status": pt.status, "error": pt.error}
    r = pt.result
    if r is None:
        return rec
    bd = r.breakdown
    rec.update(r.summary())
    rec["breakdown"] = {
        "capex": dict(zip(graph.producer_ids, map(float, bd.capex))),
        "heat_shares": dict(zip(graph.producer_ids, map(float, bd.heat_shares()))),
        "lcoh": bd.lcoh, "specific_emissions": bd.specific_emissions, "emissions": bd.emissions,
        "delivered_heat": bd.delivered_heat, "f_op": bd.f_op, "hours": bd.hours,
    }
    # wall-clock times are left out so that reruns give identical files
    rec["trace"] = [{k: v for k, v in t.__dict__.items() if k != "seconds"} for t in r.trace]
    return rec


def export_results(bundle: ResultBundle, out_dir) -> list[Path]:
    """Write the sweep table, and per point the design, summary and state tables.

    Column schemas are listed in the README; outputs are deterministic for
    identical manifests.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    g = bundle.graph
    files = [write_sweep_table([point_row(p, g.producer_ids) for p in bundle.points], g.producer_ids,
                               out / "sweep.csv")]
    (out / "manifest.json").write_text(json.dumps(bundle.manifest.to_dict(), indent=1) + "\n")
    (out / "scenario.json").write_text(json.dumps(scenario_to_dict(bundle.scenario), indent=1) + "\n")
    files += [out / "manifest.json", out / "scenario.json"]
    for i, pt in enumerate(bundle.points):
        d = out / f"point_{i:02d}"
        d.mkdir(exist_ok=True)
        files.append(write_summary(_point_summary(pt, g), d / "summary.json"))
        if pt.result is None:
            continue
        r = pt.result
        files.append(write_design(r.design, g, d / "design.json"))
        files += list(write_state_tables(g, r.states, bundle.periods, d))
        files.append(write_period_shares(r.breakdown, bundle.periods, d / "shares.csv"))
    return files
