"""Command line interface.

Subcommands: ``simulate`` (forward solve of a given design), ``optimize``,
``sweep`` (CO2 prices), ``aggregate`` (hourly series to periods) and
``validate`` (file checks). Exit codes: 0 success, 2 input error, 3 solver
non-convergence, 4 partial sweep.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .economics import total_objective
from .errors import InputError, SolverError
from .forward import prepare_periods, solve_all_periods
from .io import (
    load_design, load_network, load_periods, load_scenario, read_timeseries, write_periods,
    write_state_tables, write_summary,
)
from .runner import RunManifest, export_results, load_inputs, load_manifest, run_scenario
from .timeagg import aggregate

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_PARTIAL = 0, 2, 3, 4

log = logging.getLogger("dhretro")


def _add_inputs(p: argparse.ArgumentParser):
    p.add_argument("--manifest", type=Path, help="run manifest (other input flags override it)")
    p.add_argument("--network", type=Path, help="network file (default: bundled desk case)")
    p.add_argument("--periods", type=Path, help="period-set file")
    p.add_argument("--timeseries", type=Path, help="hourly series, aggregated before solving")
    p.add_argument("--clusters", type=int, default=None, help="representative periods for --timeseries")
    p.add_argument("--scenario", type=Path, help="scenario file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=JSON",
                   help="scenario override, e.g. --set co2_price=0.15 --set 'enabled=[\"GB\",\"HP\"]'")
    p.add_argument("--threads", type=int, default=None, help="periods solved concurrently")
    p.add_argument("--out", type=Path, help="output directory")


def _add_solver(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--starts", type=int, default=None, help="optimizer starts per point")
    p.add_argument("--tol", type=float, default=None, help="feasibility and complementarity tolerance")
    p.add_argument("--opt-tol", type=float, default=None, help="projected gradient tolerance")
    p.add_argument("--max-outer", type=int, default=None)


def _overrides(items) -> dict:
    out = {}
    for it in items:
        if "=" not in it:
            raise InputError(f"--set expects KEY=VALUE, got {it!r}")
        k, v = it.split("=", 1)
        try:
            out[k.strip()] = json.loads(v)
        except json.JSONDecodeError:
            out[k.strip()] = v
    return out


def _manifest(args, sweep=None) -> RunManifest:
    m = load_manifest(args.manifest) if args.manifest else RunManifest()
    for name in ("network", "periods", "timeseries", "scenario"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(m, name, v)
    if getattr(args, "clusters", None) is not None:
        m.n_clusters = args.clusters
    m.overrides = {**m.overrides, **_overrides(args.set)}
    if sweep is not None:
        m.sweep = sweep
    for name in ("seed", "starts", "threads"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(m, name, v)
    tol = dict(m.tolerances)
    if getattr(args, "tol", None) is not None:
        tol.update(feas_tol=args.tol, comp_tol=args.tol)
    if getattr(args, "opt_tol", None) is not None:
        tol["opt_tol"] = args.opt_tol
    if getattr(args, "max_outer", None) is not None:
        tol["max_outer"] = args.max_outer
    m.tolerances = tol
    if args.out is not None:
        m.output = args.out
    m.__post_init__()
    return m


def _print_points(bundle):
    ids = bundle.graph.producer_ids
    print("co2_price  status         J [EUR]          LCOH [EUR/kWh]  " + "  ".join(f"share_{p}" for p in ids))
    for pt in bundle.points:
        if pt.result is None:
            print(f"{pt.co2_price:<9g}  {pt.status:<13}  {pt.error}")
            continue
        sh = pt.result.breakdown.heat_shares()
        print(f"{pt.co2_price:<9g}  {pt.status:<13}  {pt.result.J:<15.6e}  {pt.result.breakdown.lcoh:<14.5f}  "
              + "  ".join(f"{v:8.4f}" for v in sh))


def cmd_optimize(args, sweep=None) -> int:
    m = _manifest(args, sweep)
    bundle = run_scenario(m)
    if m.output is not None:
        export_results(bundle, m.output)
    _print_points(bundle)
    bad = bundle.n_failed
    if bad == 0:
        return EXIT_OK
    if bad < len(bundle.points):
        return EXIT_PARTIAL
    return EXIT_SOLVER


def cmd_sweep(args) -> int:
    prices = [float(c) for c in args.co2] if args.co2 is not None else None
    return cmd_optimize(args, prices)


def cmd_simulate(args) -> int:
    m = _manifest(args)
    graph, periods, sc = load_inputs(m)
    design = load_design(args.design, graph)
    if design.n_periods != len(periods):
        raise InputError(f"{args.design}: design has {design.n_periods} periods, the period set {len(periods)}")
    ctx = prepare_periods(graph, periods, sc)
    states, reports = solve_all_periods(graph, design, ctx, sc, threads=m.threads)
    failed = [r.period for r in reports if not r.converged]
    for r in reports:
        print(f"period {r.period}: converged={r.converged} iterations={r.iterations} residual={r.residual_norm:.3e}")
    if failed:
        return EXIT_SOLVER
    J, bd = total_objective(graph, design, states, periods, sc, ctx)
    print(f"J = {J:.6e} EUR, LCOH = {bd.lcoh:.5f} EUR/kWh, shares = {np.round(bd.heat_shares(), 4).tolist()}")
    if m.output is not None:
        write_state_tables(graph, states, periods, m.output)
        write_summary({"J": J, "lcoh": bd.lcoh, "specific_emissions": bd.specific_emissions,
                       "heat_shares": dict(zip(graph.producer_ids, map(float, bd.heat_shares())))},
                      Path(m.output) / "summary.json")
    return EXIT_OK


def cmd_aggregate(args) -> int:
    ts = read_timeseries(args.timeseries)
    ps = aggregate(ts, args.clusters, seed=args.seed)
    for p in ps:
        print(f"{p.label:>6}: weight={p.weight:.4f} t_air={p.t_air:.2f} g_irr={p.g_irr:.1f} "
              f"demand={p.demand.sum():.4e} W")
    print(f"K = {ps.hours:g} h/yr, excluded fraction = {ps.excluded_fraction:.4f}")
    if args.out is not None:
        write_periods(ps, args.out, ts.consumers)
    return EXIT_OK


def cmd_validate(args) -> int:
    graph = None
    checked = []
    if args.manifest:
        load_manifest(args.manifest)
        checked.append(str(args.manifest))
    if args.network:
        graph = load_network(args.network)
        checked.append(f"{args.network} ({graph.n_nodes} nodes, {graph.n_edges} edges)")
    if args.periods:
        ps = load_periods(args.periods, graph)
        checked.append(f"{args.periods} ({len(ps)} periods)")
    if args.scenario:
        load_scenario(args.scenario)
        checked.append(str(args.scenario))
    if args.timeseries:
        ts = read_timeseries(args.timeseries)
        checked.append(f"{args.timeseries} ({len(ts)} steps)")
    if args.design:
        if graph is None:
            raise InputError("--design needs --network")
        load_design(args.design, graph)
        checked.append(str(args.design))
    if not checked:
        raise InputError("nothing to validate")
    for c in checked:
        print(f"ok  {c}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dhretro", description="Producer retrofit design of district heating networks.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="forward solve of a given design")
    _add_inputs(p)
    p.add_argument("--design", type=Path, required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("optimize", help="optimise one scenario")
    _add_inputs(p)
    _add_solver(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("sweep", help="optimise over CO2 prices")
    _add_inputs(p)
    _add_solver(p)
    p.add_argument("--co2", nargs="*", type=float, default=None, help="CO2 prices in EUR/kg")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("aggregate", help="cluster an hourly series into representative periods")
    p.add_argument("timeseries", type=Path)
    p.add_argument("--clusters", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("validate", help="check input files")
    for name in ("manifest", "network", "periods", "scenario", "timeseries", "design"):
        p.add_argument(f"--{name}", type=Path)
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
