import numpy as np
import pytest

from dhretro.forward import prepare_periods
from dhretro.io import desk_case
from dhretro.network import Scenario, build_graph
from dhretro.periods import PeriodEnvironment, PeriodSet


# --------------------------------------------------------------------------
# acceptance report: one pass/fail line per criterion at the end of the run

_CRITERIA: dict = {}


def _criterion(item):
    m = item.get_closest_marker("criterion")
    if m is None:
        return None
    n, title = m.args
    return _CRITERIA.setdefault(n, {"title": title, "ok": True, "tests": 0, "notes": []})


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    rec = _criterion(item)
    if rec is None:
        return
    if rep.failed or (rep.when == "call" and rep.skipped):
        rec["ok"] = False
    if rep.when == "call":
        rec["tests"] += 1


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        rec = _CRITERIA[n]
        status = "PASS" if rec["ok"] else "FAIL"
        notes = "; ".join(rec["notes"])
        line = f"criterion {n}: {status}  {rec['title']} ({rec['tests']} checks)"
        terminalreporter.write_line(line + (f"  [{notes}]" if notes else ""))


@pytest.fixture
def note(request):
    """Attach a measured value to the acceptance line of the current test's criterion."""
    rec = _criterion(request.node)

    def add(text):
        if rec is not None:
            rec["notes"].append(text)

    return add


# --------------------------------------------------------------------------


@pytest.fixture(scope="session")
def desk():
    graph, periods, _ = desk_case()
    return graph, periods


@pytest.fixture(scope="session")
def desk_scenario():
    return Scenario(enabled=frozenset({"GB", "HP", "ST"}))


@pytest.fixture(scope="session")
def desk_contexts(desk, desk_scenario):
    graph, periods = desk
    return prepare_periods(graph, periods, desk_scenario)


def star_spec(n_consumers=3, *, loop=False, techs=("GB",), p_max=5e6, ua=2e5, u=0.1):
    """Hub with one feed/return pipe pair per consumer (optionally a feed/return ring link)."""
    nodes = [{"id": "H_f", "kind": "producer", "side": "feed"}, {"id": "H_r", "kind": "producer", "side": "return"}]
    edges = []
    for j in range(1, n_consumers + 1):
        nodes += [{"id": f"C{j}_f", "kind": "consumer", "side": "feed"},
                  {"id": f"C{j}_r", "kind": "consumer", "side": "return"}]
        edges += [
            {"id": f"P{j}_f", "kind": "pipe", "from": "H_f", "to": f"C{j}_f", "length": 200.0 + 50 * j,
             "diameter": 0.1, "u": u},
            {"id": f"P{j}_r", "kind": "pipe", "from": f"C{j}_r", "to": "H_r", "length": 200.0 + 50 * j,
             "diameter": 0.1, "u": u},
            {"id": f"C{j}", "kind": "consumer", "from": f"C{j}_f", "to": f"C{j}_r", "ua": ua},
        ]
    if loop and n_consumers >= 2:
        edges += [
            {"id": "L_f", "kind": "pipe", "from": "C1_f", "to": "C2_f", "length": 150.0, "diameter": 0.08, "u": u},
            {"id": "L_r", "kind": "pipe", "from": "C2_r", "to": "C1_r", "length": 150.0, "diameter": 0.08, "u": u},
        ]
    for t in techs:
        rec = {"id": t, "kind": "producer", "from": "H_r", "to": "H_f", "technology": t}
        if t == "ST":
            rec["a_max"] = 2000.0
        else:
            rec["p_max"] = p_max
        edges.append(rec)
    return {"nodes": nodes, "edges": edges}


@pytest.fixture
def star():
    return build_graph(star_spec())


def period_set(demands, t_air=(5.0,), g_irr=(0.0,), weights=None, hours=8208.0):
    demands = np.atleast_2d(np.asarray(demands, float))
    n = demands.shape[0]
    weights = np.full(n, 1.0 / n) if weights is None else weights
    t_air = np.broadcast_to(np.asarray(t_air, float), (n,))
    g_irr = np.broadcast_to(np.asarray(g_irr, float), (n,))
    return PeriodSet(tuple(PeriodEnvironment(float(t_air[i]), float(g_irr[i]), demands[i], float(weights[i]))
                           for i in range(n)), None, hours)


def random_case(rng, *, max_consumers=6):
    """Random small network with a solvable design.

    Feed-side tree rooted at the hub (mirrored on the return side), with up
    to two extra ring links, one or two producers at the hub and random
    valve settings, inflows and supply temperatures.
    """
    from dhretro.network import pack_design

    n_c = int(rng.integers(2, max_consumers + 1))
    nodes = [{"id": "H_f", "kind": "producer", "side": "feed"}, {"id": "H_r", "kind": "producer", "side": "return"}]
    edges = []
    names = ["H"]
    for j in range(1, n_c + 1):
        parent = names[int(rng.integers(0, len(names)))]
        nodes += [{"id": f"N{j}_f", "kind": "consumer", "side": "feed"},
                  {"id": f"N{j}_r", "kind": "consumer", "side": "return"}]
        length, diam = float(rng.uniform(50, 400)), float(rng.uniform(0.05, 0.15))
        u = float(rng.uniform(0.05, 0.4))
        edges += [
            {"id": f"S{j}_f", "kind": "pipe", "from": f"{parent}_f", "to": f"N{j}_f", "length": length,
             "diameter": diam, "u": u},
            {"id": f"S{j}_r", "kind": "pipe", "from": f"N{j}_r", "to": f"{parent}_r", "length": length,
             "diameter": diam, "u": u},
            {"id": f"C{j}", "kind": "consumer", "from": f"N{j}_f", "to": f"N{j}_r",
             "ua": float(rng.uniform(1e5, 4e5))},
        ]
        names.append(f"N{j}")
    for m in range(int(rng.integers(0, 3))):
        a, b = rng.choice(np.arange(1, n_c + 1), 2, replace=False)
        length, diam = float(rng.uniform(50, 300)), float(rng.uniform(0.04, 0.1))
        edges += [
            {"id": f"R{m}_f", "kind": "pipe", "from": f"N{a}_f", "to": f"N{b}_f", "length": length,
             "diameter": diam, "u": 0.1},
            {"id": f"R{m}_r", "kind": "pipe", "from": f"N{b}_r", "to": f"N{a}_r", "length": length,
             "diameter": diam, "u": 0.1},
        ]
    techs = ("GB", "HP") if rng.random() < 0.5 else ("GB",)
    for t in techs:
        edges.append({"id": t, "kind": "producer", "from": "H_r", "to": "H_f", "technology": t, "p_max": 5e6})
    graph = build_graph({"nodes": nodes, "edges": edges})

    demand = rng.uniform(5e4, 3e5, n_c)
    t_air = float(rng.uniform(-8, 12))
    periods = period_set([demand], t_air=(t_air,), g_irr=(0.0,), weights=(1.0,))
    total = demand.sum() / (983.0 * 4185.0 * rng.uniform(20, 35))
    split = rng.dirichlet(np.ones(len(techs)))
    design = pack_design(
        np.full(len(techs), 0.5), [rng.uniform(5.0, 5e3, n_c)], [total * split],
        [rng.uniform(45.0, 80.0, len(techs))], 1, graph,
    )
    return graph, periods, design
