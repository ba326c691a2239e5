"""Network graph, scenario settings and the design/state vector layouts.

All internal quantities are SI (W, Pa, m3/s, K). Prices and emission factors
stay in EUR/kWh and kg/kWh, exactly as tabulated, and are converted where costs
are evaluated.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, replace
from functools import cached_property
from importlib import resources
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import (
    DanglingReference,
    DisconnectedGraph,
    InputError,
    NonPositiveGeometry,
    ShapeMismatch,
)

NODE_KINDS = ("producer", "consumer", "junction")
SIDES = ("feed", "return")
EDGE_KINDS = ("pipe", "consumer", "producer")
TECHNOLOGIES = ("GB", "HP", "ST", "EB")

# energy carrier of every technology (ST pays electricity for its collector pump)
CARRIER = {"GB": "gas", "HP": "electricity", "ST": "electricity", "EB": "electricity"}

# edge kind codes used in the vectorised model
PIPE, CONSUMER, PRODUCER = 0, 1, 2


@dataclass(frozen=True)
class Node:
    id: str
    kind: str
    side: str


@dataclass(frozen=True)
class Edge:
    """A directed edge. Attributes that do not apply to ``kind`` stay ``None``."""

    id: str
    source: str
    target: str
    kind: str
    # pipes
    length: float | None = None
    diameter: float | None = None
    roughness: float | None = None
    u_loss: float | None = None
    # consumers
    ua: float | None = None
    valve_diameter: float | None = None
    # producers
    technology: str | None = None
    p_max: float | None = None
    a_max: float | None = None
    t_min: float | None = None
    t_max: float | None = None
    q_max: float | None = None


class NetworkGraph:
    """Validated district heating network with index arrays for the solvers.

    Build instances with :func:`build_graph`; the constructor assumes validated
    input. Node and edge order is the order of the description.
    """

    def __init__(self, nodes: Sequence[Node], edges: Sequence[Edge], name: str = ""):
        self.name = name
        self.nodes: tuple[Node, ...] = tuple(nodes)
        self.edges: tuple[Edge, ...] = tuple(edges)
        self.node_index = {n.id: k for k, n in enumerate(self.nodes)}
        self.edge_index = {e.id: k for k, e in enumerate(self.edges)}

        def frozen(a, dtype=None):
            a = np.asarray(a, dtype=dtype)
            a.setflags(write=False)
            return a

        self.src = frozen([self.node_index[e.source] for e in self.edges], int)
        self.dst = frozen([self.node_index[e.target] for e in self.edges], int)
        code = {"pipe": PIPE, "consumer": CONSUMER, "producer": PRODUCER}
        self.kind = frozen([code[e.kind] for e in self.edges])

        self.pipes = frozen(np.flatnonzero(self.kind == PIPE))
        self.consumers = frozen(np.flatnonzero(self.kind == CONSUMER))
        self.producers = frozen(np.flatnonzero(self.kind == PRODUCER))
        techs = [self.edges[k].technology for k in self.producers]
        self.producer_tech: tuple[str, ...] = tuple(techs)
        # producers whose supply temperature is a design variable
        self.temp_controlled = frozen([k for k, t in enumerate(techs) if t != "ST"], int)
        self.solar = frozen([k for k, t in enumerate(techs) if t == "ST"], int)

        e = self.edges
        self.length = frozen([x.length if x.kind == "pipe" else 0.0 for x in e])
        self.diameter = frozen([x.diameter if x.kind == "pipe" else 0.0 for x in e])
        self.roughness = frozen([x.roughness or 0.0 if x.kind == "pipe" else 0.0 for x in e])
        self.u_loss = frozen([x.u_loss if x.kind == "pipe" else 0.0 for x in e])
        self.ua = frozen([x.ua if x.kind == "consumer" else 0.0 for x in e])
        self.valve_diameter = frozen(
            [x.valve_diameter if x.kind == "consumer" else 0.0 for x in e]
        )

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_consumers(self) -> int:
        return len(self.consumers)

    @property
    def n_producers(self) -> int:
        return len(self.producers)

    @property
    def n_temp_controlled(self) -> int:
        return len(self.temp_controlled)

    @property
    def state_size(self) -> int:
        """Length of one period's state: flows, pressures, node and exit temperatures."""
        return 2 * self.n_edges + 2 * self.n_nodes

    @cached_property
    def producer_ids(self) -> tuple[str, ...]:
        return tuple(self.edges[k].id for k in self.producers)

    @cached_property
    def consumer_ids(self) -> tuple[str, ...]:
        return tuple(self.edges[k].id for k in self.consumers)

    def producer_edge(self, k: int) -> Edge:
        return self.edges[self.producers[k]]

    def producers_of(self, tech: str) -> np.ndarray:
        """Producer positions (not edge indices) with the given technology."""
        return np.array([k for k, t in enumerate(self.producer_tech) if t == tech], dtype=int)

    @cached_property
    def incidence(self) -> np.ndarray:
        """Dense node-edge incidence, +1 at the head and -1 at the tail of each edge."""
        b = np.zeros((self.n_nodes, self.n_edges))
        b[self.dst, np.arange(self.n_edges)] += 1.0
        b[self.src, np.arange(self.n_edges)] -= 1.0
        return b

    def reference_node(self) -> int:
        """Pressure reference: return-side inlet of the first producer."""
        if self.n_producers == 0:
            return 0
        return int(self.src[self.producers[0]])

    def independent_loops(self) -> list[list[tuple[int, int]]]:
        """Fundamental cycles as lists of ``(edge, orientation)`` pairs.

        Orientation is +1 when the cycle traverses the edge along its direction.
        """
        parent: dict[int, tuple[int, int] | None] = {0: None}
        depth = {0: 0}
        tree = set()
        adj: dict[int, list[int]] = {k: [] for k in range(self.n_nodes)}
        for k in range(self.n_edges):
            adj[int(self.src[k])].append(k)
            adj[int(self.dst[k])].append(k)
        queue = deque([0])
        while queue:
            n = queue.popleft()
            for k in adj[n]:
                m = int(self.dst[k]) if int(self.src[k]) == n else int(self.src[k])
                if m not in parent:
                    parent[m] = (n, k)
                    depth[m] = depth[n] + 1
                    tree.add(k)
                    queue.append(m)

        def path_to_root(n):
            out = []
            while parent[n] is not None:
                p, k = parent[n]
                out.append((n, p, k))
                n = p
            return out

        loops = []
        for k in range(self.n_edges):
            if k in tree:
                continue
            a, b = int(self.src[k]), int(self.dst[k])
            # cycle: a -> b along k, then b -> root -> a through the tree
            pb, pa = path_to_root(b), path_to_root(a)
            nodes_b = [x[0] for x in pb] + [0]
            nodes_a = [x[0] for x in pa] + [0]
            common = next(n for n in nodes_b if n in set(nodes_a))
            cycle = [(k, 1)]
            for child, par, e in pb:
                if child == common:
                    break
                cycle.append((e, 1 if int(self.src[e]) == child else -1))
            back = []
            for child, par, e in pa:
                if child == common:
                    break
                back.append((e, 1 if int(self.src[e]) == par else -1))
            cycle.extend(reversed(back))
            loops.append(cycle)
        return loops

    def __repr__(self) -> str:
        return (
            f"NetworkGraph({self.name!r}, nodes={self.n_nodes}, edges={self.n_edges}, "
            f"consumers={self.n_consumers}, producers={self.n_producers})"
        )


def _positive(value, what, entity):
    if value is None or not np.isfinite(value) or value <= 0:
        raise NonPositiveGeometry(f"{entity}: {what} must be > 0, got {value!r}")
    return float(value)


def build_graph(spec: Mapping[str, Any]) -> NetworkGraph:
    """Validate a network description and return the graph.

    ``spec`` holds ``nodes`` and ``edges`` lists as described in the README
    (network file format). Errors name the offending node or edge.
    """
    raw_nodes = spec.get("nodes", [])
    raw_edges = spec.get("edges", [])
    if not raw_nodes:
        raise InputError("network has no nodes")

    nodes = []
    seen = set()
    for rec in raw_nodes:
        nid = str(rec["id"])
        if nid in seen:
            raise InputError(f"duplicate node id {nid!r}")
        seen.add(nid)
        kind = rec.get("kind", "junction")
        side = rec.get("side")
        if kind not in NODE_KINDS:
            raise InputError(f"node {nid!r}: unknown kind {kind!r}")
        if side not in SIDES:
            raise InputError(f"node {nid!r}: side must be one of {SIDES}, got {side!r}")
        nodes.append(Node(nid, kind, side))
    side_of = {n.id: n.side for n in nodes}

    edges = []
    seen_e = set()
    for rec in raw_edges:
        eid = str(rec["id"])
        if eid in seen_e:
            raise InputError(f"duplicate edge id {eid!r}")
        seen_e.add(eid)
        kind = rec.get("kind")
        if kind not in EDGE_KINDS:
            raise InputError(f"edge {eid!r}: unknown kind {kind!r}")
        src, dst = str(rec.get("from")), str(rec.get("to"))
        for end in (src, dst):
            if end not in side_of:
                raise DanglingReference(f"edge {eid!r} references unknown node {end!r}")
        if src == dst:
            raise InputError(f"edge {eid!r} is a self-loop on {src!r}")
        entity = f"edge {eid!r}"
        if kind == "pipe":
            if side_of[src] != side_of[dst]:
                raise InputError(f"{entity}: pipe must connect nodes on the same side")
            roughness = float(rec.get("roughness", 1e-4))
            if roughness < 0:
                raise NonPositiveGeometry(f"{entity}: roughness must be >= 0")
            edge = Edge(
                eid, src, dst, kind,
                length=_positive(rec.get("length"), "length", entity),
                diameter=_positive(rec.get("diameter"), "diameter", entity),
                roughness=roughness,
                u_loss=_positive(rec.get("u"), "u", entity),
            )
        elif kind == "consumer":
            if side_of[src] != "feed" or side_of[dst] != "return":
                raise InputError(f"{entity}: consumer must bridge a feed node to a return node")
            edge = Edge(
                eid, src, dst, kind,
                ua=_positive(rec.get("ua"), "ua", entity),
                valve_diameter=_positive(rec.get("valve_diameter", 0.1), "valve_diameter", entity),
            )
        else:
            if side_of[src] != "return" or side_of[dst] != "feed":
                raise InputError(f"{entity}: producer must bridge a return node to a feed node")
            tech = rec.get("technology")
            if tech not in TECHNOLOGIES:
                raise InputError(f"{entity}: technology must be one of {TECHNOLOGIES}")
            if tech == "ST":
                a_max = _positive(rec.get("a_max"), "a_max", entity)
                # reference power for normalising the solar integration residual
                p_max = float(rec.get("p_max", 750.0 * a_max))
                t_min = t_max = None
            else:
                a_max = None
                p_max = _positive(rec.get("p_max"), "p_max", entity)
                t_min, t_max = float(rec.get("t_min", 40.0)), float(rec.get("t_max", 80.0))
                if not t_min < t_max:
                    raise InputError(f"{entity}: t_min must be below t_max")
            q_max = rec.get("q_max")
            edge = Edge(
                eid, src, dst, kind, technology=tech, p_max=p_max, a_max=a_max,
                t_min=t_min, t_max=t_max,
                q_max=None if q_max is None else _positive(q_max, "q_max", entity),
            )
        edges.append(edge)

    # undirected connectivity
    adj: dict[str, list[str]] = {n.id: [] for n in nodes}
    for e in edges:
        adj[e.source].append(e.target)
        adj[e.target].append(e.source)
    start = nodes[0].id
    reached = {start}
    queue = deque([start])
    while queue:
        n = queue.popleft()
        for m in adj[n]:
            if m not in reached:
                reached.add(m)
                queue.append(m)
    if len(reached) != len(nodes):
        missing = next(n.id for n in nodes if n.id not in reached)
        raise DisconnectedGraph(f"node {missing!r} is not connected to node {start!r}")

    return NetworkGraph(nodes, edges, name=str(spec.get("name", "")))


# --------------------------------------------------------------------------
# scenario


def load_parameters() -> dict:
    """Bundled producer fit coefficients and solar collector constants."""
    text = resources.files("dhretro.data").joinpath("parameters.json").read_text()
    return json.loads(text)


@dataclass(frozen=True)
class Scenario:
    """Economic and physical settings of one optimization run."""

    co2_price: float = 0.0  # EUR/kg
    prices: Mapping[str, float] = field(
        default_factory=lambda: {"gas": 0.0319, "electricity": 0.1}
    )  # EUR/kWh
    emission_factors: Mapping[str, float] = field(
        default_factory=lambda: {"gas": 0.181, "electricity": 0.181}
    )  # kg/kWh
    discount_rate: float = 0.05
    horizon: int = 30
    hours_per_year: float | None = None  # None: take K from the period set
    dp_max: float = 10e5
    rho: float = 983.0
    cp: float = 4185.0
    eta_pump: float = 0.81
    viscosity: float = 4.67e-4  # Pa s, water near 60 degC
    dp_sec: float = 1e5  # solar collector loop pressure drop
    p_ref: float = 2e5
    enabled: frozenset = frozenset(TECHNOLOGIES)
    fixed_phi: Mapping[str, float] = field(default_factory=dict)
    fixed_tau: Mapping[str, float] = field(default_factory=dict)  # degC, all periods
    # solar heat exchanger UA per collector area, W/(K m2); None sizes it from
    # the first active period for a 3 K approach
    solar_ua_per_area: float | None = None
    solar_approach: float = 3.0
    solar_min_irradiance: float = 50.0
    solar_min_efficiency: float = 0.05
    radiator_exponent: float = 1.3
    room_temperature: float = 20.0
    design_hot: float = 55.0
    design_cold: float = 35.0
    alpha_bounds: tuple[float, float] = (1.0, 1e6)
    parameters: Mapping[str, Any] = field(default_factory=load_parameters)

    def __post_init__(self):
        if self.co2_price < 0:
            raise InputError("co2_price must be >= 0")
        if any(v < 0 for v in self.prices.values()):
            raise InputError("prices must be >= 0")
        if any(v < 0 for v in self.emission_factors.values()):
            raise InputError("emission factors must be >= 0")
        if not 0 < self.discount_rate < 1:
            raise InputError("discount rate must lie in (0, 1)")
        if self.horizon < 1:
            raise InputError("horizon must be >= 1 year")
        if self.hours_per_year is not None and not 0 < self.hours_per_year <= 8760:
            raise InputError("hours_per_year must lie in (0, 8760]")
        if any(not 0 <= float(v) <= 1 for v in self.fixed_phi.values()):
            raise InputError("fixed capacity shares must lie in [0, 1]")
        bad = set(self.enabled) - set(TECHNOLOGIES)
        if bad:
            raise InputError(f"unknown technologies enabled: {sorted(bad)}")
        object.__setattr__(self, "enabled", frozenset(self.enabled))

    def with_overrides(self, **changes) -> "Scenario":
        return replace(self, **changes)

    def price(self, tech: str) -> float:
        return self.prices[CARRIER[tech]]

    def emission_factor(self, tech: str) -> float:
        return self.emission_factors[CARRIER[tech]]


# --------------------------------------------------------------------------
# design and state layouts


@dataclass(frozen=True)
class DesignSlice:
    """Design variables seen by one period: shared capacities plus that period's slice."""

    phi: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    tau: np.ndarray


@dataclass(frozen=True)
class DesignVector:
    """Capacities ``phi`` plus per-period valve settings, inflows and supply temperatures.

    ``alpha``, ``gamma`` and ``tau`` are 2-D with one row per period.
    """

    phi: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    tau: np.ndarray

    @property
    def n_periods(self) -> int:
        return self.alpha.shape[0]

    def period(self, t: int) -> DesignSlice:
        return DesignSlice(self.phi, self.alpha[t], self.gamma[t], self.tau[t])

    def to_flat(self) -> np.ndarray:
        blocks = [self.phi]
        for t in range(self.n_periods):
            blocks += [self.alpha[t], self.gamma[t], self.tau[t]]
        return np.concatenate(blocks).astype(float)


def design_size(graph: NetworkGraph, n_periods: int) -> int:
    """Flat design length: capacities, then per period valves, inflows, temperatures."""
    per = graph.n_consumers + graph.n_producers + graph.n_temp_controlled
    return graph.n_producers + n_periods * per


def _period_count(periods) -> int:
    return periods if isinstance(periods, (int, np.integer)) else len(periods)


def pack_design(phi, alpha, gamma, tau, periods, graph: NetworkGraph | None = None) -> DesignVector:
    """Assemble a :class:`DesignVector`, checking every block shape.

    ``periods`` is a period set or a period count. Without ``graph`` the
    block widths are taken from ``phi`` and the first rows.
    """
    n_t = _period_count(periods)
    if n_t < 1:
        raise ShapeMismatch("design needs at least one period")
    phi = np.asarray(phi, dtype=float).reshape(-1)
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
    tau = np.asarray(tau, dtype=float)
    tau = tau.reshape(n_t, -1) if tau.size == 0 else np.atleast_2d(tau)
    n_prod = graph.n_producers if graph else phi.size
    n_con = graph.n_consumers if graph else alpha.shape[1]
    n_tc = graph.n_temp_controlled if graph else tau.shape[1]
    expect = {
        "phi": ((n_prod,), phi.shape),
        "alpha": ((n_t, n_con), alpha.shape),
        "gamma": ((n_t, n_prod), gamma.shape),
        "tau": ((n_t, n_tc), tau.shape),
    }
    for name, (want, got) in expect.items():
        if tuple(want) != tuple(got):
            raise ShapeMismatch(f"{name}: expected shape {want}, got {got}")
    return DesignVector(phi.copy(), alpha.copy(), gamma.copy(), tau.copy())


def unpack_design(flat, graph: NetworkGraph, periods) -> DesignVector:
    n_t = _period_count(periods)
    if n_t < 1:
        raise ShapeMismatch("design needs at least one period")
    flat = np.asarray(flat, dtype=float)
    if flat.shape != (design_size(graph, n_t),):
        raise ShapeMismatch(
            f"flat design: expected length {design_size(graph, n_t)}, got {flat.shape}"
        )
    n_prod, n_con, n_tc = graph.n_producers, graph.n_consumers, graph.n_temp_controlled
    phi = flat[:n_prod]
    body = flat[n_prod:].reshape(n_t, n_con + n_prod + n_tc)
    return DesignVector(
        phi.copy(),
        body[:, :n_con].copy(),
        body[:, n_con:n_con + n_prod].copy(),
        body[:, n_con + n_prod:].copy(),
    )


@dataclass
class StateSlice:
    """Flows per edge, pressures per node, node and edge-exit temperatures above ambient."""

    q: np.ndarray
    p: np.ndarray
    theta_node: np.ndarray
    theta_exit: np.ndarray

    def to_flat(self) -> np.ndarray:
        return np.concatenate([self.q, self.p, self.theta_node, self.theta_exit])

    @classmethod
    def from_flat(cls, x, graph: NetworkGraph) -> "StateSlice":
        x = np.asarray(x, dtype=float)
        if x.shape != (graph.state_size,):
            raise ShapeMismatch(f"state: expected length {graph.state_size}, got {x.shape}")
        e, n = graph.n_edges, graph.n_nodes
        return cls(x[:e].copy(), x[e:e + n].copy(), x[e + n:e + 2 * n].copy(), x[e + 2 * n:].copy())

    def copy(self) -> "StateSlice":
        return StateSlice(self.q.copy(), self.p.copy(), self.theta_node.copy(), self.theta_exit.copy())


@dataclass
class StateVector:
    slices: list[StateSlice]

    def __len__(self):
        return len(self.slices)

    def __getitem__(self, t) -> StateSlice:
        return self.slices[t]
