"""
Linearized radial distribution network (LinDistFlow) for v2x-stacking.

Node 0 is the slack bus. Branch j is the branch feeding node j from its parent, so
branch quantities are indexed by their downstream node. Index 0 of the flow arrays
holds the feeder head injection.
"""

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import networkx as nx
import numpy as np
import pandas as pd

from v2x_stacking.core.exceptions import NetworkError, SchemaError, ValidationError
from v2x_stacking.core.model import DecisionVector, ProsumerState
from v2x_stacking.utils import get_logger

logger = get_logger(__name__)

TOPOLOGY_COLUMNS = ["from_node", "to_node", "r_pu", "x_pu", "p_load_kw", "q_load_kvar"]

# Baran & Wu 33-bus feeder: (from_bus, to_bus, r_ohm, x_ohm, p_kw, q_kvar) for the to_bus
_IEEE33_BRANCHES = [
    (1, 2, 0.0922, 0.0470, 100, 60),
    (2, 3, 0.4930, 0.2511, 90, 40),
    (3, 4, 0.3660, 0.1864, 120, 80),
    (4, 5, 0.3811, 0.1941, 60, 30),
    (5, 6, 0.8190, 0.7070, 60, 20),
    (6, 7, 0.1872, 0.6188, 200, 100),
    (7, 8, 0.7114, 0.2351, 200, 100),
    (8, 9, 1.0300, 0.7400, 60, 20),
    (9, 10, 1.0440, 0.7400, 60, 20),
    (10, 11, 0.1966, 0.0650, 45, 30),
    (11, 12, 0.3744, 0.1238, 60, 35),
    (12, 13, 1.4680, 1.1550, 60, 35),
    (13, 14, 0.5416, 0.7129, 120, 80),
    (14, 15, 0.5910, 0.5260, 60, 10),
    (15, 16, 0.7463, 0.5450, 60, 20),
    (16, 17, 1.2890, 1.7210, 60, 20),
    (17, 18, 0.7320, 0.5740, 90, 40),
    (2, 19, 0.1640, 0.1565, 90, 40),
    (19, 20, 1.5042, 1.3554, 90, 40),
    (20, 21, 0.4095, 0.4784, 90, 40),
    (21, 22, 0.7089, 0.9373, 90, 40),
    (3, 23, 0.4512, 0.3083, 90, 50),
    (23, 24, 0.8980, 0.7091, 420, 200),
    (24, 25, 0.8960, 0.7011, 420, 200),
    (6, 26, 0.2030, 0.1034, 60, 25),
    (26, 27, 0.2842, 0.1447, 60, 25),
    (27, 28, 1.0590, 0.9337, 60, 20),
    (28, 29, 0.8042, 0.7006, 120, 70),
    (29, 30, 0.5075, 0.2585, 200, 600),
    (30, 31, 0.9744, 0.9630, 150, 70),
    (31, 32, 0.3105, 0.3619, 210, 100),
    (32, 33, 0.3410, 0.5302, 60, 40),
]


@dataclass(frozen=True, eq=False)
class NetworkTopology:
    """Radial feeder with per-node branch impedance, inflexible load and limits."""

    parent: tuple[int, ...]
    r_pu: np.ndarray
    x_pu: np.ndarray
    base_p_kw: np.ndarray
    base_q_kvar: np.ndarray
    load_profile: np.ndarray = field(default_factory=lambda: np.ones(24))
    base_power_mva: float = 10.0
    base_voltage_kv: float = 12.66
    slack_voltage: float = 1.0
    p_min_pu: float = -1.0
    p_max_pu: float = 1.0
    q_min_pu: float = -1.0
    q_max_pu: float = 1.0
    v_min: float | np.ndarray = 0.95
    v_max: float | np.ndarray = 1.05
    community_nodes: tuple[int, ...] = ()
    name: str = "custom"

    def __post_init__(self):
        n = len(self.parent)
        arrays = {}
        for key in ("r_pu", "x_pu", "base_p_kw", "base_q_kvar"):
            arr = np.asarray(getattr(self, key), dtype=float)
            if arr.shape != (n,):
                raise NetworkError(f"{key} must have one entry per node ({n}), got {arr.shape}")
            arrays[key] = arr
        if (arrays["r_pu"] < 0).any() or (arrays["x_pu"] < 0).any():
            raise NetworkError("Branch resistance and reactance must be nonnegative")
        for key in ("v_min", "v_max"):
            arrays[key] = np.broadcast_to(np.asarray(getattr(self, key), dtype=float), (n,)).copy()
        if (arrays["v_min"] >= arrays["v_max"]).any():
            raise NetworkError("Voltage limits need V_min < V_max at every node")
        arrays["load_profile"] = np.asarray(self.load_profile, dtype=float)
        for key, value in arrays.items():
            object.__setattr__(self, key, value)
        _check_radial(self.parent)
        for node in self.community_nodes:
            if not 0 <= node < n:
                raise NetworkError(f"Community node {node} is not in the topology (0..{n - 1})")
        object.__setattr__(self, "_paths", _path_matrix(self.parent))

    @property
    def n_nodes(self) -> int:
        return len(self.parent)

    @property
    def nodes(self) -> range:
        return range(self.n_nodes)

    @property
    def n_slots(self) -> int:
        return len(self.load_profile)

    @property
    def base_kw(self) -> float:
        return self.base_power_mva * 1000.0

    @property
    def inflexible_p(self) -> np.ndarray:
        """Inflexible active load in kW, shape (nodes, slots)."""
        return np.outer(self.base_p_kw, self.load_profile)

    @property
    def inflexible_q(self) -> np.ndarray:
        """Inflexible reactive load in kvar, shape (nodes, slots)."""
        return np.outer(self.base_q_kvar, self.load_profile)

    @property
    def path_matrix(self) -> np.ndarray:
        """M[j, b] = 1 when branch b lies on the path from the slack to node j."""
        return self._paths

    def with_profile(self, profile: Sequence[float]) -> "NetworkTopology":
        return replace(self, load_profile=np.asarray(profile, dtype=float))

    def with_communities(self, nodes: Sequence[int]) -> "NetworkTopology":
        return replace(self, community_nodes=tuple(int(n) for n in nodes))

    def check_node(self, node: int) -> int:
        if not 0 <= node < self.n_nodes:
            raise NetworkError(f"Unknown node {node}; topology has nodes 0..{self.n_nodes - 1}")
        return node

    def voltage_sensitivity(self, nodes: Sequence[int]) -> np.ndarray:
        """Shared path resistance between every node and each of ``nodes`` (pu), shape (n, len(nodes))."""
        m = self.path_matrix
        return (m * self.r_pu) @ m[list(nodes)].T


@dataclass(frozen=True, eq=False)
class FlowState:
    """Branch flows and nodal voltages for consecutive slots starting at ``start``."""

    p_flow: np.ndarray
    q_flow: np.ndarray
    voltage: np.ndarray
    slack_voltage: float = 1.0
    start: int = 0

    @property
    def n_slots(self) -> int:
        return self.voltage.shape[1]

    @property
    def head_flow(self) -> np.ndarray:
        return self.p_flow[0]


@dataclass(frozen=True)
class LimitViolation:
    """One violated network bound."""

    element: str
    index: int
    slot: int
    quantity: str
    value: float
    bound: float

    def as_dict(self) -> dict:
        return {
            "element": self.element,
            "index": self.index,
            "slot": self.slot,
            "quantity": self.quantity,
            "value": self.value,
            "bound": self.bound,
        }


def _check_radial(parent: Sequence[int]) -> None:
    n = len(parent)
    if n == 0:
        raise NetworkError("Topology has no nodes")
    if parent[0] != -1:
        raise NetworkError("Node 0 must be the slack (no parent)")
    graph = nx.DiGraph()
    graph.add_nodes_from(range(n))
    for child, par in enumerate(parent):
        if child == 0:
            continue
        if not 0 <= par < n:
            raise NetworkError(f"Node {child} has unknown parent {par}")
        graph.add_edge(par, child)
    if not nx.is_arborescence(graph):
        raise NetworkError("Topology is not radial: every non-slack node needs exactly one parent and a path to node 0")


def _path_matrix(parent: Sequence[int]) -> np.ndarray:
    n = len(parent)
    m = np.zeros((n, n))
    for j in range(1, n):
        node = j
        while node != 0:
            m[j, node] = 1.0
            node = parent[node]
    return m


def ieee33(
    load_profile: Sequence[float] | None = None,
    community_nodes: Sequence[int] = (4, 25, 32),
    **limits,
) -> NetworkTopology:
    """Built-in Baran & Wu 33-bus feeder (10 MVA, 12.66 kV), buses 1..33 mapped to nodes 0..32."""
    base_mva, base_kv = 10.0, 12.66
    z_base = base_kv ** 2 / base_mva
    n = len(_IEEE33_BRANCHES) + 1
    parent = [-1] * n
    r = np.zeros(n)
    x = np.zeros(n)
    p = np.zeros(n)
    q = np.zeros(n)
    for from_bus, to_bus, r_ohm, x_ohm, p_kw, q_kvar in _IEEE33_BRANCHES:
        j = to_bus - 1
        parent[j] = from_bus - 1
        r[j] = r_ohm / z_base
        x[j] = x_ohm / z_base
        p[j] = p_kw
        q[j] = q_kvar
    profile = np.ones(24) if load_profile is None else np.asarray(load_profile, dtype=float)
    return NetworkTopology(
        parent=tuple(parent),
        r_pu=r,
        x_pu=x,
        base_p_kw=p,
        base_q_kvar=q,
        load_profile=profile,
        base_power_mva=base_mva,
        base_voltage_kv=base_kv,
        community_nodes=tuple(community_nodes),
        name="ieee33",
        **limits,
    )


def load_topology(path: str | Path, **kwargs) -> NetworkTopology:
    """Read a topology from CSV or JSON (records) with columns
    from_node, to_node, r_pu, x_pu, p_load_kw, q_load_kvar."""
    path = Path(path)
    if not path.exists():
        raise NetworkError(f"Topology file not found: {path}")
    if path.suffix.lower() == ".json":
        with open(path, encoding="utf-8") as f:
            frame = pd.DataFrame(json.load(f))
    else:
        frame = pd.read_csv(path)
    missing = [c for c in TOPOLOGY_COLUMNS if c not in frame.columns]
    if missing:
        raise SchemaError(f"Topology file {path.name} is missing columns: {', '.join(missing)}")
    n = len(frame) + 1
    if frame["to_node"].duplicated().any():
        raise NetworkError("Topology is not radial: a node has more than one parent")
    if set(frame["to_node"].astype(int)) != set(range(1, n)):
        raise NetworkError(f"Topology nodes must be numbered 0..{n - 1} with node 0 as slack")
    parent = [-1] * n
    r, x, p, q = (np.zeros(n) for _ in range(4))
    for row in frame.itertuples(index=False):
        j = int(row.to_node)
        parent[j] = int(row.from_node)
        r[j], x[j], p[j], q[j] = row.r_pu, row.x_pu, row.p_load_kw, row.q_load_kvar
    logger.debug(f"Loaded topology {path.name} with {n} nodes")
    return NetworkTopology(
        parent=tuple(parent), r_pu=r, x_pu=x, base_p_kw=p, base_q_kvar=q, name=path.stem, **kwargs
    )


def resolve_topology(ref: str, **kwargs) -> NetworkTopology:
    """Named built-in topology or a file path."""
    if ref.lower() == "ieee33":
        return ieee33(**kwargs)
    return load_topology(ref, **{k: v for k, v in kwargs.items() if k != "community_nodes"}).with_communities(
        kwargs.get("community_nodes", ())
    )


def node_net_load(
    topology: NetworkTopology,
    prosumers: Sequence[ProsumerState],
    decisions: DecisionVector,
    node: int,
    slot: int,
) -> float:
    """Net active load at ``node`` in ``slot`` (kW); negative when prosumers export."""
    topology.check_node(node)
    k = slot - decisions.start
    if not 0 <= k < decisions.shape[1]:
        raise ValidationError(f"Slot {slot} outside decision window {decisions.slots}")
    total = float(topology.inflexible_p[node, slot]) if slot < topology.n_slots else 0.0
    for u, p in enumerate(prosumers):
        if p.node == node:
            total += (
                decisions.p_grid[u, k] + decisions.p_buy[u, k]
                - decisions.p_sell[u, k] - decisions.p_v2g[u, k]
            )
    return total


def net_loads(
    topology: NetworkTopology,
    prosumers: Sequence[ProsumerState],
    decisions: DecisionVector,
) -> np.ndarray:
    """Net active load of every node for every slot of ``decisions`` (kW), shape (nodes, slots)."""
    slots = list(decisions.slots)
    loads = topology.inflexible_p[:, slots].copy()
    exchange = decisions.p_grid + decisions.p_buy - decisions.p_sell - decisions.p_v2g
    for u, p in enumerate(prosumers):
        loads[topology.check_node(p.node)] += exchange[u]
    return loads


def propagate(
    topology: NetworkTopology,
    net_p_kw: np.ndarray,
    net_q_kvar: np.ndarray | None = None,
    start: int = 0,
) -> FlowState:
    """LinDistFlow: branch flows as subtree sums, voltages by the linear drop from the slack."""
    p_kw = np.atleast_2d(np.asarray(net_p_kw, dtype=float))
    if p_kw.shape[0] != topology.n_nodes:
        raise NetworkError(f"Net loads need {topology.n_nodes} rows, got {p_kw.shape[0]}")
    q_kvar = np.zeros_like(p_kw) if net_q_kvar is None else np.atleast_2d(np.asarray(net_q_kvar, dtype=float))
    if q_kvar.shape != p_kw.shape:
        raise NetworkError("Active and reactive net loads differ in shape")
    p_load = p_kw / topology.base_kw
    q_load = q_kvar / topology.base_kw
    m = topology.path_matrix
    p_flow = m.T @ p_load
    q_flow = m.T @ q_load
    p_flow[0] = p_load.sum(axis=0)
    q_flow[0] = q_load.sum(axis=0)
    v0 = topology.slack_voltage
    drop = (topology.r_pu[:, None] * p_flow + topology.x_pu[:, None] * q_flow) / v0
    drop[0] = 0.0
    voltage = v0 - m @ drop
    return FlowState(p_flow=p_flow, q_flow=q_flow, voltage=voltage, slack_voltage=v0, start=start)


def check_limits(flow: FlowState, topology: NetworkTopology) -> list[LimitViolation]:
    """Every violated flow or voltage bound; an empty list means the state is network-feasible."""
    violations: list[LimitViolation] = []
    tol = 1e-9
    branch_checks = (
        ("p", flow.p_flow, topology.p_min_pu, topology.p_max_pu),
        ("q", flow.q_flow, topology.q_min_pu, topology.q_max_pu),
    )
    for quantity, values, lo, hi in branch_checks:
        for j, k in zip(*np.nonzero(values[1:] > hi + tol)):
            violations.append(LimitViolation("branch", int(j) + 1, flow.start + int(k), quantity,
                                             float(values[j + 1, k]), hi))
        for j, k in zip(*np.nonzero(values[1:] < lo - tol)):
            violations.append(LimitViolation("branch", int(j) + 1, flow.start + int(k), quantity,
                                             float(values[j + 1, k]), lo))
    v = flow.voltage
    for j, k in zip(*np.nonzero(v > topology.v_max[:, None] + tol)):
        violations.append(LimitViolation("node", int(j), flow.start + int(k), "v", float(v[j, k]),
                                         float(topology.v_max[j])))
    for j, k in zip(*np.nonzero(v < topology.v_min[:, None] - tol)):
        violations.append(LimitViolation("node", int(j), flow.start + int(k), "v", float(v[j, k]),
                                         float(topology.v_min[j])))
    return violations
