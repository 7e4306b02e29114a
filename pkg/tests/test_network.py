"""
Test cases for the linearized distribution network.
"""

import numpy as np
import pytest

from v2x_stacking.core.exceptions import NetworkError, SchemaError, ValidationError
from v2x_stacking.core.model import DecisionVector, EvSpec, ProsumerState
from v2x_stacking.core.network import (
    NetworkTopology,
    check_limits,
    ieee33,
    load_topology,
    net_loads,
    node_net_load,
    propagate,
    resolve_topology,
)


def line_feeder(n: int = 3, r: float = 0.01, x: float = 0.01, **kwargs) -> NetworkTopology:
    """Straight feeder 0 - 1 - ... - n-1 with identical branches and no inflexible load."""
    return NetworkTopology(
        parent=tuple([-1] + list(range(n - 1))),
        r_pu=np.r_[0.0, np.full(n - 1, r)],
        x_pu=np.r_[0.0, np.full(n - 1, x)],
        base_p_kw=np.zeros(n),
        base_q_kvar=np.zeros(n),
        load_profile=np.ones(1),
        **kwargs,
    )


def prosumer(pid: str, node: int) -> ProsumerState:
    return ProsumerState(id=pid, node=node, ev=EvSpec(), load_trace=np.zeros(24), pv_cap_trace=np.zeros(24))


class TestTopology:
    """Test cases for NetworkTopology construction."""

    def test_ieee33_shape(self):
        topo = ieee33()
        assert topo.n_nodes == 33
        assert topo.community_nodes == (4, 25, 32)
        assert topo.base_p_kw.sum() == pytest.approx(3715.0)

    def test_non_radial(self):
        with pytest.raises(NetworkError):
            NetworkTopology(parent=(-1, 2, 1), r_pu=np.zeros(3), x_pu=np.zeros(3),
                            base_p_kw=np.zeros(3), base_q_kvar=np.zeros(3))

    def test_negative_impedance(self):
        with pytest.raises(NetworkError):
            line_feeder(r=-0.01)

    def test_crossed_voltage_limits(self):
        with pytest.raises(NetworkError):
            line_feeder(v_min=1.05, v_max=0.95)

    def test_unknown_community_node(self):
        with pytest.raises(NetworkError):
            ieee33(community_nodes=(4, 40))

    def test_load_topology_csv(self, tmp_path):
        path = tmp_path / "feeder.csv"
        path.write_text(
            "from_node,to_node,r_pu,x_pu,p_load_kw,q_load_kvar\n"
            "0,1,0.01,0.01,0,0\n"
            "1,2,0.01,0.01,1000,0\n"
        )
        topo = resolve_topology(str(path), community_nodes=(2,))
        assert topo.n_nodes == 3
        assert topo.community_nodes == (2,)
        assert topo.base_p_kw[2] == 1000

    def test_load_topology_missing_columns(self, tmp_path):
        path = tmp_path / "feeder.csv"
        path.write_text("from_node,to_node\n0,1\n")
        with pytest.raises(SchemaError):
            load_topology(path)

    def test_load_topology_missing_file(self, tmp_path):
        with pytest.raises(NetworkError):
            load_topology(tmp_path / "absent.csv")


class TestNodeNetLoad:
    """Test cases for node_net_load."""

    def _topology(self, inflexible_kw: float) -> NetworkTopology:
        topo = line_feeder(2)
        return NetworkTopology(
            parent=topo.parent, r_pu=topo.r_pu, x_pu=topo.x_pu,
            base_p_kw=np.array([0.0, inflexible_kw]), base_q_kvar=np.zeros(2), load_profile=np.ones(1),
        )

    def test_empty_group(self):
        assert node_net_load(self._topology(100.0), [], DecisionVector.zeros(0, 1), 1, 0) == 100.0

    def test_grid_import_adds(self):
        dv = DecisionVector.zeros(1, 1)
        dv.p_grid[:] = 7.0
        assert node_net_load(self._topology(50.0), [prosumer("a", 1)], dv, 1, 0) == 57.0

    def test_v2g_export_can_go_negative(self):
        dv = DecisionVector.zeros(1, 1)
        dv.p_v2g[:] = 15.0
        dv.p_evd[:] = 15.0
        assert node_net_load(self._topology(10.0), [prosumer("a", 1)], dv, 1, 0) == -5.0

    def test_unknown_node(self):
        with pytest.raises(NetworkError):
            node_net_load(self._topology(10.0), [], DecisionVector.zeros(0, 1), 5, 0)

    def test_slot_outside_window(self):
        with pytest.raises(ValidationError):
            node_net_load(self._topology(10.0), [], DecisionVector.zeros(0, 1), 1, 3)

    def test_net_loads_matches_per_node(self):
        topo = ieee33()
        prosumers = [prosumer("a", 4), prosumer("b", 4), prosumer("c", 25)]
        dv = DecisionVector.zeros(3, 2, start=5)
        dv.p_grid[:] = [[1.0, 2.0], [3.0, 0.0], [0.5, 0.5]]
        dv.p_sell[2] = 1.0
        dv.p_evd[2] = 1.0
        loads = net_loads(topo, prosumers, dv)
        for node in (0, 4, 25, 32):
            for k, slot in enumerate(dv.slots):
                assert loads[node, k] == pytest.approx(node_net_load(topo, prosumers, dv, node, slot))


class TestPropagate:
    """Test cases for propagate."""

    def test_no_load(self):
        flow = propagate(line_feeder(), np.zeros((3, 2)))
        assert np.all(flow.p_flow == 0)
        assert np.all(flow.voltage == 1.0)

    def test_three_node_feeder(self):
        topo = line_feeder()
        loads = np.array([[0.0], [0.0], [0.1 * topo.base_kw]])
        flow = propagate(topo, loads)
        assert flow.p_flow[1, 0] == pytest.approx(0.1)
        assert flow.p_flow[2, 0] == pytest.approx(0.1)
        assert flow.voltage[:, 0] == pytest.approx([1.0, 0.999, 0.998], abs=1e-12)

    def test_ieee33_head_flow(self):
        topo = ieee33()
        flow = propagate(topo, topo.inflexible_p, topo.inflexible_q)
        assert flow.head_flow == pytest.approx(np.full(24, 0.3715), abs=1e-9)

    def test_wrong_row_count(self):
        with pytest.raises(NetworkError):
            propagate(line_feeder(), np.zeros((2, 1)))

    def test_superposition(self):
        topo = ieee33()
        rng = np.random.default_rng(11)
        for _ in range(1000):
            a, b = rng.uniform(-200, 200, (2, 33, 1))
            s, t = rng.uniform(-2, 2, 2)
            combined = propagate(topo, s * a + t * b)
            fa, fb = propagate(topo, a), propagate(topo, b)
            assert combined.p_flow == pytest.approx(s * fa.p_flow + t * fb.p_flow, abs=1e-12)
            deviation = combined.voltage - 1.0
            assert deviation == pytest.approx(s * (fa.voltage - 1.0) + t * (fb.voltage - 1.0), abs=1e-12)

    def test_conservation(self):
        topo = ieee33()
        rng = np.random.default_rng(3)
        loads = rng.uniform(-100, 300, (33, 4))
        flow = propagate(topo, loads)
        assert flow.head_flow == pytest.approx(loads.sum(axis=0) / topo.base_kw)

    def test_added_load_lowers_voltages(self):
        topo = ieee33()
        rng = np.random.default_rng(5)
        for _ in range(1000):
            base = rng.uniform(0, 200, (33, 1))
            extra = np.zeros((33, 1))
            extra[rng.integers(1, 33)] = rng.uniform(0, 100)
            before = propagate(topo, base).voltage
            after = propagate(topo, base + extra).voltage
            assert np.all(after <= before + 1e-15)


class TestCheckLimits:
    """Test cases for check_limits."""

    def test_no_load_feasible(self):
        topo = line_feeder()
        assert check_limits(propagate(topo, np.zeros((3, 1))), topo) == []

    def test_voltage_violation_at_leaf(self):
        topo = line_feeder(2, r=0.3, x=0.0)
        flow = propagate(topo, np.array([[0.0], [0.2 * topo.base_kw]]))
        violations = check_limits(flow, topo)
        assert len(violations) == 1
        v = violations[0]
        assert (v.element, v.index, v.quantity) == ("node", 1, "v")
        assert v.value == pytest.approx(0.94)
        assert v.bound == 0.95

    def test_head_branch_flow_violation(self):
        topo = ieee33(p_max_pu=0.3)
        flow = propagate(topo, topo.inflexible_p, topo.inflexible_q)
        flows = [v for v in check_limits(flow, topo) if v.element == "branch" and v.quantity == "p"]
        assert any(v.index == 1 and v.value == pytest.approx(0.3715) for v in flows)
        assert {v.slot for v in flows if v.index == 1} == set(range(24))
