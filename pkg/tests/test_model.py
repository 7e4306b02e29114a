"""
Test cases for the prosumer and EV battery model.

This module covers soc_step, degradation_cost, grid_cost, home_balance_residual and
the validation of the domain types.
"""

import numpy as np
import pytest

from v2x_stacking.core.exceptions import ValidationError
from v2x_stacking.core.model import (
    DecisionVector,
    EvSpec,
    ProsumerState,
    SlotDecision,
    Tariff,
    TimeGrid,
    check_node_groups,
    degradation_cost,
    grid_cost,
    home_balance_residual,
    soc_step,
)


class TestTimeGrid:
    """Test cases for TimeGrid."""

    def test_rejects_empty_day(self):
        with pytest.raises(ValidationError):
            TimeGrid(slots_per_day=0)

    def test_rejects_nonpositive_slot(self):
        with pytest.raises(ValidationError):
            TimeGrid(slot_hours=0)

    def test_day_starts_at_noon(self):
        grid = TimeGrid()
        assert grid.clock_hour(0) == 12.0
        assert grid.clock_hour(12) == 0.0
        assert grid.slot_of_hour(18) == 6
        # departure at 08:00 is slot 20; the last parked slot is 19
        assert grid.slot_of_hour(8) == 20


class TestEvSpec:
    """Test cases for EvSpec validation."""

    def test_defaults_request_desired_energy(self):
        spec = EvSpec()
        assert spec.soc_requested_final == spec.soc_desired_departure

    def test_soc_initial_above_capacity(self):
        with pytest.raises(ValidationError):
            EvSpec(soc_initial=60.0)

    def test_zero_discharge_efficiency(self):
        with pytest.raises(ValidationError):
            EvSpec(discharge_eff=0.0)

    def test_window_past_end_of_day(self):
        with pytest.raises(ValidationError):
            EvSpec(avail_start=10, avail_end=24).check(TimeGrid())

    def test_empty_window(self):
        spec = EvSpec(avail_start=5, avail_end=4)
        assert not spec.has_window
        assert not spec.parked_mask(24).any()

    def test_requested_final_above_desired(self):
        with pytest.raises(ValidationError):
            EvSpec(soc_requested_final=45.0).check(TimeGrid())


class TestSocStep:
    """Test cases for soc_step."""

    def test_identity(self):
        assert soc_step(20.0, 0.0, 0.0, EvSpec(), 1.0) == 20.0

    def test_charge(self):
        assert soc_step(20.0, 7.0, 0.0, EvSpec(charge_eff=0.95), 1.0) == pytest.approx(26.65)

    def test_discharge(self):
        assert soc_step(30.0, 0.0, 4.5, EvSpec(discharge_eff=0.9), 1.0) == pytest.approx(25.0)

    def test_negative_power(self):
        with pytest.raises(ValidationError):
            soc_step(20.0, -1.0, 0.0, EvSpec(), 1.0)

    def test_simultaneous_charge_and_discharge(self):
        with pytest.raises(ValidationError):
            soc_step(20.0, 1.0, 1.0, EvSpec(), 1.0)

    def test_affine_in_power(self):
        spec = EvSpec()
        base = soc_step(20.0, 0.0, 0.0, spec, 1.0)
        one = soc_step(20.0, 2.0, 0.0, spec, 1.0) - base
        two = soc_step(20.0, 4.0, 0.0, spec, 1.0) - base
        assert two == pytest.approx(2 * one)


class TestDegradationCost:
    """Test cases for degradation_cost."""

    def test_zero_traces(self):
        assert degradation_cost([0, 0], [0, 0], 0.01) == 0.0

    def test_direct_evaluation(self):
        assert degradation_cost([7, 0], [0, 7], 0.01) == pytest.approx(0.98)

    def test_zero_coefficient(self):
        assert degradation_cost([3, 4], [1, 2], 0.0) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            degradation_cost([1, 2, 3], [1, 2], 0.01)


class TestGridCost:
    """Test cases for grid_cost."""

    def test_tou(self):
        assert grid_cost([1, 1], Tariff.tou([0.2, 0.32])) == pytest.approx(0.52)

    def test_tpt(self):
        assert grid_cost([1, 2], Tariff.tpt(0.2, 0.8)) == pytest.approx(2.2)

    def test_zero_trace(self):
        assert grid_cost([0, 0], Tariff.tpt()) == 0.0

    def test_unset_kind(self):
        with pytest.raises(ValidationError):
            grid_cost([1.0], Tariff(kind=None))

    def test_tou_positive_homogeneity(self):
        tariff = Tariff.tou([0.1, 0.2, 0.3])
        trace = np.array([1.0, 2.0, 0.5])
        assert grid_cost(3.0 * trace, tariff) == pytest.approx(3.0 * grid_cost(trace, tariff))

    def test_tpt_convex(self):
        tariff = Tariff.tpt()
        rng = np.random.default_rng(7)
        for _ in range(50):
            a, b = rng.uniform(0, 5, 6), rng.uniform(0, 5, 6)
            lam = rng.uniform()
            mixed = grid_cost(lam * a + (1 - lam) * b, tariff)
            assert mixed <= lam * grid_cost(a, tariff) + (1 - lam) * grid_cost(b, tariff) + 1e-12


class TestHomeBalanceResidual:
    """Test cases for home_balance_residual."""

    def test_exact_balance(self):
        assert home_balance_residual(SlotDecision(p_grid=2.0), 2.0) == 0.0

    def test_v2h_covers_load_and_charging(self):
        d = SlotDecision(p_v2h=3.0, p_evd=3.0, p_evc=1.0)
        assert home_balance_residual(d, 2.0) == 0.0

    def test_shortfall(self):
        assert home_balance_residual(SlotDecision(p_grid=1.0), 2.0) == -1.0


class TestSlotDecision:
    """Test cases for SlotDecision validation."""

    def test_discharge_split_must_hold(self):
        with pytest.raises(ValidationError):
            SlotDecision(p_evd=2.0, p_v2h=1.0)

    def test_negative_power(self):
        with pytest.raises(ValidationError):
            SlotDecision(p_grid=-1.0)


class TestDecisionVector:
    """Test cases for DecisionVector helpers."""

    def test_window_and_frame(self):
        dv = DecisionVector.zeros(2, 4, start=3)
        dv.p_grid[:] = np.arange(8).reshape(2, 4)
        sub = dv.window(4, 6)
        assert sub.start == 4
        assert sub.p_grid.tolist() == [[1, 2], [5, 6]]
        frame = dv.to_frame(["a", "b"])
        assert len(frame) == 8
        assert frame["slot"].tolist()[:4] == [3, 4, 5, 6]

    def test_window_outside(self):
        with pytest.raises(ValidationError):
            DecisionVector.zeros(1, 2, start=0).window(1, 4)

    def test_cleaned_keeps_split(self):
        dv = DecisionVector.zeros(1, 1)
        dv.p_v2h[:] = 1.0
        dv.p_sell[:] = 1e-9
        dv.p_evd[:] = 1.0 + 1e-9
        dv.p_grid[:] = -1e-8
        cleaned = dv.cleaned()
        assert cleaned.p_sell[0, 0] == 0.0
        assert cleaned.p_grid[0, 0] == 0.0
        assert cleaned.p_evd[0, 0] == 1.0


class TestNodeGroups:
    """Test cases for check_node_groups."""

    def _prosumer(self, pid: str, node: int) -> ProsumerState:
        return ProsumerState(id=pid, node=node, ev=EvSpec(), load_trace=np.zeros(24), pv_cap_trace=np.zeros(24))

    def test_groups_partition(self):
        groups = check_node_groups([self._prosumer("a", 4), self._prosumer("b", 4), self._prosumer("c", 25)])
        assert groups == {4: ["a", "b"], 25: ["c"]}

    def test_duplicate_id(self):
        with pytest.raises(ValidationError):
            check_node_groups([self._prosumer("a", 4), self._prosumer("a", 25)])

    def test_negative_trace(self):
        with pytest.raises(ValidationError):
            ProsumerState(id="x", node=1, ev=EvSpec(), load_trace=-np.ones(24), pv_cap_trace=np.zeros(24))
