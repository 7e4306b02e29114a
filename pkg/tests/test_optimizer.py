"""
Test cases for problem assembly, integer handling, realization and cost evaluation.

Small instances are checked against brute-force enumeration of the complementarity
pairs; every enumerated leaf is a convex QP solved to optimality.
"""

import itertools
from dataclasses import replace

import numpy as np
import pytest
import scipy.sparse as sp

from v2x_stacking.core import optimizer
from v2x_stacking.core.exceptions import ValidationError
from v2x_stacking.core.forecast import ForecastSeries
from v2x_stacking.core.metrics import baseline_toggles
from v2x_stacking.core.model import DECISION_FIELDS, DecisionVector, EvSpec, ProsumerState, Tariff
from v2x_stacking.core.network import check_limits, ieee33, net_loads, propagate
from v2x_stacking.core.optimizer import (
    MiqpLimits,
    assemble,
    evaluate_cost,
    realize,
    solve_miqp,
    violated_pairs,
)
from v2x_stacking.core.qp import QpProblem, QpSettings, SolveStatus, solve_qp
from v2x_stacking.core.scenario import build_day
from v2x_stacking.core.streams import MarketPrices, StreamToggle

OPTS = QpSettings()
LIMITS = MiqpLimits()
TOU = (0.1, 0.3, 0.2)


def household(pid: str = "a", load=(1.0, 2.0, 1.0), pv=None, node: int = 4, **ev) -> ProsumerState:
    spec = {"avail_start": 0, "avail_end": len(load) - 1, "soc_initial": 25.0, "soc_desired_departure": 25.0}
    spec.update(ev)
    return ProsumerState(
        id=pid,
        node=node,
        ev=EvSpec(**spec),
        load_trace=np.asarray(load, dtype=float),
        pv_cap_trace=np.zeros(len(load)) if pv is None else np.asarray(pv, dtype=float),
    )


def small_day(prosumers, streams: str = "v2h,v2g,et", tariff: Tariff | None = None, topology=None):
    T = len(prosumers[0].load_trace)
    retail = list(TOU[:T]) if T <= len(TOU) else [0.2] * T
    prices = MarketPrices.from_retail(retail, 0.04, np.linspace(0.15, 0.25, T))
    return build_day(
        prosumers,
        tariff or Tariff.tou(retail),
        prices,
        StreamToggle.parse(streams),
        topology=topology,
    )


def brute_force(problem) -> float:
    """Best objective over every assignment of which pair member is forced to zero."""
    best = np.inf
    for choice in itertools.product((0, 1), repeat=len(problem.pairs)):
        zero = [pair[side] for pair, side in zip(problem.pairs, choice)]
        report = solve_qp(problem.with_zero_columns(zero), OPTS)
        if report.status is SolveStatus.OPTIMAL:
            best = min(best, report.objective)
    return best


def random_day(seed: int, toggle: StreamToggle | None = None):
    """One or two households over two or three slots with at most eight pairs."""
    rng = np.random.default_rng(seed)
    count = int(rng.integers(1, 3))
    T = 2 if count == 2 else int(rng.integers(2, 4))
    prosumers = []
    for k in range(count):
        start = int(rng.integers(0, T))
        soc = float(rng.uniform(20.0, 30.0))
        prosumers.append(household(
            f"h{k}",
            load=rng.uniform(0.2, 4.0, T),
            pv=rng.uniform(0.0, 3.0, T) if rng.random() < 0.5 else None,
            avail_start=start,
            avail_end=int(rng.integers(start, T)),
            soc_initial=soc,
            soc_desired_departure=soc + float(rng.uniform(-5.0, 5.0)),
        ))
    retail = rng.uniform(0.1, 0.35, T)
    prices = MarketPrices.from_retail(retail, 0.04, rng.uniform(0.1, 0.3, T))
    return build_day(prosumers, Tariff.tou(retail), prices, toggle or StreamToggle.all())


class TestAssemble:
    """Test cases for assemble."""

    def test_column_count(self):
        day = small_day([household("a"), household("b")])
        problem = assemble(day)
        assert problem.index.n_core == 2 * 3 * len(DECISION_FIELDS)
        assert problem.n == problem.index.n_core
        assert len(problem.columns) == problem.n

    def test_pairs_only_for_parked_slots(self):
        day = small_day([household("a"), household("b", avail_start=1, avail_end=1)])
        problem = assemble(day)
        kinds = [kind for _, _, kind in problem.pairs]
        assert kinds.count("x") == 4
        assert kinds.count("y") == 4

    def test_no_trading_pairs_without_trading(self):
        problem = assemble(small_day([household("a")], streams="v2h,v2g"))
        assert {kind for _, _, kind in problem.pairs} == {"x"}

    def test_disabled_streams_have_zero_bounds(self):
        problem = assemble(small_day([household("a")], streams="none"))
        index = problem.index
        for slot in index.slots:
            for name in ("p_v2h", "p_v2g", "p_as", "p_buy", "p_sell"):
                assert problem.ub[index.col(0, slot, name)] == 0.0

    def test_peak_column_under_two_part_tariff(self):
        problem = assemble(small_day([household("a")], tariff=Tariff.tpt(0.2, 0.8)))
        assert problem.index.with_peak
        assert problem.q[problem.index.peak(0)] == pytest.approx(0.8)

    def test_empty_window(self):
        with pytest.raises(ValidationError):
            assemble(small_day([household("a")]), range(2, 2))

    def test_window_past_end_of_day(self):
        with pytest.raises(ValidationError):
            assemble(small_day([household("a")]), range(1, 5))

    def test_forecasts_must_cover_window(self):
        short = ForecastSeries(load=np.ones((1, 1)), pv=np.zeros((1, 1)), origin=0, start=0)
        with pytest.raises(ValidationError):
            assemble(small_day([household("a")]), range(0, 3), forecasts=short)

    def test_unreachable_departure_is_soft(self):
        day = small_day([household("a", soc_initial=0.0, soc_desired_departure=40.0)])
        problem = assemble(day)
        assert problem.diagnostics and problem.diagnostics[0].startswith("soft_departure:a:")
        assert 0 in problem.index.slack
        report = solve_miqp(problem, "branch", LIMITS, OPTS)
        assert report.ok
        # charge at the maximum rate in every parked slot
        assert report.decisions.soc[0, -1] == pytest.approx(3 * 7.0 * 0.95, abs=1e-3)
        assert report.diagnostics[0].startswith("soft_departure:a:")


class TestSolveMiqp:
    """Test cases for solve_miqp."""

    def test_grid_only_household(self):
        prosumer = ProsumerState(
            id="a", node=4, ev=EvSpec(avail_start=0, avail_end=-1),
            load_trace=np.ones(2), pv_cap_trace=np.zeros(2),
        )
        day = build_day([prosumer], Tariff.tou([0.2, 0.32]),
                        MarketPrices.from_retail([0.2, 0.32], 0.04, [0.1, 0.1]), StreamToggle.none())
        problem = assemble(day)
        index = problem.index
        for slot in index.slots:
            assert problem.ub[index.col(0, slot, "p_evc")] == 0.0
            assert problem.ub[index.col(0, slot, "p_evd")] == 0.0
        report = solve_miqp(problem, "repair", LIMITS, OPTS)
        assert report.ok
        assert report.objective == pytest.approx(0.52, abs=1e-4)
        assert report.binaries_fixed_by == "natural"

    def test_idle_day_costs_nothing(self):
        day = small_day([household("a", load=(0.0, 0.0, 0.0), soc_initial=40.0, soc_desired_departure=40.0)],
                        streams="none")
        report = solve_miqp(assemble(day), "repair", LIMITS, OPTS)
        assert report.ok
        assert report.objective == pytest.approx(0.0, abs=1e-5)
        for name in DECISION_FIELDS[:-1]:
            assert np.abs(report.decisions.field(name)).max() == pytest.approx(0.0, abs=1e-5)

    def test_unknown_mode(self):
        with pytest.raises(ValidationError):
            solve_miqp(assemble(small_day([household("a")])), "greedy", LIMITS, OPTS)

    def test_branch_matches_enumeration(self):
        problem = assemble(small_day([household("a")]))
        assert len(problem.pairs) == 6
        report = solve_miqp(problem, "branch", LIMITS, OPTS)
        assert report.ok
        assert report.objective == pytest.approx(brute_force(problem), abs=1e-3)

    def test_unsolved_child_is_not_optimal(self, monkeypatch):
        # f = (x0 - 1)^2 + (x1 - 2)^2; zeroing x0 costs 1, zeroing x1 costs 4
        problem = QpProblem(
            P=2.0 * sp.identity(2, format="csc"), q=np.array([-2.0, -4.0]), A=sp.csc_matrix((0, 2)),
            l=np.zeros(0), u=np.zeros(0), lb=np.zeros(2), ub=np.full(2, 5.0), constant=5.0,
            pairs=[(0, 1, "x")],
        )
        exact = solve_miqp(problem, "branch", LIMITS, OPTS)
        assert exact.status is SolveStatus.OPTIMAL
        assert exact.objective == pytest.approx(1.0, abs=1e-4)

        def stalled(child, opts):
            report = solve_qp(child, opts)
            return replace(report, status=SolveStatus.ITER_LIMIT) if child.ub[0] == 0.0 else report

        monkeypatch.setattr(optimizer, "solve_qp", stalled)
        report = solve_miqp(problem, "branch", LIMITS, OPTS)
        assert report.status is SolveStatus.ITER_LIMIT
        assert report.objective == pytest.approx(4.0, abs=1e-4)

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", range(50))
    def test_branch_matches_enumeration_on_random_days(self, seed):
        problem = assemble(random_day(seed))
        assert 0 < len(problem.pairs) <= 8
        report = solve_miqp(problem, "branch", LIMITS, OPTS)
        assert report.status is SolveStatus.OPTIMAL
        assert report.objective == pytest.approx(brute_force(problem), abs=1e-3)

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", range(20))
    def test_stacking_dominance_on_random_days(self, seed):
        costs = {}
        for label, toggle in baseline_toggles():
            report = solve_miqp(assemble(random_day(seed, toggle)), "branch", LIMITS, OPTS)
            assert report.status is SolveStatus.OPTIMAL
            costs[label] = report.objective
        labels = list(costs)
        full, singles, leave_one_out, reference = costs[labels[0]], labels[1:4], labels[4:7], costs[labels[-1]]
        for label in leave_one_out:
            assert full <= costs[label] + 1e-3
        for label in singles:
            assert costs[label] <= reference + 1e-3
        assert full <= reference + 1e-3

    def test_bound_ordering(self):
        problem = assemble(small_day([household("a"), household("b", load=(0.5, 0.5, 3.0))]))
        relaxed = solve_qp(problem, OPTS)
        branch = solve_miqp(problem, "branch", LIMITS, OPTS)
        repair = solve_miqp(problem, "repair", LIMITS, OPTS)
        assert relaxed.ok and branch.ok and repair.ok
        assert relaxed.objective <= branch.objective + 1e-4
        assert branch.objective <= repair.objective + 1e-4

    def test_integral_solution(self):
        problem = assemble(small_day([household("a"), household("b", load=(0.5, 0.5, 3.0))]))
        for mode in ("repair", "branch"):
            report = solve_miqp(problem, mode, LIMITS, OPTS)
            assert not violated_pairs(problem, report.x, 1e-4)

    def test_auto_picks_branch_for_small_problems(self):
        problem = assemble(small_day([household("a")]))
        report = solve_miqp(problem, "auto", LIMITS, OPTS)
        assert report.binaries_fixed_by in ("natural", "branch")

    def test_stacking_never_costs_more(self):
        prosumers = [household("a", soc_desired_departure=30.0), household("b", load=(0.5, 0.5, 3.0))]
        costs = {
            streams: solve_miqp(assemble(small_day(prosumers, streams)), "branch", LIMITS, OPTS).objective
            for streams in ("none", "v2h", "v2h,v2g", "v2h,v2g,et")
        }
        assert costs["v2h,v2g,et"] <= costs["v2h,v2g"] + 1e-4
        assert costs["v2h,v2g"] <= costs["v2h"] + 1e-4
        assert costs["v2h"] <= costs["none"] + 1e-4

    def test_more_load_costs_more(self):
        base = solve_miqp(assemble(small_day([household("a")], "none")), "branch", LIMITS, OPTS)
        heavy = solve_miqp(assemble(small_day([household("a", load=(1.1, 2.2, 1.1))], "none")),
                           "branch", LIMITS, OPTS)
        assert heavy.objective > base.objective


class TestSolutionProperties:
    """Physical constraints hold in solved schedules."""

    @pytest.fixture
    def solved(self):
        day = small_day([household("a", soc_desired_departure=30.0), household("b", load=(0.5, 0.5, 3.0))])
        report = solve_miqp(assemble(day), "branch", LIMITS, OPTS)
        assert report.ok
        return day, report

    def test_departure_energy(self, solved):
        _, report = solved
        assert report.decisions.soc[0, 2] == pytest.approx(30.0, abs=1e-4)
        assert report.decisions.soc[1, 2] == pytest.approx(25.0, abs=1e-4)

    def test_home_balance(self, solved):
        day, report = solved
        dv = report.decisions
        supply = dv.p_grid + dv.p_renew + dv.p_buy + dv.p_v2h - dv.p_evc
        assert supply == pytest.approx(day.load, abs=1e-4)

    def test_market_clears(self, solved):
        _, report = solved
        dv = report.decisions
        assert dv.p_sell.sum(axis=0) == pytest.approx(dv.p_buy.sum(axis=0), abs=1e-4)

    def test_soc_dynamics(self, solved):
        day, report = solved
        dv = report.decisions
        for u, p in enumerate(day.prosumers):
            soc = p.ev.soc_initial
            for k in range(3):
                soc = soc + p.ev.charge_eff * dv.p_evc[u, k] - dv.p_evd[u, k] / p.ev.discharge_eff
                assert dv.soc[u, k] == pytest.approx(soc, abs=1e-4)

    def test_cost_matches_objective(self, solved):
        day, report = solved
        costs = evaluate_cost(report.decisions.cleaned(), day)
        assert costs.total == pytest.approx(report.objective, abs=1e-3)
        assert costs.per_slot.shape == (2, 3)

    def test_peak_epigraph(self):
        day = small_day([household("a")], "none", tariff=Tariff.tpt(0.2, 0.8))
        problem = assemble(day)
        report = solve_miqp(problem, "branch", LIMITS, OPTS)
        assert report.ok
        peak = report.x[problem.index.peak(0)]
        assert peak == pytest.approx(report.decisions.p_grid[0].max(), abs=1e-4)
        costs = evaluate_cost(report.decisions.cleaned(), day)
        assert costs.peak.sum() == pytest.approx(0.8 * peak, abs=1e-3)

    def test_prepaid_peak_left_out_of_window_objective(self):
        day = small_day([household("a")], "none", tariff=Tariff.tpt(0.2, 0.8))
        prefix = DecisionVector.zeros(1, 3)
        prefix.p_grid[0, 0] = 3.0
        prefix.soc[:] = 25.0
        problem = assemble(day, range(1, 3), realized_prefix=prefix)
        assert problem.constant == pytest.approx(-0.8 * 3.0)
        report = solve_miqp(problem, "branch", LIMITS, OPTS)
        assert report.ok
        # the window load stays under the prefix peak, so only energy is charged
        assert report.objective == pytest.approx(0.2 * 3.0 * day.grid.slot_hours, abs=1e-3)
        costs = evaluate_cost(report.decisions.cleaned(), day, peak_prefix=np.array([3.0]))
        assert costs.total == pytest.approx(report.objective, abs=1e-3)

    def test_network_limits_hold(self):
        topology = ieee33(load_profile=np.full(3, 0.3))
        prosumers = [household("a", node=4), household("b", node=25, load=(0.5, 0.5, 3.0))]
        day = small_day(prosumers, topology=topology)
        problem = assemble(day)
        assert problem.index.agg_nodes == [4, 25]
        report = solve_miqp(problem, "branch", LIMITS, OPTS)
        assert report.ok
        dv = report.decisions.cleaned()
        flow = propagate(topology, net_loads(topology, day.prosumers, dv), topology.inflexible_q)
        assert check_limits(flow, topology) == []


class TestRealize:
    """Test cases for realize."""

    def test_matching_realization_is_unchanged(self):
        day = small_day([household("a", load=(2.0,), avail_start=0, avail_end=0)], "none")
        dv = DecisionVector.zeros(1, 1)
        dv.p_grid[:] = 2.0
        out, events = realize(dv, day, np.array([[2.0]]), np.array([[0.0]]))
        assert out.p_grid[0, 0] == 2.0
        assert events == []

    def test_missing_pv_bought_from_grid(self):
        day = small_day([household("a", load=(2.0,), avail_start=0, avail_end=0)], "none")
        dv = DecisionVector.zeros(1, 1)
        dv.p_renew[:] = 2.0
        out, events = realize(dv, day, np.array([[2.0]]), np.array([[0.5]]))
        assert out.p_renew[0, 0] == pytest.approx(0.5)
        assert out.p_grid[0, 0] == pytest.approx(1.5)
        assert events == []

    def test_shortfall_beyond_import_cap(self):
        day = small_day([household("a", load=(1.0,), avail_start=0, avail_end=0)], "none")
        dv = DecisionVector.zeros(1, 1)
        dv.p_grid[:] = 1.0
        out, events = realize(dv, day, np.array([[30.0]]), np.array([[0.0]]))
        assert out.p_grid[0, 0] == pytest.approx(20.0)
        assert [e.kind for e in events] == ["shortfall"]
        assert events[0].value == pytest.approx(10.0)

    def test_spill_when_committed_supply_exceeds_load(self):
        day = small_day([household("a", load=(1.0,), avail_start=0, avail_end=0)], "v2h")
        dv = DecisionVector.zeros(1, 1)
        dv.p_v2h[:] = 5.0
        dv.p_evd[:] = 5.0
        out, events = realize(dv, day, np.array([[1.0]]), np.array([[0.0]]))
        assert out.p_v2h[0, 0] == 5.0
        assert [e.kind for e in events] == ["spill"]
        assert events[0].value == pytest.approx(4.0)

    def test_shape_mismatch(self):
        day = small_day([household("a")])
        with pytest.raises(ValidationError):
            realize(DecisionVector.zeros(1, 2), day, np.zeros((1, 3)), np.zeros((1, 3)))


class TestEvaluateCost:
    """Test cases for evaluate_cost."""

    def test_grid_cost(self):
        day = small_day([household("a")], "none")
        dv = DecisionVector.zeros(1, 3)
        dv.p_grid[:] = [[1.0, 2.0, 1.0]]
        costs = evaluate_cost(dv, day)
        assert costs.total == pytest.approx(0.1 + 0.6 + 0.2)
        assert costs.totals()["grid"] == pytest.approx(costs.total)

    def test_peak_increments_from_prefix(self):
        day = small_day([household("a")], "none", tariff=Tariff.tpt(0.2, 0.8))
        dv = DecisionVector.zeros(1, 3)
        dv.p_grid[:] = [[1.0, 2.0, 1.0]]
        fresh = evaluate_cost(dv, day)
        assert fresh.peak.sum() == pytest.approx(1.6)
        assert fresh.peak[0].tolist() == pytest.approx([0.8, 0.8, 0.0])
        later = evaluate_cost(dv, day, peak_prefix=np.array([1.5]))
        assert later.peak.sum() == pytest.approx(0.4)

    def test_battery_cost(self):
        day = small_day([household("a", load=(0.0, 0.0, 0.0))], "none")
        dv = DecisionVector.zeros(1, 3)
        dv.p_evc[0, 0] = 7.0
        costs = evaluate_cost(dv, day, apply_realization=False)
        assert costs.battery.sum() == pytest.approx(0.49)

    def test_wrong_prosumer_count(self):
        day = small_day([household("a")])
        with pytest.raises(ValidationError):
            evaluate_cost(DecisionVector.zeros(2, 3), day)
