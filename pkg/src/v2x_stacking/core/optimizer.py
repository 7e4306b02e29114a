"""
Value-stacking optimizer for v2x-stacking.

``assemble`` turns a day scenario, a window of slots, the realized prefix and the
load/PV forecasts into a sparse QP whose complementarity pairs (charge/discharge and
buy/sell) carry the integer part of the problem. ``solve_miqp`` handles that integer
part either by repairing the convex relaxation or by best-first branch-and-bound.
``realize`` and ``evaluate_cost`` settle executed decisions against realized data.
"""

import heapq
import itertools
import time
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Sequence

import numpy as np
import scipy.sparse as sp

from v2x_stacking.config import get_settings
from v2x_stacking.core.exceptions import ValidationError
from v2x_stacking.core.model import (
    DECISION_FIELDS,
    DEFAULT_TOLERANCE,
    DecisionVector,
    TariffKind,
)
from v2x_stacking.core.network import propagate
from v2x_stacking.core.qp import QpProblem, QpSettings, SolveReport, SolveStatus, solve_qp
from v2x_stacking.utils import get_logger

if TYPE_CHECKING:
    from v2x_stacking.core.forecast import ForecastSeries
    from v2x_stacking.core.scenario import DayScenario

logger = get_logger(__name__)

FIELD_POS = {name: i for i, name in enumerate(DECISION_FIELDS)}
MODES = ("repair", "branch", "auto")


@dataclass(frozen=True)
class ReliabilityEvent:
    """Something the executed schedule could not deliver as planned."""

    kind: str
    slot: int
    prosumer_id: str | None = None
    value: float = 0.0
    detail: str = ""

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "slot": self.slot,
            "prosumer_id": self.prosumer_id,
            "value": self.value,
            "detail": self.detail,
        }


class VariableIndex:
    """Column layout of an assembled window.

    Decision columns come first, ordered prosumer-major then slot then field. They are
    followed by one aggregate exchange column per (node, slot), one peak epigraph
    column per prosumer under a two-part tariff, and the departure slack pairs.
    """

    def __init__(
        self,
        prosumer_ids: Sequence[str],
        start: int,
        n_slots: int,
        agg_nodes: Sequence[int] = (),
        with_peak: bool = False,
        slack_prosumers: Sequence[int] = (),
    ):
        self.ids = list(prosumer_ids)
        self.start = start
        self.n_slots = n_slots
        self.n_fields = len(DECISION_FIELDS)
        self.n_core = len(self.ids) * n_slots * self.n_fields
        self.agg_nodes = list(agg_nodes)
        self.agg_offset = self.n_core
        self.peak_offset = self.agg_offset + len(self.agg_nodes) * n_slots
        self.with_peak = with_peak
        offset = self.peak_offset + (len(self.ids) if with_peak else 0)
        self.slack: dict[int, tuple[int, int]] = {}
        for u in slack_prosumers:
            self.slack[u] = (offset, offset + 1)
            offset += 2
        self.n = offset

    @property
    def slots(self) -> range:
        return range(self.start, self.start + self.n_slots)

    def col(self, u: int, slot: int, name: str) -> int:
        k = slot - self.start
        return (u * self.n_slots + k) * self.n_fields + FIELD_POS[name]

    def agg(self, node_pos: int, slot: int) -> int:
        return self.agg_offset + node_pos * self.n_slots + (slot - self.start)

    def peak(self, u: int) -> int:
        return self.peak_offset + u

    def decode(self, x: np.ndarray) -> DecisionVector:
        core = np.asarray(x[: self.n_core]).reshape(len(self.ids), self.n_slots, self.n_fields)
        return DecisionVector(
            start=self.start, **{name: core[:, :, i].copy() for i, name in enumerate(DECISION_FIELDS)}
        )

    def labels(self) -> list[str]:
        out = [
            f"{name}[{pid},{slot}]"
            for pid in self.ids
            for slot in self.slots
            for name in DECISION_FIELDS
        ]
        out += [f"agg[{node},{slot}]" for node in self.agg_nodes for slot in self.slots]
        if self.with_peak:
            out += [f"peak[{pid}]" for pid in self.ids]
        for u in self.slack:
            out += [f"short[{self.ids[u]}]", f"excess[{self.ids[u]}]"]
        return out


class _Rows:
    """Triplet accumulator for constraint rows."""

    def __init__(self):
        self.rows: list[int] = []
        self.cols: list[int] = []
        self.vals: list[float] = []
        self.lo: list[float] = []
        self.hi: list[float] = []

    def add(self, coeffs: dict[int, float], lo: float, hi: float) -> None:
        r = len(self.lo)
        for c, v in coeffs.items():
            if v != 0.0:
                self.rows.append(r)
                self.cols.append(c)
                self.vals.append(v)
        self.lo.append(lo)
        self.hi.append(hi)

    def matrix(self, n: int) -> sp.csc_matrix:
        return sp.csc_matrix((self.vals, (self.rows, self.cols)), shape=(len(self.lo), n))


def _prefix_state(scenario: "DayScenario", start: int, realized_prefix: DecisionVector | None):
    """Stored energy entering ``start`` and the running grid peak of the executed slots."""
    soc = np.array([p.ev.soc_initial for p in scenario.prosumers], dtype=float)
    peak = np.zeros(len(scenario.prosumers))
    if start == 0 or realized_prefix is None:
        return soc, peak
    if realized_prefix.start != 0 or realized_prefix.shape[1] < start:
        raise ValidationError(f"Realized prefix must cover slots 0..{start - 1}")
    prefix = realized_prefix.window(0, start)
    return prefix.soc[:, -1].copy(), prefix.p_grid.max(axis=1)


def assemble(
    scenario: "DayScenario",
    window: range | None = None,
    realized_prefix: DecisionVector | None = None,
    forecasts: "ForecastSeries | None" = None,
) -> QpProblem:
    """Build the value-stacking QP for ``window`` (default: the whole day).

    The stored energy is chained from the last slot of ``realized_prefix``; under a
    two-part tariff the peak epigraph column is floored at the prefix's running peak
    and only the charge above that peak enters the objective.
    ``forecasts`` supplies load and PV for the window; without it the scenario's own
    traces are used. Unreachable departure targets are relaxed with penalized slack
    and reported in ``diagnostics``.
    """
    grid = scenario.grid
    T = grid.slots_per_day
    window = window if window is not None else range(T)
    if len(window) == 0 or window.start < 0 or window.stop > T or window.step != 1:
        raise ValidationError(f"Window {window} must be a nonempty contiguous range inside 0..{T - 1}")
    start, L = window.start, len(window)
    dt = grid.slot_hours
    prosumers = scenario.prosumers
    U = len(prosumers)
    toggles = scenario.toggles
    settings = get_settings()

    if forecasts is not None:
        if forecasts.start != start or forecasts.load.shape[1] < L or forecasts.load.shape[0] != U:
            raise ValidationError(
                f"Forecasts (first slot {forecasts.start}, shape {forecasts.load.shape}) do not cover window {window}"
            )
        load = forecasts.load[:, :L]
        pv = forecasts.pv[:, :L]
    else:
        load = scenario.load[:, start:start + L]
        pv = scenario.pv[:, start:start + L]

    soc0, peak0 = _prefix_state(scenario, start, realized_prefix)
    tpt = scenario.tariff.kind is TariffKind.TPT
    diagnostics: list[str] = []

    # departure reachability decides which prosumers get soft slack
    slack_needed = []
    for u, p in enumerate(prosumers):
        ev = p.ev
        if not ev.has_window or ev.avail_end < start or ev.avail_end >= start + L:
            continue
        n_parked = len(range(max(start, ev.avail_start), ev.avail_end + 1))
        hi = min(ev.capacity_max, soc0[u] + ev.charge_eff * dt * ev.p_charge_max * n_parked)
        lo = max(ev.capacity_min, soc0[u] - dt / ev.discharge_eff * ev.p_discharge_max * n_parked)
        if not lo - 1e-9 <= ev.soc_desired_departure <= hi + 1e-9:
            slack_needed.append(u)
            diagnostics.append(
                f"soft_departure:{p.id}: target {ev.soc_desired_departure:.3f} kWh outside reachable "
                f"[{lo:.3f}, {hi:.3f}] kWh"
            )
            logger.warning(f"Departure target of {p.id} unreachable from slot {start}; relaxing with penalty")

    topology = scenario.topology
    agg_nodes = sorted({p.node for p in prosumers}) if topology is not None and U else []
    index = VariableIndex([p.id for p in prosumers], start, L, agg_nodes, tpt and U > 0, slack_needed)
    n = index.n

    lb = np.zeros(n)
    ub = np.zeros(n)
    q = np.zeros(n)
    p_diag = np.zeros(n)
    rows = _Rows()
    pairs: list[tuple[int, int, str]] = []
    hints: list[bool] = []

    energy_price = scenario.tariff.energy_prices(L, start) if scenario.tariff.kind is TariffKind.TOU \
        else np.full(L, scenario.tariff.tpt_energy_price)
    day_prices = scenario.tariff.energy_prices(T) if scenario.tariff.kind is TariffKind.TOU \
        else np.full(T, scenario.tariff.tpt_energy_price)
    mean_price = float(day_prices.mean())
    prices = scenario.prices
    buy_price = prices.buy_for(U)
    sell_price = prices.sell_for(U)

    for u, p in enumerate(prosumers):
        ev = p.ev
        mu, eta = ev.charge_eff, ev.discharge_eff
        for k, slot in enumerate(window):
            c = {name: index.col(u, slot, name) for name in DECISION_FIELDS}
            parked = ev.is_parked(slot)
            ub[c["p_grid"]] = p.grid_import_cap
            ub[c["p_renew"]] = pv[u, k]
            ub[c["p_buy"]] = p.local_buy_cap if toggles.trading_enabled else 0.0
            ub[c["p_sell"]] = p.local_sell_cap if toggles.trading_enabled and parked else 0.0
            ub[c["p_evc"]] = ev.p_charge_max if parked else 0.0
            ub[c["p_evd"]] = ev.p_discharge_max if parked else 0.0
            ub[c["p_v2h"]] = p.v2h_cap if toggles.v2h_enabled and parked else 0.0
            ub[c["p_v2g"]] = p.v2g_cap if toggles.v2g_enabled and parked else 0.0
            ub[c["p_as"]] = ev.capacity_max / 2.0 if toggles.v2g_enabled and parked else 0.0
            lb[c["soc"]] = ev.capacity_min
            ub[c["soc"]] = ev.capacity_max

            # stored energy dynamics
            coeffs = {c["soc"]: 1.0, c["p_evc"]: -mu * dt, c["p_evd"]: dt / eta}
            if k == 0:
                rows.add(coeffs, soc0[u], soc0[u])
            else:
                coeffs[index.col(u, slot - 1, "soc")] = -1.0
                rows.add(coeffs, 0.0, 0.0)

            if ub[c["p_as"]] > 0:
                rows.add({c["soc"]: 1.0, c["p_as"]: -dt}, ev.capacity_min, np.inf)
                rows.add({c["soc"]: 1.0, c["p_as"]: dt}, -np.inf, ev.capacity_max)

            # home balance
            rows.add(
                {c["p_grid"]: 1.0, c["p_renew"]: 1.0, c["p_buy"]: 1.0, c["p_v2h"]: 1.0, c["p_evc"]: -1.0},
                load[u, k],
                load[u, k],
            )
            # discharge split
            rows.add({c["p_evd"]: 1.0, c["p_v2h"]: -1.0, c["p_v2g"]: -1.0, c["p_sell"]: -1.0}, 0.0, 0.0)

            high_price = bool(energy_price[k] > mean_price)
            if ub[c["p_evc"]] > 0 and ub[c["p_evd"]] > 0:
                rows.add({c["p_evc"]: 1.0 / ub[c["p_evc"]], c["p_evd"]: 1.0 / ub[c["p_evd"]]}, -np.inf, 1.0)
                pairs.append((c["p_evc"], c["p_evd"], "x"))
                hints.append(high_price)
            if ub[c["p_buy"]] > 0 and ub[c["p_sell"]] > 0:
                rows.add({c["p_buy"]: 1.0 / ub[c["p_buy"]], c["p_sell"]: 1.0 / ub[c["p_sell"]]}, -np.inf, 1.0)
                pairs.append((c["p_buy"], c["p_sell"], "y"))
                hints.append(high_price)

            # objective
            q[c["p_grid"]] = energy_price[k] * dt
            p_diag[c["p_evc"]] = 2.0 * ev.degradation_coeff
            p_diag[c["p_evd"]] = 2.0 * ev.degradation_coeff
            q[c["p_buy"]] = buy_price[u, slot] * dt
            q[c["p_sell"]] = -sell_price[u, slot] * dt
            q[c["p_v2g"]] = -prices.v2g_price[slot] * dt
            q[c["p_as"]] = -prices.reserve_price[slot] * dt

            if tpt:
                rows.add({index.peak(u): 1.0, c["p_grid"]: -1.0}, 0.0, np.inf)

        if tpt:
            lb[index.peak(u)] = peak0[u]
            ub[index.peak(u)] = np.inf
            q[index.peak(u)] = scenario.tariff.tpt_peak_price

        # departure and end-of-day request
        if ev.has_window and start <= ev.avail_end < start + L:
            soc_dep = index.col(u, ev.avail_end, "soc")
            if u in index.slack:
                short, excess = index.slack[u]
                ub[short] = ub[excess] = np.inf
                q[short] = q[excess] = settings.soft_departure_penalty
                rows.add({soc_dep: 1.0, short: 1.0, excess: -1.0},
                         ev.soc_desired_departure, ev.soc_desired_departure)
            else:
                rows.add({soc_dep: 1.0}, ev.soc_desired_departure, ev.soc_desired_departure)
                if window.stop == T:
                    rows.add({index.col(u, T - 1, "soc"): 1.0}, ev.soc_requested_final, np.inf)

    if toggles.trading_enabled and U:
        for slot in window:
            coeffs = {}
            for u in range(U):
                coeffs[index.col(u, slot, "p_sell")] = 1.0
                coeffs[index.col(u, slot, "p_buy")] = -1.0
            rows.add(coeffs, 0.0, 0.0)

    if agg_nodes:
        _network_rows(scenario, index, window, rows, lb, ub)

    A = rows.matrix(n)
    problem = QpProblem(
        P=sp.diags(p_diag, format="csc") if n else sp.csc_matrix((0, 0)),
        q=q,
        constant=-scenario.tariff.tpt_peak_price * float(peak0.sum()) if tpt else 0.0,
        A=A,
        l=np.asarray(rows.lo, dtype=float),
        u=np.asarray(rows.hi, dtype=float),
        lb=lb,
        ub=ub,
        columns=index.labels(),
        pairs=pairs,
        pair_hints=hints,
        index=index,
        diagnostics=diagnostics,
    )
    logger.debug(
        f"Assembled window {start}..{window.stop - 1} for {U} prosumers: {n} columns, "
        f"{problem.m} rows, {len(pairs)} binary pairs"
    )
    return problem


def _network_rows(scenario: "DayScenario", index: VariableIndex, window: range, rows: _Rows, lb, ub) -> None:
    """Aggregate exchange per node plus branch-flow and voltage rows in kW."""
    topology = scenario.topology
    slots = list(window)
    base = topology.base_kw
    v0 = topology.slack_voltage
    inflex = propagate(topology, topology.inflexible_p[:, slots], topology.inflexible_q[:, slots], start=window.start)
    m = topology.path_matrix
    nodes = index.agg_nodes
    carries = m[nodes]  # carries[c, b] = 1 when branch b feeds node c
    r_common = topology.voltage_sensitivity(nodes)
    prosumers = scenario.prosumers

    for pos, node in enumerate(nodes):
        members = [u for u, p in enumerate(prosumers) if p.node == node]
        for slot in window:
            a = index.agg(pos, slot)
            lb[a], ub[a] = -np.inf, np.inf
            coeffs = {a: 1.0}
            for u in members:
                coeffs[index.col(u, slot, "p_grid")] = -1.0
                coeffs[index.col(u, slot, "p_buy")] = -1.0
                coeffs[index.col(u, slot, "p_sell")] = 1.0
                coeffs[index.col(u, slot, "p_v2g")] = 1.0
            rows.add(coeffs, 0.0, 0.0)

    branches = [b for b in range(1, topology.n_nodes) if carries[:, b].any()]
    voltage_nodes = [j for j in range(1, topology.n_nodes) if (r_common[j] > 0).any()]
    for k, slot in enumerate(window):
        for b in branches:
            coeffs = {index.agg(pos, slot): 1.0 for pos in range(len(nodes)) if carries[pos, b]}
            const = inflex.p_flow[b, k]
            rows.add(coeffs, (topology.p_min_pu - const) * base, (topology.p_max_pu - const) * base)
        for j in voltage_nodes:
            coeffs = {index.agg(pos, slot): float(r_common[j, pos]) for pos in range(len(nodes))}
            v_const = inflex.voltage[j, k]
            rows.add(
                coeffs,
                (v_const - topology.v_max[j]) * base * v0,
                (v_const - topology.v_min[j]) * base * v0,
            )


def violated_pairs(problem: QpProblem, x: np.ndarray, tolerance: float) -> list[int]:
    """Indices of pairs whose two members are both above ``tolerance``."""
    return [i for i, (a, b, _) in enumerate(problem.pairs) if x[a] > tolerance and x[b] > tolerance]


@dataclass
class MiqpLimits:
    pair_tolerance: float = 1e-6
    repair_max_passes: int = 10
    branch_max_nodes: int = 5000
    branch_pair_limit: int = 12

    @classmethod
    def from_settings(cls) -> "MiqpLimits":
        s = get_settings()
        return cls(
            pair_tolerance=s.pair_tolerance,
            repair_max_passes=s.repair_max_passes,
            branch_max_nodes=s.branch_max_nodes,
            branch_pair_limit=s.branch_pair_limit,
        )


def _finish(report: SolveReport, problem: QpProblem, relaxed: SolveReport, started: float, **extra) -> SolveReport:
    decisions = problem.index.decode(report.x) if problem.index is not None and report.x is not None else None
    gap = report.objective - relaxed.objective if np.isfinite(report.objective) else np.inf
    return replace(
        report,
        decisions=decisions,
        relaxation_gap=max(gap, 0.0),
        wall_time=time.perf_counter() - started,
        diagnostics=list(problem.diagnostics) + list(report.diagnostics),
        **extra,
    )


def _repair(problem: QpProblem, relaxed: SolveReport, limits: MiqpLimits, opts: QpSettings):
    """Zero the weaker member of every violated pair and re-solve until no pair is violated."""
    current, report = problem, relaxed
    fixes = 0
    iterations = relaxed.iterations
    for _ in range(limits.repair_max_passes):
        violated = violated_pairs(current, report.x, limits.pair_tolerance)
        if not violated:
            return current, report, fixes, iterations, True
        drop, keep = [], []
        for i in violated:
            a, b, _ = current.pairs[i]
            if abs(report.x[a] - report.x[b]) <= limits.pair_tolerance:
                second = current.pair_hints[i] if current.pair_hints else False
            else:
                second = report.x[b] > report.x[a]
            drop.append(a if second else b)
            keep.append(b if second else a)
        candidate = current.with_zero_columns(drop)
        result = solve_qp(candidate, opts)
        iterations += result.iterations
        if result.status is SolveStatus.INFEASIBLE:
            logger.debug(f"Repair fix of {len(drop)} pairs infeasible; flipping")
            candidate = current.with_zero_columns(keep)
            result = solve_qp(candidate, opts)
            iterations += result.iterations
            if result.status is SolveStatus.INFEASIBLE:
                return candidate, result, fixes, iterations, False
        fixes += len(drop)
        current, report = candidate, result
    clean = not violated_pairs(current, report.x, limits.pair_tolerance)
    return current, report, fixes, iterations, clean


def _branch(problem: QpProblem, root: SolveReport, limits: MiqpLimits, opts: QpSettings):
    """Best-first branch-and-bound on the most violated pair, pruned by the relaxation bound."""
    counter = itertools.count()
    heap = [(root.objective, next(counter), problem, root)]
    incumbent: tuple[QpProblem, SolveReport] | None = None
    best = np.inf
    nodes = 0
    iterations = root.iterations
    exhausted = True
    while heap:
        bound, _, node, report = heapq.heappop(heap)
        if bound >= best - 1e-9:
            continue
        violated = violated_pairs(node, report.x, limits.pair_tolerance)
        if not violated:
            best, incumbent = report.objective, (node, report)
            continue
        if nodes >= limits.branch_max_nodes:
            exhausted = False
            break
        nodes += 1
        i = max(violated, key=lambda j: min(report.x[node.pairs[j][0]], report.x[node.pairs[j][1]]))
        a, b, _ = node.pairs[i]
        for zero in (a, b):
            child = node.with_zero_columns([zero])
            result = solve_qp(child, opts)
            iterations += result.iterations
            if result.status is SolveStatus.OPTIMAL and result.objective < best - 1e-9:
                heapq.heappush(heap, (result.objective, next(counter), child, result))
            elif result.status not in (SolveStatus.OPTIMAL, SolveStatus.INFEASIBLE):
                # unsolved child: its subtree was never searched
                exhausted = False
    return incumbent, nodes, iterations, exhausted


def solve_miqp(
    problem: QpProblem,
    mode: str = "repair",
    limits: MiqpLimits | None = None,
    opts: QpSettings | None = None,
) -> SolveReport:
    """Solve the assembled problem with integral complementarity pairs.

    ``mode`` is ``repair``, ``branch`` or ``auto`` (branch-and-bound when the problem
    has at most ``branch_pair_limit`` pairs, repair otherwise).
    """
    if mode not in MODES:
        raise ValidationError(f"Unknown integer mode '{mode}'. Use one of {', '.join(MODES)}")
    limits = limits or MiqpLimits.from_settings()
    opts = opts or QpSettings.from_settings()
    if mode == "auto":
        mode = "branch" if len(problem.pairs) <= limits.branch_pair_limit else "repair"
    started = time.perf_counter()

    relaxed = solve_qp(problem, opts)
    if relaxed.status is not SolveStatus.OPTIMAL:
        logger.debug(f"Relaxation not solved: {relaxed.status.value}")
        return _finish(relaxed, problem, relaxed, started)

    if not violated_pairs(problem, relaxed.x, limits.pair_tolerance):
        return _finish(relaxed, problem, relaxed, started, binaries_fixed_by="natural")

    if mode == "repair":
        final, report, fixes, iterations, clean = _repair(problem, relaxed, limits, opts)
        if report.status is SolveStatus.OPTIMAL and not clean:
            report = replace(report, status=SolveStatus.ITER_LIMIT,
                             diagnostics=[f"pairs still violated after {limits.repair_max_passes} passes"])
        logger.debug(f"Repair finished with {fixes} fixes: {report.status.value}")
        return _finish(report, final, relaxed, started, binaries_fixed_by="repair", fixes=fixes,
                       iterations=iterations)

    incumbent, nodes, iterations, exhausted = _branch(problem, relaxed, limits, opts)
    if incumbent is None:
        if exhausted:
            report = SolveReport(status=SolveStatus.INFEASIBLE, objective=np.inf, certificate=None,
                                 diagnostics=["no integral assignment is feasible"])
            return _finish(report, problem, relaxed, started, binaries_fixed_by="branch", nodes=nodes,
                           iterations=iterations)
        # node budget spent before any integral leaf: fall back to a repaired incumbent
        final, report, fixes, more, _ = _repair(problem, relaxed, limits, opts)
        report = replace(report, status=SolveStatus.ITER_LIMIT if report.ok else report.status)
        return _finish(report, final, relaxed, started, binaries_fixed_by="branch", nodes=nodes,
                       iterations=iterations + more, fixes=fixes)
    final, report = incumbent
    status = SolveStatus.OPTIMAL if exhausted else SolveStatus.ITER_LIMIT
    logger.debug(f"Branch-and-bound explored {nodes} nodes: {status.value} objective {report.objective:.6f}")
    return _finish(replace(report, status=status), final, relaxed, started, binaries_fixed_by="branch",
                   nodes=nodes, iterations=iterations)


def realize(
    decisions: DecisionVector,
    scenario: "DayScenario",
    realized_load: np.ndarray,
    realized_pv: np.ndarray,
    tolerance: float = DEFAULT_TOLERANCE,
) -> tuple[DecisionVector, list[ReliabilityEvent]]:
    """Restore the home balance of executed decisions against realized load and PV.

    EV, trading and reserve decisions stay as solved. PV use is capped at the realized
    PV; a shortfall is covered by more PV and then more grid import up to the import
    cap, a surplus by less grid import and then PV curtailment. What cannot be
    covered is reported as a reliability event.
    """
    if realized_load.shape != decisions.shape or realized_pv.shape != decisions.shape:
        raise ValidationError(
            f"Realized traces {realized_load.shape}/{realized_pv.shape} do not match decisions {decisions.shape}"
        )
    out = decisions.window(decisions.start, decisions.start + decisions.shape[1])
    events: list[ReliabilityEvent] = []
    n_u, n_t = decisions.shape
    for u in range(n_u):
        p = scenario.prosumers[u]
        for k in range(n_t):
            slot = decisions.start + k
            pv = float(realized_pv[u, k])
            renew = min(float(out.p_renew[u, k]), pv)
            grid = float(out.p_grid[u, k])
            supply = grid + renew + out.p_buy[u, k] + out.p_v2h[u, k]
            shortfall = float(realized_load[u, k] + out.p_evc[u, k] - supply)
            if shortfall > tolerance:
                extra = min(shortfall, pv - renew)
                renew += extra
                shortfall -= extra
                extra = min(shortfall, max(p.grid_import_cap - grid, 0.0))
                grid += extra
                shortfall -= extra
                if shortfall > tolerance:
                    events.append(ReliabilityEvent("shortfall", slot, p.id, shortfall,
                                                   "demand above grid import cap"))
            elif shortfall < -tolerance:
                surplus = -shortfall
                cut = min(surplus, grid)
                grid -= cut
                surplus -= cut
                cut = min(surplus, renew)
                renew -= cut
                surplus -= cut
                if surplus > tolerance:
                    events.append(ReliabilityEvent("spill", slot, p.id, surplus,
                                                   "committed supply above realized demand"))
            out.p_grid[u, k] = grid
            out.p_renew[u, k] = renew
    return out, events


@dataclass
class CostBreakdown:
    """Per-prosumer per-slot cost terms in $, revenues as positive numbers."""

    start: int
    grid: np.ndarray
    peak: np.ndarray
    battery: np.ndarray
    buy: np.ndarray
    sell: np.ndarray
    v2g: np.ndarray
    reserve: np.ndarray
    decisions: DecisionVector | None = None
    events: list[ReliabilityEvent] = field(default_factory=list)

    TERMS = ("grid", "peak", "battery", "buy", "sell", "v2g", "reserve")

    @property
    def per_slot(self) -> np.ndarray:
        """Net cost per prosumer and slot, shape (prosumers, slots)."""
        return self.grid + self.peak + self.battery + self.buy - self.sell - self.v2g - self.reserve

    @property
    def per_prosumer(self) -> np.ndarray:
        return self.per_slot.sum(axis=1)

    @property
    def total(self) -> float:
        return float(self.per_slot.sum())

    def totals(self) -> dict[str, float]:
        out = {term: float(getattr(self, term).sum()) for term in self.TERMS}
        out["total"] = self.total
        return out


def evaluate_cost(
    decisions: DecisionVector,
    scenario: "DayScenario",
    realized_load: np.ndarray | None = None,
    realized_pv: np.ndarray | None = None,
    peak_prefix: np.ndarray | None = None,
    apply_realization: bool = True,
) -> CostBreakdown:
    """Cost of ``decisions`` against realized data (default: the scenario's own traces).

    Peak charges under a two-part tariff are booked as increments of the running peak,
    starting from ``peak_prefix``, so slot costs add up to the day-level charge.
    """
    start, (n_u, n_t) = decisions.start, decisions.shape
    slots = list(decisions.slots)
    if n_u != len(scenario.prosumers):
        raise ValidationError(f"Decisions cover {n_u} prosumers, scenario has {len(scenario.prosumers)}")
    if slots and slots[-1] >= scenario.grid.slots_per_day:
        raise ValidationError(f"Decisions reach slot {slots[-1]} beyond the day")
    load = scenario.load[:, slots] if realized_load is None else np.asarray(realized_load, dtype=float)
    pv = scenario.pv[:, slots] if realized_pv is None else np.asarray(realized_pv, dtype=float)
    events: list[ReliabilityEvent] = []
    if apply_realization:
        decisions, events = realize(decisions, scenario, load, pv)
    elif load.shape != decisions.shape:
        raise ValidationError(f"Realized load {load.shape} does not match decisions {decisions.shape}")

    dt = scenario.grid.slot_hours
    tariff = scenario.tariff
    prices = scenario.prices
    energy_price = tariff.energy_prices(n_t, start) if tariff.kind is TariffKind.TOU \
        else np.full(n_t, tariff.tpt_energy_price)
    alpha = np.array([p.ev.degradation_coeff for p in scenario.prosumers])[:, None]

    peak = np.zeros((n_u, n_t))
    if tariff.kind is TariffKind.TPT:
        running = np.zeros(n_u) if peak_prefix is None else np.asarray(peak_prefix, dtype=float).copy()
        for k in range(n_t):
            increment = np.maximum(decisions.p_grid[:, k] - running, 0.0)
            peak[:, k] = tariff.tpt_peak_price * increment
            running = running + increment

    return CostBreakdown(
        start=start,
        grid=decisions.p_grid * energy_price[None, :] * dt,
        peak=peak,
        battery=alpha * (decisions.p_evc ** 2 + decisions.p_evd ** 2),
        buy=decisions.p_buy * prices.buy_for(n_u)[:, slots] * dt,
        sell=decisions.p_sell * prices.sell_for(n_u)[:, slots] * dt,
        v2g=decisions.p_v2g * prices.v2g_price[slots][None, :] * dt,
        reserve=decisions.p_as * prices.reserve_price[slots][None, :] * dt,
        decisions=decisions,
        events=events,
    )
