"""
Rolling-horizon engine for v2x-stacking.

Each slot of a day the engine forecasts the rest of the day, solves the shrinking
window from the current slot to the end of the day, executes only the current
slot's decisions against realized data and carries the realized state forward.
"""

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np
import pandas as pd

from v2x_stacking.config import get_settings
from v2x_stacking.core.exceptions import DataError, ForecastError, SolverError, ValidationError
from v2x_stacking.core.forecast import ForecastSeries, ForecasterSpec, forecast, relative_error
from v2x_stacking.core.model import DecisionVector
from v2x_stacking.core.network import FlowState, check_limits, net_loads, propagate
from v2x_stacking.core.optimizer import (
    CostBreakdown,
    ReliabilityEvent,
    assemble,
    evaluate_cost,
    realize,
    solve_miqp,
)
from v2x_stacking.core.qp import SolveReport, SolveStatus
from v2x_stacking.core.streams import StreamToggle
from v2x_stacking.utils import get_logger

if TYPE_CHECKING:
    from v2x_stacking.core.scenario import DayScenario, Scenario

logger = get_logger(__name__)

# an iteration-limited solve is still executed when its residual stays below this
ACCEPT_VIOLATION = 1e-4
DEPARTURE_TOLERANCE = 1e-3


@dataclass
class RunLedger:
    """Everything executed during one simulated day."""

    scenario: str
    day: int
    prosumer_ids: list[str]
    windows: list[tuple[int, int]]
    forecaster: str
    mode: str
    decisions: DecisionVector
    costs: CostBreakdown
    realized_load: np.ndarray
    realized_pv: np.ndarray
    flows: list[FlowState] = field(default_factory=list)
    snapshots: list[ForecastSeries] = field(default_factory=list)
    events: list[ReliabilityEvent] = field(default_factory=list)
    solves: list[dict] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def n_slots(self) -> int:
        return self.decisions.shape[1]

    @property
    def slot_costs(self) -> np.ndarray:
        """Per-prosumer per-slot cost in $, shape (prosumers, slots)."""
        return self.costs.per_slot

    @property
    def total(self) -> float:
        return float(self.slot_costs.sum())

    def term_totals(self) -> dict[str, float]:
        return self.costs.totals()

    def _day_ahead_error(self, kind: str) -> float:
        if not self.snapshots or self.snapshots[0].horizon == 0:
            return float("nan")
        snap = self.snapshots[0]
        realized = (self.realized_load if kind == "load" else self.realized_pv)[:, list(snap.slots)]
        predicted = snap.load if kind == "load" else snap.pv
        t = np.arange(snap.start, snap.start + snap.horizon)
        mask = np.array([(t >= a) & (t <= b) for a, b in self.windows], dtype=bool).reshape(realized.shape)
        try:
            return relative_error(predicted, realized, mask)
        except ForecastError:
            return float("nan")

    @property
    def re_load(self) -> float:
        """Load RE of the day-ahead forecast over the EV windows; NaN when undefined."""
        return self._day_ahead_error("load")

    @property
    def re_pv(self) -> float:
        return self._day_ahead_error("pv")

    def to_frame(self) -> pd.DataFrame:
        """One row per prosumer and slot: decisions, realized traces and cost terms."""
        frame = self.decisions.to_frame(self.prosumer_ids)
        frame.insert(0, "day", self.day)
        frame["load_kw"] = self.realized_load.reshape(-1)
        frame["pv_kw"] = self.realized_pv.reshape(-1)
        for term in CostBreakdown.TERMS:
            frame[f"cost_{term}"] = getattr(self.costs, term).reshape(-1)
        frame["cost"] = self.slot_costs.reshape(-1)
        return frame

    def summary(self) -> dict:
        return {
            "day": self.day,
            "total_cost": self.total,
            "terms": self.term_totals(),
            "re_load": self.re_load,
            "re_pv": self.re_pv,
            "events": len(self.events),
            "fallbacks": sum(1 for s in self.solves if s["fallback"]),
            "wall_time": self.wall_time,
        }


@dataclass
class Campaign:
    """Ledgers of a multi-day run, ordered by day."""

    scenario: str
    forecaster: str
    ledgers: list[RunLedger]

    @property
    def totals(self) -> np.ndarray:
        """Daily totals C_Total^d in $."""
        return np.array([ledger.total for ledger in self.ledgers])

    @property
    def total(self) -> float:
        return float(self.totals.sum())

    @property
    def mean_daily(self) -> float:
        return float(self.totals.mean()) if self.ledgers else 0.0

    @property
    def re_load(self) -> float:
        values = [ledger.re_load for ledger in self.ledgers if np.isfinite(ledger.re_load)]
        return float(np.mean(values)) if values else float("nan")

    @property
    def re_pv(self) -> float:
        values = [ledger.re_pv for ledger in self.ledgers if np.isfinite(ledger.re_pv)]
        return float(np.mean(values)) if values else float("nan")

    @property
    def events(self) -> list[dict]:
        return [{"day": ledger.day, **e.as_dict()} for ledger in self.ledgers for e in ledger.events]


def fallback_decisions(scenario: "DayScenario", slot: int, soc_prev: np.ndarray) -> DecisionVector:
    """Charge at the maximum rate toward the departure target; PV then grid serve the load."""
    U = len(scenario.prosumers)
    dt = scenario.grid.slot_hours
    step = DecisionVector.zeros(U, 1, start=slot)
    for u, p in enumerate(scenario.prosumers):
        ev = p.ev
        evc = 0.0
        if ev.is_parked(slot) and ev.charge_eff > 0:
            need = max(ev.soc_desired_departure - soc_prev[u], 0.0)
            room = max(ev.capacity_max - soc_prev[u], 0.0)
            evc = min(ev.p_charge_max, min(need, room) / (ev.charge_eff * dt))
        demand = float(p.load_trace[slot]) + evc
        renew = min(float(p.pv_cap_trace[slot]), demand)
        step.p_evc[u, 0] = evc
        step.p_renew[u, 0] = renew
        step.p_grid[u, 0] = demand - renew
        step.soc[u, 0] = soc_prev[u] + ev.charge_eff * evc * dt
    return step


def _executable(report: SolveReport | None, problem) -> bool:
    if report is None or report.decisions is None or report.x is None:
        return False
    if report.status is SolveStatus.OPTIMAL:
        return True
    return report.status is SolveStatus.ITER_LIMIT and problem.max_violation(report.x) <= ACCEPT_VIOLATION


def chain_soc(step: DecisionVector, scenario: "DayScenario", soc_prev: np.ndarray) -> list[ReliabilityEvent]:
    """Recompute the executed stored energy from the previous slot so SoC stays continuous.

    The result is clipped to the battery bounds; a clip larger than
    ``DEPARTURE_TOLERANCE`` is returned as a ``soc_clamp`` event.
    """
    dt = scenario.grid.slot_hours
    events = []
    for u, p in enumerate(scenario.prosumers):
        ev = p.ev
        soc = soc_prev[u] + ev.charge_eff * step.p_evc[u, 0] * dt - step.p_evd[u, 0] * dt / ev.discharge_eff
        clamped = min(max(soc, ev.capacity_min), ev.capacity_max)
        if abs(clamped - soc) > DEPARTURE_TOLERANCE:
            events.append(ReliabilityEvent("soc_clamp", step.start, p.id, float(clamped - soc),
                                           "executed energy left the battery bounds"))
        step.soc[u, 0] = clamped
    return events


def run_day(
    scenario: "Scenario",
    day: int,
    forecaster: ForecasterSpec,
    mode: str | None = None,
    toggles: StreamToggle | None = None,
) -> RunLedger:
    """Roll the shrinking window over every slot of ``day``.

    At slot t the optimizer sees the realized load and PV of slot t and forecasts for
    slots t+1 onwards. Only slot t is executed; a failed solve executes the fallback
    schedule for that slot and the day continues.
    """
    started = time.perf_counter()
    mode = mode or get_settings().default_mode
    if day not in scenario.load:
        raise DataError(f"No realized data for day {day}")
    day_scn = scenario.day(day, toggles)
    T = day_scn.grid.slots_per_day
    U = len(day_scn.prosumers)
    realized_load = day_scn.load
    realized_pv = day_scn.pv

    executed = DecisionVector.zeros(U, T)
    terms = {term: np.zeros((U, T)) for term in CostBreakdown.TERMS}
    soc_prev = np.array([p.ev.soc_initial for p in day_scn.prosumers], dtype=float)
    peak = np.zeros(U)
    ledger = RunLedger(
        scenario=day_scn.name,
        day=day,
        prosumer_ids=day_scn.prosumer_ids,
        windows=day_scn.ev_windows,
        forecaster=forecaster.label,
        mode=mode,
        decisions=executed,
        costs=CostBreakdown(start=0, **terms),
        realized_load=realized_load,
        realized_pv=realized_pv,
    )
    relaxed_departures: set[str] = set()

    for t in range(T):
        history = scenario.history(day, t)
        predicted = forecast(forecaster, history, t, T - 1 - t)
        ledger.snapshots.append(predicted)
        window_input = predicted.prepend(realized_load[:, t], realized_pv[:, t])

        report, problem = None, None
        try:
            problem = assemble(day_scn, range(t, T), executed if t > 0 else None, window_input)
            report = solve_miqp(problem, mode)
        except (SolverError, ValidationError) as e:
            logger.error(f"Day {day} slot {t}: window could not be solved ({e}); using fallback")

        use_solution = _executable(report, problem)
        if use_solution:
            step = report.decisions.window(t, t + 1).cleaned()
            if report.status is SolveStatus.ITER_LIMIT:
                logger.warning(f"Day {day} slot {t}: executing iteration-limited solution")
            for note in problem.diagnostics:
                if note.startswith("soft_departure:"):
                    pid = note.split(":")[1]
                    if pid not in relaxed_departures:
                        relaxed_departures.add(pid)
                        ledger.events.append(ReliabilityEvent("soft_departure", t, pid, 0.0, note.split(":", 2)[2].strip()))
        else:
            status = report.status.value if report is not None else "error"
            logger.error(f"Day {day} slot {t}: solver returned {status}; executing fallback schedule")
            ledger.events.append(ReliabilityEvent("fallback", t, None, 0.0, f"solver status {status}"))
            step = fallback_decisions(day_scn, t, soc_prev)

        step, events = realize(step, day_scn, realized_load[:, t:t + 1], realized_pv[:, t:t + 1])
        events += chain_soc(step, day_scn, soc_prev)
        for event in events:
            logger.warning(f"Day {day} slot {t}: {event.kind} of {event.value:.4f} for {event.prosumer_id}")
        ledger.events.extend(events)

        cost = evaluate_cost(step, day_scn, realized_load[:, t:t + 1], realized_pv[:, t:t + 1],
                             peak_prefix=peak, apply_realization=False)
        for term in CostBreakdown.TERMS:
            getattr(ledger.costs, term)[:, t] = getattr(cost, term)[:, 0]
        executed.set_slot(t, step)
        peak = np.maximum(peak, step.p_grid[:, 0])
        soc_prev = step.soc[:, 0].copy()

        for u, p in enumerate(day_scn.prosumers):
            ev = p.ev
            if ev.has_window and t == ev.avail_end and p.id not in relaxed_departures:
                miss = soc_prev[u] - ev.soc_desired_departure
                if abs(miss) > DEPARTURE_TOLERANCE:
                    ledger.events.append(ReliabilityEvent("departure_miss", t, p.id, float(miss),
                                                          "departure energy differs from target"))

        if day_scn.topology is not None:
            topology = day_scn.topology
            flow = propagate(topology, net_loads(topology, day_scn.prosumers, step),
                             topology.inflexible_q[:, [t]], start=t)
            ledger.flows.append(flow)
            for violation in check_limits(flow, topology):
                logger.warning(f"Day {day} slot {t}: network limit violated {violation.as_dict()}")
                ledger.events.append(ReliabilityEvent(
                    "network", t, None, violation.value,
                    f"{violation.element} {violation.index} {violation.quantity} bound {violation.bound}",
                ))

        ledger.solves.append({
            "slot": t,
            "status": report.status.value if report is not None else "error",
            "binaries_fixed_by": report.binaries_fixed_by if report is not None else None,
            "fixes": report.fixes if report is not None else 0,
            "iterations": report.iterations if report is not None else 0,
            "objective": float(report.objective) if report is not None else float("nan"),
            "fallback": not use_solution,
        })
        logger.debug(f"Day {day} slot {t}: executed, slot cost {cost.total:.4f}")

    ledger.decisions = executed
    ledger.wall_time = time.perf_counter() - started
    logger.info(
        f"Scenario '{day_scn.name}' day {day}: total cost {ledger.total:.4f} $, "
        f"{len(ledger.events)} events, {ledger.wall_time:.2f}s"
    )
    return ledger


def solve_day_ahead(
    scenario: "Scenario",
    day: int,
    mode: str | None = None,
    toggles: StreamToggle | None = None,
) -> tuple[SolveReport, CostBreakdown]:
    """One-shot full-day solve on realized traces, the perfect-information optimum."""
    day_scn = scenario.day(day, toggles)
    report = solve_miqp(assemble(day_scn), mode or get_settings().default_mode)
    report.raise_for_status()
    return report, evaluate_cost(report.decisions.cleaned(), day_scn)


def _run_day_task(args) -> RunLedger:
    scenario, day, forecaster, mode, toggles = args
    return run_day(scenario, day, forecaster, mode, toggles)


def run_campaign(
    scenario: "Scenario",
    forecaster: ForecasterSpec,
    days: Sequence[int] | None = None,
    mode: str | None = None,
    jobs: int | None = None,
    toggles: StreamToggle | None = None,
) -> Campaign:
    """Run every requested day; days are independent and may run in parallel processes."""
    days = list(scenario.days if days is None else days)
    if not days:
        raise ValidationError("A campaign needs at least one day")
    missing = [d for d in days if d not in scenario.load]
    if missing:
        raise DataError(f"No realized data for days {missing}")
    jobs = jobs or get_settings().jobs
    tasks = [(scenario, d, forecaster, mode, toggles) for d in days]
    if jobs > 1 and len(days) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(days))) as pool:
            ledgers = list(pool.map(_run_day_task, tasks))
    else:
        ledgers = [_run_day_task(task) for task in tasks]
    ledgers.sort(key=lambda ledger: ledger.day)
    campaign = Campaign(scenario=scenario.name, forecaster=forecaster.label, ledgers=ledgers)
    logger.info(
        f"Campaign '{scenario.name}' ({forecaster.label}): {len(days)} days, "
        f"mean daily cost {campaign.mean_daily:.4f} $"
    )
    return campaign
