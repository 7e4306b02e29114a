"""
Evaluation metrics for v2x-stacking: cost reduction against the no-V2X reference,
marginal value of each stream, relative extra cost and its sensitivity to forecast
error.
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from v2x_stacking.core.exceptions import MetricError, ValidationError
from v2x_stacking.core.forecast import ForecasterKind, ForecasterSpec, ev_window_mask
from v2x_stacking.core.rho import Campaign, RunLedger, run_campaign, solve_day_ahead
from v2x_stacking.core.scenario import Scenario, ScenarioConfig, materialize
from v2x_stacking.core.streams import STREAM_NAMES, StreamToggle
from v2x_stacking.utils import get_logger

logger = get_logger(__name__)

RE_BIN_WIDTH = 0.05

STREAM_LABELS = {"v2h": "V2H", "v2g": "V2G", "et": "ET"}


@dataclass
class ScenarioResult:
    """Outcome of one campaign, comparable with the reference run on the same inputs."""

    scenario_id: str
    label: str
    tariff: str
    market: str
    streams: str
    total_cost: float
    daily_costs: list[float] = field(default_factory=list)
    cost_reduction: float | None = None
    rec: float | None = None
    re_load: float = float("nan")
    re_pv: float = float("nan")

    @classmethod
    def from_campaign(cls, scenario: Scenario, campaign: Campaign, streams: StreamToggle, label: str) -> "ScenarioResult":
        return cls(
            scenario_id=scenario.fingerprint(),
            label=label,
            tariff=scenario.config.tariff.value,
            market=scenario.config.market,
            streams=streams.label,
            total_cost=campaign.total,
            daily_costs=[float(c) for c in campaign.totals],
            re_load=campaign.re_load,
            re_pv=campaign.re_pv,
        )

    def as_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "label": self.label,
            "tariff": self.tariff,
            "market": self.market,
            "streams": self.streams,
            "total_cost": self.total_cost,
            "mean_daily_cost": float(np.mean(self.daily_costs)) if self.daily_costs else self.total_cost,
            "cost_reduction": self.cost_reduction,
            "rec": self.rec,
            "re_load": self.re_load,
            "re_pv": self.re_pv,
        }


@dataclass(frozen=True)
class MarginalContribution:
    """Value of one stream: full-stack cost reduction minus the reduction without it.

    ``absolute`` is the difference in percentage points, ``ratio`` the same difference
    relative to the full-stack reduction in percent.
    """

    stream: str
    absolute: float
    ratio: float

    def as_dict(self) -> dict:
        return {"stream": self.stream, "absolute": self.absolute, "ratio": self.ratio}


def rec(
    costs_predicted: np.ndarray,
    costs_perfect: np.ndarray,
    windows: Sequence[tuple[int, int]] | None = None,
) -> float:
    """Relative extra cost sum|C_pred - C_perf| / sum C_perf.

    Costs are per-prosumer per-slot arrays of shape (prosumers, slots), optionally with
    a leading day axis. With ``windows`` only each prosumer's EV availability slots count.
    """
    predicted = np.asarray(costs_predicted, dtype=float)
    perfect = np.asarray(costs_perfect, dtype=float)
    if predicted.shape != perfect.shape:
        raise MetricError(f"Cost ledgers differ in shape: {predicted.shape} vs {perfect.shape}")
    if windows is not None:
        mask = np.broadcast_to(ev_window_mask(windows, perfect.shape[-1]), perfect.shape)
        predicted, perfect = predicted[mask], perfect[mask]
    denominator = float(perfect.sum())
    if denominator <= 0.0:
        raise MetricError(f"Relative extra cost undefined: reference cost is {denominator}")
    return float(np.abs(predicted - perfect).sum() / denominator)


def cost_reduction(stacked_cost: float, reference_cost: float) -> float:
    """Percentage saved against the reference cost."""
    if reference_cost <= 0:
        raise MetricError(f"Cost reduction needs a positive reference cost, got {reference_cost}")
    return 100.0 * (reference_cost - stacked_cost) / reference_cost


def marginal_contribution(full: ScenarioResult, leave_one_out: ScenarioResult, stream: str = "") -> MarginalContribution:
    """Marginal value of the stream missing from ``leave_one_out``; both results carry cost reductions."""
    if full.scenario_id != leave_one_out.scenario_id or full.tariff != leave_one_out.tariff \
            or full.market != leave_one_out.market:
        raise MetricError("Marginal contribution needs results on identical inputs")
    if full.cost_reduction is None or leave_one_out.cost_reduction is None:
        raise MetricError("Both results need a cost reduction against the reference")
    absolute = full.cost_reduction - leave_one_out.cost_reduction
    ratio = 100.0 * absolute / full.cost_reduction if full.cost_reduction != 0 else float("nan")
    return MarginalContribution(stream=stream, absolute=absolute, ratio=ratio)


def baseline_toggles() -> list[tuple[str, StreamToggle]]:
    """Full stack, each stream alone, each leave-one-out, and the no-V2X reference."""
    rows = [("Value stacking", StreamToggle.all())]
    for name in STREAM_NAMES:
        rows.append((f"{STREAM_LABELS[name]} only", StreamToggle.parse(name)))
    for name in STREAM_NAMES:
        rows.append((f"Without {STREAM_LABELS[name]}", StreamToggle.parse([n for n in STREAM_NAMES if n != name])))
    rows.append(("Reference (no V2X)", StreamToggle.none()))
    return rows


@dataclass
class BaselineReport:
    results: list[ScenarioResult]
    contributions: list[MarginalContribution]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.as_dict() for r in self.results])

    def contributions_frame(self) -> pd.DataFrame:
        return pd.DataFrame([c.as_dict() for c in self.contributions], columns=["stream", "absolute", "ratio"])


def _day_ahead_campaign(scenario: Scenario, toggles: StreamToggle, mode: str | None) -> Campaign:
    ledgers = []
    for d in scenario.days:
        report, costs = solve_day_ahead(scenario, d, mode, toggles)
        day_scn = scenario.day(d, toggles)
        ledgers.append(RunLedger(
            scenario=scenario.name, day=d, prosumer_ids=day_scn.prosumer_ids, windows=day_scn.ev_windows,
            forecaster="day_ahead", mode=mode or "", decisions=costs.decisions, costs=costs,
            realized_load=day_scn.load, realized_pv=day_scn.pv, events=list(costs.events),
        ))
    return Campaign(scenario=scenario.name, forecaster="day_ahead", ledgers=ledgers)


def run_baselines(
    scenario: Scenario,
    forecaster: ForecasterSpec | None = None,
    mode: str | None = None,
    jobs: int | None = None,
    day_ahead: bool = False,
) -> BaselineReport:
    """Run the eight comparison campaigns and score them against the reference.

    ``day_ahead`` replaces the rolling horizon by one full-day solve on realized data.
    """
    forecaster = forecaster or scenario.config.forecaster
    results: list[ScenarioResult] = []
    for label, toggles in baseline_toggles():
        if day_ahead:
            campaign = _day_ahead_campaign(scenario, toggles, mode)
        else:
            campaign = run_campaign(scenario, forecaster, mode=mode, jobs=jobs, toggles=toggles)
        results.append(ScenarioResult.from_campaign(scenario, campaign, toggles, label))
        logger.info(f"Baseline '{label}': total cost {campaign.total:.4f} $")

    reference = results[-1]
    for result in results:
        try:
            result.cost_reduction = cost_reduction(result.total_cost, reference.total_cost)
        except MetricError as e:
            logger.warning(f"Cost reduction of '{result.label}' undefined: {e}")
    full = results[0]
    contributions = []
    if full.cost_reduction is not None:
        for name, result in zip(STREAM_NAMES, results[4:7]):
            if result.cost_reduction is not None:
                contributions.append(marginal_contribution(full, result, name))
    return BaselineReport(results=results, contributions=contributions)


@dataclass
class SweepResult:
    """Per-sample REC measurements, their RE bins and per-sigma averages."""

    apply_to: str
    samples: pd.DataFrame
    bins: pd.DataFrame
    by_sigma: pd.DataFrame


def bin_samples(samples: pd.DataFrame, width: float = RE_BIN_WIDTH) -> pd.DataFrame:
    """Mean and standard deviation of REC per RE bin; empty bins keep count 0 and NaN statistics."""
    valid = samples[np.isfinite(samples["re"]) & np.isfinite(samples["rec"])]
    columns = ["re_lo", "re_hi", "count", "mean_rec", "std_rec"]
    if valid.empty:
        return pd.DataFrame(columns=columns)
    index = np.floor(valid["re"].to_numpy() / width + 1e-9).astype(int)
    rows = []
    for b in range(index.min(), index.max() + 1):
        values = valid["rec"].to_numpy()[index == b]
        rows.append({
            "re_lo": b * width,
            "re_hi": (b + 1) * width,
            "count": int(values.size),
            "mean_rec": float(values.mean()) if values.size else float("nan"),
            "std_rec": float(values.std()) if values.size else float("nan"),
        })
    return pd.DataFrame(rows, columns=columns)


def forecast_re(ledger: RunLedger, apply_to: str = "load") -> float:
    """Measured RE of one day for the perturbed series.

    With ``both`` the sample is the mean of the load and PV RE, skipping either one
    when it is undefined (no PV in the window).
    """
    if apply_to == "load":
        return ledger.re_load
    if apply_to == "pv":
        return ledger.re_pv
    values = [v for v in (ledger.re_load, ledger.re_pv) if np.isfinite(v)]
    return float(np.mean(values)) if values else float("nan")


def sensitivity_sweep(
    config: ScenarioConfig,
    sigmas: Sequence[float],
    seeds: Sequence[int],
    apply_to: str = "load",
    mode: str | None = None,
    jobs: int | None = None,
    bin_width: float = RE_BIN_WIDTH,
) -> SweepResult:
    """REC against measured forecast RE.

    For every seed the fleet is materialized with that seed, the perfect-forecast
    campaign is the reference and each sigma runs an error-injection campaign.
    Every simulated day contributes one (RE, REC) sample; see
    ``forecast_re`` for the RE of each sample.
    """
    sigmas = [float(s) for s in sigmas]
    if not sigmas or any(s < 0 for s in sigmas) or sigmas != sorted(sigmas):
        raise ValidationError("Sigma grid must be nonempty, nonnegative and ascending")
    if not seeds:
        raise ValidationError("Sensitivity sweep needs at least one seed")
    if apply_to not in ("load", "pv", "both"):
        raise ValidationError(f"apply_to must be load, pv or both, got '{apply_to}'")

    records = []
    for seed in seeds:
        scenario = materialize(config.with_overrides(seed=int(seed)))
        perfect_spec = ForecasterSpec(kind=ForecasterKind.ERROR_INJECTION, sigma=0.0, seed=int(seed), apply_to=apply_to)
        perfect = run_campaign(scenario, perfect_spec, mode=mode, jobs=jobs)
        for sigma in sigmas:
            if sigma == 0.0:
                campaign = perfect
            else:
                spec = perfect_spec.model_copy(update={"sigma": sigma})
                campaign = run_campaign(scenario, spec, mode=mode, jobs=jobs)
            for ledger, reference in zip(campaign.ledgers, perfect.ledgers):
                re = forecast_re(ledger, apply_to)
                try:
                    value = rec(ledger.slot_costs, reference.slot_costs, ledger.windows)
                except MetricError as e:
                    logger.warning(f"Seed {seed} sigma {sigma} day {ledger.day}: {e}")
                    value = float("nan")
                records.append({"seed": int(seed), "sigma": sigma, "day": ledger.day, "re": re, "rec": value})
        logger.info(f"Sweep seed {seed}: {len(sigmas)} sigma levels done")

    samples = pd.DataFrame(records, columns=["seed", "sigma", "day", "re", "rec"])
    by_sigma = samples.groupby("sigma", as_index=False).agg(
        mean_re=("re", "mean"), mean_rec=("rec", "mean"), std_rec=("rec", "std"), count=("rec", "count"),
    )
    return SweepResult(apply_to=apply_to, samples=samples, bins=bin_samples(samples, bin_width), by_sigma=by_sigma)
