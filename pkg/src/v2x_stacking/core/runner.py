"""
Command workflows shared by the CLI and the tool server.

Each workflow resolves a scenario config with overrides, runs the operation and
writes its artifacts, returning a JSON-ready result dict.
"""

from pathlib import Path
from typing import Any, Sequence

from v2x_stacking.core.exceptions import ValidationError
from v2x_stacking.core.data import write_baseline_outputs, write_run_outputs, write_sweep_outputs
from v2x_stacking.core.forecast import forecast
from v2x_stacking.core.metrics import run_baselines, sensitivity_sweep
from v2x_stacking.core.optimizer import assemble, solve_miqp
from v2x_stacking.core.qp import dump_problem
from v2x_stacking.core.rho import run_campaign
from v2x_stacking.core.scenario import MARKET_PROFILES, ScenarioConfig, load_config, materialize
from v2x_stacking.utils import get_logger
from v2x_stacking.utils.helpers import get_output_path

logger = get_logger(__name__)


def resolve_config(
    config: str | Path | ScenarioConfig | None = None,
    seed: int | None = None,
    market: str | None = None,
    tariff: str | None = None,
    streams: str | None = None,
    days: int | None = None,
    sigma: float | None = None,
) -> ScenarioConfig:
    """Scenario config from a YAML file (or defaults) with command-line overrides applied."""
    if config is None:
        base = ScenarioConfig()
    elif isinstance(config, ScenarioConfig):
        base = config
    else:
        base = load_config(config)
    try:
        return base.with_overrides(
            seed=seed,
            market=market,
            tariff=tariff,
            streams=streams,
            days=days,
            forecaster={"sigma": sigma} if sigma is not None else None,
        )
    except ValidationError:
        raise
    except Exception as e:
        raise ValidationError(f"Invalid override: {e}") from e


def run_workflow(config: ScenarioConfig, out: str | None = None, mode: str | None = None,
                 jobs: int | None = None, forecasts: bool = False) -> dict[str, Any]:
    scenario = materialize(config)
    campaign = run_campaign(scenario, config.forecaster, mode=mode, jobs=jobs)
    result = write_run_outputs(scenario, campaign, get_output_path(out or config.name), forecasts=forecasts)
    return {
        **result,
        "scenario": config.name,
        "daily_totals": [float(c) for c in campaign.totals],
        "mean_daily_cost": campaign.mean_daily,
        "events": len(campaign.events),
    }


def baselines_workflow(config: ScenarioConfig, out: str | None = None, mode: str | None = None,
                       jobs: int | None = None, day_ahead: bool = False) -> dict[str, Any]:
    scenario = materialize(config)
    report = run_baselines(scenario, config.forecaster, mode=mode, jobs=jobs, day_ahead=day_ahead)
    result = write_baseline_outputs(scenario, report, get_output_path(out or f"{config.name}-baselines"))
    return {
        **result,
        "scenario": config.name,
        "baselines": [r.as_dict() for r in report.results],
        "marginal_contributions": [c.as_dict() for c in report.contributions],
    }


def sweep_workflow(config: ScenarioConfig, sigmas: Sequence[float], seeds: Sequence[int], apply_to: str = "load",
                   out: str | None = None, mode: str | None = None, jobs: int | None = None) -> dict[str, Any]:
    sweep = sensitivity_sweep(config, sigmas, seeds, apply_to=apply_to, mode=mode, jobs=jobs)
    result = write_sweep_outputs(config.name, sweep, get_output_path(out or f"{config.name}-sweep-{apply_to}"))
    return {**result, "scenario": config.name, "curve": sweep.bins.to_dict(orient="records")}


def dump_workflow(config: ScenarioConfig, day: int = 0, slot: int = 0, out: str | None = None,
                  mode: str | None = None, solve: bool = False) -> dict[str, Any]:
    """Write the window problem of (day, slot) as it would be assembled in the rolling horizon.

    Slots before ``slot`` are taken from a day-ahead solve on realized data.
    """
    scenario = materialize(config)
    day_scn = scenario.day(day)
    T = day_scn.grid.slots_per_day
    if not 0 <= slot < T:
        raise ValidationError(f"Slot {slot} outside 0..{T - 1}")
    prefix = None
    if slot > 0:
        prefix_report = solve_miqp(assemble(day_scn), mode or "repair").raise_for_status()
        prefix = prefix_report.decisions.cleaned()
    history = scenario.history(day, slot)
    predicted = forecast(config.forecaster, history, slot, T - 1 - slot)
    window_input = predicted.prepend(day_scn.load[:, slot], day_scn.pv[:, slot])
    problem = assemble(day_scn, range(slot, T), prefix, window_input)
    path = dump_problem(problem, get_output_path(out or config.name) / "problems" / f"day_{day}_slot_{slot}.txt")
    result: dict[str, Any] = {
        "problem": str(path),
        "columns": problem.n,
        "rows": problem.m,
        "pairs": len(problem.pairs),
        "diagnostics": list(problem.diagnostics),
    }
    if solve:
        result["solve"] = solve_miqp(problem, mode or "repair").summary()
    return result


def market_profiles() -> list[dict[str, Any]]:
    return [
        {
            "name": p.name,
            "label": p.label,
            "off_peak": p.off_peak,
            "shoulder": p.shoulder,
            "peak": p.peak,
            "peak_hours": list(p.peak_hours),
            "shoulder_hours": [list(h) for h in p.shoulder_hours],
            "wholesale": list(p.wholesale),
        }
        for p in MARKET_PROFILES.values()
    ]
