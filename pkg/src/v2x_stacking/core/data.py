"""
Result persistence for v2x-stacking: per-day ledger CSVs, JSON summaries and the
results workbook.
"""

import json
import math
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from openpyxl import Workbook
from openpyxl.styles import Font
from openpyxl.utils import get_column_letter
from openpyxl.worksheet.worksheet import Worksheet

from v2x_stacking.core.exceptions import DataError
from v2x_stacking.core.forecast import export_forecasts
from v2x_stacking.core.metrics import BaselineReport, SweepResult
from v2x_stacking.core.rho import Campaign
from v2x_stacking.core.scenario import Scenario
from v2x_stacking.utils import get_logger
from v2x_stacking.utils.logger import audit_event

logger = get_logger(__name__)


def _clean(value: Any) -> Any:
    """JSON-safe copy: numpy scalars unwrapped, NaN and infinities as null."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_json(payload: dict, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(_clean(payload), f, indent=2)
    except (OSError, TypeError) as e:
        logger.error(f"Failed to write {path}: {e}")
        raise DataError(f"Failed to write {path}: {e}") from e
    return path


def _write_sheet(ws: Worksheet, frame: pd.DataFrame) -> None:
    bold = Font(bold=True)
    for j, column in enumerate(frame.columns, start=1):
        cell = ws.cell(row=1, column=j, value=str(column))
        cell.font = bold
        ws.column_dimensions[get_column_letter(j)].width = max(10, len(str(column)) + 2)
    for i, row in enumerate(frame.itertuples(index=False), start=2):
        for j, value in enumerate(row, start=1):
            ws.cell(row=i, column=j, value=_clean(value))


def write_workbook(tables: dict[str, pd.DataFrame], path: str | Path) -> Path:
    """One sheet per table, header row in bold."""
    if not tables:
        raise DataError("No tables provided to write")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        wb = Workbook()
        wb.remove(wb.active)
        for name, frame in tables.items():
            # sheet titles are limited to 31 characters
            _write_sheet(wb.create_sheet(title=name[:31]), frame)
        wb.save(str(path))
        wb.close()
    except Exception as e:
        logger.error(f"Failed to write workbook {path}: {e}")
        raise DataError(f"Failed to write workbook {path}: {e}") from e
    return path


def campaign_summary(scenario: Scenario, campaign: Campaign) -> dict:
    """JSON summary of a campaign, including the assumptions the fleet was built with."""
    grid = scenario.grid
    fleet = scenario.config.fleet
    terms: dict[str, float] = {}
    for ledger in campaign.ledgers:
        for term, value in ledger.term_totals().items():
            terms[term] = terms.get(term, 0.0) + value
    return {
        "scenario": scenario.name,
        "fingerprint": scenario.fingerprint(),
        "forecaster": campaign.forecaster,
        "config": scenario.config.model_dump(mode="json"),
        "assumptions": {
            "day_start_hour": grid.day_start_hour,
            "slot_hours": grid.slot_hours,
            "arrival_hour": fleet.arrival_hour,
            "departure_hour": fleet.departure_hour,
            "jitter_hours": fleet.jitter_hours,
            "availability_windows": {pid: list(w) for pid, w in zip(scenario.prosumer_ids, scenario.windows)},
        },
        "daily_totals": campaign.totals,
        "total_cost": campaign.total,
        "mean_daily_cost": campaign.mean_daily,
        "terms": terms,
        "re_load": campaign.re_load,
        "re_pv": campaign.re_pv,
        "days": [ledger.summary() for ledger in campaign.ledgers],
        "events": campaign.events,
    }


def write_run_outputs(scenario: Scenario, campaign: Campaign, out: str | Path, forecasts: bool = False) -> dict:
    """ledgers/day_<d>.csv, summary.json and optionally forecasts.csv under ``out``."""
    out = Path(out)
    ledger_dir = out / "ledgers"
    ledger_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for ledger in campaign.ledgers:
        path = ledger_dir / f"day_{ledger.day}.csv"
        ledger.to_frame().to_csv(path, index=False)
        files.append(str(path))
    summary = campaign_summary(scenario, campaign)
    write_json(summary, out / "summary.json")
    if forecasts:
        snapshots = [s for ledger in campaign.ledgers for s in ledger.snapshots]
        export_forecasts(snapshots, scenario.prosumer_ids, out / "forecasts.csv")
    audit_event("run", {
        "scenario": scenario.name,
        "seed": scenario.config.seed,
        "days": len(campaign.ledgers),
        "total_cost": campaign.total,
        "output": str(out),
    })
    logger.info(f"Wrote {len(files)} ledgers and summary to {out}")
    return {"ledgers": files, "summary": str(out / "summary.json"), "total_cost": campaign.total}


def write_baseline_outputs(scenario: Scenario, report: BaselineReport, out: str | Path) -> dict:
    """baselines.csv, summary.json and results.xlsx under ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    table = report.to_frame()
    contributions = report.contributions_frame()
    table.to_csv(out / "baselines.csv", index=False)
    contributions.to_csv(out / "contributions.csv", index=False)
    write_json({
        "scenario": scenario.name,
        "fingerprint": scenario.fingerprint(),
        "config": scenario.config.model_dump(mode="json"),
        "baselines": [r.as_dict() for r in report.results],
        "marginal_contributions": [c.as_dict() for c in report.contributions],
    }, out / "summary.json")
    write_workbook({"baselines": table, "contributions": contributions}, out / "results.xlsx")
    audit_event("baselines", {
        "scenario": scenario.name,
        "seed": scenario.config.seed,
        "rows": len(table),
        "output": str(out),
    })
    return {"rows": len(table), "table": str(out / "baselines.csv"), "workbook": str(out / "results.xlsx")}


def write_sweep_outputs(name: str, sweep: SweepResult, out: str | Path) -> dict:
    """samples.csv, curve.csv, summary.json and results.xlsx under ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    sweep.samples.to_csv(out / "samples.csv", index=False)
    sweep.bins.to_csv(out / "curve.csv", index=False)
    write_json({
        "scenario": name,
        "apply_to": sweep.apply_to,
        "curve": sweep.bins.to_dict(orient="records"),
        "by_sigma": sweep.by_sigma.to_dict(orient="records"),
    }, out / "summary.json")
    write_workbook({"curve": sweep.bins, "by_sigma": sweep.by_sigma, "samples": sweep.samples}, out / "results.xlsx")
    audit_event("sweep", {"scenario": name, "apply_to": sweep.apply_to, "samples": len(sweep.samples), "output": str(out)})
    return {"samples": len(sweep.samples), "curve": str(out / "curve.csv"), "workbook": str(out / "results.xlsx")}
