"""
CLI entry point for v2x-stacking.
This module provides the command-line interface for running campaigns, baselines and
forecast-error sweeps, validating scenarios, dumping window problems and starting the
tool server.
"""

import asyncio
import json
import sys
from enum import Enum
from typing import Any, Callable, Optional

import typer

from v2x_stacking.core.exceptions import DataError, NetworkError, SolverError, ValidationError, V2XError
from v2x_stacking.core.runner import (
    baselines_workflow,
    dump_workflow,
    resolve_config,
    run_workflow,
    sweep_workflow,
)
from v2x_stacking.core.validation import validate_scenario
from v2x_stacking.utils import get_logger

# Initialize logger
logger = get_logger(__name__)

app = typer.Typer(help="EV value-stacking simulator (V2H / V2G / local trading)")


class Mode(str, Enum):
    repair = "repair"
    branch = "branch"


class Transport(str, Enum):
    stdio = "stdio"
    sse = "sse"


def exit_code(error: Exception) -> int:
    """Exit status for a failed command: 2 for bad input, 3 for solver failures, 1 otherwise."""
    if isinstance(error, (ValidationError, DataError, NetworkError)):
        return 2
    if isinstance(error, SolverError):
        return 3
    return 1


def _execute(command: str, action: Callable[[], dict[str, Any]]) -> None:
    try:
        result = action()
    except Exception as e:
        if isinstance(e, V2XError):
            logger.error(f"{command} failed: {e}")
        else:
            logger.exception(f"{command} failed unexpectedly")
        typer.echo(json.dumps({"error": type(e).__name__, "message": str(e)}), err=True)
        raise typer.Exit(code=exit_code(e))
    typer.echo(json.dumps(result, indent=2, default=str))


def _split(text: str, cast: type) -> list:
    try:
        return [cast(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise ValidationError(f"Could not parse list '{text}': {e}") from e


ConfigOpt = typer.Option(None, "--config", help="Scenario YAML file")
OutOpt = typer.Option(None, "--out", help="Output directory (relative to the output folder)")
SeedOpt = typer.Option(None, "--seed", help="Scenario seed")
ModeOpt = typer.Option(None, "--mode", help="Integer handling for complementarity pairs")
JobsOpt = typer.Option(None, "--jobs", min=1, help="Parallel day tasks")
MarketOpt = typer.Option(None, "--market", help="nem, isone or nyiso")
TariffOpt = typer.Option(None, "--tariff", help="tou or tpt")
DaysOpt = typer.Option(None, "--days", min=1, help="Number of simulated days")


@app.command()
def run(
    config: Optional[str] = ConfigOpt,
    out: Optional[str] = OutOpt,
    seed: Optional[int] = SeedOpt,
    mode: Optional[Mode] = ModeOpt,
    jobs: Optional[int] = JobsOpt,
    market: Optional[str] = MarketOpt,
    tariff: Optional[str] = TariffOpt,
    streams: Optional[str] = typer.Option(None, "--streams", help="Comma list of v2h,v2g,et or none"),
    days: Optional[int] = DaysOpt,
    sigma: Optional[float] = typer.Option(None, "--sigma", min=0.0, help="Target relative forecast error"),
    forecasts: bool = typer.Option(False, "--forecasts", help="Also write forecasts.csv"),
):
    """Run a rolling-horizon campaign and write ledgers/day_<d>.csv and summary.json"""
    _execute("run", lambda: run_workflow(
        resolve_config(config, seed=seed, market=market, tariff=tariff, streams=streams, days=days, sigma=sigma),
        out=out,
        mode=mode.value if mode else None,
        jobs=jobs,
        forecasts=forecasts,
    ))


@app.command()
def baselines(
    config: Optional[str] = ConfigOpt,
    out: Optional[str] = OutOpt,
    seed: Optional[int] = SeedOpt,
    mode: Optional[Mode] = ModeOpt,
    jobs: Optional[int] = JobsOpt,
    market: Optional[str] = MarketOpt,
    tariff: Optional[str] = TariffOpt,
    days: Optional[int] = DaysOpt,
    day_ahead: bool = typer.Option(False, "--day-ahead", help="Solve each day once on realized traces"),
):
    """Compare value stacking with the single-stream, leave-one-out and no-V2X runs"""
    _execute("baselines", lambda: baselines_workflow(
        resolve_config(config, seed=seed, market=market, tariff=tariff, days=days),
        out=out,
        mode=mode.value if mode else None,
        jobs=jobs,
        day_ahead=day_ahead,
    ))


@app.command()
def sweep(
    config: Optional[str] = ConfigOpt,
    out: Optional[str] = OutOpt,
    sigmas: str = typer.Option("0,0.1,0.2,0.3", "--sigmas", help="Comma list of target relative errors"),
    seeds: str = typer.Option("0,1,2,3,4,5,6,7,8,9", "--seeds", help="Comma list of scenario seeds"),
    apply_to: str = typer.Option("load", "--apply-to", help="load, pv or both"),
    mode: Optional[Mode] = ModeOpt,
    jobs: Optional[int] = JobsOpt,
    market: Optional[str] = MarketOpt,
    tariff: Optional[str] = TariffOpt,
    days: Optional[int] = DaysOpt,
):
    """Sweep forecast error levels and write the REC-versus-RE curve"""
    _execute("sweep", lambda: sweep_workflow(
        resolve_config(config, market=market, tariff=tariff, days=days),
        _split(sigmas, float),
        _split(seeds, int),
        apply_to=apply_to,
        out=out,
        mode=mode.value if mode else None,
        jobs=jobs,
    ))


@app.command()
def validate(
    config: Optional[str] = ConfigOpt,
    seed: Optional[int] = SeedOpt,
    market: Optional[str] = MarketOpt,
    tariff: Optional[str] = TariffOpt,
    days: Optional[int] = DaysOpt,
):
    """Check a scenario config and its data files without solving"""
    _execute("validate", lambda: validate_scenario(
        resolve_config(config, seed=seed, market=market, tariff=tariff, days=days)
    ))


@app.command("dump-problem")
def dump_problem(
    config: Optional[str] = ConfigOpt,
    out: Optional[str] = OutOpt,
    seed: Optional[int] = SeedOpt,
    day: int = typer.Option(0, "--day", min=0, help="Simulated day"),
    slot: int = typer.Option(0, "--slot", min=0, help="Window start slot"),
    mode: Optional[Mode] = ModeOpt,
    solve: bool = typer.Option(False, "--solve", help="Also solve the dumped problem"),
):
    """Write the window problem of one (day, slot) as sparse triplets"""
    _execute("dump-problem", lambda: dump_workflow(
        resolve_config(config, seed=seed),
        day=day,
        slot=slot,
        out=out,
        mode=mode.value if mode else None,
        solve=solve,
    ))


@app.command()
def serve(transport: Transport = typer.Option(Transport.stdio, "--transport", help="stdio or sse")):
    """Start the v2x-stacking tool server"""
    # imported here so the CLI does not build the tool server unless asked
    from v2x_stacking.api.server import run_sse, run_stdio

    logger.info(f"v2x-stacking tool server - {transport.value} mode")
    try:
        if transport is Transport.sse:
            asyncio.run(run_sse())
        else:
            run_stdio()
    except KeyboardInterrupt:
        logger.info("Shutting down server...")
    except Exception as e:
        logger.error(f"Server error: {e}")
        print(f"Server error: {e}", file=sys.stderr)
        raise typer.Exit(code=1)
    finally:
        logger.info("Service stopped.")


if __name__ == "__main__":
    app()
