"""
Simulation tools for the v2x-stacking tool server.
This module exposes campaign runs, baseline comparisons, forecast-error sweeps and
scenario validation as MCP tools.
"""

from typing import Any, Dict, List, Optional

from v2x_stacking.api.registry import register_tool
from v2x_stacking.core.exceptions import V2XError
from v2x_stacking.core.runner import (
    baselines_workflow,
    market_profiles,
    resolve_config,
    run_workflow,
    sweep_workflow,
)
from v2x_stacking.core.validation import validate_scenario as validate_scenario_impl
from v2x_stacking.utils import get_logger

logger = get_logger(__name__)


def _failure(e: Exception) -> Dict[str, Any]:
    return {"success": False, "error": type(e).__name__, "message": str(e)}


@register_tool
def run_scenario(
    config_path: Optional[str] = None,
    out: Optional[str] = None,
    seed: Optional[int] = None,
    market: Optional[str] = None,
    tariff: Optional[str] = None,
    streams: Optional[str] = None,
    days: Optional[int] = None,
    sigma: Optional[float] = None,
    mode: Optional[str] = None,
) -> Dict[str, Any]:
    """
    Runs a rolling-horizon campaign and writes per-day ledgers and a summary.

    Args:
        config_path (str, optional): Scenario YAML file. Defaults to the built-in 60-prosumer scenario.
        out (str, optional): Output directory, relative to the configured output folder.
        seed (int, optional): Scenario seed override.
        market (str, optional): nem, isone or nyiso.
        tariff (str, optional): tou or tpt.
        streams (str, optional): Comma list of v2h, v2g, et (or none).
        days (int, optional): Number of simulated days.
        sigma (float, optional): Target relative forecast error for error injection.
        mode (str, optional): Integer handling, repair or branch.

    Returns:
        dict: {
            "success": bool,
            "message": str,
            "daily_totals": list[float],  # C_Total per day in $
            "summary": str                # path of summary.json
        }

    Example:
        run_scenario(market="isone", days=1, sigma=0.3)
    """
    logger.debug(f"run_scenario called with config_path={config_path}, seed={seed}, market={market}")
    try:
        config = resolve_config(config_path, seed=seed, market=market, tariff=tariff, streams=streams,
                                days=days, sigma=sigma)
        result = run_workflow(config, out=out, mode=mode)
        return {"success": True, "message": f"Ran {len(result['daily_totals'])} days of '{config.name}'", **result}
    except V2XError as e:
        logger.debug(f"run_scenario failed: {e}")
        return _failure(e)


@register_tool
def run_baselines(
    config_path: Optional[str] = None,
    out: Optional[str] = None,
    seed: Optional[int] = None,
    market: Optional[str] = None,
    tariff: Optional[str] = None,
    days: Optional[int] = None,
    mode: Optional[str] = None,
    day_ahead: bool = False,
) -> Dict[str, Any]:
    """
    Compares value stacking against single-stream, leave-one-out and no-V2X runs.

    Args:
        config_path (str, optional): Scenario YAML file.
        out (str, optional): Output directory.
        seed (int, optional): Scenario seed override.
        market (str, optional): nem, isone or nyiso.
        tariff (str, optional): tou or tpt.
        days (int, optional): Number of simulated days.
        mode (str, optional): Integer handling, repair or branch.
        day_ahead (bool): Solve each day once on realized data instead of rolling.

    Returns:
        dict: {
            "success": bool,
            "baselines": list[dict],              # eight rows with cost reductions
            "marginal_contributions": list[dict]  # absolute and ratio per stream
        }
    """
    logger.debug(f"run_baselines called with config_path={config_path}, market={market}, tariff={tariff}")
    try:
        config = resolve_config(config_path, seed=seed, market=market, tariff=tariff, days=days)
        result = baselines_workflow(config, out=out, mode=mode, day_ahead=day_ahead)
        return {"success": True, "message": f"Compared {result['rows']} runs", **result}
    except V2XError as e:
        logger.debug(f"run_baselines failed: {e}")
        return _failure(e)


@register_tool
def run_sweep(
    sigmas: List[float],
    seeds: List[int],
    config_path: Optional[str] = None,
    apply_to: str = "load",
    out: Optional[str] = None,
    days: Optional[int] = None,
    mode: Optional[str] = None,
) -> Dict[str, Any]:
    """
    Measures relative extra cost against forecast error for a grid of error levels.

    Args:
        sigmas (list[float]): Ascending nonnegative target relative errors, e.g. [0, 0.1, 0.2, 0.3].
        seeds (list[int]): Scenario seeds to average over.
        config_path (str, optional): Scenario YAML file.
        apply_to (str): Which forecast carries the error: load, pv or both.
        out (str, optional): Output directory.
        days (int, optional): Number of simulated days per seed.
        mode (str, optional): Integer handling, repair or branch.

    Returns:
        dict: {
            "success": bool,
            "curve": list[dict]  # re_lo, re_hi, count, mean_rec, std_rec per RE bin
        }
    """
    logger.debug(f"run_sweep called with sigmas={sigmas}, seeds={seeds}, apply_to={apply_to}")
    try:
        config = resolve_config(config_path, days=days)
        result = sweep_workflow(config, sigmas, seeds, apply_to=apply_to, out=out, mode=mode)
        return {"success": True, "message": f"Collected {result['samples']} samples", **result}
    except V2XError as e:
        logger.debug(f"run_sweep failed: {e}")
        return _failure(e)


@register_tool
def validate_scenario(config_path: Optional[str] = None) -> Dict[str, Any]:
    """
    Checks a scenario config and its data files without solving.

    Args:
        config_path (str, optional): Scenario YAML file.

    Returns:
        dict: {
            "success": bool,
            "valid": bool,
            "warnings": list[str]
        }
    """
    logger.debug(f"validate_scenario called with config_path={config_path}")
    try:
        result = validate_scenario_impl(resolve_config(config_path))
        return {"success": True, **result}
    except V2XError as e:
        return {**_failure(e), "valid": False}


@register_tool
def list_market_profiles() -> Dict[str, Any]:
    """
    Lists the built-in market profiles with their TOU levels and wholesale shapes.

    Returns:
        dict: {
            "success": bool,
            "profiles": list[dict]
        }
    """
    return {"success": True, "profiles": market_profiles()}
