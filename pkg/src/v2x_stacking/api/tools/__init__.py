"""
Tools package for the v2x-stacking tool server.
"""

from v2x_stacking.api.tools.simulation import (
    list_market_profiles,
    run_baselines,
    run_scenario,
    run_sweep,
    validate_scenario,
)

__all__ = [
    "run_scenario",
    "run_baselines",
    "run_sweep",
    "validate_scenario",
    "list_market_profiles",
]
