"""Core functionality for EV value-stacking simulations."""

from v2x_stacking.core.exceptions import V2XError
from v2x_stacking.core.model import DecisionVector, EvSpec, ProsumerState, SlotDecision, Tariff, TimeGrid
from v2x_stacking.core.network import NetworkTopology, check_limits, ieee33, propagate
from v2x_stacking.core.streams import MarketPrices, StreamToggle
from v2x_stacking.core.optimizer import assemble, evaluate_cost, solve_miqp
from v2x_stacking.core.forecast import ForecasterSpec, forecast
from v2x_stacking.core.rho import run_campaign, run_day
from v2x_stacking.core.scenario import ScenarioConfig, load_config, materialize
from v2x_stacking.core.metrics import cost_reduction, marginal_contribution, rec, run_baselines, sensitivity_sweep

__all__ = [
    "V2XError",
    "TimeGrid",
    "EvSpec",
    "Tariff",
    "ProsumerState",
    "SlotDecision",
    "DecisionVector",
    "NetworkTopology",
    "ieee33",
    "propagate",
    "check_limits",
    "MarketPrices",
    "StreamToggle",
    "assemble",
    "solve_miqp",
    "evaluate_cost",
    "ForecasterSpec",
    "forecast",
    "run_day",
    "run_campaign",
    "ScenarioConfig",
    "load_config",
    "materialize",
    "rec",
    "cost_reduction",
    "marginal_contribution",
    "run_baselines",
    "sensitivity_sweep",
]
