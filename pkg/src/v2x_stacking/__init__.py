"""
v2x-stacking - EV value stacking (V2H / V2G / local energy trading) over a linearized
distribution network, solved in a rolling horizon under imperfect forecasts.
"""

from v2x_stacking.core.exceptions import V2XError
from v2x_stacking.core.scenario import ScenarioConfig, materialize
from v2x_stacking.core.rho import run_campaign, run_day

__all__ = ["V2XError", "ScenarioConfig", "materialize", "run_day", "run_campaign"]
