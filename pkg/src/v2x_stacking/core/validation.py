"""
Scenario checks that run without solving anything.
"""

from pathlib import Path
from typing import Any

import numpy as np

from v2x_stacking.core.exceptions import V2XError, ValidationError
from v2x_stacking.core.network import check_limits, propagate
from v2x_stacking.core.optimizer import assemble
from v2x_stacking.core.scenario import ScenarioConfig, load_config, materialize
from v2x_stacking.utils import get_logger
from v2x_stacking.utils.logger import audit_event

logger = get_logger(__name__)


def validate_scenario(config: ScenarioConfig | str | Path) -> dict[str, Any]:
    """Load, materialize and assemble every day of a scenario and report what was found.

    Hard problems (bad config, malformed data, unknown nodes) raise the matching
    ``V2XError``; soft ones (unreachable departure targets, a feeder already outside
    its limits with no EV activity) are returned as warnings.
    """
    try:
        if not isinstance(config, ScenarioConfig):
            config = load_config(config)
        scenario = materialize(config)

        warnings: list[str] = []
        if scenario.n_prosumers == 0:
            warnings.append("fleet is empty; only the network will be simulated")
        for d in scenario.days:
            day = scenario.day(d)
            problem = assemble(day)
            crossed = np.nonzero(problem.lb > problem.ub)[0]
            if crossed.size:
                raise ValidationError(f"Day {d}: bounds crossed for {problem.columns[crossed[0]]}")
            warnings.extend(f"day {d}: {note}" for note in problem.diagnostics)

        if scenario.topology is not None:
            topology = scenario.topology
            violations = check_limits(propagate(topology, topology.inflexible_p, topology.inflexible_q), topology)
            if violations:
                worst = violations[0].as_dict()
                warnings.append(f"inflexible load alone violates {len(violations)} network limits, e.g. {worst}")

        for w in warnings:
            logger.warning(f"Scenario '{config.name}': {w}")
        result = {
            "valid": True,
            "message": f"Scenario '{config.name}' is valid",
            "scenario": config.name,
            "fingerprint": scenario.fingerprint(),
            "prosumers": scenario.n_prosumers,
            "days": config.days,
            "warnings": warnings,
        }
        audit_event("validate", {"scenario": config.name, "valid": True, "warnings": len(warnings)})
        return result
    except V2XError as e:
        logger.error(f"Scenario validation failed: {e}")
        raise
    except Exception as e:
        logger.error(f"Failed to validate scenario: {e}")
        raise ValidationError(str(e)) from e
