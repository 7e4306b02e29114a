"""
Test cases for the v2x-stacking simulation tools.

The tools are registered on the server but remain plain callables, so they are
exercised directly.
"""

import asyncio

from v2x_stacking.api.registry import TOOL_PREFIX, mcp
from v2x_stacking.api.tools.simulation import (
    list_market_profiles,
    run_baselines,
    run_scenario,
    run_sweep,
    validate_scenario,
)


class TestRegistration:
    """Test cases for tool registration."""

    def test_tools_are_prefixed(self):
        names = {tool.name for tool in asyncio.run(mcp.list_tools())}
        for name in ("run_scenario", "run_baselines", "run_sweep", "validate_scenario", "list_market_profiles"):
            assert TOOL_PREFIX + name in names


class TestValidateScenario:
    """Test cases for validate_scenario."""

    def test_valid(self, tiny_config_file):
        result = validate_scenario(str(tiny_config_file))
        assert result["success"] is True
        assert result["valid"] is True
        assert result["days"] == 1

    def test_missing_file(self, tmp_path):
        result = validate_scenario(str(tmp_path / "absent.yaml"))
        assert result["success"] is False
        assert result["valid"] is False
        assert result["error"] == "ValidationError"


class TestListMarketProfiles:
    """Test cases for list_market_profiles."""

    def test_three_profiles(self):
        result = list_market_profiles()
        assert result["success"] is True
        assert [p["name"] for p in result["profiles"]] == ["nem", "isone", "nyiso"]
        assert all(len(p["wholesale"]) == 24 for p in result["profiles"])


class TestRunScenario:
    """Test cases for run_scenario."""

    def test_run(self, tiny_config_file, tmp_path):
        result = run_scenario(str(tiny_config_file), out=str(tmp_path / "run"), mode="repair")
        assert result["success"] is True
        assert len(result["daily_totals"]) == 1
        assert result["summary"].endswith("summary.json")

    def test_bad_stream(self, tiny_config_file):
        result = run_scenario(str(tiny_config_file), streams="v2h,p2p")
        assert result["success"] is False
        assert result["error"] == "ValidationError"


class TestRunBaselines:
    """Test cases for run_baselines."""

    def test_unknown_tariff(self, tiny_config_file):
        result = run_baselines(str(tiny_config_file), tariff="flat")
        assert result["success"] is False
        assert result["error"] == "ValidationError"


class TestRunSweep:
    """Test cases for run_sweep."""

    def test_descending_sigmas(self, tiny_config_file):
        result = run_sweep([0.3, 0.1], [0], config_path=str(tiny_config_file))
        assert result["success"] is False
        assert result["error"] == "ValidationError"

    def test_bad_target(self, tiny_config_file):
        result = run_sweep([0.0], [0], config_path=str(tiny_config_file), apply_to="price")
        assert result["success"] is False
