"""
Test cases for the command-line interface.
"""

import json
from pathlib import Path

import pytest
from typer.testing import CliRunner

from v2x_stacking.__main__ import app, exit_code
from v2x_stacking.core.exceptions import (
    DataError,
    InfeasibleProblemError,
    IterationLimitError,
    MetricError,
    NetworkError,
    SchemaError,
    ValidationError,
)

runner = CliRunner()


@pytest.fixture
def broken_config_file(tmp_path):
    """A scenario whose load trace lacks the day column."""
    (tmp_path / "load.csv").write_text("prosumer_id,slot,kw\nn4-00,0,1.0\n")
    path = tmp_path / "broken.yaml"
    path.write_text(
        "name: broken\n"
        "communities:\n"
        "  - node: 4\n"
        "    count: 1\n"
        "network: false\n"
        "days: 1\n"
        "load_csv: load.csv\n"
    )
    return path


class TestExitCode:
    """Test cases for exit_code."""

    @pytest.mark.parametrize(
        "error, code",
        [
            (ValidationError("x"), 2),
            (SchemaError("x"), 2),
            (DataError("x"), 2),
            (NetworkError("x"), 2),
            (InfeasibleProblemError("x"), 3),
            (IterationLimitError("x"), 3),
            (MetricError("x"), 1),
            (RuntimeError("x"), 1),
        ],
    )
    def test_mapping(self, error, code):
        assert exit_code(error) == code


class TestValidateCommand:
    """Test cases for the validate command."""

    def test_valid_scenario(self, tiny_config_file):
        result = runner.invoke(app, ["validate", "--config", str(tiny_config_file)])
        assert result.exit_code == 0
        payload = json.loads(result.stdout)
        assert payload["valid"] is True
        assert payload["prosumers"] == 2

    def test_malformed_trace(self, broken_config_file):
        result = runner.invoke(app, ["validate", "--config", str(broken_config_file)])
        assert result.exit_code == 2
        assert "SchemaError" in result.output

    def test_missing_config(self, tmp_path):
        result = runner.invoke(app, ["validate", "--config", str(tmp_path / "absent.yaml")])
        assert result.exit_code == 2
        assert "ValidationError" in result.output


class TestSweepCommand:
    """Test cases for the sweep command."""

    def test_descending_sigmas(self, tiny_config_file, tmp_path):
        result = runner.invoke(app, [
            "sweep", "--config", str(tiny_config_file), "--sigmas", "0.3,0.1", "--seeds", "0",
            "--out", str(tmp_path / "sweep"),
        ])
        assert result.exit_code == 2
        assert "ValidationError" in result.output

    def test_unparsable_seeds(self, tiny_config_file):
        result = runner.invoke(app, ["sweep", "--config", str(tiny_config_file), "--seeds", "one,two"])
        assert result.exit_code == 2


class TestRunCommand:
    """Test cases for the run command."""

    def test_writes_ledgers_and_summary(self, tiny_config_file, tmp_path):
        out = tmp_path / "run"
        result = runner.invoke(app, ["run", "--config", str(tiny_config_file), "--out", str(out), "--forecasts"])
        assert result.exit_code == 0
        payload = json.loads(result.stdout)
        assert len(payload["daily_totals"]) == 1
        assert (out / "ledgers" / "day_0.csv").exists()
        assert (out / "forecasts.csv").exists()
        summary = json.loads((out / "summary.json").read_text())
        assert summary["total_cost"] == pytest.approx(payload["total_cost"])
        assert summary["assumptions"]["day_start_hour"] == 12

    def test_same_seed_same_files(self, tiny_config_file, tmp_path):
        for name in ("a", "b"):
            result = runner.invoke(app, ["run", "--config", str(tiny_config_file), "--out", str(tmp_path / name)])
            assert result.exit_code == 0
        first = (tmp_path / "a" / "ledgers" / "day_0.csv").read_text()
        assert first == (tmp_path / "b" / "ledgers" / "day_0.csv").read_text()

    def test_unknown_market(self, tiny_config_file):
        result = runner.invoke(app, ["run", "--config", str(tiny_config_file), "--market", "pjm"])
        assert result.exit_code == 2


class TestDumpProblemCommand:
    """Test cases for the dump-problem command."""

    def test_dump_window(self, tiny_config_file, tmp_path):
        out = tmp_path / "dump"
        result = runner.invoke(app, [
            "dump-problem", "--config", str(tiny_config_file), "--out", str(out), "--slot", "3", "--solve",
        ])
        assert result.exit_code == 0
        payload = json.loads(result.stdout)
        path = Path(payload["problem"])
        assert path == (out / "problems" / "day_0_slot_3.txt").resolve()
        assert "\npairs " in path.read_text()
        assert payload["solve"]["status"] == "Optimal"

    def test_slot_outside_day(self, tiny_config_file, tmp_path):
        result = runner.invoke(app, [
            "dump-problem", "--config", str(tiny_config_file), "--out", str(tmp_path), "--slot", "24",
        ])
        assert result.exit_code == 2
