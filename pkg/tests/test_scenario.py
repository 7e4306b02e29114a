"""
Test cases for scenario configs, materialization, trace ingestion and serialization.
"""

import numpy as np
import pytest

from v2x_stacking.core.exceptions import (
    DataError,
    NegativeValueError,
    NetworkError,
    SchemaError,
    TraceGapError,
    ValidationError,
)
from v2x_stacking.core.model import TariffKind
from v2x_stacking.core.scenario import (
    MARKET_PROFILES,
    CommunityConfig,
    ScenarioConfig,
    ingest_traces,
    load_config,
    materialize,
    serialize_scenario,
)


def write_trace(path, rows):
    lines = ["prosumer_id,day,slot,kw"] + [f"{pid},{day},{slot},{kw}" for pid, day, slot, kw in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def full_day(pid: str, day: int = 0, kw: float = 1.0, skip: int | None = None):
    return [(pid, day, t, kw) for t in range(24) if t != skip]


class TestScenarioConfig:
    """Test cases for ScenarioConfig validation and overrides."""

    def test_defaults(self):
        config = ScenarioConfig()
        assert config.n_prosumers == 60
        assert [c.node for c in config.communities] == [4, 25, 32]
        assert config.toggles.label == "v2h,v2g,et"

    def test_unknown_market(self):
        with pytest.raises(ValueError):
            ScenarioConfig(market="pjm")

    def test_unknown_stream(self):
        with pytest.raises(ValueError):
            ScenarioConfig(streams="v2h,p2p")

    def test_overrides_skip_none(self):
        config = ScenarioConfig().with_overrides(seed=None, market="isone", forecaster={"sigma": 0.3})
        assert config.seed == 0
        assert config.market == "isone"
        assert config.forecaster.sigma == 0.3
        assert config.forecaster.apply_to == "both"

    def test_load_config_missing(self, tmp_path):
        with pytest.raises(ValidationError):
            load_config(tmp_path / "absent.yaml")

    def test_load_config_bad_yaml(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("name: [unclosed\n")
        with pytest.raises(ValidationError):
            load_config(path)

    def test_load_config_bad_value(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("days: 0\n")
        with pytest.raises(ValidationError):
            load_config(path)

    def test_relative_data_paths(self, tmp_path):
        path = tmp_path / "scenario.yaml"
        path.write_text("name: rel\nload_csv: traces/load.csv\n")
        config = load_config(path)
        assert config.load_csv == str(tmp_path / "traces" / "load.csv")


class TestMarketProfiles:
    """Test cases for the built-in market profiles."""

    def test_nem_peak(self, tiny_scenario):
        prices = MARKET_PROFILES["nem"].tou_prices(tiny_scenario.grid)
        assert prices[0] == 0.20  # 12:00
        assert prices[6] == 0.32  # 18:00
        assert prices[12] == 0.20  # 00:00

    def test_isone_off_peak_night(self, tiny_scenario):
        prices = MARKET_PROFILES["isone"].tou_prices(tiny_scenario.grid)
        assert prices[15] == 0.02  # 03:00
        assert prices[21] == 0.11  # 09:00


class TestMaterialize:
    """Test cases for materialize."""

    def test_default_fleet(self):
        scenario = materialize(ScenarioConfig(days=1))
        assert scenario.n_prosumers == 60
        assert scenario.topology is not None and scenario.topology.n_nodes == 33
        assert scenario.load[0].shape == (60, 24)
        assert set(scenario.load) == {-1, 0}
        for start, end in scenario.windows:
            assert 4 <= start <= 8
            assert 17 <= end <= 21

    def test_deterministic(self, tiny_config):
        assert materialize(tiny_config).fingerprint() == materialize(tiny_config).fingerprint()

    def test_seed_changes_fleet(self, tiny_config):
        other = tiny_config.with_overrides(seed=1)
        assert materialize(tiny_config).fingerprint() != materialize(other).fingerprint()

    def test_empty_fleet(self):
        config = ScenarioConfig(communities=[CommunityConfig(node=4, count=0)], days=1)
        scenario = materialize(config)
        assert scenario.n_prosumers == 0
        assert scenario.day(0).load.shape == (0, 24)

    def test_unknown_node(self):
        with pytest.raises(NetworkError):
            materialize(ScenarioConfig(communities=[CommunityConfig(node=40, count=1)], days=1))

    def test_pv_is_dark_at_night(self, tiny_scenario):
        # slots 7..17 are 19:00 to 05:00
        assert np.all(tiny_scenario.pv[0][:, 7:18] == 0)

    def test_two_part_tariff(self, tiny_config):
        scenario = materialize(tiny_config.with_overrides(tariff="tpt"))
        assert scenario.tariff.kind is TariffKind.TPT
        assert np.all(scenario.retail_reference == 0.2)

    def test_day_outside_range(self, tiny_scenario):
        with pytest.raises(DataError):
            tiny_scenario.day(5)

    def test_day_scenario(self, tiny_scenario):
        day = tiny_scenario.day(1)
        assert day.day == 1
        assert day.prosumer_ids == tiny_scenario.prosumer_ids
        assert day.prosumers[0].ev.soc_initial == tiny_scenario.soc_initial[1, 0]
        assert day.load == pytest.approx(tiny_scenario.load[1])


class TestIngestTraces:
    """Test cases for ingest_traces."""

    def test_valid_file(self, tmp_path):
        path = write_trace(tmp_path / "load.csv", full_day("n4-00", kw=1.5) + full_day("n4-00", day=1))
        load, pv = ingest_traces(path, None)
        assert set(load["n4-00"]) == {0, 1}
        assert load["n4-00"][0] == pytest.approx(np.full(24, 1.5))
        assert pv == {}

    def test_gap_names_the_slot(self, tmp_path):
        path = write_trace(tmp_path / "load.csv", full_day("n4-01", day=2, skip=13))
        with pytest.raises(TraceGapError) as exc:
            ingest_traces(path, None)
        assert (exc.value.prosumer_id, exc.value.day, exc.value.slot) == ("n4-01", 2, 13)

    def test_negative_value(self, tmp_path):
        rows = full_day("n4-00")
        rows[3] = ("n4-00", 0, 3, -0.5)
        with pytest.raises(NegativeValueError):
            ingest_traces(write_trace(tmp_path / "load.csv", rows), None)

    def test_missing_columns(self, tmp_path):
        path = tmp_path / "load.csv"
        path.write_text("prosumer_id,slot,kw\na,0,1\n")
        with pytest.raises(SchemaError):
            ingest_traces(path, None)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            ingest_traces(None, tmp_path / "absent.csv")

    def test_file_overrides_synthetic(self, tmp_path, tiny_config):
        path = write_trace(tmp_path / "load.csv", full_day("n4-01", kw=2.0))
        scenario = materialize(tiny_config.with_overrides(load_csv=str(path)))
        assert scenario.load[0][1] == pytest.approx(np.full(24, 2.0))
        assert not np.allclose(scenario.load[0][0], 2.0)


class TestSerializeScenario:
    """Test cases for serialize_scenario."""

    def test_round_trip(self, tmp_path, tiny_scenario):
        path = serialize_scenario(tiny_scenario, tmp_path / "snapshot")
        for name in ("load.csv", "pv.csv", "prices.csv", "scenario.yaml"):
            assert (path.parent / name).exists()
        restored = materialize(load_config(path))
        for d in tiny_scenario.load:
            assert np.allclose(restored.load[d], tiny_scenario.load[d], rtol=1e-12, atol=0)
            assert np.allclose(restored.pv[d], tiny_scenario.pv[d], rtol=1e-12, atol=0)
        assert np.allclose(restored.prices.v2g_price, tiny_scenario.prices.v2g_price)
        assert restored.windows == tiny_scenario.windows
        assert np.array_equal(restored.soc_initial, tiny_scenario.soc_initial)
