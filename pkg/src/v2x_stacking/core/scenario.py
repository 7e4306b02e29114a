"""
Scenario configuration, materialization and trace ingestion for v2x-stacking.

A ``ScenarioConfig`` is the human-editable YAML description of an experiment.
``materialize`` turns it into a concrete ``Scenario`` (fleet, traces, prices,
network) using only the config seed, and ``Scenario.day`` cuts out the
``DayScenario`` that the optimizer and the rolling horizon work on.

The operational day starts at ``day_start_hour`` (12:00 by default) so that the
overnight EV availability window is a contiguous range of slots.
"""

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
import yaml
from pydantic import BaseModel, Field, field_validator, model_validator

from v2x_stacking.core.exceptions import (
    DataError,
    NegativeValueError,
    SchemaError,
    TraceGapError,
    ValidationError,
)
from v2x_stacking.core.forecast import ForecasterSpec, TraceHistory
from v2x_stacking.core.model import EvSpec, ProsumerState, Tariff, TariffKind, TimeGrid, check_node_groups
from v2x_stacking.core.network import NetworkTopology, resolve_topology
from v2x_stacking.core.streams import DEFAULT_RESERVE_RATIO, MarketPrices, StreamToggle, read_price_csv
from v2x_stacking.utils import get_logger
from v2x_stacking.utils.helpers import derive_rng, fingerprint

logger = get_logger(__name__)

TRACE_COLUMNS = ["prosumer_id", "day", "slot", "kw"]

# random stream keys
_RNG_WINDOWS, _RNG_SOC, _RNG_LOAD, _RNG_PV = 1, 2, 3, 4


@dataclass(frozen=True)
class MarketProfile:
    """Retail TOU levels by clock hour plus a synthetic wholesale price shape."""

    name: str
    label: str
    off_peak: float
    shoulder: float
    peak: float
    wholesale: tuple[float, ...]
    peak_hours: tuple[int, int] = (15, 21)
    shoulder_hours: tuple[tuple[int, int], ...] = ()

    def retail_at(self, hour: float) -> float:
        h = int(hour) % 24
        if self.peak_hours[0] <= h < self.peak_hours[1]:
            return self.peak
        if any(a <= h < b for a, b in self.shoulder_hours):
            return self.shoulder
        return self.off_peak

    def tou_prices(self, grid: TimeGrid) -> np.ndarray:
        return np.array([self.retail_at(h) for h in grid.clock_hours])

    def wholesale_prices(self, grid: TimeGrid) -> np.ndarray:
        return np.array([self.wholesale[int(h) % 24] for h in grid.clock_hours])


MARKET_PROFILES: dict[str, MarketProfile] = {
    "nem": MarketProfile(
        name="nem",
        label="NEM-like",
        off_peak=0.20,
        shoulder=0.20,
        peak=0.32,
        wholesale=(0.06, 0.05, 0.05, 0.05, 0.05, 0.06, 0.08, 0.10, 0.09, 0.07, 0.05, 0.04,
                   0.04, 0.04, 0.05, 0.08, 0.14, 0.20, 0.27, 0.28, 0.22, 0.14, 0.09, 0.07),
    ),
    "isone": MarketProfile(
        name="isone",
        label="ISONE-like",
        off_peak=0.02,
        shoulder=0.11,
        peak=0.32,
        wholesale=(0.03, 0.03, 0.03, 0.03, 0.03, 0.04, 0.05, 0.06, 0.06, 0.06, 0.06, 0.06,
                   0.06, 0.06, 0.06, 0.07, 0.09, 0.11, 0.12, 0.12, 0.10, 0.07, 0.05, 0.04),
        shoulder_hours=((7, 15), (21, 22)),
    ),
    "nyiso": MarketProfile(
        name="nyiso",
        label="NYISO-like",
        off_peak=0.02,
        shoulder=0.11,
        peak=0.32,
        wholesale=(0.03, 0.03, 0.02, 0.02, 0.02, 0.03, 0.04, 0.05, 0.05, 0.05, 0.05, 0.05,
                   0.05, 0.05, 0.05, 0.05, 0.06, 0.07, 0.08, 0.08, 0.07, 0.05, 0.04, 0.03),
        shoulder_hours=((7, 15), (21, 22)),
    ),
}


class CommunityConfig(BaseModel):
    node: int = Field(ge=0)
    count: int = Field(ge=0)


class FleetConfig(BaseModel):
    """Per-prosumer EV and connection parameters shared by the whole fleet."""

    capacity_max: float = Field(default=50.0, gt=0)
    capacity_min: float = Field(default=0.0, ge=0)
    p_charge_max: float = Field(default=7.0, ge=0)
    p_discharge_max: float = Field(default=7.0, ge=0)
    charge_eff: float = Field(default=0.95, ge=0, le=1)
    discharge_eff: float = Field(default=0.95, gt=0, le=1)
    degradation_coeff: float = Field(default=0.01, ge=0)
    soc_initial_range: tuple[float, float] = (20.0, 30.0)
    soc_desired_departure: float = 40.0
    soc_requested_final: float | None = None
    arrival_hour: float = 18.0
    departure_hour: float = 8.0
    jitter_hours: int = Field(default=2, ge=0)
    grid_import_cap: float = Field(default=20.0, ge=0)
    local_buy_cap: float = Field(default=7.0, ge=0)
    local_sell_cap: float = Field(default=7.0, ge=0)
    v2h_cap: float = Field(default=7.0, ge=0)
    v2g_cap: float = Field(default=7.0, ge=0)

    @model_validator(mode="after")
    def validate_ranges(self) -> "FleetConfig":
        lo, hi = self.soc_initial_range
        if not self.capacity_min <= lo <= hi <= self.capacity_max:
            raise ValueError("soc_initial_range must lie inside [capacity_min, capacity_max]")
        if not self.capacity_min <= self.soc_desired_departure <= self.capacity_max:
            raise ValueError("soc_desired_departure must lie inside [capacity_min, capacity_max]")
        return self


class ScenarioConfig(BaseModel):
    """Experiment description loaded from YAML."""

    name: str = "default"
    topology: str = "ieee33"
    communities: list[CommunityConfig] = Field(
        default_factory=lambda: [CommunityConfig(node=n, count=20) for n in (4, 25, 32)]
    )
    fleet: FleetConfig = Field(default_factory=FleetConfig)
    tariff: TariffKind = TariffKind.TOU
    market: str = "nem"
    streams: str = "v2h,v2g,et"
    forecaster: ForecasterSpec = Field(default_factory=ForecasterSpec)
    days: int = Field(default=7, ge=1)
    history_days: int = Field(default=1, ge=0)
    seed: int = Field(default=0, ge=0)
    slots_per_day: int = Field(default=24, ge=1)
    slot_hours: float = Field(default=1.0, gt=0)
    day_start_hour: float = 12.0
    feed_in: float = Field(default=0.04, ge=0)
    reserve_ratio: float = Field(default=DEFAULT_RESERVE_RATIO, ge=0)
    tpt_energy_price: float = Field(default=0.2, ge=0)
    tpt_peak_price: float = Field(default=0.8, ge=0)
    inflexible_scale: float = Field(default=0.5, ge=0)
    v_min: float = 0.95
    v_max: float = 1.05
    p_limit_pu: float = Field(default=1.0, gt=0)
    q_limit_pu: float = Field(default=1.0, gt=0)
    network: bool = True
    load_csv: str | None = None
    pv_csv: str | None = None
    prices_csv: str | None = None

    @field_validator("market")
    def validate_market(cls, v: str) -> str:
        """Market profile must be one of the built-in profiles."""
        if v.lower() not in MARKET_PROFILES:
            raise ValueError(f"Unknown market '{v}'. Use one of: {', '.join(MARKET_PROFILES)}")
        return v.lower()

    @field_validator("streams")
    def validate_streams(cls, v: str) -> str:
        """Stream list must parse."""
        StreamToggle.parse(v)
        return v

    @model_validator(mode="after")
    def validate_limits(self) -> "ScenarioConfig":
        if self.v_min >= self.v_max:
            raise ValueError("v_min must be below v_max")
        return self

    @property
    def toggles(self) -> StreamToggle:
        return StreamToggle.parse(self.streams)

    @property
    def n_prosumers(self) -> int:
        return sum(c.count for c in self.communities)

    def with_overrides(self, **overrides) -> "ScenarioConfig":
        """Copy with CLI overrides applied; None values are ignored."""
        data = self.model_dump()
        for key, value in overrides.items():
            if value is None:
                continue
            if key == "forecaster" and isinstance(value, dict):
                data["forecaster"] = {**data["forecaster"], **value}
            else:
                data[key] = value
        return ScenarioConfig.model_validate(data)


def load_config(path: str | Path) -> ScenarioConfig:
    """Read and validate a scenario YAML file; relative data paths resolve against its folder."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"Config file not found: {path}")
    try:
        with open(path, encoding="utf-8") as f:
            raw = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ValidationError(f"Config file {path.name} is not valid YAML: {e}") from e
    for key in ("load_csv", "pv_csv", "prices_csv"):
        if raw.get(key) and not Path(raw[key]).is_absolute():
            raw[key] = str(path.parent / raw[key])
    forecaster = raw.get("forecaster") or {}
    if forecaster.get("path") and not Path(forecaster["path"]).is_absolute():
        forecaster["path"] = str(path.parent / forecaster["path"])
    try:
        return ScenarioConfig.model_validate(raw)
    except Exception as e:
        raise ValidationError(f"Invalid scenario config {path.name}: {e}") from e


def save_config(config: ScenarioConfig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(config.model_dump(mode="json"), f, sort_keys=False)
    return path


@dataclass(frozen=True, eq=False)
class DayScenario:
    """Everything the optimizer needs for one operational day."""

    name: str
    day: int
    grid: TimeGrid
    prosumers: list[ProsumerState]
    tariff: Tariff
    prices: MarketPrices
    toggles: StreamToggle
    topology: NetworkTopology | None = None

    @property
    def load(self) -> np.ndarray:
        """Realized load, shape (prosumers, slots)."""
        if not self.prosumers:
            return np.zeros((0, self.grid.slots_per_day))
        return np.vstack([p.load_trace for p in self.prosumers])

    @property
    def pv(self) -> np.ndarray:
        if not self.prosumers:
            return np.zeros((0, self.grid.slots_per_day))
        return np.vstack([p.pv_cap_trace for p in self.prosumers])

    @property
    def prosumer_ids(self) -> list[str]:
        return [p.id for p in self.prosumers]

    @property
    def ev_windows(self) -> list[tuple[int, int]]:
        return [(p.ev.avail_start, p.ev.avail_end) for p in self.prosumers]

    def with_toggles(self, toggles: StreamToggle) -> "DayScenario":
        return replace(self, toggles=toggles)

    def with_traces(self, load: np.ndarray, pv: np.ndarray) -> "DayScenario":
        prosumers = [
            replace(p, load_trace=np.asarray(load[u], dtype=float), pv_cap_trace=np.asarray(pv[u], dtype=float))
            for u, p in enumerate(self.prosumers)
        ]
        return replace(self, prosumers=prosumers)


@dataclass(frozen=True, eq=False)
class Scenario:
    """A materialized experiment: fleet, traces for every day, prices and network.

    ``load`` and ``pv`` map day indices (negative for warm-up history days) to arrays
    of shape (prosumers, slots). ``soc_initial`` has one row per simulated day.
    """

    config: ScenarioConfig
    grid: TimeGrid
    topology: NetworkTopology | None
    tariff: Tariff
    prices: MarketPrices
    retail_reference: np.ndarray
    feed_in: np.ndarray
    prosumer_ids: list[str]
    nodes: list[int]
    windows: list[tuple[int, int]]
    load: dict[int, np.ndarray]
    pv: dict[int, np.ndarray]
    soc_initial: np.ndarray

    @property
    def name(self) -> str:
        return self.config.name

    @property
    def n_prosumers(self) -> int:
        return len(self.prosumer_ids)

    @property
    def days(self) -> range:
        return range(self.config.days)

    @property
    def toggles(self) -> StreamToggle:
        return self.config.toggles

    def ev_spec(self, u: int, day: int) -> EvSpec:
        fleet = self.config.fleet
        start, end = self.windows[u]
        return EvSpec(
            capacity_max=fleet.capacity_max,
            capacity_min=fleet.capacity_min,
            charge_eff=fleet.charge_eff,
            discharge_eff=fleet.discharge_eff,
            p_charge_max=fleet.p_charge_max,
            p_discharge_max=fleet.p_discharge_max,
            soc_initial=float(self.soc_initial[day, u]),
            soc_desired_departure=fleet.soc_desired_departure,
            soc_requested_final=fleet.soc_requested_final,
            avail_start=start,
            avail_end=end,
            degradation_coeff=fleet.degradation_coeff,
        ).check(self.grid)

    def day(self, d: int, toggles: StreamToggle | None = None) -> DayScenario:
        if d not in self.days:
            raise DataError(f"Day {d} is outside the scenario's {self.config.days} days")
        fleet = self.config.fleet
        prosumers = [
            ProsumerState(
                id=pid,
                node=self.nodes[u],
                ev=self.ev_spec(u, d),
                load_trace=self.load[d][u],
                pv_cap_trace=self.pv[d][u],
                grid_import_cap=fleet.grid_import_cap,
                local_buy_cap=fleet.local_buy_cap,
                local_sell_cap=fleet.local_sell_cap,
                v2h_cap=fleet.v2h_cap,
                v2g_cap=fleet.v2g_cap,
            )
            for u, pid in enumerate(self.prosumer_ids)
        ]
        return DayScenario(
            name=self.name,
            day=d,
            grid=replace(self.grid, day_index=d),
            prosumers=prosumers,
            tariff=self.tariff,
            prices=self.prices,
            toggles=toggles or self.toggles,
            topology=self.topology,
        )

    def history(self, day: int, now: int) -> TraceHistory:
        """Realized traces visible at slot ``now`` of ``day``."""
        return TraceHistory(self.load, self.pv, day, now, self.prosumer_ids)

    def fingerprint(self) -> str:
        days = sorted(self.load)
        return fingerprint(
            self.retail_reference, self.feed_in, self.prices.v2g_price, self.prices.reserve_price,
            self.prices.local_buy, self.soc_initial, np.array(self.windows, dtype=float).reshape(-1),
            np.array(self.nodes, dtype=float), *(self.load[d] for d in days), *(self.pv[d] for d in days),
        )


# ---------------------------------------------------------------------------
# Synthetic traces
# ---------------------------------------------------------------------------

def _bump(hours: np.ndarray, center: float, width: float) -> np.ndarray:
    # circular distance so profiles wrap midnight
    d = (hours - center + 12.0) % 24.0 - 12.0
    return np.exp(-0.5 * (d / width) ** 2)


def residential_shape(hours: np.ndarray, weekend: bool) -> np.ndarray:
    """Mean household demand in kW by clock hour: two peaks on weekdays, flatter on weekends."""
    hours = np.asarray(hours, dtype=float)
    if weekend:
        return 0.55 + 0.7 * _bump(hours, 11.0, 2.5) + 1.2 * _bump(hours, 19.0, 2.2)
    return 0.4 + 1.0 * _bump(hours, 7.5, 1.2) + 1.6 * _bump(hours, 19.0, 1.8)


def synthetic_load(seed: int, grid: TimeGrid, day: int, prosumer: int) -> np.ndarray:
    """Household load trace for one prosumer and day (kW)."""
    rng = derive_rng(seed, _RNG_LOAD, prosumer, day + 10_000)
    scale = derive_rng(seed, _RNG_LOAD, prosumer).uniform(0.7, 1.3)
    shape = residential_shape(grid.clock_hours, weekend=day % 7 >= 5)
    noise = np.clip(rng.normal(1.0, 0.1, grid.slots_per_day), 0.5, 1.5)
    return scale * shape * noise


def synthetic_pv(seed: int, grid: TimeGrid, day: int, prosumer: int) -> np.ndarray:
    """Rooftop PV availability for one prosumer and day (kW); zero at night."""
    rng = derive_rng(seed, _RNG_PV, prosumer, day + 10_000)
    peak = derive_rng(seed, _RNG_PV, prosumer).uniform(3.0, 5.0)
    h = grid.clock_hours + 0.5 * grid.slot_hours
    daylight = np.where((h > 6.0) & (h < 18.0), np.sin(np.pi * (h - 6.0) / 12.0), 0.0)
    clouds = rng.uniform(0.6, 1.0)
    noise = np.clip(rng.normal(1.0, 0.05, grid.slots_per_day), 0.8, 1.2)
    return peak * clouds * daylight * noise


def inflexible_profile(grid: TimeGrid, scale: float) -> np.ndarray:
    """Feeder-level load multiplier per slot: the weekday residential shape scaled to peak ``scale``."""
    shape = residential_shape(grid.clock_hours, weekend=False)
    return scale * shape / shape.max()


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------

def _read_trace_csv(path: str | Path, label: str, grid: TimeGrid) -> dict[str, dict[int, np.ndarray]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{label} file not found: {path}")
    frame = pd.read_csv(path, dtype={"prosumer_id": str}, float_precision="round_trip")
    missing = [c for c in TRACE_COLUMNS if c not in frame.columns]
    if missing:
        raise SchemaError(f"{label} file {path.name} is missing columns: {', '.join(missing)}")
    if frame["kw"].isna().any():
        raise SchemaError(f"{label} file {path.name} has empty kw values")
    negative = frame[frame["kw"] < 0]
    if not negative.empty:
        row = negative.iloc[0]
        raise NegativeValueError(
            f"{label} file {path.name}: negative value {row['kw']} for prosumer '{row['prosumer_id']}', "
            f"day {int(row['day'])}, slot {int(row['slot'])}"
        )
    T = grid.slots_per_day
    if ((frame["slot"] < 0) | (frame["slot"] >= T)).any():
        raise SchemaError(f"{label} file {path.name} has slots outside 0..{T - 1}")
    traces: dict[str, dict[int, np.ndarray]] = {}
    for (pid, day), group in frame.groupby(["prosumer_id", "day"], sort=True):
        slots = set(int(s) for s in group["slot"])
        gaps = [s for s in range(T) if s not in slots]
        if gaps:
            raise TraceGapError(str(pid), int(day), gaps[0])
        if len(group) != T:
            raise SchemaError(f"{label} file {path.name} repeats slots for prosumer '{pid}' on day {int(day)}")
        trace = group.sort_values("slot")["kw"].to_numpy(dtype=float)
        traces.setdefault(str(pid), {})[int(day)] = trace
    return traces


def ingest_traces(
    load_csv: str | Path | None,
    pv_csv: str | Path | None,
    grid: TimeGrid | None = None,
) -> tuple[dict[str, dict[int, np.ndarray]], dict[str, dict[int, np.ndarray]]]:
    """Read load and PV CSVs (prosumer_id, day, slot, kw) into per-prosumer per-day traces.

    Raises SchemaError, TraceGapError (naming prosumer, day and slot) or
    NegativeValueError. Prosumers or days absent from a file are left out; the
    scenario fills them from the synthetic generators.
    """
    grid = grid or TimeGrid()
    load = _read_trace_csv(load_csv, "Load", grid) if load_csv else {}
    pv = _read_trace_csv(pv_csv, "PV", grid) if pv_csv else {}
    logger.info(f"Ingested traces for {len(load)} load and {len(pv)} PV prosumers")
    return load, pv


# ---------------------------------------------------------------------------
# Materialization
# ---------------------------------------------------------------------------

def _windows(config: ScenarioConfig, grid: TimeGrid, n: int) -> list[tuple[int, int]]:
    fleet = config.fleet
    rng = derive_rng(config.seed, _RNG_WINDOWS)
    windows = []
    for _ in range(n):
        jitter_a, jitter_d = rng.integers(-fleet.jitter_hours, fleet.jitter_hours + 1, size=2)
        start = grid.slot_of_hour(fleet.arrival_hour + float(jitter_a))
        departure = grid.slot_of_hour(fleet.departure_hour + float(jitter_d))
        # the departure slot is the last parked one
        end = departure - 1
        if end < start:
            raise ValidationError(
                f"Availability window {fleet.arrival_hour}h-{fleet.departure_hour}h does not fit "
                f"a day starting at {grid.day_start_hour}h"
            )
        windows.append((start, end))
    return windows


def materialize(config: ScenarioConfig) -> Scenario:
    """Build a concrete scenario; the same config always yields the same scenario."""
    grid = TimeGrid(
        slots_per_day=config.slots_per_day,
        slot_hours=config.slot_hours,
        day_start_hour=config.day_start_hour,
    )
    T = grid.slots_per_day
    profile = MARKET_PROFILES[config.market]

    topology = None
    if config.network:
        topology = resolve_topology(
            config.topology,
            load_profile=inflexible_profile(grid, config.inflexible_scale),
            community_nodes=[c.node for c in config.communities],
            v_min=config.v_min,
            v_max=config.v_max,
            p_min_pu=-config.p_limit_pu,
            p_max_pu=config.p_limit_pu,
            q_min_pu=-config.q_limit_pu,
            q_max_pu=config.q_limit_pu,
        )
        for c in config.communities:
            topology.check_node(c.node)

    prosumer_ids, nodes = [], []
    for c in config.communities:
        for i in range(c.count):
            prosumer_ids.append(f"n{c.node}-{i:02d}")
            nodes.append(c.node)
    n = len(prosumer_ids)

    if config.tariff is TariffKind.TOU:
        tariff = Tariff.tou(profile.tou_prices(grid))
        retail = tariff.energy_prices(T)
    else:
        tariff = Tariff.tpt(config.tpt_energy_price, config.tpt_peak_price)
        retail = np.full(T, config.tpt_energy_price)
    # feed-in never exceeds the retail price of the slot
    feed_in = np.minimum(np.full(T, config.feed_in), retail)
    v2g_price = profile.wholesale_prices(grid)
    reserve_price = config.reserve_ratio * v2g_price
    if config.prices_csv:
        if not Path(config.prices_csv).exists():
            raise DataError(f"Price file not found: {config.prices_csv}")
        frame = read_price_csv(config.prices_csv)
        if len(frame) != T:
            raise SchemaError(f"Price file has {len(frame)} slots, scenario needs {T}")
        v2g_price = frame["v2g_price"].to_numpy(dtype=float)
        reserve_price = frame["reserve_price"].to_numpy(dtype=float)
        feed_in = frame["feed_in"].to_numpy(dtype=float)
        retail = frame["retail_reference"].to_numpy(dtype=float)
    prices = MarketPrices.from_retail(retail, feed_in, v2g_price, reserve_price)

    ingested_load, ingested_pv = ingest_traces(config.load_csv, config.pv_csv, grid)
    load: dict[int, np.ndarray] = {}
    pv: dict[int, np.ndarray] = {}
    for d in range(-config.history_days, config.days):
        load[d] = np.zeros((n, T))
        pv[d] = np.zeros((n, T))
        for u, pid in enumerate(prosumer_ids):
            file_load = ingested_load.get(pid, {}).get(d)
            file_pv = ingested_pv.get(pid, {}).get(d)
            load[d][u] = file_load if file_load is not None else synthetic_load(config.seed, grid, d, u)
            pv[d][u] = file_pv if file_pv is not None else synthetic_pv(config.seed, grid, d, u)

    lo, hi = config.fleet.soc_initial_range
    soc_initial = derive_rng(config.seed, _RNG_SOC).uniform(lo, hi, size=(config.days, n))

    scenario = Scenario(
        config=config,
        grid=grid,
        topology=topology,
        tariff=tariff,
        prices=prices,
        retail_reference=np.asarray(retail, dtype=float),
        feed_in=np.asarray(feed_in, dtype=float),
        prosumer_ids=prosumer_ids,
        nodes=nodes,
        windows=_windows(config, grid, n),
        load=load,
        pv=pv,
        soc_initial=soc_initial,
    )
    # validate the fleet once for day 0
    check_node_groups(scenario.day(0).prosumers)
    logger.info(
        f"Materialized scenario '{config.name}': {n} prosumers, {config.days} days, "
        f"{config.tariff.value.upper()} tariff, {profile.label} market, streams {config.toggles.label}"
    )
    return scenario


def _trace_frame(scenario: Scenario, traces: dict[int, np.ndarray]) -> pd.DataFrame:
    records = []
    for d in sorted(traces):
        for u, pid in enumerate(scenario.prosumer_ids):
            for t, value in enumerate(traces[d][u]):
                records.append((pid, d, t, value))
    return pd.DataFrame.from_records(records, columns=TRACE_COLUMNS)


def serialize_scenario(scenario: Scenario, directory: str | Path) -> Path:
    """Write scenario.yaml with load.csv, pv.csv and prices.csv next to it.

    Materializing the written config reproduces the scenario exactly.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    _trace_frame(scenario, scenario.load).to_csv(directory / "load.csv", index=False)
    _trace_frame(scenario, scenario.pv).to_csv(directory / "pv.csv", index=False)
    pd.DataFrame({
        "slot": np.arange(scenario.grid.slots_per_day),
        "v2g_price": scenario.prices.v2g_price,
        "reserve_price": scenario.prices.reserve_price,
        "feed_in": scenario.feed_in,
        "retail_reference": scenario.retail_reference,
    }).to_csv(directory / "prices.csv", index=False)
    config = scenario.config.model_copy(update={
        "load_csv": "load.csv",
        "pv_csv": "pv.csv",
        "prices_csv": "prices.csv",
    })
    path = save_config(config, directory / "scenario.yaml")
    logger.info(f"Serialized scenario '{scenario.name}' to {directory}")
    return path


def build_day(
    prosumers: Sequence[ProsumerState],
    tariff: Tariff,
    prices: MarketPrices,
    toggles: StreamToggle,
    grid: TimeGrid | None = None,
    topology: NetworkTopology | None = None,
    name: str = "custom",
) -> DayScenario:
    """Assemble a day scenario directly from domain objects."""
    grid = grid or TimeGrid(slots_per_day=len(prosumers[0].load_trace) if prosumers else 24)
    for p in prosumers:
        p.ev.check(grid)
        if len(p.load_trace) != grid.slots_per_day:
            raise ValidationError(f"Prosumer '{p.id}' traces do not span {grid.slots_per_day} slots")
        if topology is not None:
            topology.check_node(p.node)
    check_node_groups(prosumers)
    return DayScenario(
        name=name, day=grid.day_index, grid=grid, prosumers=list(prosumers), tariff=tariff,
        prices=prices, toggles=toggles, topology=topology,
    )
