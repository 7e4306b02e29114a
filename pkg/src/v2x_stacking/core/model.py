"""
Prosumer, EV battery and tariff model for v2x-stacking.

Domain types are frozen dataclasses; the evaluation functions are pure. Powers are
in kW, energies in kWh and every power-to-energy conversion takes the slot length
explicitly.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from v2x_stacking.core.exceptions import ValidationError

# Numerical tolerance used when checking balance and split identities
DEFAULT_TOLERANCE = 1e-6


@dataclass(frozen=True)
class TimeGrid:
    """Slot layout of one operational day.

    The operational day starts at ``day_start_hour`` so that overnight EV
    availability windows stay contiguous.
    """

    slots_per_day: int = 24
    slot_hours: float = 1.0
    day_index: int = 0
    day_start_hour: float = 12.0

    def __post_init__(self):
        if self.slots_per_day < 1:
            raise ValidationError(f"slots_per_day must be >= 1, got {self.slots_per_day}")
        if self.slot_hours <= 0:
            raise ValidationError(f"slot_hours must be > 0, got {self.slot_hours}")

    def clock_hour(self, slot: int) -> float:
        """Wall-clock hour at the start of ``slot``."""
        return (self.day_start_hour + slot * self.slot_hours) % 24.0

    def slot_of_hour(self, hour: float) -> int:
        """Slot whose start is the given wall-clock hour (rounded down)."""
        offset = (hour - self.day_start_hour) % 24.0
        return int(np.floor(offset / self.slot_hours + 1e-9)) % self.slots_per_day

    @property
    def clock_hours(self) -> np.ndarray:
        return np.array([self.clock_hour(t) for t in range(self.slots_per_day)])


@dataclass(frozen=True)
class EvSpec:
    """EV battery and availability of one prosumer.

    The availability window [avail_start, avail_end] is inclusive; an empty window
    (EV never home) is written as avail_end = avail_start - 1.
    """

    capacity_max: float = 50.0
    capacity_min: float = 0.0
    charge_eff: float = 0.95
    discharge_eff: float = 0.95
    p_charge_max: float = 7.0
    p_discharge_max: float = 7.0
    soc_initial: float = 25.0
    soc_desired_departure: float = 40.0
    soc_requested_final: float | None = None
    avail_start: int = 6
    avail_end: int = 19
    degradation_coeff: float = 0.01

    def __post_init__(self):
        if not 0 <= self.capacity_min <= self.soc_initial <= self.capacity_max:
            raise ValidationError(
                f"Require 0 <= capacity_min <= soc_initial <= capacity_max, got "
                f"{self.capacity_min}, {self.soc_initial}, {self.capacity_max}"
            )
        if not self.capacity_min <= self.soc_desired_departure <= self.capacity_max:
            raise ValidationError(
                f"soc_desired_departure {self.soc_desired_departure} outside "
                f"[{self.capacity_min}, {self.capacity_max}]"
            )
        if self.soc_requested_final is None:
            object.__setattr__(self, "soc_requested_final", self.soc_desired_departure)
        if not self.capacity_min <= self.soc_requested_final <= self.capacity_max:
            raise ValidationError(f"soc_requested_final {self.soc_requested_final} outside battery bounds")
        if not 0.0 <= self.charge_eff <= 1.0:
            raise ValidationError(f"charge_eff must lie in [0, 1], got {self.charge_eff}")
        if not 0.0 < self.discharge_eff <= 1.0:
            raise ValidationError(f"discharge_eff must lie in (0, 1], got {self.discharge_eff}")
        if self.p_charge_max < 0 or self.p_discharge_max < 0:
            raise ValidationError("Charge and discharge limits must be nonnegative")
        if self.degradation_coeff < 0:
            raise ValidationError(f"degradation_coeff must be >= 0, got {self.degradation_coeff}")
        if self.avail_start < 0 or self.avail_end < self.avail_start - 1:
            raise ValidationError(f"Invalid availability window [{self.avail_start}, {self.avail_end}]")

    def check(self, grid: TimeGrid) -> "EvSpec":
        """Validate the availability window against a time grid."""
        if self.avail_end >= grid.slots_per_day:
            raise ValidationError(
                f"avail_end {self.avail_end} must be < slots_per_day {grid.slots_per_day}"
            )
        if self.has_window and self.soc_requested_final > self.soc_desired_departure + DEFAULT_TOLERANCE:
            # stored energy is frozen from departure to the end of the day
            raise ValidationError("soc_requested_final cannot exceed soc_desired_departure")
        return self

    @property
    def has_window(self) -> bool:
        return self.avail_end >= self.avail_start

    def is_parked(self, slot: int) -> bool:
        return self.avail_start <= slot <= self.avail_end

    def parked_mask(self, slots_per_day: int) -> np.ndarray:
        t = np.arange(slots_per_day)
        return (t >= self.avail_start) & (t <= self.avail_end)


class TariffKind(str, Enum):
    TOU = "tou"
    TPT = "tpt"


@dataclass(frozen=True)
class Tariff:
    """Retail tariff: time-of-use prices per slot, or two-part energy plus peak charge."""

    kind: TariffKind | None
    tou_prices: tuple[float, ...] = ()
    tpt_energy_price: float = 0.2
    tpt_peak_price: float = 0.8

    def __post_init__(self):
        if any(p < 0 for p in self.tou_prices) or self.tpt_energy_price < 0 or self.tpt_peak_price < 0:
            raise ValidationError("Tariff prices must be nonnegative")
        if self.kind is TariffKind.TOU and not self.tou_prices:
            raise ValidationError("TOU tariff needs per-slot prices")

    @classmethod
    def tou(cls, prices: Iterable[float]) -> "Tariff":
        return cls(kind=TariffKind.TOU, tou_prices=tuple(float(p) for p in prices))

    @classmethod
    def tpt(cls, energy_price: float = 0.2, peak_price: float = 0.8) -> "Tariff":
        return cls(kind=TariffKind.TPT, tpt_energy_price=energy_price, tpt_peak_price=peak_price)

    def energy_prices(self, slots: int, start: int = 0) -> np.ndarray:
        """Per-slot energy price in $/kWh for ``slots`` slots starting at ``start``."""
        if self.kind is TariffKind.TOU:
            prices = np.asarray(self.tou_prices, dtype=float)
            if start + slots > len(prices):
                raise ValidationError(
                    f"TOU tariff has {len(prices)} prices, window needs slots {start}..{start + slots - 1}"
                )
            return prices[start:start + slots]
        if self.kind is TariffKind.TPT:
            return np.full(slots, self.tpt_energy_price)
        raise ValidationError("Tariff kind is unset")

    @property
    def peak_price(self) -> float:
        return self.tpt_peak_price if self.kind is TariffKind.TPT else 0.0


@dataclass(frozen=True)
class ProsumerState:
    """A household: EV, load and PV traces for one day, and its connection limits."""

    id: str
    node: int
    ev: EvSpec
    load_trace: np.ndarray
    pv_cap_trace: np.ndarray
    grid_import_cap: float = 20.0
    local_buy_cap: float = 7.0
    local_sell_cap: float = 7.0
    v2h_cap: float = 7.0
    v2g_cap: float = 7.0

    def __post_init__(self):
        load = np.asarray(self.load_trace, dtype=float)
        pv = np.asarray(self.pv_cap_trace, dtype=float)
        if load.shape != pv.shape:
            raise ValidationError(f"Prosumer '{self.id}': load and PV traces differ in length")
        if (load < 0).any() or (pv < 0).any():
            raise ValidationError(f"Prosumer '{self.id}': traces must be nonnegative")
        caps = (self.grid_import_cap, self.local_buy_cap, self.local_sell_cap, self.v2h_cap, self.v2g_cap)
        if any(c < 0 for c in caps):
            raise ValidationError(f"Prosumer '{self.id}': power caps must be nonnegative")
        object.__setattr__(self, "load_trace", load)
        object.__setattr__(self, "pv_cap_trace", pv)


def check_node_groups(prosumers: Sequence[ProsumerState]) -> dict[int, list[str]]:
    """Group prosumer ids by node; ids must be unique so the groups partition the fleet."""
    groups: dict[int, list[str]] = {}
    seen: set[str] = set()
    for p in prosumers:
        if p.id in seen:
            raise ValidationError(f"Prosumer '{p.id}' appears more than once")
        seen.add(p.id)
        groups.setdefault(p.node, []).append(p.id)
    return groups


@dataclass(frozen=True)
class SlotDecision:
    """Dispatch of one prosumer in one slot."""

    p_grid: float = 0.0
    p_renew: float = 0.0
    p_buy: float = 0.0
    p_sell: float = 0.0
    p_evc: float = 0.0
    p_evd: float = 0.0
    p_v2h: float = 0.0
    p_v2g: float = 0.0
    p_as: float = 0.0
    soc: float = 0.0
    x_discharge: int = 0
    y_sell: int = 0

    def __post_init__(self):
        for f in POWER_FIELDS:
            if getattr(self, f) < -DEFAULT_TOLERANCE:
                raise ValidationError(f"{f} must be nonnegative, got {getattr(self, f)}")
        split = self.p_v2h + self.p_v2g + self.p_sell
        if abs(self.p_evd - split) > DEFAULT_TOLERANCE * max(1.0, abs(self.p_evd)):
            raise ValidationError(f"p_evd {self.p_evd} differs from p_v2h + p_v2g + p_sell = {split}")
        if self.x_discharge not in (0, 1) or self.y_sell not in (0, 1):
            raise ValidationError("x_discharge and y_sell must be binary")


POWER_FIELDS = ("p_grid", "p_renew", "p_buy", "p_sell", "p_evc", "p_evd", "p_v2h", "p_v2g", "p_as")
DECISION_FIELDS = POWER_FIELDS + ("soc",)


@dataclass
class DecisionVector:
    """Per-prosumer per-slot dispatch for a window of slots.

    Every field is an array of shape (prosumers, slots); column k is slot ``start + k``.
    """

    start: int
    p_grid: np.ndarray
    p_renew: np.ndarray
    p_buy: np.ndarray
    p_sell: np.ndarray
    p_evc: np.ndarray
    p_evd: np.ndarray
    p_v2h: np.ndarray
    p_v2g: np.ndarray
    p_as: np.ndarray
    soc: np.ndarray

    @classmethod
    def zeros(cls, n_prosumers: int, n_slots: int, start: int = 0) -> "DecisionVector":
        return cls(start=start, **{f: np.zeros((n_prosumers, n_slots)) for f in DECISION_FIELDS})

    @property
    def shape(self) -> tuple[int, int]:
        return self.p_grid.shape

    @property
    def slots(self) -> range:
        return range(self.start, self.start + self.shape[1])

    def field(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def window(self, start: int, stop: int) -> "DecisionVector":
        """Sub-vector for absolute slots [start, stop)."""
        a, b = start - self.start, stop - self.start
        if a < 0 or b > self.shape[1] or a > b:
            raise ValidationError(f"Slots [{start}, {stop}) outside decision window {self.slots}")
        return DecisionVector(start=start, **{f: getattr(self, f)[:, a:b].copy() for f in DECISION_FIELDS})

    def set_slot(self, slot: int, other: "DecisionVector") -> None:
        """Copy the single-slot vector ``other`` into absolute slot ``slot``."""
        k = slot - self.start
        for f in DECISION_FIELDS:
            getattr(self, f)[:, k] = getattr(other, f)[:, 0]

    def cleaned(self, tolerance: float = DEFAULT_TOLERANCE) -> "DecisionVector":
        """Copy with negative noise clipped and values below ``tolerance`` set to zero."""
        out = {}
        for f in POWER_FIELDS:
            arr = np.clip(getattr(self, f), 0.0, None)
            arr[arr < tolerance] = 0.0
            out[f] = arr
        # keep the discharge split exact after clipping
        out["p_evd"] = out["p_v2h"] + out["p_v2g"] + out["p_sell"]
        return DecisionVector(start=self.start, soc=self.soc.copy(), **out)

    def slot_decision(self, u: int, slot: int) -> SlotDecision:
        k = slot - self.start
        values = {f: float(getattr(self, f)[u, k]) for f in DECISION_FIELDS}
        return SlotDecision(
            **values,
            x_discharge=int(values["p_evd"] > DEFAULT_TOLERANCE),
            y_sell=int(values["p_sell"] > DEFAULT_TOLERANCE),
        )

    def to_frame(self, prosumer_ids: Sequence[str]) -> pd.DataFrame:
        """Long table with one row per prosumer and slot."""
        n_u, n_t = self.shape
        frame = pd.DataFrame({
            "prosumer_id": np.repeat(np.asarray(prosumer_ids, dtype=object), n_t),
            "slot": np.tile(np.arange(self.start, self.start + n_t), n_u),
        })
        for f in DECISION_FIELDS:
            frame[f] = getattr(self, f).reshape(-1)
        return frame


def soc_step(soc_prev: float, p_evc: float, p_evd: float, spec: EvSpec, slot_hours: float) -> float:
    """Advance stored EV energy by one slot.

    b_t = b_{t-1} + mu * p_evc * dt - p_evd * dt / eta
    """
    if soc_prev < 0 or p_evc < 0 or p_evd < 0 or slot_hours <= 0:
        raise ValidationError(
            f"soc_step needs nonnegative inputs, got soc_prev={soc_prev}, p_evc={p_evc}, p_evd={p_evd}"
        )
    if p_evc > 0 and p_evd > 0:
        raise ValidationError(f"Simultaneous charge ({p_evc} kW) and discharge ({p_evd} kW)")
    return soc_prev + spec.charge_eff * p_evc * slot_hours - p_evd * slot_hours / spec.discharge_eff


def degradation_cost(p_evc_trace: Sequence[float], p_evd_trace: Sequence[float], alpha_b: float) -> float:
    """Amortized battery cost alpha_b * sum(p_evd^2 + p_evc^2)."""
    evc = np.asarray(p_evc_trace, dtype=float)
    evd = np.asarray(p_evd_trace, dtype=float)
    if evc.shape != evd.shape:
        raise ValidationError(f"Trace length mismatch: {evc.shape} vs {evd.shape}")
    if (evc < 0).any() or (evd < 0).any():
        raise ValidationError("Charge and discharge traces must be nonnegative")
    return float(alpha_b * (np.sum(evd ** 2) + np.sum(evc ** 2)))


def grid_cost(p_grid_trace: Sequence[float], tariff: Tariff, slot_hours: float = 1.0, start: int = 0) -> float:
    """Retail cost of a grid import trace under a TOU or TPT tariff."""
    trace = np.asarray(p_grid_trace, dtype=float)
    if (trace < 0).any():
        raise ValidationError("Grid import trace must be nonnegative")
    if tariff.kind is None:
        raise ValidationError("Tariff kind is unset")
    if trace.size == 0:
        return 0.0
    energy = float(np.dot(tariff.energy_prices(trace.size, start), trace) * slot_hours)
    if tariff.kind is TariffKind.TPT:
        energy += tariff.tpt_peak_price * float(trace.max())
    return energy


def home_balance_residual(d: SlotDecision, load: float) -> float:
    """Supply minus demand of the home balance; zero iff the balance holds."""
    return (d.p_grid + d.p_renew + d.p_buy + d.p_v2h) - (load + d.p_evc)

