"""
Load and PV forecasters for the rolling horizon, and forecast-quality metrics.

Forecasters only see realized data up to the current slot through ``TraceHistory``.
The error-injection forecaster is the exception: it perturbs the realized future
with calibrated multiplicative noise, so it reads the future through an explicit
oracle accessor.
"""

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator
from scipy.optimize import brentq
from scipy.stats import norm

from v2x_stacking.core.exceptions import ForecastError, InsufficientHistoryError, SchemaError
from v2x_stacking.utils import get_logger

logger = get_logger(__name__)

FORECAST_COLUMNS = ["prosumer_id", "origin_slot", "target_slot", "load_kw", "pv_kw"]

_TRACE_CODES = {"load": 0, "pv": 1}


class ForecasterKind(str, Enum):
    PERSISTENCE = "persistence"
    SEASONAL_NAIVE = "seasonal_naive"
    ERROR_INJECTION = "error_injection"
    EXTERNAL = "external"


class ForecasterSpec(BaseModel):
    """Forecaster choice and parameters."""

    kind: ForecasterKind = ForecasterKind.ERROR_INJECTION
    lookback_days: int = Field(default=1, ge=1)
    sigma: float = 0.0
    seed: int = Field(default=0, ge=0)
    apply_to: Literal["load", "pv", "both"] = "both"
    path: str | None = None

    @field_validator("sigma")
    def validate_sigma(cls, v: float) -> float:
        """Target relative error must be nonnegative."""
        if v < 0:
            raise ValueError("sigma must be >= 0")
        return v

    @classmethod
    def perfect(cls) -> "ForecasterSpec":
        return cls(kind=ForecasterKind.ERROR_INJECTION, sigma=0.0)

    @property
    def label(self) -> str:
        if self.kind is ForecasterKind.ERROR_INJECTION:
            return f"{self.kind.value}(sigma={self.sigma:g},{self.apply_to})"
        if self.kind is ForecasterKind.SEASONAL_NAIVE:
            return f"{self.kind.value}(lookback={self.lookback_days})"
        return self.kind.value


@dataclass(frozen=True, eq=False)
class ForecastSeries:
    """Predicted load and PV in kW, shape (prosumers, slots), for slots ``start`` onwards.

    ``origin`` is the slot at which the prediction was made.
    """

    load: np.ndarray
    pv: np.ndarray
    origin: int
    start: int
    day: int = 0

    def __post_init__(self):
        load = np.asarray(self.load, dtype=float)
        pv = np.asarray(self.pv, dtype=float)
        if load.shape != pv.shape or load.ndim != 2:
            raise ForecastError(f"Load and PV forecasts must share a 2-D shape, got {load.shape} and {pv.shape}")
        if (load < 0).any() or (pv < 0).any():
            raise ForecastError("Forecasts must be nonnegative")
        object.__setattr__(self, "load", load)
        object.__setattr__(self, "pv", pv)

    @property
    def horizon(self) -> int:
        return self.load.shape[1]

    @property
    def slots(self) -> range:
        return range(self.start, self.start + self.horizon)

    def prepend(self, load_now: np.ndarray, pv_now: np.ndarray) -> "ForecastSeries":
        """Window input: the realized values of slot ``start - 1`` followed by this forecast."""
        return ForecastSeries(
            load=np.column_stack([load_now, self.load]),
            pv=np.column_stack([pv_now, self.pv]),
            origin=self.origin,
            start=self.start - 1,
            day=self.day,
        )


class TraceHistory:
    """Realized traces visible at slot ``now`` of ``day``.

    ``load`` and ``pv`` map a day index to a (prosumers, slots) array. Reads of the
    current day past ``now`` and of later days raise ``ForecastError``.
    """

    def __init__(
        self,
        load: dict[int, np.ndarray],
        pv: dict[int, np.ndarray],
        day: int,
        now: int,
        prosumer_ids: Sequence[str] = (),
    ):
        self._load = load
        self._pv = pv
        self.day = day
        self.now = now
        self.prosumer_ids = list(prosumer_ids)

    def _traces(self, kind: str) -> dict[int, np.ndarray]:
        return self._load if kind == "load" else self._pv

    @property
    def n_slots(self) -> int:
        return self._load[self.day].shape[1]

    def observed(self, kind: str, day: int, slot: int) -> np.ndarray:
        """Realized values of every prosumer at (day, slot)."""
        if (day, slot) > (self.day, self.now):
            raise ForecastError(f"Slot {slot} of day {day} is not realized yet at slot {self.now} of day {self.day}")
        traces = self._traces(kind)
        if day not in traces:
            raise InsufficientHistoryError(f"No {kind} history for day {day}")
        return traces[day][:, slot]

    def previous_day(self, kind: str, lag: int) -> np.ndarray:
        """Full realized trace of the day ``lag`` days back."""
        if lag < 1:
            raise ForecastError("Lag must be at least one day")
        day = self.day - lag
        traces = self._traces(kind)
        if day not in traces:
            raise InsufficientHistoryError(f"{kind} history does not reach day {day} ({lag} days back)")
        return traces[day]

    def oracle(self, kind: str, start: int, horizon: int) -> np.ndarray:
        """Realized future of the current day; reserved for error injection."""
        return self._traces(kind)[self.day][:, start:start + horizon]


@lru_cache(maxsize=256)
def noise_scale(sigma: float) -> float:
    """Normal scale s such that E[max(sZ, -1)^2] = sigma^2 for standard normal Z.

    Clamping at -1 keeps forecasts nonnegative; the calibration accounts for the
    clamped mass so the expected relative error stays at ``sigma``.
    """
    if sigma < 0:
        raise ForecastError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return 0.0

    def second_moment(s: float) -> float:
        a = -1.0 / s
        return s * s * (norm.sf(a) + a * norm.pdf(a)) + norm.cdf(a) - sigma * sigma

    upper = max(2.0 * sigma, 1.0)
    while second_moment(upper) < 0:
        upper *= 2.0
    return float(brentq(second_moment, 1e-12, upper, xtol=1e-12))


def _inject(realized: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    scale = noise_scale(sigma)
    if scale == 0.0:
        return realized.copy()
    eps = np.maximum(scale * rng.standard_normal(realized.shape), -1.0)
    return realized * (1.0 + eps)


class ExternalForecasts:
    """Forecasts read from a CSV with columns prosumer_id, origin_slot, target_slot,
    load_kw, pv_kw and an optional day column."""

    def __init__(self, frame: pd.DataFrame):
        missing = [c for c in FORECAST_COLUMNS if c not in frame.columns]
        if missing:
            raise SchemaError(f"Forecast file is missing columns: {', '.join(missing)}")
        if "day" not in frame.columns:
            frame = frame.assign(day=0)
        self._frame = frame.set_index(["day", "origin_slot", "target_slot", "prosumer_id"]).sort_index()

    @classmethod
    def from_csv(cls, path: str | Path) -> "ExternalForecasts":
        path = Path(path)
        if not path.exists():
            raise ForecastError(f"Forecast file not found: {path}")
        return cls(pd.read_csv(path, dtype={"prosumer_id": str}))

    def lookup(self, day: int, origin: int, targets: range, prosumer_ids: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        load = np.zeros((len(prosumer_ids), len(targets)))
        pv = np.zeros_like(load)
        for k, target in enumerate(targets):
            for u, pid in enumerate(prosumer_ids):
                key = (day, origin, target, pid)
                if key not in self._frame.index:
                    raise InsufficientHistoryError(
                        f"External forecast missing for prosumer '{pid}', day {day}, origin {origin}, target {target}"
                    )
                row = self._frame.loc[key]
                load[u, k] = float(np.asarray(row["load_kw"]).ravel()[0])
                pv[u, k] = float(np.asarray(row["pv_kw"]).ravel()[0])
        return load, pv


@lru_cache(maxsize=8)
def _external(path: str) -> ExternalForecasts:
    return ExternalForecasts.from_csv(path)


def forecast(spec: ForecasterSpec, history: TraceHistory, origin: int, horizon: int) -> ForecastSeries:
    """Predict load and PV for slots ``origin + 1 .. origin + horizon`` of the current day."""
    if origin != history.now:
        raise ForecastError(f"Forecast origin {origin} differs from the realized slot {history.now}")
    start = origin + 1
    if horizon <= 0:
        empty = np.zeros((len(history.observed("load", history.day, origin)), 0))
        return ForecastSeries(load=empty, pv=empty.copy(), origin=origin, start=start, day=history.day)
    if start + horizon > history.n_slots:
        raise ForecastError(f"Horizon {horizon} from slot {origin} runs past the end of the day")

    predicted = {}
    if spec.kind is ForecasterKind.PERSISTENCE:
        for kind in ("load", "pv"):
            predicted[kind] = np.repeat(history.observed(kind, history.day, origin)[:, None], horizon, axis=1)
    elif spec.kind is ForecasterKind.SEASONAL_NAIVE:
        for kind in ("load", "pv"):
            days = [history.previous_day(kind, lag)[:, start:start + horizon] for lag in range(1, spec.lookback_days + 1)]
            predicted[kind] = np.mean(days, axis=0)
    elif spec.kind is ForecasterKind.ERROR_INJECTION:
        for kind in ("load", "pv"):
            realized = history.oracle(kind, start, horizon)
            if spec.apply_to in (kind, "both"):
                rng = np.random.default_rng([spec.seed, history.day, origin, _TRACE_CODES[kind]])
                predicted[kind] = _inject(realized, spec.sigma, rng)
            else:
                predicted[kind] = realized.copy()
    elif spec.kind is ForecasterKind.EXTERNAL:
        if not spec.path:
            raise ForecastError("External forecaster needs a forecast file path")
        predicted["load"], predicted["pv"] = _external(spec.path).lookup(
            history.day, origin, range(start, start + horizon), history.prosumer_ids
        )
    else:
        raise ForecastError(f"Unsupported forecaster kind {spec.kind}")
    return ForecastSeries(load=predicted["load"], pv=predicted["pv"], origin=origin, start=start, day=history.day)


def relative_error(
    predicted: np.ndarray,
    realized: np.ndarray,
    mask: np.ndarray | None = None,
) -> float:
    """Relative RMS error ||predicted - realized||_2 / ||realized||_2 over ``mask``."""
    pred = np.asarray(predicted, dtype=float)
    real = np.asarray(realized, dtype=float)
    if pred.shape != real.shape:
        raise ForecastError(f"Predicted shape {pred.shape} differs from realized shape {real.shape}")
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), real.shape)
        pred, real = pred[mask], real[mask]
    denominator = float(np.linalg.norm(real))
    if denominator == 0.0:
        raise ForecastError("Relative error undefined: realized trace is all zero")
    return float(np.linalg.norm(pred - real) / denominator)


def ev_window_mask(windows: Sequence[tuple[int, int]], n_slots: int) -> np.ndarray:
    """Boolean (prosumers, slots) mask of each inclusive availability window."""
    t = np.arange(n_slots)
    return np.array([(t >= a) & (t <= b) for a, b in windows], dtype=bool).reshape(len(windows), n_slots)


def relative_error_load(
    predicted: np.ndarray,
    realized: np.ndarray,
    windows: Sequence[tuple[int, int]] | None = None,
    all_slots: bool = False,
) -> float:
    """Load forecast RE over the EV availability windows (or every slot)."""
    mask = None if all_slots or windows is None else ev_window_mask(windows, np.shape(realized)[-1])
    return relative_error(predicted, realized, mask)


def relative_error_pv(
    predicted: np.ndarray,
    realized: np.ndarray,
    windows: Sequence[tuple[int, int]] | None = None,
    all_slots: bool = False,
) -> float:
    """PV forecast RE over the EV availability windows (or every slot)."""
    mask = None if all_slots or windows is None else ev_window_mask(windows, np.shape(realized)[-1])
    return relative_error(predicted, realized, mask)


def export_forecasts(snapshots: Sequence[ForecastSeries], prosumer_ids: Sequence[str], path: str | Path) -> Path:
    """Write forecast snapshots in the external forecast CSV format."""
    records = []
    for snap in snapshots:
        for k, target in enumerate(snap.slots):
            for u, pid in enumerate(prosumer_ids):
                records.append({
                    "day": snap.day,
                    "prosumer_id": pid,
                    "origin_slot": snap.origin,
                    "target_slot": target,
                    "load_kw": snap.load[u, k],
                    "pv_kw": snap.pv[u, k],
                })
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame.from_records(records, columns=["day"] + FORECAST_COLUMNS).to_csv(path, index=False)
    return path
