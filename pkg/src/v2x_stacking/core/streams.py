"""
Value streams: V2H, V2G with ancillary reserve, and pooled local energy trading.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from v2x_stacking.core.exceptions import NegativeValueError, SchemaError, ValidationError
from v2x_stacking.core.model import DEFAULT_TOLERANCE, DecisionVector, EvSpec

PRICE_COLUMNS = ["slot", "v2g_price", "reserve_price", "feed_in", "retail_reference"]

STREAM_NAMES = ("v2h", "v2g", "et")

# reserve price per unit of V2G price; reserve revenue must stay below the V2H and trading savings
DEFAULT_RESERVE_RATIO = 0.001


@dataclass(frozen=True)
class StreamToggle:
    """Which value streams a run may use."""

    v2h_enabled: bool = True
    v2g_enabled: bool = True
    trading_enabled: bool = True

    @classmethod
    def all(cls) -> "StreamToggle":
        return cls(True, True, True)

    @classmethod
    def none(cls) -> "StreamToggle":
        return cls(False, False, False)

    @classmethod
    def parse(cls, text: str | Sequence[str]) -> "StreamToggle":
        """Build from a comma list such as ``"v2h,et"``; ``"none"`` or an empty list disables all."""
        names = [s.strip().lower() for s in (text.split(",") if isinstance(text, str) else text)]
        names = [n for n in names if n and n != "none"]
        unknown = set(names) - set(STREAM_NAMES)
        if unknown:
            raise ValidationError(f"Unknown value streams: {', '.join(sorted(unknown))}. Use {', '.join(STREAM_NAMES)}")
        return cls(v2h_enabled="v2h" in names, v2g_enabled="v2g" in names, trading_enabled="et" in names)

    @property
    def any_enabled(self) -> bool:
        return self.v2h_enabled or self.v2g_enabled or self.trading_enabled

    @property
    def names(self) -> list[str]:
        flags = (self.v2h_enabled, self.v2g_enabled, self.trading_enabled)
        return [name for name, on in zip(STREAM_NAMES, flags) if on]

    @property
    def label(self) -> str:
        return ",".join(self.names) or "none"


@dataclass(frozen=True, eq=False)
class MarketPrices:
    """Per-slot market prices in $/kWh.

    Local trading prices may be given per slot (shared by every prosumer of the pooled
    market) or per prosumer and slot.
    """

    v2g_price: np.ndarray
    reserve_price: np.ndarray
    local_buy: np.ndarray
    local_sell: np.ndarray

    def __post_init__(self):
        for key in ("v2g_price", "reserve_price", "local_buy", "local_sell"):
            arr = np.asarray(getattr(self, key), dtype=float)
            if (arr < 0).any():
                raise ValidationError(f"{key} must be nonnegative")
            object.__setattr__(self, key, arr)
        if self.v2g_price.shape != self.reserve_price.shape:
            raise ValidationError("v2g_price and reserve_price must have the same length")
        if self.local_buy.shape != self.local_sell.shape:
            raise ValidationError("local_buy and local_sell must have the same shape")
        if (self.local_sell > self.local_buy + DEFAULT_TOLERANCE).any():
            raise ValidationError("local_sell must not exceed local_buy")

    @property
    def n_slots(self) -> int:
        return self.v2g_price.shape[-1]

    def buy_for(self, n_prosumers: int) -> np.ndarray:
        return np.broadcast_to(self.local_buy, (n_prosumers, self.local_buy.shape[-1]))

    def sell_for(self, n_prosumers: int) -> np.ndarray:
        return np.broadcast_to(self.local_sell, (n_prosumers, self.local_sell.shape[-1]))

    @classmethod
    def from_retail(
        cls,
        retail: Sequence[float],
        feed_in: Sequence[float] | float,
        v2g_price: Sequence[float],
        reserve_price: Sequence[float] | None = None,
        reserve_ratio: float = DEFAULT_RESERVE_RATIO,
    ) -> "MarketPrices":
        """Local prices at the mid-market rate; reserve defaults to ``reserve_ratio`` times the V2G price."""
        retail = np.asarray(retail, dtype=float)
        feed = np.broadcast_to(np.asarray(feed_in, dtype=float), retail.shape)
        buy, sell = mid_market_rate(retail, feed)
        v2g = np.asarray(v2g_price, dtype=float)
        reserve = reserve_ratio * v2g if reserve_price is None else np.asarray(reserve_price, dtype=float)
        return cls(v2g_price=v2g, reserve_price=reserve, local_buy=buy, local_sell=sell)


def mid_market_rate(retail_buy, feed_in):
    """Local trading price midway between the retail price and the feed-in tariff.

    Works on scalars or arrays and returns ``(local_buy, local_sell)``, both equal to
    the midpoint.
    """
    buy = np.asarray(retail_buy, dtype=float)
    feed = np.asarray(feed_in, dtype=float)
    if (feed < 0).any():
        raise ValidationError("Feed-in price must be nonnegative")
    if (buy < feed).any():
        raise ValidationError("Retail price must not be below the feed-in price")
    mid = (buy + feed) / 2.0
    if mid.ndim == 0:
        return float(mid), float(mid)
    return mid, mid.copy()


def _slot_prices(prices: np.ndarray, decisions: DecisionVector) -> np.ndarray:
    slots = list(decisions.slots)
    if slots and slots[-1] >= prices.shape[-1]:
        raise ValidationError(f"Prices cover {prices.shape[-1]} slots, decisions reach slot {slots[-1]}")
    return prices[..., slots]


def v2g_revenue(decisions: DecisionVector, prices: MarketPrices, slot_hours: float = 1.0) -> float:
    """Energy export plus reserve revenue summed over prosumers and slots."""
    v2g = _slot_prices(prices.v2g_price, decisions)
    reserve = _slot_prices(prices.reserve_price, decisions)
    return float(((decisions.p_v2g * v2g).sum() + (decisions.p_as * reserve).sum()) * slot_hours)


def reserve_soc_bounds(spec: EvSpec, p_as: float, slot_hours: float = 1.0) -> tuple[float, float]:
    """Usable stored-energy band left after committing ``p_as`` kW of symmetric reserve."""
    if p_as < 0:
        raise ValidationError(f"Reserve commitment must be nonnegative, got {p_as}")
    if p_as > spec.capacity_max / 2.0 + DEFAULT_TOLERANCE:
        raise ValidationError(
            f"Reserve commitment {p_as} kW exceeds half the battery capacity ({spec.capacity_max / 2.0})"
        )
    return spec.capacity_min + p_as * slot_hours, spec.capacity_max - p_as * slot_hours


def trading_cost(decisions: DecisionVector, prices: MarketPrices, slot_hours: float = 1.0) -> float:
    """Cost of local purchases minus revenue of local sales."""
    both = (decisions.p_buy > DEFAULT_TOLERANCE) & (decisions.p_sell > DEFAULT_TOLERANCE)
    if both.any():
        u, k = (int(i) for i in np.argwhere(both)[0])
        raise ValidationError(f"Prosumer {u} buys and sells in slot {decisions.start + k}")
    n = decisions.shape[0]
    buy = _slot_prices(prices.buy_for(n), decisions)
    sell = _slot_prices(prices.sell_for(n), decisions)
    return float(((decisions.p_buy * buy).sum() - (decisions.p_sell * sell).sum()) * slot_hours)


def market_clearing_residual(decisions: DecisionVector, slot: int) -> float:
    """Total local sales minus total local purchases in ``slot``; zero when the market clears."""
    k = slot - decisions.start
    if not 0 <= k < decisions.shape[1]:
        raise ValidationError(f"Slot {slot} outside decision window {decisions.slots}")
    return float(decisions.p_sell[:, k].sum() - decisions.p_buy[:, k].sum())


def read_price_csv(path: str | Path) -> pd.DataFrame:
    """Price series with columns slot, v2g_price, reserve_price, feed_in, retail_reference."""
    frame = pd.read_csv(path, float_precision="round_trip")
    missing = [c for c in PRICE_COLUMNS if c not in frame.columns]
    if missing:
        raise SchemaError(f"Price file {Path(path).name} is missing columns: {', '.join(missing)}")
    frame = frame.sort_values("slot").reset_index(drop=True)
    if list(frame["slot"]) != list(range(len(frame))):
        raise SchemaError(f"Price file {Path(path).name} must list slots 0..{len(frame) - 1} once each")
    if (frame[PRICE_COLUMNS[1:]] < 0).any().any():
        raise NegativeValueError(f"Price file {Path(path).name} contains negative prices")
    return frame
