"""Time-of-use import tariff and flat export remuneration."""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

HOURS_PER_WEEK = 168


class Tariff(BaseModel):
    """Rates in cts/kWh. Peak applies on ``peak_weekdays`` within ``peak_hours``."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    peak_cts: float = Field(23.92, ge=0)
    offpeak_cts: float = Field(15.16, ge=0)
    export_cts: float = Field(8.16, ge=0)
    peak_hours: Tuple[int, int] = (6, 22)
    peak_weekdays: Tuple[int, ...] = (0, 1, 2, 3, 4)

    @field_validator("peak_hours", mode="before")
    @classmethod
    def _parse_hours(cls, value):
        if isinstance(value, str):
            start, _, end = value.partition("-")
            return int(start), int(end)
        return value

    @field_validator("peak_weekdays", mode="before")
    @classmethod
    def _parse_weekdays(cls, value):
        if isinstance(value, str):
            return tuple(int(v) for v in value.split(",") if v.strip())
        return value

    @model_validator(mode="after")
    def _check_window(self):
        start, end = self.peak_hours
        if not 0 <= start < end <= 24:
            raise ValueError(f"peak_hours must satisfy 0 <= start < end <= 24, got {start}-{end}")
        if any(not 0 <= d <= 6 for d in self.peak_weekdays):
            raise ValueError("peak_weekdays must be in 0 (Monday) .. 6 (Sunday)")
        return self

    def weekly_import_cts(self) -> np.ndarray:
        """Import rate for each hour of the week, Monday 00h first."""
        pattern = np.full(HOURS_PER_WEEK, self.offpeak_cts)
        start, end = self.peak_hours
        for day in self.peak_weekdays:
            pattern[day * 24 + start:day * 24 + end] = self.peak_cts
        return pattern


def tariff_rate(tariff: Tariff, timestamp) -> Tuple[float, float]:
    """Return ``(import, export)`` in cts/kWh at ``timestamp``."""
    ts = pd.Timestamp(timestamp)
    hour_of_week = ts.dayofweek * 24 + ts.hour
    return float(tariff.weekly_import_cts()[hour_of_week]), float(tariff.export_cts)


@dataclass(frozen=True)
class PriceSeries:
    """Per-step prices in CHF/kWh."""
    import_chf: np.ndarray
    export_chf: np.ndarray

    def __len__(self):
        return len(self.import_chf)

    @classmethod
    def from_tariff(cls, tariff: Tariff, index: pd.DatetimeIndex) -> "PriceSeries":
        hour_of_week = index.dayofweek.to_numpy() * 24 + index.hour.to_numpy()
        imp = tariff.weekly_import_cts()[hour_of_week] / 100.0
        exp = np.full(len(index), tariff.export_cts / 100.0)
        return cls(import_chf=imp, export_chf=exp)

    @classmethod
    def flat(cls, steps: int, import_cts: float, export_cts: float) -> "PriceSeries":
        return cls(
            import_chf=np.full(steps, import_cts / 100.0),
            export_chf=np.full(steps, export_cts / 100.0),
        )

    def window(self, start: int, stop: int) -> "PriceSeries":
        return PriceSeries(self.import_chf[start:stop], self.export_chf[start:stop])
