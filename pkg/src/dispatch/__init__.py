"""Stage-1 prosumer operation: tariff lookup and battery sizing/dispatch."""

from .tariff import HOURS_PER_WEEK, PriceSeries, Tariff, tariff_rate
from .battery import (
    SIGMA_WEIGHT,
    BatteryParams,
    DispatchSolution,
    annualization,
    battery_count_summary,
    dispatch_prosumers,
    opex_of,
    optimize_dispatch,
)

__all__ = [
    "HOURS_PER_WEEK",
    "SIGMA_WEIGHT",
    "BatteryParams",
    "DispatchSolution",
    "PriceSeries",
    "Tariff",
    "annualization",
    "battery_count_summary",
    "dispatch_prosumers",
    "opex_of",
    "optimize_dispatch",
    "tariff_rate",
]
