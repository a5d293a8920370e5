"""Load/PV profile ingestion and synthesis, and PV penetration scenarios."""

from .timeseries import (
    MAX_YIELD,
    TimeSeriesSet,
    clear_sky_yield,
    load_profiles,
    select_weeks,
    steps_per_year,
    synthesize_profiles,
    write_profiles,
    year_index,
)
from .scenarios import (
    DEFAULT_SCALES,
    LcoeParams,
    PvEntry,
    PvScenario,
    build_scenario,
    lcoe_cts_per_kwh,
    load_prosumer_table,
    max_module_counts,
    penetration_of,
    round_half_away,
    scale_pv,
)

__all__ = [
    "DEFAULT_SCALES",
    "MAX_YIELD",
    "LcoeParams",
    "PvEntry",
    "PvScenario",
    "TimeSeriesSet",
    "build_scenario",
    "clear_sky_yield",
    "lcoe_cts_per_kwh",
    "load_profiles",
    "load_prosumer_table",
    "max_module_counts",
    "penetration_of",
    "round_half_away",
    "scale_pv",
    "select_weeks",
    "steps_per_year",
    "synthesize_profiles",
    "write_profiles",
    "year_index",
]
