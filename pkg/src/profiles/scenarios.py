"""PV penetration scenarios: module-count scaling with an LCOE installation gate."""

import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Mapping, Optional

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from src.dispatch.battery import annualization
from src.errors import ProfileError
from src.grid import PROSUMERS_PATH, Network
from .timeseries import TimeSeriesSet

logger = logging.getLogger(__name__)

DEFAULT_SCALES = (0.07, 0.25, 0.45, 0.55, 0.65, 0.76, 0.87, 1.0)


class LcoeParams(BaseModel):
    """Cost inputs of the PV installation gate."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    pv_lifetime: float = Field(25, gt=0)
    discount_rate: float = Field(0.03, gt=0)
    variable_cost: float = Field(0.83, gt=0, description="CHF per W installed")
    fixed_cost: float = Field(10050.0, gt=0, description="CHF per system")
    threshold: float = Field(23.92, gt=0, description="cts/kWh")


def round_half_away(value: float) -> int:
    return int(math.copysign(math.floor(abs(value) + 0.5), value))


def lcoe_cts_per_kwh(capacity_kw: float, annual_yield_per_kw: float, lcoe: LcoeParams) -> float:
    """Annualized system cost over annual energy yield, in cts/kWh."""
    if capacity_kw <= 0 or annual_yield_per_kw <= 0:
        return math.inf
    capex = lcoe.fixed_cost + lcoe.variable_cost * 1000.0 * capacity_kw
    factor = annualization(lcoe.discount_rate, lcoe.pv_lifetime)
    return 100.0 * factor * capex / (capacity_kw * annual_yield_per_kw)


@dataclass(frozen=True)
class PvEntry:
    """Installed PV at one prosumer."""
    module_count: int
    module_count_max: int
    module_kw: float
    lcoe_cts: float
    gated: bool = False

    @property
    def capacity_kw(self) -> float:
        return 0.0 if self.gated else self.module_count * self.module_kw


def scale_pv(
    alpha: float,
    n_mod_max: int,
    module_kw: float,
    lcoe: LcoeParams,
    annual_yield_per_kw: float,
) -> PvEntry:
    """Scale the maximum module count and apply the LCOE gate.

    Raises:
        ValueError: If ``alpha`` is outside (0, 1] or ``n_mod_max`` is negative
    """
    if not 0 < alpha <= 1:
        raise ValueError(f"scale must lie in (0, 1], got {alpha}")
    if n_mod_max < 0:
        raise ValueError(f"maximum module count must be non-negative, got {n_mod_max}")

    count = round_half_away(alpha * n_mod_max)
    cost = lcoe_cts_per_kwh(count * module_kw, annual_yield_per_kw, lcoe)
    gated = count > 0 and cost > lcoe.threshold
    return PvEntry(
        module_count=0 if gated else count,
        module_count_max=n_mod_max,
        module_kw=module_kw,
        lcoe_cts=cost,
        gated=gated,
    )


@dataclass(frozen=True)
class PvScenario:
    scale: float
    module_kw: float
    entries: Mapping[str, PvEntry]
    penetration: Optional[float] = None

    @property
    def label(self) -> str:
        return f"s{round_half_away(self.scale * 100):03d}"

    @property
    def capacities_kw(self) -> Dict[str, float]:
        return {bus: entry.capacity_kw for bus, entry in self.entries.items()}

    @property
    def total_capacity_kw(self) -> float:
        return sum(self.capacities_kw.values())

    def capacity_of(self, bus_id: str) -> float:
        return self.entries[bus_id].capacity_kw


def load_prosumer_table(path=None) -> pd.DataFrame:
    """Read ``bus_id,annual_demand_mwh,pv_max_kw`` indexed by bus id."""
    path = Path(path) if path is not None else PROSUMERS_PATH
    table = pd.read_csv(path, dtype={"bus_id": str})
    required = {"bus_id", "annual_demand_mwh", "pv_max_kw"}
    if not required.issubset(table.columns):
        raise ProfileError(f"{path}: expected columns {sorted(required)}")
    return table.set_index("bus_id")


def max_module_counts(table: pd.DataFrame, module_kw: float) -> Dict[str, int]:
    return {bus: round_half_away(kw / module_kw) for bus, kw in table["pv_max_kw"].items()}


def penetration_of(scenario: PvScenario, profiles: TimeSeriesSet) -> float:
    """Annual PV energy as a percentage of annual load energy.

    Raises:
        ProfileError: If the prosumer sets differ or annual demand is zero
    """
    if set(scenario.entries) != set(profiles.prosumers):
        raise ProfileError("scenario and profiles cover different prosumers")
    demand = profiles.annual_load_kwh().sum()
    if demand <= 0:
        raise ProfileError("annual network demand is zero; penetration is undefined")
    yields = profiles.annual_yield_kwh_per_kw()
    generation = sum(entry.capacity_kw * yields[bus] for bus, entry in scenario.entries.items())
    return 100.0 * generation / demand


def build_scenario(
    alpha: float,
    network: Network,
    table: pd.DataFrame,
    profiles: TimeSeriesSet,
    module_kw: float = 0.4,
    lcoe: Optional[LcoeParams] = None,
) -> PvScenario:
    """Scale every prosumer of ``network`` by ``alpha`` and attach its penetration."""
    lcoe = lcoe or LcoeParams()
    counts = max_module_counts(table, module_kw)
    yields = profiles.annual_yield_kwh_per_kw()

    entries = {}
    for bus in network.prosumers:
        if bus not in counts:
            raise ProfileError(f"prosumer table has no row for bus '{bus}'")
        entries[bus] = scale_pv(alpha, counts[bus], module_kw, lcoe, float(yields[bus]))
        if entries[bus].gated:
            logger.info("LCOE gate removed PV at %s (%.1f cts/kWh)", bus, entries[bus].lcoe_cts)

    scenario = PvScenario(scale=alpha, module_kw=module_kw, entries=entries)
    scenario = replace(scenario, penetration=penetration_of(scenario, profiles))
    logger.info(
        "Scenario %s: %.1f kW installed, penetration %.1f%%",
        scenario.label, scenario.total_capacity_kw, scenario.penetration,
    )
    return scenario
