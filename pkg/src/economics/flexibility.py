"""Cost of flexibility to the prosumers and its value per kW of capacity."""

import logging
from typing import Dict, Mapping

from src.dispatch import DispatchSolution, PriceSeries, opex_of
from src.flexopf import SplicedTrajectories

logger = logging.getLogger(__name__)


def flexibility_cost_by_bus(
    stage1: Mapping[str, DispatchSolution],
    spliced: SplicedTrajectories,
    prices: PriceSeries,
) -> Dict[str, float]:
    """Per-prosumer change in annual opex caused by the period controls, CHF/yr."""
    delta = {}
    for bus, base in stage1.items():
        before = opex_of(base.p_grid_kw, prices, base.dt_hours, base.year_fraction)
        after = opex_of(spliced.p_grid_kw[bus], prices, base.dt_hours, base.year_fraction)
        delta[bus] = after - before
    return delta


def flexibility_cost(
    stage1: Mapping[str, DispatchSolution],
    spliced: SplicedTrajectories,
    prices: PriceSeries,
) -> float:
    """Sum over prosumers of opex after minus opex before; signed, not floored."""
    total = float(sum(flexibility_cost_by_bus(stage1, spliced, prices).values()))
    logger.info("Flexibility cost: %.4f CHF/yr", total)
    return total


def flexibility_capacities(
    stage1: Mapping[str, DispatchSolution],
    pv_capacity_kw: Mapping[str, float],
) -> Dict[str, float]:
    """PV capacity plus battery power limit per prosumer, kW."""
    return {
        bus: float(pv_capacity_kw.get(bus, 0.0)) + float(solution.power_limit_kw)
        for bus, solution in stage1.items()
    }


def flexibility_capacity_value(
    c_reinf_chf_yr: float,
    delta_opex_chf_yr: float,
    capacities_kw: Mapping[str, float],
    factor: float,
) -> float:
    """One-time value in CHF per kW of flexibility capacity.

    Raises:
        ValueError: If the total flexibility capacity is not positive
    """
    total = float(sum(capacities_kw.values()))
    if total <= 0:
        raise ValueError("total flexibility capacity is zero; the value per kW is undefined")
    return (c_reinf_chf_yr - delta_opex_chf_yr) / factor / total
