"""Per-scenario cost reports and the transformer-cost sensitivity sweep."""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Sequence

import pandas as pd

from .flexibility import flexibility_capacity_value
from .reinforcement import ReinforcementCost, ReinforcementCostInputs, price_reinforcement

logger = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "scenario",
    "penetration_pct",
    "mode",
    "c_trafo_kchf_mva",
    "c_reinf_chf_yr",
    "delta_opex_chf_yr",
    "curtailed_mwh",
    "curtailed_pct",
    "flex_value_chf_kw",
]
BREAK_EVEN_COLUMNS = ["mode", "c_trafo_kchf_mva", "break_even_penetration_pct", "scenarios_flex_cheaper"]


@dataclass(frozen=True)
class CostReport:
    """Economics of one scenario under one flexibility mode."""
    scenario: str
    scale: float
    penetration_pct: float
    mode: str
    reinforcement: ReinforcementCost
    delta_opex_chf_yr: float
    curtailed_mwh: float
    pv_generation_mwh: float
    flex_capacities_kw: Dict[str, float] = field(default_factory=dict)

    @property
    def c_trafo_kchf_mva(self) -> float:
        return self.reinforcement.c_trafo_kchf_mva

    @property
    def c_reinf_chf_yr(self) -> float:
        return self.reinforcement.c_reinf_chf_yr

    @property
    def curtailed_pct(self) -> float:
        if self.pv_generation_mwh <= 0:
            return 0.0
        return 100.0 * self.curtailed_mwh / self.pv_generation_mwh

    @property
    def flex_value_chf_kw(self) -> float:
        """NaN when the scenario has no flexibility capacity."""
        try:
            return flexibility_capacity_value(
                self.c_reinf_chf_yr, self.delta_opex_chf_yr,
                self.flex_capacities_kw, self.reinforcement.factor,
            )
        except ValueError:
            return math.nan

    @property
    def flexibility_cheaper(self) -> bool:
        return self.delta_opex_chf_yr <= self.c_reinf_chf_yr

    def repriced(self, inputs: ReinforcementCostInputs) -> "CostReport":
        return replace(self, reinforcement=price_reinforcement(self.reinforcement.assessment, inputs))

    def to_row(self) -> dict:
        return {
            "scenario": self.scenario,
            "penetration_pct": self.penetration_pct,
            "mode": self.mode,
            "c_trafo_kchf_mva": self.c_trafo_kchf_mva,
            "c_reinf_chf_yr": self.c_reinf_chf_yr,
            "delta_opex_chf_yr": self.delta_opex_chf_yr,
            "curtailed_mwh": self.curtailed_mwh,
            "curtailed_pct": self.curtailed_pct,
            "flex_value_chf_kw": self.flex_value_chf_kw,
        }


def sensitivity_sweep(
    reports: Sequence[CostReport],
    c_trafo_values: Sequence[float],
    inputs: ReinforcementCostInputs,
) -> List[CostReport]:
    """Re-price every report at each transformer specific cost.

    Returns one report per (scenario, mode, c_trafo), scenarios outermost.

    Raises:
        ValueError: If fewer than two cost points are given
    """
    values = sorted(set(float(c) for c in c_trafo_values))
    if len(values) < 2:
        raise ValueError(f"a sensitivity sweep needs at least two transformer costs, got {list(c_trafo_values)}")
    swept = [
        report.repriced(inputs.model_copy(update={"c_trafo": c}))
        for report in reports
        for c in values
    ]
    logger.info("Sensitivity sweep: %d reports x %d transformer costs", len(reports), len(values))
    return swept


def break_even(reports: Sequence[CostReport]) -> pd.DataFrame:
    """Highest penetration per (mode, c_trafo) where flexibility costs no more than reinforcement."""
    rows = []
    keys = sorted({(r.mode, r.c_trafo_kchf_mva) for r in reports})
    for mode, c_trafo in keys:
        group = [r for r in reports if r.mode == mode and r.c_trafo_kchf_mva == c_trafo]
        cheaper = [r.penetration_pct for r in group if r.flexibility_cheaper]
        strictly = sum(1 for r in group if r.delta_opex_chf_yr < r.c_reinf_chf_yr)
        rows.append({
            "mode": mode,
            "c_trafo_kchf_mva": c_trafo,
            "break_even_penetration_pct": max(cheaper) if cheaper else math.nan,
            "scenarios_flex_cheaper": strictly,
        })
    return pd.DataFrame(rows, columns=BREAK_EVEN_COLUMNS)


def reports_to_frame(reports: Sequence[CostReport]) -> pd.DataFrame:
    return pd.DataFrame([r.to_row() for r in reports], columns=REPORT_COLUMNS)
