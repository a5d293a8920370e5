"""Annualized cost of replacing overloaded lines and transformers."""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.dispatch import annualization
from src.grid import Network, OperatingLimits
from src.powerflow import NetworkStateSeries

logger = logging.getLogger(__name__)


class ReinforcementCostInputs(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    c_line: float = Field(70.0, gt=0, description="kCHF per km of replaced line")
    c_trafo: float = Field(60.0, ge=0, description="kCHF per MVA of replacement transformer")
    lifetime: float = Field(30, ge=1)
    interest: float = Field(0.03, gt=0)
    c_trafo_sweep: Tuple[float, ...] = (12.0, 60.0)

    @field_validator("c_trafo_sweep", mode="before")
    @classmethod
    def _split(cls, value):
        if isinstance(value, str):
            return tuple(v.strip() for v in value.split(",") if v.strip())
        if isinstance(value, (int, float)):
            return (value,)
        return value

    @property
    def factor(self) -> float:
        return annualization(self.interest, self.lifetime)


@dataclass(frozen=True)
class ReinforcementAssessment:
    """Which elements exceeded their limit over the year, and by how much."""
    line_peaks_ka: Dict[str, float]
    line_limits_ka: Dict[str, float]
    line_lengths_km: Dict[str, float]
    trafo_peaks_mva: Dict[str, float]
    trafo_ratings_mva: Dict[str, float]

    @property
    def replaced_lines(self) -> Tuple[str, ...]:
        return tuple(k for k, peak in self.line_peaks_ka.items() if peak > self.line_limits_ka[k])

    @property
    def replaced_transformers(self) -> Tuple[str, ...]:
        return tuple(k for k, peak in self.trafo_peaks_mva.items() if peak > self.trafo_ratings_mva[k])


@dataclass(frozen=True)
class ReinforcementCost:
    """Investment components in CHF and the annualized total."""
    c_line_chf: float
    c_trafo_chf: float
    factor: float
    c_trafo_kchf_mva: float
    assessment: ReinforcementAssessment

    @property
    def c_reinf_chf_yr(self) -> float:
        return self.factor * (self.c_line_chf + self.c_trafo_chf)

    @property
    def replaced_lines(self) -> Tuple[str, ...]:
        return self.assessment.replaced_lines

    @property
    def replaced_transformers(self) -> Tuple[str, ...]:
        return self.assessment.replaced_transformers

    def to_frame(self, inputs: "ReinforcementCostInputs") -> pd.DataFrame:
        """One row per audited element with its replacement flag and cost."""
        a = self.assessment
        rows = []
        for line_id, peak in a.line_peaks_ka.items():
            flagged = peak > a.line_limits_ka[line_id]
            rows.append({
                "element": line_id, "kind": "line", "length_km": a.line_lengths_km[line_id],
                "peak": peak, "limit": a.line_limits_ka[line_id], "replaced": int(flagged),
                "cost_chf": 1000.0 * inputs.c_line * a.line_lengths_km[line_id] if flagged else 0.0,
            })
        for trafo_id, peak in a.trafo_peaks_mva.items():
            flagged = peak > a.trafo_ratings_mva[trafo_id]
            rows.append({
                "element": trafo_id, "kind": "transformer", "length_km": float("nan"),
                "peak": peak, "limit": a.trafo_ratings_mva[trafo_id], "replaced": int(flagged),
                "cost_chf": 1000.0 * self.c_trafo_kchf_mva * peak if flagged else 0.0,
            })
        columns = ["element", "kind", "length_km", "peak", "limit", "replaced", "cost_chf"]
        return pd.DataFrame(rows, columns=columns)


def _peak(values: np.ndarray) -> float:
    return float(np.nanmax(values)) if np.isfinite(values).any() else 0.0


def assess_reinforcement(
    series: NetworkStateSeries,
    network: Network,
    limits: Optional[OperatingLimits] = None,
) -> ReinforcementAssessment:
    """Year maxima of line current and transformer loading against their limits."""
    limits = limits or OperatingLimits.from_network(network)
    branch_col = {b: k for k, b in enumerate(series.branch_ids)}
    trafo_col = {b: k for k, b in enumerate(series.transformer_ids)}
    line_peaks, line_limits, lengths = {}, {}, {}
    for line in network.physical_lines:
        line_peaks[line.id] = _peak(series.i_ka[:, branch_col[line.id]])
        line_limits[line.id] = limits.ampacity_ka.get(line.id, line.ampacity_ka)
        lengths[line.id] = line.length_km
    trafo_peaks, ratings = {}, {}
    for trafo in network.transformers:
        trafo_peaks[trafo.id] = _peak(series.s_tr_mva[:, trafo_col[trafo.id]])
        ratings[trafo.id] = limits.rating_mva.get(trafo.id, trafo.rating_mva)
    return ReinforcementAssessment(line_peaks, line_limits, lengths, trafo_peaks, ratings)


def price_reinforcement(assessment: ReinforcementAssessment, inputs: ReinforcementCostInputs) -> ReinforcementCost:
    """Price replaced lines by length and replaced transformers by their year peak."""
    c_line = sum(1000.0 * inputs.c_line * assessment.line_lengths_km[k] for k in assessment.replaced_lines)
    c_trafo = sum(1000.0 * inputs.c_trafo * assessment.trafo_peaks_mva[k] for k in assessment.replaced_transformers)
    return ReinforcementCost(
        c_line_chf=float(c_line),
        c_trafo_chf=float(c_trafo),
        factor=inputs.factor,
        c_trafo_kchf_mva=inputs.c_trafo,
        assessment=assessment,
    )


def reinforcement_cost(
    series: NetworkStateSeries,
    network: Network,
    inputs: Optional[ReinforcementCostInputs] = None,
    limits: Optional[OperatingLimits] = None,
) -> ReinforcementCost:
    inputs = inputs or ReinforcementCostInputs()
    cost = price_reinforcement(assess_reinforcement(series, network, limits), inputs)
    logger.info(
        "Reinforcement: %d lines, %d transformers, %.2f CHF/yr",
        len(cost.replaced_lines), len(cost.replaced_transformers), cost.c_reinf_chf_yr,
    )
    return cost
