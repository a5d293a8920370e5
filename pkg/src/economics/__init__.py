"""Reinforcement versus flexibility economics.

Usage:
    from src.economics import reinforcement_cost, flexibility_cost

    cost = reinforcement_cost(series, network)
    delta = flexibility_cost(stage1, spliced, prices)
"""

from .reinforcement import (
    ReinforcementAssessment,
    ReinforcementCost,
    ReinforcementCostInputs,
    assess_reinforcement,
    price_reinforcement,
    reinforcement_cost,
)
from .flexibility import (
    flexibility_capacities,
    flexibility_capacity_value,
    flexibility_cost,
    flexibility_cost_by_bus,
)
from .sweep import (
    BREAK_EVEN_COLUMNS,
    REPORT_COLUMNS,
    CostReport,
    break_even,
    reports_to_frame,
    sensitivity_sweep,
)

__all__ = [
    "BREAK_EVEN_COLUMNS",
    "REPORT_COLUMNS",
    "CostReport",
    "ReinforcementAssessment",
    "ReinforcementCost",
    "ReinforcementCostInputs",
    "assess_reinforcement",
    "break_even",
    "flexibility_capacities",
    "flexibility_capacity_value",
    "flexibility_cost",
    "flexibility_cost_by_bus",
    "price_reinforcement",
    "reinforcement_cost",
    "reports_to_frame",
    "sensitivity_sweep",
]
