"""AC load flow, limit audit and intervention-period extraction.

Usage:
    from src.powerflow import solve_series, audit, extract_periods

    series = solve_series(admittance, p_pu, q_pu)
    periods = extract_periods(audit(series, limits), series.horizon_steps)
"""

from .loadflow import (
    InjectionFrame,
    NetworkState,
    NetworkStateSeries,
    PowerFlowOptions,
    branch_flows,
    dsbus_dv,
    factorize,
    injection_matrix,
    jacobian,
    solve_loadflow,
    solve_series,
)
from .audit import (
    AuditOptions,
    InterventionPeriod,
    ViolationKind,
    ViolationRecord,
    audit,
    audit_arrays,
    duration_statistics,
    extract_periods,
    periods_from_frame,
    periods_to_frame,
    records_from_frame,
    records_to_frame,
    violation_summary,
    worst_margin,
)

__all__ = [
    "AuditOptions",
    "InjectionFrame",
    "InterventionPeriod",
    "NetworkState",
    "NetworkStateSeries",
    "PowerFlowOptions",
    "ViolationKind",
    "ViolationRecord",
    "audit",
    "audit_arrays",
    "branch_flows",
    "dsbus_dv",
    "duration_statistics",
    "extract_periods",
    "factorize",
    "injection_matrix",
    "jacobian",
    "periods_from_frame",
    "periods_to_frame",
    "records_from_frame",
    "records_to_frame",
    "solve_loadflow",
    "solve_series",
    "violation_summary",
    "worst_margin",
]
