"""Study orchestration: the scenario ladder, per-stage hand-over files and reports.

Usage:
    from src.study import run_study, emit_reports

    run = run_study(config)
    emit_reports(run, config.study.out)
"""

from .runner import (
    CERTIFICATE_TOL,
    ModeResult,
    ScenarioFailure,
    ScenarioResult,
    StudyContext,
    StudyRun,
    StudyRunner,
    certify_spliced,
    cost_report,
    load_context,
    pv_series,
    run_study,
    scenario_label,
    swept,
)
from .reports import FLOAT_FORMAT, emit_reports, write_csv
from .stages import (
    StageWorkspace,
    load_periods,
    load_series,
    load_stage1,
    run_audit_stage,
    run_dispatch_stage,
    run_flexopf_stage,
    run_powerflow_stage,
    run_reinforce_stage,
    run_report_stage,
    stage_scenario,
)

__all__ = [
    "CERTIFICATE_TOL",
    "FLOAT_FORMAT",
    "ModeResult",
    "ScenarioFailure",
    "ScenarioResult",
    "StageWorkspace",
    "StudyContext",
    "StudyRun",
    "StudyRunner",
    "certify_spliced",
    "cost_report",
    "emit_reports",
    "load_context",
    "load_periods",
    "load_series",
    "load_stage1",
    "pv_series",
    "run_audit_stage",
    "run_dispatch_stage",
    "run_flexopf_stage",
    "run_powerflow_stage",
    "run_reinforce_stage",
    "run_report_stage",
    "run_study",
    "scenario_label",
    "stage_scenario",
    "swept",
    "write_csv",
]
