"""Single-stage pipeline steps that hand their results over through CSV files.

Each CLI stage command works in one directory for one PV scale and one mode:

    dispatch   -> dispatch.csv, capacities.csv
    powerflow  -> voltages.csv, angles.csv, currents.csv, transformers.csv, slack.csv
    audit      -> violations.csv, interventions.csv, violation_summary.csv
    reinforce  -> reinforcement.csv
    flexopf    -> opf.csv, dispatch_flex.csv, period_failures.csv
    report     -> report.csv
"""

import logging
from pathlib import Path
from typing import Dict, List, Tuple

import pandas as pd

from src.config import StudyConfig
from src.dispatch import DispatchSolution, dispatch_prosumers
from src.economics import REPORT_COLUMNS, CostReport, ReinforcementCost, reinforcement_cost, reports_to_frame
from src.errors import GridFlexError
from src.flexopf import OPF_COLUMNS, OpfMode, PeriodFailure, SplicedTrajectories, solutions_to_frame, solve_periods, splice_controls
from src.powerflow import (
    InterventionPeriod,
    NetworkStateSeries,
    ViolationRecord,
    audit,
    extract_periods,
    injection_matrix,
    periods_from_frame,
    periods_to_frame,
    records_from_frame,
    records_to_frame,
    solve_series,
    violation_summary,
)
from src.profiles import PvScenario, build_scenario
from .reports import DISPATCH_COLUMNS, write_csv
from .runner import StudyContext, certify_spliced, cost_report, pv_series, swept

logger = logging.getLogger(__name__)

LOADFLOW_FRAMES = ("voltages", "angles", "currents", "transformers", "slack")


class StageWorkspace:
    """Directory holding the hand-over files of one scale and mode."""

    def __init__(self, root):
        self.root = Path(root)

    def path(self, name: str) -> Path:
        return self.root / name

    def read(self, name: str, producer: str, **kwargs) -> pd.DataFrame:
        """Read a hand-over file; a missing one names the stage that writes it.

        Raises:
            GridFlexError: If the file is missing or unreadable
        """
        path = self.path(name)
        if not path.exists():
            raise GridFlexError(f"{path} not found; run the '{producer}' stage first")
        try:
            return pd.read_csv(path, **kwargs)
        except (OSError, ValueError) as e:
            raise GridFlexError(f"cannot read {path}: {e}") from None

    def write(self, frame: pd.DataFrame, name: str) -> Path:
        return write_csv(frame, self.path(name))


def stage_scenario(config: StudyConfig, context: StudyContext, scale: float) -> PvScenario:
    return build_scenario(
        scale, context.network, context.prosumer_table, context.year_profiles,
        config.pv.module_kw, config.lcoe,
    )


def run_dispatch_stage(
    config: StudyConfig, context: StudyContext, scale: float, mode: OpfMode, ws: StageWorkspace,
) -> Dict[str, DispatchSolution]:
    scenario = stage_scenario(config, context, scale)
    profiles = context.profiles
    stage1 = dispatch_prosumers(
        {bus: profiles.load_of(bus) for bus in profiles.prosumers},
        pv_series(scenario, profiles),
        context.prices, config.battery, profiles.dt_hours, profiles.year_fraction,
        storage=mode is OpfMode.WITH_STORAGE, workers=config.study.dispatch_workers,
        segment_starts=profiles.segment_starts,
    )
    ws.write(pd.concat([s.to_frame() for s in stage1.values()], ignore_index=True)[DISPATCH_COLUMNS], "dispatch.csv")
    ws.write(pd.DataFrame(
        [(bus, scenario.capacity_of(bus), s.capacity_kwh, s.power_limit_kw) for bus, s in stage1.items()],
        columns=["bus_id", "pv_kw", "battery_kwh", "battery_kw"],
    ), "capacities.csv")
    return stage1


def load_stage1(
    config: StudyConfig, context: StudyContext, scenario: PvScenario, ws: StageWorkspace,
) -> Dict[str, DispatchSolution]:
    """Rebuild the stage-1 solutions from dispatch.csv and capacities.csv."""
    frame = ws.read("dispatch.csv", "dispatch", dtype={"bus_id": str})
    capacities = ws.read("capacities.csv", "dispatch", dtype={"bus_id": str}).set_index("bus_id")
    profiles = context.profiles
    pv_kw = pv_series(scenario, profiles)
    stage1 = {}
    for bus, rows in frame.sort_values(["bus_id", "t"]).groupby("bus_id", sort=False):
        if len(rows) != profiles.horizon_steps:
            raise GridFlexError(
                f"dispatch.csv has {len(rows)} steps for {bus}, profiles have {profiles.horizon_steps}"
            )
        stage1[bus] = DispatchSolution.from_trajectory(
            bus,
            rows["p_bat_kw"].to_numpy(dtype=float),
            rows["soc_kwh"].to_numpy(dtype=float),
            pv_kw[bus],
            profiles.load_of(bus),
            float(capacities.loc[bus, "battery_kwh"]),
            config.battery, context.prices, profiles.dt_hours, profiles.year_fraction,
        )
    return stage1


def run_powerflow_stage(config: StudyConfig, context: StudyContext, ws: StageWorkspace) -> NetworkStateSeries:
    frame = ws.read("dispatch.csv", "dispatch", dtype={"bus_id": str})
    p_grid = {
        bus: rows.sort_values("t")["p_grid_kw"].to_numpy(dtype=float)
        for bus, rows in frame.groupby("bus_id", sort=False)
    }
    p_pu, q_pu = injection_matrix(context.admittance, p_grid)
    series = solve_series(context.admittance, p_pu, q_pu, config.pf)
    for name, table in series.to_frames().items():
        ws.write(table.reset_index(), f"{name}.csv")
    return series


def load_series(ws: StageWorkspace) -> NetworkStateSeries:
    frames = {name: ws.read(f"{name}.csv", "powerflow", index_col="t") for name in LOADFLOW_FRAMES}
    return NetworkStateSeries.from_frames(frames)


def run_audit_stage(
    config: StudyConfig, context: StudyContext, ws: StageWorkspace,
) -> Tuple[List[ViolationRecord], List[InterventionPeriod]]:
    series = load_series(ws)
    violations = audit(series, context.limits, config.audit.tolerance)
    periods = extract_periods(
        violations, series.horizon_steps, config.audit.padding, context.profiles.segment_starts,
    )
    ws.write(records_to_frame(violations), "violations.csv")
    ws.write(periods_to_frame(periods, context.profiles.dt_hours), "interventions.csv")
    ws.write(violation_summary(violations, context.profiles.dt_hours), "violation_summary.csv")
    return violations, periods


def run_reinforce_stage(config: StudyConfig, context: StudyContext, ws: StageWorkspace) -> ReinforcementCost:
    cost = reinforcement_cost(load_series(ws), context.network, config.grid, context.limits)
    ws.write(cost.to_frame(config.grid), "reinforcement.csv")
    return cost


def load_periods(ws: StageWorkspace) -> List[InterventionPeriod]:
    violations = records_from_frame(ws.read("violations.csv", "audit", dtype={"element": str}))
    return periods_from_frame(ws.read("interventions.csv", "audit"), violations)


def run_flexopf_stage(
    config: StudyConfig, context: StudyContext, scale: float, mode: OpfMode, ws: StageWorkspace,
) -> Tuple[SplicedTrajectories, List[PeriodFailure], List[ViolationRecord]]:
    """Clear the audited periods, splice, and re-audit the spliced injections.

    Returns:
        Tuple of (spliced trajectories, period failures, residual violations)
    """
    scenario = stage_scenario(config, context, scale)
    stage1 = load_stage1(config, context, scenario, ws)
    periods = load_periods(ws)
    solutions, failures = solve_periods(
        periods, stage1, context.admittance, context.limits, scenario, mode,
        config.opf, config.pf, config.pv.q_ratio,
    )
    spliced = splice_controls(stage1, solutions)
    residual = certify_spliced(context, spliced, [s.period for s in solutions], config)
    ws.write(solutions_to_frame(solutions).reindex(columns=OPF_COLUMNS), "opf.csv")
    ws.write(spliced.to_frame(), "dispatch_flex.csv")
    ws.write(pd.DataFrame(
        [(f.period, f.reason, int(f.used_incumbent)) for f in failures],
        columns=["m", "reason", "used_incumbent"],
    ), "period_failures.csv")
    return spliced, failures, residual


def run_report_stage(
    config: StudyConfig, context: StudyContext, scale: float, mode: OpfMode, ws: StageWorkspace,
) -> List[CostReport]:
    """Price reinforcement and flexibility from the files of the earlier stages."""
    scenario = stage_scenario(config, context, scale)
    stage1 = load_stage1(config, context, scenario, ws)
    spliced = SplicedTrajectories.from_frame(
        ws.read("dispatch_flex.csv", "flexopf", dtype={"bus_id": str}), context.profiles.dt_hours,
    )
    reinforcement = reinforcement_cost(load_series(ws), context.network, config.grid, context.limits)
    reports = swept([cost_report(scenario, mode, stage1, reinforcement, spliced, context)], config.grid)
    ws.write(reports_to_frame(reports).reindex(columns=REPORT_COLUMNS), "report.csv")
    return reports
