"""Machine-readable study outputs: economics, violations, periods, trajectories."""

import logging
from pathlib import Path
from typing import Callable, List, Optional

import pandas as pd

from src.config import dump_config
from src.economics import BREAK_EVEN_COLUMNS, REPORT_COLUMNS, reports_to_frame
from src.errors import GridFlexError
from src.flexopf import OPF_COLUMNS, solutions_to_frame
from src.powerflow import duration_statistics, periods_to_frame, records_to_frame, violation_summary
from .runner import StudyRun

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.9g"

VIOLATION_COLUMNS = ["scenario", "mode", "t", "kind", "element", "value", "limit"]
SUMMARY_COLUMNS = ["scenario", "penetration_pct", "mode", "kind", "hours", "elements", "max_value", "max_loading_pct"]
INTERVENTION_COLUMNS = ["scenario", "mode", "m", "start", "end", "steps", "hours"]
DURATION_COLUMNS = ["scenario", "mode", "count", "total_hours", "mean_hours", "median_hours", "max_hours"]
CURTAILMENT_COLUMNS = ["scenario", "penetration_pct", "mode", "pv_generation_mwh", "curtailed_mwh", "curtailed_pct"]
CAPACITY_COLUMNS = ["scenario", "mode", "bus_id", "pv_kw", "battery_kwh", "battery_kw", "flex_capacity_kw"]
FAILURE_COLUMNS = ["scenario", "mode", "stage", "message", "fatal"]
DISPATCH_COLUMNS = ["bus_id", "t", "p_bat_kw", "soc_kwh", "p_grid_kw"]


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    """Write ``frame`` with the report precision; raises GridFlexError if unwritable."""
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    except OSError as e:
        raise GridFlexError(f"cannot write {path}: {e}") from None
    return path


def _prefixed(frame: pd.DataFrame, columns: List[str], **prefix) -> pd.DataFrame:
    frame = frame.copy()
    for position, (name, value) in enumerate(prefix.items()):
        frame.insert(position, name, value)
    return frame.reindex(columns=columns)


def _concat(frames: List[pd.DataFrame], columns: List[str]) -> pd.DataFrame:
    frames = [f for f in frames if not f.empty]
    return pd.concat(frames, ignore_index=True)[columns] if frames else pd.DataFrame(columns=columns)


def emit_reports(run: StudyRun, outdir, progress_callback: Optional[Callable] = None) -> List[Path]:
    """Write every study table under ``outdir`` and return the written paths.

    Each scenario reports a ``reporting`` stage through ``progress_callback``.

    Raises:
        GridFlexError: If a file cannot be written
    """
    out = Path(outdir)
    written: List[Path] = []
    violations, summaries, interventions, durations = [], [], [], []
    curtailment, capacities = [], []

    for scenario in run.scenarios:
        if progress_callback:
            progress_callback("reporting", f"writing {len(scenario.modes)} mode tables", scenario=scenario.label)
        for name, result in scenario.modes.items():
            key = dict(scenario=scenario.label, mode=name)
            report = result.report
            violations.append(_prefixed(records_to_frame(result.violations), VIOLATION_COLUMNS, **key))
            summaries.append(_prefixed(
                violation_summary(result.violations, run.dt_hours), SUMMARY_COLUMNS,
                scenario=scenario.label, penetration_pct=report.penetration_pct, mode=name,
            ))
            interventions.append(_prefixed(periods_to_frame(result.periods, run.dt_hours), INTERVENTION_COLUMNS, **key))
            durations.append(pd.DataFrame([{**key, **duration_statistics(result.periods, run.dt_hours)}]))
            curtailment.append(pd.DataFrame([{
                "scenario": scenario.label, "penetration_pct": report.penetration_pct, "mode": name,
                "pv_generation_mwh": report.pv_generation_mwh, "curtailed_mwh": report.curtailed_mwh,
                "curtailed_pct": report.curtailed_pct,
            }]))
            capacities.append(pd.DataFrame([
                {
                    **key, "bus_id": bus, "pv_kw": scenario.scenario.capacity_of(bus),
                    "battery_kwh": s.capacity_kwh, "battery_kw": s.power_limit_kw,
                    "flex_capacity_kw": report.flex_capacities_kw.get(bus, 0.0),
                }
                for bus, s in result.stage1.items()
            ]))
            stem = f"{scenario.label}_{name}.csv"
            dispatch = _concat([s.to_frame() for s in result.stage1.values()], DISPATCH_COLUMNS)
            written.append(write_csv(dispatch, out / "dispatch" / stem))
            written.append(write_csv(solutions_to_frame(result.solutions).reindex(columns=OPF_COLUMNS), out / "opf" / stem))

    failures = pd.DataFrame(
        [(f.scenario, f.mode, f.stage, f.message, int(f.fatal)) for f in run.failures],
        columns=FAILURE_COLUMNS,
    )
    swept = run.swept_reports()
    tables = {
        "report.csv": reports_to_frame(swept).reindex(columns=REPORT_COLUMNS),
        "break_even.csv": run.break_even().reindex(columns=BREAK_EVEN_COLUMNS),
        "violations.csv": _concat(violations, VIOLATION_COLUMNS),
        "violation_summary.csv": _concat(summaries, SUMMARY_COLUMNS),
        "interventions.csv": _concat(interventions, INTERVENTION_COLUMNS),
        "durations.csv": _concat(durations, DURATION_COLUMNS),
        "curtailment.csv": _concat(curtailment, CURTAILMENT_COLUMNS),
        "capacities.csv": _concat(capacities, CAPACITY_COLUMNS),
        "failures.csv": failures,
    }
    for filename, frame in tables.items():
        written.append(write_csv(frame, out / filename))

    try:
        (out / "study.conf").write_text(dump_config(run.config), encoding="utf-8")
    except OSError as e:
        raise GridFlexError(f"cannot write {out / 'study.conf'}: {e}") from None
    written.append(out / "study.conf")

    logger.info("Wrote %d files to %s", len(written), out)
    return written
