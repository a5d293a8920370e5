"""Operating-limit audit and intervention-period extraction."""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from src.grid import OperatingLimits
from .loadflow import NetworkStateSeries

logger = logging.getLogger(__name__)


class AuditOptions(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    padding: int = Field(0, ge=0, description="clean steps added on both ends of a period")
    tolerance: float = Field(0.0, ge=0)


class ViolationKind(Enum):
    OVERVOLTAGE = "overvoltage"
    UNDERVOLTAGE = "undervoltage"
    AMPACITY = "ampacity"
    TRANSFORMER = "transformer"


_KIND_ORDER = {kind: i for i, kind in enumerate(ViolationKind)}


@dataclass(frozen=True)
class ViolationRecord:
    """One element beyond its limit at one step. ``value`` is pu, kA or MVA."""
    t: int
    kind: ViolationKind
    element: str
    value: float
    limit: float

    @property
    def excess(self) -> float:
        """Distance beyond the limit; relative to the limit for thermal kinds."""
        if self.kind is ViolationKind.OVERVOLTAGE:
            return self.value - self.limit
        if self.kind is ViolationKind.UNDERVOLTAGE:
            return self.limit - self.value
        return self.value / self.limit - 1.0

    def sort_key(self):
        return self.t, _KIND_ORDER[self.kind], self.element


def _records(kind, values, limits, ids, beyond, t_offset) -> List[ViolationRecord]:
    rows, cols = np.nonzero(beyond)
    return [
        ViolationRecord(int(r) + t_offset, kind, ids[c], float(values[r, c]), float(limits[c]))
        for r, c in zip(rows, cols)
    ]


def audit_arrays(
    vm: np.ndarray,
    i_ka: np.ndarray,
    s_tr_mva: np.ndarray,
    bus_ids: Sequence[str],
    branch_ids: Sequence[str],
    transformer_ids: Sequence[str],
    limits: OperatingLimits,
    tolerance: float = 0.0,
    t_offset: int = 0,
) -> List[ViolationRecord]:
    """Audit stacked (steps x elements) arrays; NaN rows never violate."""
    vm = np.atleast_2d(vm)
    i_ka = np.atleast_2d(i_ka)
    s_tr_mva = np.atleast_2d(s_tr_mva)
    records: List[ViolationRecord] = []

    v_max = np.full(vm.shape[1], limits.v_max)
    v_min = np.full(vm.shape[1], limits.v_min)
    records += _records(ViolationKind.OVERVOLTAGE, vm, v_max, bus_ids, vm > v_max + tolerance, t_offset)
    records += _records(ViolationKind.UNDERVOLTAGE, vm, v_min, bus_ids, vm < v_min - tolerance, t_offset)

    lines = [k for k, b in enumerate(branch_ids) if b in limits.ampacity_ka]
    if lines:
        amp = np.array([limits.ampacity_ka[branch_ids[k]] for k in lines])
        values = i_ka[:, lines]
        records += _records(
            ViolationKind.AMPACITY, values, amp, [branch_ids[k] for k in lines],
            values > amp * (1.0 + tolerance), t_offset,
        )

    trafos = [k for k, b in enumerate(transformer_ids) if b in limits.rating_mva]
    if trafos:
        rating = np.array([limits.rating_mva[transformer_ids[k]] for k in trafos])
        values = s_tr_mva[:, trafos]
        records += _records(
            ViolationKind.TRANSFORMER, values, rating, [transformer_ids[k] for k in trafos],
            values > rating * (1.0 + tolerance), t_offset,
        )

    records.sort(key=ViolationRecord.sort_key)
    return records


def audit(series: NetworkStateSeries, limits: OperatingLimits, tolerance: float = 0.0) -> List[ViolationRecord]:
    """Return one record per (step, element) beyond its limit, ordered by step."""
    records = audit_arrays(
        series.vm, series.i_ka, series.s_tr_mva,
        series.bus_ids, series.branch_ids, series.transformer_ids,
        limits, tolerance,
    )
    logger.info(
        "Audit: %d violation records over %d steps",
        len(records), len({r.t for r in records}),
    )
    return records


def worst_margin(
    vm: np.ndarray,
    i_ka: np.ndarray,
    s_tr_mva: np.ndarray,
    branch_ids: Sequence[str],
    transformer_ids: Sequence[str],
    limits: OperatingLimits,
) -> float:
    """Smallest normalized slack over all constraints (negative when violated).

    Voltage slack is in pu; thermal slack is a fraction of the limit.
    """
    vm = np.atleast_2d(vm)
    margins = [np.min(limits.v_max - vm), np.min(vm - limits.v_min)]
    lines = [k for k, b in enumerate(branch_ids) if b in limits.ampacity_ka]
    if lines:
        amp = np.array([limits.ampacity_ka[branch_ids[k]] for k in lines])
        margins.append(np.min(1.0 - np.atleast_2d(i_ka)[:, lines] / amp))
    trafos = [k for k, b in enumerate(transformer_ids) if b in limits.rating_mva]
    if trafos:
        rating = np.array([limits.rating_mva[transformer_ids[k]] for k in trafos])
        margins.append(np.min(1.0 - np.atleast_2d(s_tr_mva)[:, trafos] / rating))
    return float(min(margins))


@dataclass(frozen=True)
class InterventionPeriod:
    """Steps ``start``..``end`` inclusive."""
    index: int
    start: int
    end: int
    violations: Tuple[ViolationRecord, ...] = ()

    @property
    def steps(self) -> range:
        return range(self.start, self.end + 1)

    @property
    def length(self) -> int:
        return self.end - self.start + 1

    def hours(self, dt_hours: float) -> float:
        return self.length * dt_hours


def extract_periods(
    violations: Iterable[ViolationRecord],
    horizon: int,
    padding: int = 0,
    segment_starts: Sequence[int] = (),
) -> List[InterventionPeriod]:
    """Group violating steps into maximal runs, pad them and merge overlaps.

    Runs that touch after padding are merged too, so periods are separated by
    at least one clean step. ``segment_starts`` marks jumps in the time index
    (see ``TimeSeriesSet.segment_starts``): no run, padding or merge crosses one.
    """
    violations = list(violations)
    if not violations:
        return []
    steps = sorted({v.t for v in violations})
    starts = np.array(sorted({0, *segment_starts}), dtype=int)

    def segment(t: int) -> int:
        return int(np.searchsorted(starts, t, side="right")) - 1

    def bounds(seg: int) -> Tuple[int, int]:
        last = starts[seg + 1] - 1 if seg + 1 < len(starts) else horizon - 1
        return int(starts[seg]), int(last)

    runs: List[List[int]] = []
    for t in steps:
        if runs and t == runs[-1][1] + 1 and segment(t) == segment(runs[-1][1]):
            runs[-1][1] = t
        else:
            runs.append([t, t])

    merged: List[List[int]] = []
    for start, end in runs:
        seg = segment(start)
        first, last = bounds(seg)
        start = max(first, start - padding)
        end = min(last, end + padding)
        if merged and segment(merged[-1][0]) == seg and start <= merged[-1][1] + 1:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])

    periods = []
    for m, (start, end) in enumerate(merged):
        members = tuple(v for v in violations if start <= v.t <= end)
        periods.append(InterventionPeriod(index=m, start=start, end=end, violations=members))
    logger.info("Extracted %d intervention periods", len(periods))
    return periods


def violation_summary(violations: Sequence[ViolationRecord], dt_hours: float) -> pd.DataFrame:
    """Per-kind step-hours, element count and worst value.

    Step-hours count each step once per kind however many elements violate in it.
    Thermal maxima are also reported as loading percent of the limit.
    """
    rows = []
    for kind in ViolationKind:
        records = [v for v in violations if v.kind is kind]
        if not records:
            rows.append({
                "kind": kind.value, "hours": 0.0, "elements": 0,
                "max_value": float("nan"), "max_loading_pct": float("nan"),
            })
            continue
        worst = min(records, key=lambda v: v.value) if kind is ViolationKind.UNDERVOLTAGE \
            else max(records, key=lambda v: v.value)
        thermal = kind in (ViolationKind.AMPACITY, ViolationKind.TRANSFORMER)
        rows.append({
            "kind": kind.value,
            "hours": len({v.t for v in records}) * dt_hours,
            "elements": len({v.element for v in records}),
            "max_value": worst.value,
            "max_loading_pct": 100.0 * worst.value / worst.limit if thermal else float("nan"),
        })
    return pd.DataFrame(rows, columns=["kind", "hours", "elements", "max_value", "max_loading_pct"])


def duration_statistics(periods: Sequence[InterventionPeriod], dt_hours: float) -> dict:
    """Distribution of intervention period durations in hours."""
    hours = np.array([p.hours(dt_hours) for p in periods], dtype=float)
    if hours.size == 0:
        return {"count": 0, "total_hours": 0.0, "mean_hours": 0.0, "median_hours": 0.0, "max_hours": 0.0}
    return {
        "count": int(hours.size),
        "total_hours": float(hours.sum()),
        "mean_hours": float(hours.mean()),
        "median_hours": float(np.median(hours)),
        "max_hours": float(hours.max()),
    }


def records_to_frame(violations: Sequence[ViolationRecord]) -> pd.DataFrame:
    return pd.DataFrame(
        [(v.t, v.kind.value, v.element, v.value, v.limit) for v in violations],
        columns=["t", "kind", "element", "value", "limit"],
    )


def records_from_frame(frame: pd.DataFrame) -> List[ViolationRecord]:
    return [
        ViolationRecord(int(row.t), ViolationKind(row.kind), str(row.element), float(row.value), float(row.limit))
        for row in frame.itertuples(index=False)
    ]


def periods_to_frame(periods: Sequence[InterventionPeriod], dt_hours: Optional[float] = None) -> pd.DataFrame:
    frame = pd.DataFrame(
        [(p.index, p.start, p.end, p.length) for p in periods],
        columns=["m", "start", "end", "steps"],
    )
    if dt_hours is not None:
        frame["hours"] = frame["steps"] * dt_hours
    return frame


def periods_from_frame(frame: pd.DataFrame, violations: Sequence[ViolationRecord] = ()) -> List[InterventionPeriod]:
    return [
        InterventionPeriod(
            index=int(row.m), start=int(row.start), end=int(row.end),
            violations=tuple(v for v in violations if row.start <= v.t <= row.end),
        )
        for row in frame.itertuples(index=False)
    ]
