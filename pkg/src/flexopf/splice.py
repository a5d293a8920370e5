"""Write period OPF controls back into the stage-1 year trajectories."""

import logging
from dataclasses import dataclass
from typing import Dict, Mapping, Sequence

import numpy as np
import pandas as pd

from src.dispatch import DispatchSolution
from src.errors import ConsistencyError
from .base_solver import OpfMode, OpfSolution

logger = logging.getLogger(__name__)

OPF_COLUMNS = ["m", "bus_id", "t", "p_cur_kw", "p_bat_kw", "q_pv_kvar"]


@dataclass(frozen=True)
class SplicedTrajectories:
    """Year trajectories after the periods were cleared, keyed by bus id."""
    p_grid_kw: Dict[str, np.ndarray]
    p_bat_kw: Dict[str, np.ndarray]
    soc_kwh: Dict[str, np.ndarray]
    curtailment_kw: Dict[str, np.ndarray]
    q_kvar: Dict[str, np.ndarray]
    dt_hours: float

    @property
    def curtailed_kwh(self) -> float:
        return float(sum(c.sum() for c in self.curtailment_kw.values()) * self.dt_hours)

    def to_frame(self) -> pd.DataFrame:
        frames = []
        for bus, p_grid in self.p_grid_kw.items():
            frames.append(pd.DataFrame({
                "bus_id": bus,
                "t": np.arange(len(p_grid)),
                "p_bat_kw": self.p_bat_kw[bus],
                "soc_kwh": self.soc_kwh[bus],
                "p_grid_kw": p_grid,
                "p_cur_kw": self.curtailment_kw[bus],
                "q_pv_kvar": self.q_kvar[bus],
            }))
        columns = ["bus_id", "t", "p_bat_kw", "soc_kwh", "p_grid_kw", "p_cur_kw", "q_pv_kvar"]
        return pd.concat(frames, ignore_index=True)[columns] if frames else pd.DataFrame(columns=columns)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, dt_hours: float) -> "SplicedTrajectories":
        fields = {"p_grid_kw": {}, "p_bat_kw": {}, "soc_kwh": {}, "p_cur_kw": {}, "q_pv_kvar": {}}
        for bus, rows in frame.sort_values(["bus_id", "t"]).groupby("bus_id", sort=False):
            for column, target in fields.items():
                target[str(bus)] = rows[column].to_numpy(dtype=float)
        return cls(
            p_grid_kw=fields["p_grid_kw"],
            p_bat_kw=fields["p_bat_kw"],
            soc_kwh=fields["soc_kwh"],
            curtailment_kw=fields["p_cur_kw"],
            q_kvar=fields["q_pv_kvar"],
            dt_hours=dt_hours,
        )


def _check_disjoint(solutions: Sequence[OpfSolution]) -> None:
    ordered = sorted(solutions, key=lambda s: s.period.start)
    for before, after in zip(ordered, ordered[1:]):
        if after.period.start <= before.period.end:
            raise ConsistencyError(
                f"intervention periods {before.period.index} and {after.period.index} overlap"
            )


def splice_controls(
    stage1: Mapping[str, DispatchSolution],
    solutions: Sequence[OpfSolution],
    tol: float = 1e-6,
) -> SplicedTrajectories:
    """Replace stage-1 trajectories inside each solved period.

    Outside all periods every trajectory equals stage 1 and reactive power is
    zero.

    Raises:
        ConsistencyError: Periods overlap, a no-storage period meets a stage-1
            battery, or the stored energy at a period boundary drifts by more
            than ``tol`` kWh
    """
    _check_disjoint(solutions)
    buses = list(stage1)
    dt_hours = stage1[buses[0]].dt_hours if buses else 0.0
    p_grid = {b: stage1[b].p_grid_kw.copy() for b in buses}
    p_bat = {b: stage1[b].p_bat_kw.copy() for b in buses}
    soc = {b: stage1[b].soc_kwh.copy() for b in buses}
    cur = {b: np.zeros(stage1[b].horizon_steps) for b in buses}
    q = {b: np.zeros(stage1[b].horizon_steps) for b in buses}

    for solution in solutions:
        period = solution.period
        window = slice(period.start, period.end + 1)
        controls = solution.controls
        for j, bus in enumerate(controls.prosumers):
            base = stage1[bus]
            if solution.mode is OpfMode.NO_STORAGE and base.capacity_kwh > tol:
                raise ConsistencyError(
                    f"period {period.index}: no-storage controls cannot replace the "
                    f"{base.capacity_kwh:.3f} kWh battery of {bus}"
                )
            entry = solution.soc_kwh[j, 0]
            exit_ = solution.soc_kwh[j, -1]
            drift = max(abs(entry - base.soc_kwh[period.start]), abs(exit_ - base.soc_after(period.end)))
            if drift > tol:
                raise ConsistencyError(
                    f"period {period.index}: stored energy of {bus} drifts {drift:.3e} kWh at a boundary"
                )
            p_grid[bus][window] = solution.p_grid_kw[j]
            p_bat[bus][window] = controls.p_bat_kw[j]
            soc[bus][window] = solution.soc_kwh[j, :-1]
            cur[bus][window] = controls.curtailment_kw[j]
            q[bus][window] = controls.q_kvar[j]

    spliced = SplicedTrajectories(p_grid, p_bat, soc, cur, q, dt_hours)
    logger.info("Spliced %d periods; %.3f kWh curtailed", len(solutions), spliced.curtailed_kwh)
    return spliced


def solutions_to_frame(solutions: Sequence[OpfSolution]) -> pd.DataFrame:
    """Per-period controls, one row per (period, prosumer, step)."""
    frames = []
    for solution in solutions:
        c = solution.controls
        m, n = c.curtailment_kw.shape
        frames.append(pd.DataFrame({
            "m": solution.period.index,
            "bus_id": np.repeat(np.array(c.prosumers, dtype=object), n),
            "t": np.tile(np.arange(c.start, c.start + n), m),
            "p_cur_kw": c.curtailment_kw.ravel(),
            "p_bat_kw": c.p_bat_kw.ravel(),
            "q_pv_kvar": c.q_kvar.ravel(),
        }))
    if not frames:
        return pd.DataFrame(columns=OPF_COLUMNS)
    return pd.concat(frames, ignore_index=True)[OPF_COLUMNS]
