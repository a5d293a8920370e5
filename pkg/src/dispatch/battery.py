"""Prosumer battery sizing and dispatch as a single linear program.

Decision variables, all non-negative, for a horizon of T steps::

    import[t], export[t], charge[t], discharge[t], energy[t], capacity

minimizing

    sum_t (import[t] * c_imp[t] - export[t] * c_exp[t]) * dt
    + SIGMA_WEIGHT * sum_t discharge[t]
    + year_fraction * R(r, L) * c_bat * capacity

subject to the bus power balance, lossy storage dynamics that close cyclically
within each contiguous segment of the horizon, the initial state of charge at
every segment start, energy bounds and a C-rate power cap.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.optimize import linprog

from src.errors import DispatchError
from .tariff import PriceSeries

logger = logging.getLogger(__name__)

SIGMA_WEIGHT = 1e-6


def annualization(r: float, lifetime: float) -> float:
    """Capital recovery factor r(1+r)^L / ((1+r)^L - 1).

    Raises:
        ValueError: If ``r`` is not positive or ``lifetime`` is below one year
    """
    if r <= 0:
        raise ValueError(f"interest rate must be positive, got {r}")
    if lifetime < 1:
        raise ValueError(f"lifetime must be at least one year, got {lifetime}")
    growth = (1.0 + r) ** lifetime
    return r * growth / (growth - 1.0)


class BatteryParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    unit_cost: float = Field(182.0, ge=0, description="CHF/kWh")
    fixed_cost: float = Field(0.0, ge=0, description="CHF per installed system")
    lifetime: float = Field(9, ge=1)
    interest: float = Field(0.03, gt=0)
    charge_efficiency: float = Field(0.95, gt=0, le=1)
    discharge_efficiency: float = Field(0.95, gt=0, le=1)
    power_ratio: float = Field(0.5, gt=0, description="kW per kWh of capacity")
    soc_min: float = Field(0.0, ge=0, le=1)
    soc_max: float = Field(1.0, ge=0, le=1)
    initial_soc: float = Field(0.5, ge=0, le=1)

    @model_validator(mode="after")
    def _check_soc(self):
        if self.soc_min > self.soc_max:
            raise ValueError("soc_min must not exceed soc_max")
        if not self.soc_min <= self.initial_soc <= self.soc_max:
            raise ValueError("initial_soc must lie within [soc_min, soc_max]")
        return self

    @property
    def annualization(self) -> float:
        return annualization(self.interest, self.lifetime)


def opex_of(p_grid_kw: np.ndarray, prices: PriceSeries, dt_hours: float, year_fraction: float = 1.0) -> float:
    """Annual cost of grid exchange in CHF; ``p_grid_kw`` is positive when exporting."""
    p_grid_kw = np.asarray(p_grid_kw, dtype=float)
    imported = np.clip(-p_grid_kw, 0.0, None)
    exported = np.clip(p_grid_kw, 0.0, None)
    cost = (imported @ prices.import_chf - exported @ prices.export_chf) * dt_hours
    return float(cost / year_fraction)


@dataclass(frozen=True)
class DispatchSolution:
    """Stage-1 operation of one prosumer.

    ``soc_kwh[t]`` is the stored energy at the start of step ``t``. Every
    segment of the horizon starts at the initial energy and returns to it after
    its last step. Money fields are annualized CHF.
    """
    bus_id: str
    capacity_kwh: float
    power_limit_kw: float
    soc_min_kwh: float
    soc_max_kwh: float
    charge_kw: np.ndarray
    discharge_kw: np.ndarray
    soc_kwh: np.ndarray
    import_kw: np.ndarray
    export_kw: np.ndarray
    pv_kw: np.ndarray
    load_kw: np.ndarray
    dt_hours: float
    year_fraction: float
    opex_chf: float
    sigma_chf: float
    capex_chf: float

    @property
    def horizon_steps(self) -> int:
        return len(self.soc_kwh)

    @property
    def p_bat_kw(self) -> np.ndarray:
        """Battery power, positive when discharging."""
        return self.discharge_kw - self.charge_kw

    @property
    def p_grid_kw(self) -> np.ndarray:
        """Grid exchange from the bus balance, positive when injecting."""
        return self.pv_kw - self.load_kw + self.p_bat_kw

    @property
    def totex_chf(self) -> float:
        return self.opex_chf + self.sigma_chf + self.capex_chf

    def soc_after(self, t: int) -> float:
        """Stored energy at the end of step ``t``."""
        return float(self.soc_kwh[(t + 1) % self.horizon_steps])

    def to_frame(self) -> pd.DataFrame:
        steps = self.horizon_steps
        return pd.DataFrame({
            "bus_id": [self.bus_id] * steps,
            "t": np.arange(steps),
            "p_bat_kw": self.p_bat_kw,
            "soc_kwh": self.soc_kwh,
            "p_grid_kw": self.p_grid_kw,
        })

    @classmethod
    def from_trajectory(
        cls,
        bus_id: str,
        p_bat_kw: np.ndarray,
        soc_kwh: np.ndarray,
        pv_kw: np.ndarray,
        load_kw: np.ndarray,
        capacity_kwh: float,
        params: BatteryParams,
        prices: PriceSeries,
        dt_hours: float,
        year_fraction: float = 1.0,
    ) -> "DispatchSolution":
        """Rebuild a solution from a stored battery trajectory."""
        p_bat_kw = np.asarray(p_bat_kw, dtype=float)
        p_grid = np.asarray(pv_kw, dtype=float) - np.asarray(load_kw, dtype=float) + p_bat_kw
        discharge = np.clip(p_bat_kw, 0.0, None)
        return cls(
            bus_id=bus_id,
            capacity_kwh=capacity_kwh,
            power_limit_kw=params.power_ratio * capacity_kwh,
            soc_min_kwh=params.soc_min * capacity_kwh,
            soc_max_kwh=params.soc_max * capacity_kwh,
            charge_kw=np.clip(-p_bat_kw, 0.0, None),
            discharge_kw=discharge,
            soc_kwh=np.asarray(soc_kwh, dtype=float),
            import_kw=np.clip(-p_grid, 0.0, None),
            export_kw=np.clip(p_grid, 0.0, None),
            pv_kw=np.asarray(pv_kw, dtype=float),
            load_kw=np.asarray(load_kw, dtype=float),
            dt_hours=dt_hours,
            year_fraction=year_fraction,
            opex_chf=opex_of(p_grid, prices, dt_hours, year_fraction),
            sigma_chf=float(discharge.sum() * SIGMA_WEIGHT / year_fraction),
            capex_chf=_capex(capacity_kwh, params),
        )


def _capex(capacity_kwh: float, params: BatteryParams) -> float:
    fixed = params.fixed_cost if capacity_kwh > 1e-9 else 0.0
    return params.annualization * (fixed + params.unit_cost * capacity_kwh)


def _segments(segment_starts: Sequence[int], n: int, bus_id: str) -> Tuple[int, ...]:
    starts = tuple(sorted({0, *(int(s) for s in segment_starts)}))
    bad = [s for s in starts if not 0 <= s < n]
    if bad:
        raise DispatchError(f"segment starts {bad} lie outside the {n}-step horizon of {bus_id}")
    return starts


def _solve_lp(
    bus_id: str,
    load_kw: np.ndarray,
    pv_kw: np.ndarray,
    prices: PriceSeries,
    params: BatteryParams,
    dt_hours: float,
    year_fraction: float,
    fixed_capacity: Optional[float],
    segment_starts: Sequence[int],
) -> DispatchSolution:
    n = len(load_kw)
    imp, exp, ch, dis, soc = (slice(k * n, (k + 1) * n) for k in range(5))
    cap = 5 * n
    n_var = 5 * n + 1
    eye = sp.identity(n, format="csr")
    # shift[t, next[t]] = 1 picks the next step's energy; each segment wraps onto its own start
    next_step = np.arange(1, n + 1)
    for start, stop in zip(segment_starts, [*segment_starts[1:], n]):
        next_step[stop - 1] = start
    shift = sp.csr_matrix((np.ones(n), (np.arange(n), next_step)), shape=(n, n))
    zeros = sp.csr_matrix((n, n))
    col = lambda values: sp.csr_matrix(np.asarray(values, dtype=float).reshape(-1, 1))

    cost = np.zeros(n_var)
    cost[imp] = prices.import_chf * dt_hours
    cost[exp] = -prices.export_chf * dt_hours
    cost[dis] = SIGMA_WEIGHT
    cost[cap] = year_fraction * params.annualization * params.unit_cost

    # export - import + charge - discharge = pv - load
    balance = sp.hstack([-eye, eye, eye, -eye, zeros, col(np.zeros(n))])
    # E[t+1] - E[t] - eta_c dt charge[t] + dt/eta_d discharge[t] = 0
    dynamics = sp.hstack([
        zeros, zeros,
        -params.charge_efficiency * dt_hours * eye,
        dt_hours / params.discharge_efficiency * eye,
        shift - eye,
        col(np.zeros(n)),
    ])
    initial = np.zeros((len(segment_starts), n_var))
    initial[np.arange(len(segment_starts)), soc.start + np.asarray(segment_starts)] = 1.0
    initial[:, cap] = -params.initial_soc
    a_eq = sp.vstack([balance, dynamics, sp.csr_matrix(initial)]).tocsr()
    b_eq = np.concatenate([pv_kw - load_kw, np.zeros(n), np.zeros(len(segment_starts))])

    ratio = col(np.full(n, -params.power_ratio))
    a_ub = sp.vstack([
        sp.hstack([zeros, zeros, eye, zeros, zeros, ratio]),
        sp.hstack([zeros, zeros, zeros, eye, zeros, ratio]),
        sp.hstack([zeros, zeros, zeros, zeros, eye, col(np.full(n, -params.soc_max))]),
        sp.hstack([zeros, zeros, zeros, zeros, -eye, col(np.full(n, params.soc_min))]),
    ]).tocsr()
    b_ub = np.zeros(4 * n)

    bounds = [(0, None)] * (5 * n) + [
        (fixed_capacity, fixed_capacity) if fixed_capacity is not None else (0, None)
    ]
    result = linprog(cost, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if result.status != 0:
        raise DispatchError(f"internal error: dispatch LP for {bus_id} ended with status {result.status}: {result.message}")

    x = result.x
    capacity = max(float(x[cap]), 0.0)
    charge = np.clip(x[ch], 0.0, None)
    discharge = np.clip(x[dis], 0.0, None)
    p_grid = pv_kw - load_kw + discharge - charge
    return DispatchSolution(
        bus_id=bus_id,
        capacity_kwh=capacity,
        power_limit_kw=params.power_ratio * capacity,
        soc_min_kwh=params.soc_min * capacity,
        soc_max_kwh=params.soc_max * capacity,
        charge_kw=charge,
        discharge_kw=discharge,
        soc_kwh=np.clip(x[soc], 0.0, None),
        import_kw=x[imp],
        export_kw=x[exp],
        pv_kw=pv_kw,
        load_kw=load_kw,
        dt_hours=dt_hours,
        year_fraction=year_fraction,
        opex_chf=opex_of(p_grid, prices, dt_hours, year_fraction),
        sigma_chf=float(discharge.sum() * SIGMA_WEIGHT / year_fraction),
        capex_chf=_capex(capacity, params),
    )


def optimize_dispatch(
    bus_id: str,
    load_kw,
    pv_kw,
    prices: PriceSeries,
    params: Optional[BatteryParams] = None,
    dt_hours: float = 0.25,
    year_fraction: float = 1.0,
    fixed_capacity: Optional[float] = None,
    segment_starts: Sequence[int] = (0,),
) -> DispatchSolution:
    """Size and operate one prosumer's battery at minimum total cost.

    Args:
        bus_id: Prosumer bus the solution belongs to
        load_kw: Load per step
        pv_kw: PV output per step (installed capacity times yield)
        prices: Import/export prices per step
        params: Battery cost and technical parameters
        dt_hours: Step length
        year_fraction: Share of a year the horizon covers; money is annualized by it
        fixed_capacity: Pin the capacity instead of optimizing it
        segment_starts: First step of every contiguous stretch of the horizon;
            the battery starts each stretch at its initial energy and returns to it

    Returns:
        The optimal DispatchSolution

    Raises:
        DispatchError: On a horizon mismatch or a non-optimal solver status
    """
    params = params or BatteryParams()
    load_kw = np.asarray(load_kw, dtype=float)
    pv_kw = np.asarray(pv_kw, dtype=float)
    if len(load_kw) == 0:
        raise DispatchError(f"empty horizon for {bus_id}")
    if not len(load_kw) == len(pv_kw) == len(prices):
        raise DispatchError(
            f"horizon mismatch for {bus_id}: load {len(load_kw)}, pv {len(pv_kw)}, prices {len(prices)} steps"
        )
    if fixed_capacity is not None and fixed_capacity < 0:
        raise DispatchError(f"fixed capacity must be non-negative, got {fixed_capacity}")
    starts = _segments(segment_starts, len(load_kw), bus_id)

    solve = lambda capacity: _solve_lp(
        bus_id, load_kw, pv_kw, prices, params, dt_hours, year_fraction, capacity, starts,
    )
    best = solve(fixed_capacity)
    if fixed_capacity is None and params.fixed_cost > 0 and best.capacity_kwh > 1e-9:
        # The LP ignores the system fixed cost; compare against going without.
        without = solve(0.0)
        if without.totex_chf <= best.totex_chf:
            best = without

    logger.debug(
        "Dispatch %s: %.2f kWh, opex %.2f CHF/yr, totex %.2f CHF/yr",
        bus_id, best.capacity_kwh, best.opex_chf, best.totex_chf,
    )
    return best


def dispatch_prosumers(
    load_kw: Mapping[str, np.ndarray],
    pv_kw: Mapping[str, np.ndarray],
    prices: PriceSeries,
    params: Optional[BatteryParams] = None,
    dt_hours: float = 0.25,
    year_fraction: float = 1.0,
    storage: bool = True,
    workers: int = 1,
    segment_starts: Sequence[int] = (0,),
) -> Dict[str, DispatchSolution]:
    """Run ``optimize_dispatch`` for every prosumer; ``storage=False`` pins capacity to zero."""
    fixed = None if storage else 0.0
    buses = list(load_kw)

    def run(bus):
        return optimize_dispatch(
            bus, load_kw[bus], pv_kw[bus], prices, params, dt_hours, year_fraction, fixed, segment_starts,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            solutions = list(pool.map(run, buses))
    else:
        solutions = [run(bus) for bus in buses]
    return dict(zip(buses, solutions))


def battery_count_summary(solutions: Mapping[str, DispatchSolution]) -> pd.DataFrame:
    """Per-prosumer battery capacity with a closing ``Total`` row."""
    table = pd.DataFrame(
        {"capacity_kwh": [s.capacity_kwh for s in solutions.values()]},
        index=pd.Index(list(solutions), name="bus_id"),
    )
    table.loc["Total"] = table["capacity_kwh"].sum()
    return table
