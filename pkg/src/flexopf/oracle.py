"""Uniform-curtailment bisection: the naive feasible point of a period.

At every step all prosumers spill the same fraction of their PV output, with
no reactive support and the battery held at its stage-1 power (or removed).
The smallest clearing fraction is found by bisection against the exact load
flow. Any OPF solution must curtail no more than this.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.powerflow import InjectionFrame, PowerFlowOptions, solve_loadflow, worst_margin
from .base_solver import PeriodContext

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OracleResult:
    factors: np.ndarray
    curtailed_kwh: float
    feasible: bool


def _clears(context: PeriodContext, k: int, factor: float, battery_kw: np.ndarray,
            options: PowerFlowOptions, positions: np.ndarray, kw_per_pu: float, non_slack: np.ndarray) -> bool:
    adm = context.admittance
    p = np.zeros(adm.n_bus)
    p[positions] = (
        (1.0 - factor) * context.pv_kw[:, k] + battery_kw[:, k] - context.load_kw[:, k]
    ) / kw_per_pu
    state = solve_loadflow(adm, InjectionFrame(p, np.zeros(adm.n_bus)), options)
    margin = worst_margin(
        state.vm[non_slack], state.i_ka, state.s_tr_mva,
        adm.branch_ids, adm.transformer_ids, context.limits,
    )
    return margin >= 0.0


def uniform_curtailment_oracle(
    context: PeriodContext,
    uses_storage: bool,
    pf_options: Optional[PowerFlowOptions] = None,
    tol: float = 1e-6,
) -> OracleResult:
    """Bisect the per-step uniform curtailment fraction of a period.

    Args:
        context: Stage-1 data of the period
        uses_storage: Keep stage-1 battery power in the balance
        pf_options: Load-flow options
        tol: Width of the final bisection bracket

    Returns:
        OracleResult; ``feasible`` is False when full curtailment leaves a violation
    """
    options = pf_options or PowerFlowOptions()
    adm = context.admittance
    positions = np.array([adm.bus_position(b) for b in context.prosumers], dtype=int)
    kw_per_pu = 1000.0 * adm.s_base_mva
    battery_kw = context.p_bat_kw if uses_storage else np.zeros_like(context.pv_kw)
    non_slack = np.asarray(adm.non_slack)

    clears = lambda k, f: _clears(context, k, f, battery_kw, options, positions, kw_per_pu, non_slack)
    factors = np.zeros(context.n_steps)
    feasible = True
    for k in range(context.n_steps):
        if clears(k, 0.0):
            continue
        if not clears(k, 1.0):
            factors[k] = 1.0
            feasible = False
            continue
        lo, hi = 0.0, 1.0
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if clears(k, mid):
                hi = mid
            else:
                lo = mid
        factors[k] = hi

    curtailed = float((context.pv_kw.sum(axis=0) * factors).sum() * context.dt_hours)
    logger.debug(
        "Uniform curtailment oracle: %.3f kWh over %d steps (feasible=%s)",
        curtailed, context.n_steps, feasible,
    )
    return OracleResult(factors=factors, curtailed_kwh=curtailed, feasible=feasible)
