"""Curtailment-minimizing multi-period OPF inside intervention periods.

Usage:
    from src.flexopf import solve_periods, splice_controls

    solutions, failures = solve_periods(periods, stage1, admittance, limits, scenario, "with_storage")
    spliced = splice_controls(stage1, solutions)
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Mapping, Optional, Sequence, Tuple, Union

from src.dispatch import DispatchSolution
from src.errors import ConvergenceError, InfeasiblePeriodError, OpfStagnationError, SingularJacobianError
from src.grid import AdmittanceModel, OperatingLimits
from src.powerflow import InterventionPeriod, PowerFlowOptions
from src.profiles import PvScenario
from .base_solver import (
    BasePeriodSolver,
    FlexControls,
    OpfMode,
    OpfOptions,
    OpfSolution,
    PeriodContext,
    SocBoundary,
)
from .curtailment_solver import CurtailmentOpfSolver
from .oracle import OracleResult, uniform_curtailment_oracle
from .sensitivity import Sensitivities, linearize
from .solver_factory import OpfSolverFactory
from .splice import OPF_COLUMNS, SplicedTrajectories, solutions_to_frame, splice_controls
from .storage_solver import StorageOpfSolver

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PeriodFailure:
    period: int
    reason: str
    used_incumbent: bool = False


def solve_period(
    period: InterventionPeriod,
    stage1: Mapping[str, DispatchSolution],
    admittance: AdmittanceModel,
    limits: OperatingLimits,
    scenario: PvScenario,
    mode: Union[str, OpfMode],
    options: Optional[OpfOptions] = None,
    pf_options: Optional[PowerFlowOptions] = None,
    q_ratio: float = 0.4,
    progress_callback: Optional[Callable] = None,
) -> OpfSolution:
    """Minimize curtailed PV energy over one intervention period.

    PV output and load come from the stage-1 solutions, which carry the
    scenario's installed capacity; the scenario sets the reactive bound.

    Raises:
        ValueError: Empty period or unknown mode
        InfeasiblePeriodError: Full curtailment plus reactive support cannot clear it
        OpfStagnationError: The SLP did not settle; carries the best feasible incumbent
    """
    if period.length <= 0:
        raise ValueError(f"intervention period {period.index} is empty")
    context = PeriodContext.from_stage1(
        period, stage1, admittance, limits, scenario.capacities_kw, q_ratio=q_ratio,
    )
    solver = OpfSolverFactory.create(
        mode,
        period=period,
        context=context,
        options=options,
        pf_options=pf_options,
        progress_callback=progress_callback,
    )
    return solver.solve()


def solve_periods(
    periods: Sequence[InterventionPeriod],
    stage1: Mapping[str, DispatchSolution],
    admittance: AdmittanceModel,
    limits: OperatingLimits,
    scenario: PvScenario,
    mode: Union[str, OpfMode],
    options: Optional[OpfOptions] = None,
    pf_options: Optional[PowerFlowOptions] = None,
    q_ratio: float = 0.4,
    progress_callback: Optional[Callable] = None,
) -> Tuple[List[OpfSolution], List[PeriodFailure]]:
    """Solve independent periods concurrently on ``options.workers`` threads.

    A stagnated period with a feasible incumbent keeps the incumbent; periods
    that end without a usable point are left at stage 1 and reported.
    """
    options = options or OpfOptions()

    def run(period):
        try:
            return solve_period(
                period, stage1, admittance, limits, scenario, mode,
                options, pf_options, q_ratio, progress_callback,
            ), None
        except OpfStagnationError as e:
            if e.incumbent is not None:
                logger.warning("%s; keeping the incumbent", e)
                return e.incumbent, PeriodFailure(period.index, str(e), used_incumbent=True)
            logger.warning("%s", e)
            return None, PeriodFailure(period.index, str(e))
        except (InfeasiblePeriodError, ConvergenceError, SingularJacobianError) as e:
            logger.warning("Period %d: %s", period.index, e)
            return None, PeriodFailure(period.index, str(e))

    if options.workers > 1 and len(periods) > 1:
        with ThreadPoolExecutor(max_workers=options.workers) as pool:
            outcomes = list(pool.map(run, periods))
    else:
        outcomes = [run(p) for p in periods]

    solutions = [s for s, _ in outcomes if s is not None]
    failures = [f for _, f in outcomes if f is not None]
    logger.info(
        "Cleared %d of %d intervention periods (%s)",
        len(solutions), len(periods), mode.value if isinstance(mode, OpfMode) else mode,
    )
    return solutions, failures


__all__ = [
    "BasePeriodSolver",
    "CurtailmentOpfSolver",
    "FlexControls",
    "OPF_COLUMNS",
    "OpfMode",
    "OpfOptions",
    "OpfSolution",
    "OpfSolverFactory",
    "OracleResult",
    "PeriodContext",
    "PeriodFailure",
    "Sensitivities",
    "SocBoundary",
    "SplicedTrajectories",
    "StorageOpfSolver",
    "linearize",
    "solutions_to_frame",
    "solve_period",
    "solve_periods",
    "splice_controls",
    "uniform_curtailment_oracle",
]
