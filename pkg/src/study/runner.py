"""Scenario loop: dispatch, load flow, reinforcement, periods, OPF, flexibility."""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from src.config import StudyConfig
from src.dispatch import DispatchSolution, PriceSeries, dispatch_prosumers
from src.economics import (
    CostReport,
    ReinforcementCost,
    ReinforcementCostInputs,
    break_even,
    flexibility_capacities,
    flexibility_cost,
    reinforcement_cost,
    sensitivity_sweep,
)
from src.errors import GridFlexError
from src.flexopf import OpfMode, OpfSolution, PeriodFailure, SplicedTrajectories, solve_periods, splice_controls
from src.grid import AdmittanceModel, Network, OperatingLimits, build_admittance, load_cigre_lv, load_network
from src.powerflow import (
    InterventionPeriod,
    NetworkStateSeries,
    ViolationRecord,
    audit,
    audit_arrays,
    extract_periods,
    injection_matrix,
    solve_series,
)
from src.profiles import (
    PvScenario,
    TimeSeriesSet,
    build_scenario,
    load_profiles,
    load_prosumer_table,
    round_half_away,
    select_weeks,
    synthesize_profiles,
)

logger = logging.getLogger(__name__)

CERTIFICATE_TOL = 1e-6


@dataclass(frozen=True)
class StudyContext:
    """Inputs shared by every scenario of a study."""
    network: Network
    admittance: AdmittanceModel
    limits: OperatingLimits
    prosumer_table: pd.DataFrame
    year_profiles: TimeSeriesSet
    profiles: TimeSeriesSet
    prices: PriceSeries


def load_context(config: StudyConfig) -> StudyContext:
    """Read or synthesize every shared input named by ``config``."""
    paths = config.paths
    network = load_network(paths.network) if paths.network else load_cigre_lv()
    limits = OperatingLimits.from_network(network, config.network.v_min, config.network.v_max)
    admittance = build_admittance(network, config.network.trafo_r_pct, config.network.trafo_x_pct)
    table = load_prosumer_table(paths.prosumers)

    opts = config.profiles
    if paths.profiles:
        year = load_profiles(
            paths.profiles, network, paths.pv_yield,
            pv_seed=opts.seed, capacity_factor=opts.capacity_factor,
        )
    else:
        year = synthesize_profiles(
            opts.seed, table["annual_demand_mwh"].to_dict(), network,
            year=opts.year, step_seconds=opts.step_seconds, capacity_factor=opts.capacity_factor,
        )
    profiles = select_weeks(year, opts.weeks)
    prices = PriceSeries.from_tariff(config.tariff, profiles.index)
    return StudyContext(network, admittance, limits, table, year, profiles, prices)


def scenario_label(scale: float) -> str:
    return f"s{round_half_away(scale * 100):03d}"


@dataclass(frozen=True)
class ScenarioFailure:
    """A problem met while running one scenario; ``fatal`` stopped its mode."""
    scenario: str
    mode: str
    stage: str
    message: str
    fatal: bool = False


@dataclass
class ModeResult:
    """Everything one scenario produced under one flexibility mode."""
    mode: OpfMode
    stage1: Dict[str, DispatchSolution]
    series: NetworkStateSeries
    violations: List[ViolationRecord]
    periods: List[InterventionPeriod]
    reinforcement: ReinforcementCost
    solutions: List[OpfSolution]
    period_failures: List[PeriodFailure]
    spliced: SplicedTrajectories
    residual_violations: List[ViolationRecord]
    report: CostReport


@dataclass
class ScenarioResult:
    label: str
    scale: float
    scenario: Optional[PvScenario] = None
    modes: Dict[str, ModeResult] = field(default_factory=dict)
    failures: List[ScenarioFailure] = field(default_factory=list)

    @property
    def status(self) -> str:
        if any(f.fatal for f in self.failures):
            return "failed" if not self.modes else "partial"
        return "partial" if self.failures else "success"


@dataclass
class StudyRun:
    config: StudyConfig
    dt_hours: float
    year_fraction: float
    scenarios: List[ScenarioResult] = field(default_factory=list)
    reports: List[CostReport] = field(default_factory=list)

    @property
    def failures(self) -> List[ScenarioFailure]:
        return [f for s in self.scenarios for f in s.failures]

    @property
    def partial(self) -> bool:
        return bool(self.failures)

    def swept_reports(self) -> List[CostReport]:
        """One report per (scenario, mode, transformer cost)."""
        return swept(self.reports, self.config.grid)

    def break_even(self) -> pd.DataFrame:
        return break_even(self.swept_reports())


def swept(reports: List[CostReport], grid: ReinforcementCostInputs) -> List[CostReport]:
    """Reprice ``reports`` at every configured transformer cost, base value included."""
    values = sorted(set(grid.c_trafo_sweep) | {grid.c_trafo})
    if len(values) < 2 or not reports:
        return list(reports)
    return sensitivity_sweep(reports, values, grid)


def pv_series(scenario: PvScenario, profiles: TimeSeriesSet) -> Dict[str, np.ndarray]:
    return {bus: scenario.capacity_of(bus) * profiles.yield_of(bus) for bus in profiles.prosumers}


def cost_report(
    scenario: PvScenario,
    mode: OpfMode,
    stage1: Dict[str, DispatchSolution],
    reinforcement: ReinforcementCost,
    spliced: SplicedTrajectories,
    context: StudyContext,
) -> CostReport:
    """Annual economics of one scenario and mode; energies in MWh per year."""
    profiles = context.profiles
    per_year = profiles.year_fraction * 1000.0
    pv_kw = pv_series(scenario, profiles)
    generation = sum(pv.sum() for pv in pv_kw.values()) * profiles.dt_hours / per_year
    return CostReport(
        scenario=scenario.label,
        scale=scenario.scale,
        penetration_pct=float(scenario.penetration),
        mode=mode.value,
        reinforcement=reinforcement,
        delta_opex_chf_yr=flexibility_cost(stage1, spliced, context.prices),
        curtailed_mwh=spliced.curtailed_kwh / per_year,
        pv_generation_mwh=float(generation),
        flex_capacities_kw=flexibility_capacities(stage1, scenario.capacities_kw),
    )


def certify_spliced(
    context: StudyContext,
    spliced: SplicedTrajectories,
    periods: List[InterventionPeriod],
    config: StudyConfig,
) -> List[ViolationRecord]:
    """Re-solve the load flow on spliced injections inside the periods and re-audit."""
    steps = np.array([t for p in periods for t in p.steps], dtype=int)
    if steps.size == 0:
        return []
    p_pu, q_pu = injection_matrix(context.admittance, spliced.p_grid_kw, spliced.q_kvar)
    series = solve_series(context.admittance, p_pu[steps], q_pu[steps], config.pf.model_copy(update={"warm_start": False}))
    records = audit_arrays(
        series.vm, series.i_ka, series.s_tr_mva,
        series.bus_ids, series.branch_ids, series.transformer_ids,
        context.limits, tolerance=CERTIFICATE_TOL,
    )
    return [
        ViolationRecord(int(steps[r.t]), r.kind, r.element, r.value, r.limit)
        for r in records
    ]


class StudyRunner:
    """Runs every stage of one scenario for each requested mode."""

    def __init__(self, config: StudyConfig, context: StudyContext, progress_callback: Optional[Callable] = None):
        self.config = config
        self.context = context
        self.progress_callback = progress_callback
        self._scenario: Optional[str] = None

    def _report(self, stage: str, message: str, mode: Optional[str] = None, error: Optional[str] = None):
        """Report progress via callback if one is registered; always log."""
        logger.info("[%s] %s", stage.upper(), message)
        if self.progress_callback:
            self.progress_callback(stage, message, scenario=self._scenario, mode=mode, error=error)

    def run_mode(self, scenario: PvScenario, mode: OpfMode, result: ScenarioResult) -> ModeResult:
        cfg = self.config
        ctx = self.context
        profiles = ctx.profiles
        label = scenario.label
        name = mode.value
        load_kw = {bus: profiles.load_of(bus) for bus in profiles.prosumers}
        pv_kw = pv_series(scenario, profiles)

        self._report("dispatch", f"{label}/{name}: optimizing {len(load_kw)} prosumers", name)
        stage1 = dispatch_prosumers(
            load_kw, pv_kw, ctx.prices, cfg.battery, profiles.dt_hours, profiles.year_fraction,
            storage=mode is OpfMode.WITH_STORAGE, workers=cfg.study.dispatch_workers,
            segment_starts=profiles.segment_starts,
        )

        self._report("loadflow", f"{label}/{name}: sweeping {profiles.horizon_steps} steps", name)
        p_pu, q_pu = injection_matrix(ctx.admittance, {b: s.p_grid_kw for b, s in stage1.items()})
        series = solve_series(ctx.admittance, p_pu, q_pu, cfg.pf)
        if series.failed_steps:
            result.failures.append(ScenarioFailure(
                label, name, "loadflow",
                f"load flow did not converge at steps {list(series.failed_steps)}",
            ))

        self._report("reinforcement", f"{label}/{name}: pricing reinforcement", name)
        reinforcement = reinforcement_cost(series, ctx.network, cfg.grid, ctx.limits)

        violations = audit(series, ctx.limits, cfg.audit.tolerance)
        periods = extract_periods(
            violations, series.horizon_steps, cfg.audit.padding, profiles.segment_starts,
        )
        self._report("periods", f"{label}/{name}: {len(violations)} violations in {len(periods)} periods", name)

        self._report("opf", f"{label}/{name}: clearing {len(periods)} periods", name)
        solutions, period_failures = solve_periods(
            periods, stage1, ctx.admittance, ctx.limits, scenario, mode,
            cfg.opf, cfg.pf, cfg.pv.q_ratio,
        )
        for failure in period_failures:
            result.failures.append(ScenarioFailure(label, name, "opf", failure.reason))

        spliced = splice_controls(stage1, solutions)
        residual = certify_spliced(ctx, spliced, [s.period for s in solutions], cfg)
        if residual:
            result.failures.append(ScenarioFailure(
                label, name, "opf",
                f"{len(residual)} violations remain after splicing (first at step {residual[0].t})",
            ))

        self._report("flexibility", f"{label}/{name}: pricing flexibility", name)
        report = cost_report(scenario, mode, stage1, reinforcement, spliced, ctx)
        return ModeResult(
            mode=mode,
            stage1=stage1,
            series=series,
            violations=violations,
            periods=periods,
            reinforcement=reinforcement,
            solutions=solutions,
            period_failures=period_failures,
            spliced=spliced,
            residual_violations=residual,
            report=report,
        )

    def run_scenario(self, scale: float) -> ScenarioResult:
        """Run one scale of the ladder; errors are recorded, never raised."""
        label = scenario_label(scale)
        self._scenario = label
        result = ScenarioResult(label=label, scale=scale)
        ctx = self.context
        try:
            result.scenario = build_scenario(
                scale, ctx.network, ctx.prosumer_table, ctx.year_profiles,
                self.config.pv.module_kw, self.config.lcoe,
            )
        except (GridFlexError, ValueError) as e:
            result.failures.append(ScenarioFailure(label, "", "scenario", str(e), fatal=True))
            self._report("failed", f"{label}: scenario could not be built: {e}", error=str(e))
            return result

        self._report("scenario", f"{label}: penetration {result.scenario.penetration:.1f}%")
        for mode in self.config.study.modes:
            try:
                result.modes[mode.value] = self.run_mode(result.scenario, mode, result)
            except GridFlexError as e:
                logger.warning("Scenario %s (%s) failed: %s", label, mode.value, e)
                result.failures.append(ScenarioFailure(label, mode.value, "mode", str(e), fatal=True))
                self._report("failed", f"{label}/{mode.value}: {e}", mode.value, str(e))
        self._report("completed", f"{label}: {result.status}")
        return result


def _run_scale(config: StudyConfig, scale: float) -> ScenarioResult:
    """Worker entry point; each process rebuilds the shared context."""
    return StudyRunner(config, load_context(config)).run_scenario(scale)


def run_study(config: StudyConfig, progress_callback: Optional[Callable] = None) -> StudyRun:
    """Run every scenario of the ladder under every requested mode.

    Scenarios run in ``study.workers`` processes when more than one worker is
    configured; results are collected in ladder order either way.
    """
    context = load_context(config)
    run = StudyRun(
        config=config,
        dt_hours=context.profiles.dt_hours,
        year_fraction=context.profiles.year_fraction,
    )
    scales = list(config.pv.scales)
    logger.info("Study: %d scenarios, modes %s", len(scales), [m.value for m in config.study.modes])

    if config.study.workers > 1 and len(scales) > 1:
        with ProcessPoolExecutor(max_workers=config.study.workers) as pool:
            results = list(pool.map(_run_scale, [config] * len(scales), scales))
        if progress_callback:
            for r in results:
                progress_callback("completed", f"{r.label}: {r.status}", scenario=r.label)
    else:
        runner = StudyRunner(config, context, progress_callback)
        results = [runner.run_scenario(scale) for scale in scales]

    run.scenarios = results
    run.reports = [m.report for r in results for m in r.modes.values()]
    logger.info("Study finished: %d scenarios, %d failure records", len(results), len(run.failures))
    return run
