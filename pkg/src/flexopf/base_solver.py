"""Curtailment-minimizing multi-period OPF by sequential linear programming.

Each outer iteration linearizes the network constraints of every step in the
period around the exact load-flow point, solves one LP over the whole period
inside a trust region, then re-solves the exact load flow at the candidate.
Constraint violations enter the LP through penalized slacks (an l1 merit), so
the LP is always feasible and infeasible periods show up as residual slack.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Mapping, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import linprog

from src.dispatch import DispatchSolution
from src.errors import ConvergenceError, InfeasiblePeriodError, OpfStagnationError, SingularJacobianError
from src.grid import AdmittanceModel, OperatingLimits
from src.powerflow import (
    InterventionPeriod,
    NetworkStateSeries,
    PowerFlowOptions,
    InjectionFrame,
    solve_loadflow,
    worst_margin,
)
from .sensitivity import linearize

logger = logging.getLogger(__name__)

TIE_WEIGHT = 1e-6


class OpfMode(Enum):
    WITH_STORAGE = "with_storage"
    NO_STORAGE = "no_storage"


class OpfOptions(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    tol: float = Field(1e-4, gt=0, description="control change at convergence, pu")
    max_outer_iter: int = Field(50, ge=1)
    trust_region: float = Field(0.05, gt=0, description="step bound, pu")
    penalty: float = Field(1e5, gt=0, description="merit weight per unit of normalized violation")
    feas_tol: float = Field(1e-6, gt=0)
    backoff: float = Field(1e-7, ge=0)
    voltage_margin: float = Field(0.02, ge=0, description="pu distance that makes a voltage limit active")
    thermal_margin: float = Field(0.2, ge=0, description="fraction of a thermal limit that makes it active")
    workers: int = Field(1, ge=1)


@dataclass(frozen=True)
class SocBoundary:
    """Stored energy at the first step of a period and after its last step."""
    prosumers: Tuple[str, ...]
    start_kwh: np.ndarray
    end_kwh: np.ndarray


@dataclass(frozen=True)
class FlexControls:
    """Per-prosumer (rows) and per-step (columns) controls of one period."""
    prosumers: Tuple[str, ...]
    start: int
    curtailment_kw: np.ndarray
    p_bat_kw: np.ndarray
    q_kvar: np.ndarray


@dataclass(frozen=True)
class PeriodContext:
    """Stage-1 data restricted to one period, prosumers in network order."""
    admittance: AdmittanceModel
    limits: OperatingLimits
    prosumers: Tuple[str, ...]
    start: int
    pv_kw: np.ndarray
    load_kw: np.ndarray
    p_bat_kw: np.ndarray
    soc_kwh: np.ndarray
    power_limit_kw: np.ndarray
    soc_min_kwh: np.ndarray
    soc_max_kwh: np.ndarray
    q_max_kvar: np.ndarray
    dt_hours: float

    @property
    def n_steps(self) -> int:
        return self.pv_kw.shape[1]

    @property
    def n_prosumers(self) -> int:
        return len(self.prosumers)

    @property
    def boundary(self) -> SocBoundary:
        return SocBoundary(self.prosumers, self.soc_kwh[:, 0].copy(), self.soc_kwh[:, -1].copy())

    @classmethod
    def from_stage1(
        cls,
        period: InterventionPeriod,
        stage1: Mapping[str, DispatchSolution],
        admittance: AdmittanceModel,
        limits: OperatingLimits,
        pv_capacity_kw: Mapping[str, float],
        q_ratio: float = 0.4,
    ) -> "PeriodContext":
        prosumers = admittance.prosumer_ids
        window = slice(period.start, period.end + 1)
        rows = [stage1[bus] for bus in prosumers]
        horizon = rows[0].horizon_steps
        soc_index = np.arange(period.start, period.end + 2) % horizon
        return cls(
            admittance=admittance,
            limits=limits,
            prosumers=prosumers,
            start=period.start,
            pv_kw=np.array([s.pv_kw[window] for s in rows]),
            load_kw=np.array([s.load_kw[window] for s in rows]),
            p_bat_kw=np.array([s.p_bat_kw[window] for s in rows]),
            soc_kwh=np.array([s.soc_kwh[soc_index] for s in rows]),
            power_limit_kw=np.array([s.power_limit_kw for s in rows]),
            soc_min_kwh=np.array([s.soc_min_kwh for s in rows]),
            soc_max_kwh=np.array([s.soc_max_kwh for s in rows]),
            q_max_kvar=np.array([q_ratio * pv_capacity_kw.get(bus, 0.0) for bus in prosumers]),
            dt_hours=rows[0].dt_hours,
        )


@dataclass(frozen=True)
class OpfSolution:
    period: InterventionPeriod
    mode: OpfMode
    controls: FlexControls
    soc_kwh: np.ndarray
    states: NetworkStateSeries
    pv_kw: np.ndarray
    load_kw: np.ndarray
    dt_hours: float
    curtailed_kwh: float
    worst_slack: float
    iterations: int

    @property
    def certified(self) -> bool:
        return self.worst_slack >= -1e-6

    @property
    def p_grid_kw(self) -> np.ndarray:
        c = self.controls
        return self.pv_kw - c.curtailment_kw + c.p_bat_kw - self.load_kw


@dataclass
class _Point:
    """Control vector with the exact network response at it."""
    cur: np.ndarray
    qp: np.ndarray
    qn: np.ndarray
    bat: np.ndarray
    vm: np.ndarray = None
    i_ka: np.ndarray = None
    s_tr: np.ndarray = None
    voltages: List[np.ndarray] = field(default_factory=list)

    @property
    def q(self) -> np.ndarray:
        return self.qp - self.qn

    def flat(self) -> np.ndarray:
        return np.concatenate([self.cur.ravel(), self.qp.ravel(), self.qn.ravel(), self.bat])


class BasePeriodSolver(ABC):
    """Abstract SLP solver for one intervention period.

    Subclasses decide how the battery enters the problem through the
    ``_battery_*`` hooks.
    """

    def __init__(
        self,
        period: InterventionPeriod,
        context: PeriodContext,
        options: Optional[OpfOptions] = None,
        pf_options: Optional[PowerFlowOptions] = None,
        progress_callback: Optional[Callable] = None,
    ):
        """Initialize the solver.

        Args:
            period: The intervention period to clear
            context: Stage-1 data of the period
            options: SLP tolerances, trust region and penalty
            pf_options: Options of the exact load flow used between LPs
            progress_callback: Optional callback(stage, message)
        """
        self.period = period
        self.context = context
        self.options = options or OpfOptions()
        self.pf_options = pf_options or PowerFlowOptions()
        self.progress_callback = progress_callback

        adm = context.admittance
        self._positions = np.array([adm.bus_position(b) for b in context.prosumers], dtype=int)
        limits = context.limits
        self._lines = np.array([k for k, b in enumerate(adm.branch_ids) if b in limits.ampacity_ka], dtype=int)
        self._ampacity = np.array([limits.ampacity_ka[adm.branch_ids[k]] for k in self._lines])
        self._trafos = np.array(
            [k for k, b in enumerate(adm.transformer_ids) if b in limits.rating_mva], dtype=int
        )
        self._rating = np.array([limits.rating_mva[adm.transformer_ids[k]] for k in self._trafos])
        self._pq = np.zeros(adm.n_bus, dtype=bool)
        self._pq[adm.non_slack] = True
        self._kw_per_pu = 1000.0 * adm.s_base_mva

    @property
    @abstractmethod
    def strategy_name(self) -> str:
        """Return the mode name this strategy implements."""

    @property
    @abstractmethod
    def mode(self) -> OpfMode:
        pass

    # Battery hooks -------------------------------------------------------

    @abstractmethod
    def _battery_base_kw(self) -> np.ndarray:
        """Battery power (m x n) included in the injections before any redispatch."""

    def _battery_size(self) -> int:
        return 0

    def _battery_injection(self) -> sp.csr_matrix:
        """Map battery variables to injection changes, rows ordered prosumer-major."""
        return sp.csr_matrix((self.context.n_prosumers * self.context.n_steps, 0))

    def _battery_constraints(self):
        """Return ``(a_ub, b_ub, a_eq, b_eq)`` over the battery variables only."""
        return None, None, None, None

    def _battery_power(self, bat: np.ndarray) -> np.ndarray:
        return self._battery_base_kw()

    def _battery_soc(self, bat: np.ndarray) -> np.ndarray:
        ctx = self.context
        return np.repeat(ctx.soc_kwh[:, :1], ctx.n_steps + 1, axis=1)

    # ---------------------------------------------------------------------

    def _report(self, stage: str, message: str):
        """Report progress via callback if one is registered."""
        logger.info("[%s] %s", stage.upper(), message)
        if self.progress_callback:
            self.progress_callback(stage, message)

    def _injections(self, point: _Point) -> Tuple[np.ndarray, np.ndarray]:
        ctx = self.context
        bat = (self._battery_injection() @ point.bat).reshape(ctx.n_prosumers, ctx.n_steps)
        p = ctx.pv_kw - point.cur + self._battery_base_kw() + bat - ctx.load_kw
        return p, point.q

    def _evaluate(self, point: _Point, warm: Optional[List[np.ndarray]] = None, flat: bool = False) -> _Point:
        """Solve the exact load flow at every step of ``point``."""
        adm = self.context.admittance
        p_kw, q_kvar = self._injections(point)
        n = self.context.n_steps
        point.vm = np.empty((n, adm.n_bus))
        point.i_ka = np.empty((n, adm.n_branch))
        point.s_tr = np.empty((n, len(adm.transformer_positions)))
        point.voltages = []
        v_prev = None
        for k in range(n):
            p = np.zeros(adm.n_bus)
            q = np.zeros(adm.n_bus)
            p[self._positions] = p_kw[:, k] / self._kw_per_pu
            q[self._positions] = q_kvar[:, k] / self._kw_per_pu
            if flat:
                v0 = None
            elif warm is not None:
                v0 = warm[k]
            else:
                v0 = v_prev
            state = solve_loadflow(adm, InjectionFrame(p, q), self.pf_options, v0=v0)
            point.vm[k], point.i_ka[k], point.s_tr[k] = state.vm, state.i_ka, state.s_tr_mva
            v_prev = state.voltage
            point.voltages.append(v_prev)
        return point

    def _excess(self, point: _Point) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Normalized distance beyond each limit (negative inside), per kind."""
        lim = self.context.limits
        over = np.where(self._pq, point.vm - lim.v_max, -np.inf)
        under = np.where(self._pq, lim.v_min - point.vm, -np.inf)
        amp = point.i_ka[:, self._lines] / self._ampacity - 1.0 if self._lines.size else np.empty((point.vm.shape[0], 0))
        tr = point.s_tr[:, self._trafos] / self._rating - 1.0 if self._trafos.size else np.empty((point.vm.shape[0], 0))
        return over, under, amp, tr

    def _violation(self, point: _Point) -> Tuple[float, float]:
        """Sum and max of positive excess."""
        parts = [np.clip(e, 0.0, None) for e in self._excess(point)]
        total = float(sum(p.sum() for p in parts))
        worst = float(max((p.max() for p in parts if p.size), default=0.0))
        return total, worst

    def _worst_element(self, point: _Point) -> Tuple[str, float]:
        adm = self.context.admittance
        names = (
            [f"bus {b} (overvoltage)" for b in adm.bus_ids],
            [f"bus {b} (undervoltage)" for b in adm.bus_ids],
            [f"line {adm.branch_ids[k]}" for k in self._lines],
            [f"transformer {adm.transformer_ids[k]}" for k in self._trafos],
        )
        best = ("", -np.inf)
        for excess, labels in zip(self._excess(point), names):
            if excess.size == 0:
                continue
            k, e = np.unravel_index(np.argmax(excess), excess.shape)
            if excess[k, e] > best[1]:
                best = (f"{labels[e]} at step {self.context.start + k}", float(excess[k, e]))
        return best

    def _objective(self, point: _Point) -> float:
        return float(
            self.context.dt_hours * point.cur.sum()
            + TIE_WEIGHT * (point.qp.sum() + point.qn.sum() + point.bat.sum())
        )

    def _active(self, point: _Point):
        opts = self.options
        over, under, amp, tr = self._excess(point)
        return (
            over >= -opts.voltage_margin,
            under >= -opts.voltage_margin,
            amp >= -opts.thermal_margin,
            tr >= -opts.thermal_margin,
        )

    def _network_rows(self, point: _Point, watch) -> Tuple[sp.csr_matrix, sp.csr_matrix, np.ndarray]:
        """Linearized constraint rows as gradients w.r.t. P and Q plus h0.

        Row r reads  h0[r] + gP[r] . dP + gQ[r] . dQ <= 0  with dP, dQ laid out
        prosumer-major over the period steps.
        """
        ctx = self.context
        m, n = ctx.n_prosumers, ctx.n_steps
        over_w, under_w, amp_w, tr_w = watch
        over, under, amp, tr = self._excess(point)
        rows_p, rows_q, h0 = [], [], []
        lim = ctx.limits

        for k in range(n):
            kinds = (
                (np.flatnonzero(over_w[k]), over[k], 1.0),
                (np.flatnonzero(under_w[k]), under[k], -1.0),
                (np.flatnonzero(amp_w[k]) if amp_w.size else np.empty(0, dtype=int), amp[k] if amp.size else None, 1.0),
                (np.flatnonzero(tr_w[k]) if tr_w.size else np.empty(0, dtype=int), tr[k] if tr.size else None, 1.0),
            )
            if not any(idx.size for idx, _, _ in kinds):
                continue
            sens = linearize(ctx.admittance, point.voltages[k], self._positions)
            grads = (
                (sens.dvm_dp, sens.dvm_dq, 1.0),
                (sens.dvm_dp, sens.dvm_dq, 1.0),
                (sens.di_dp[self._lines], sens.di_dq[self._lines], self._ampacity[:, None] if self._lines.size else 1.0),
                (sens.ds_dp[self._trafos], sens.ds_dq[self._trafos], self._rating[:, None] if self._trafos.size else 1.0),
            )
            for (idx, h, sign), (g_p, g_q, norm) in zip(kinds, grads):
                if idx.size == 0:
                    continue
                scaled_p = sign * (g_p / norm)[idx]
                scaled_q = sign * (g_q / norm)[idx]
                rows_p.append((k, scaled_p))
                rows_q.append((k, scaled_q))
                h0.extend(h[idx])

        n_rows = len(h0)
        cols = np.arange(m) * n
        data_p, data_q, ri, ci = [], [], [], []
        r = 0
        for (k, gp), (_, gq) in zip(rows_p, rows_q):
            for row_p, row_q in zip(gp, gq):
                ri.append(np.full(m, r))
                ci.append(cols + k)
                data_p.append(row_p)
                data_q.append(row_q)
                r += 1
        if n_rows:
            ri, ci = np.concatenate(ri), np.concatenate(ci)
            g_p = sp.csr_matrix((np.concatenate(data_p), (ri, ci)), shape=(n_rows, m * n))
            g_q = sp.csr_matrix((np.concatenate(data_q), (ri, ci)), shape=(n_rows, m * n))
        else:
            g_p = sp.csr_matrix((0, m * n))
            g_q = sp.csr_matrix((0, m * n))
        return g_p, g_q, np.asarray(h0, dtype=float)

    def _solve_lp(self, point: _Point, watch, radius: float):
        """One trust-region LP; returns (candidate point, max LP slack) or None."""
        ctx = self.context
        opts = self.options
        m, n = ctx.n_prosumers, ctx.n_steps
        mn = m * n
        n_bat = self._battery_size()
        b_mat = self._battery_injection()

        g_p, g_q, h0 = self._network_rows(point, watch)
        n_rows = len(h0)
        n_var = 3 * mn + n_bat + n_rows

        x0_bat_p = b_mat @ point.bat if n_bat else np.zeros(mn)
        shift = -point.cur.ravel() + x0_bat_p
        rhs = -opts.backoff - h0 + g_p @ shift + g_q @ point.q.ravel()
        blocks = [-g_p, g_q, -g_q]
        if n_bat:
            blocks.append(g_p @ b_mat)
        blocks.append(-sp.identity(n_rows, format="csr"))
        a_ub = [sp.hstack(blocks, format="csr")] if n_rows else []
        b_ub = [rhs] if n_rows else []

        bat_ub, bat_bub, bat_eq, bat_beq = self._battery_constraints()
        pad = lambda a: sp.hstack([sp.csr_matrix((a.shape[0], 3 * mn)), a, sp.csr_matrix((a.shape[0], n_rows))])
        a_eq, b_eq = None, None
        if bat_ub is not None:
            a_ub.append(pad(bat_ub))
            b_ub.append(bat_bub)
        if bat_eq is not None:
            a_eq, b_eq = pad(bat_eq).tocsr(), bat_beq

        cost = np.concatenate([
            np.full(mn, ctx.dt_hours),
            np.full(2 * mn, TIE_WEIGHT),
            np.full(n_bat, TIE_WEIGHT),
            np.full(n_rows, opts.penalty),
        ])
        cur0, qp0, qn0 = point.cur.ravel(), point.qp.ravel(), point.qn.ravel()
        pv = ctx.pv_kw.ravel()
        q_max = np.repeat(ctx.q_max_kvar, n)
        lower = np.concatenate([
            np.maximum(0.0, cur0 - radius),
            np.maximum(0.0, qp0 - radius),
            np.maximum(0.0, qn0 - radius),
            np.maximum(0.0, point.bat - radius),
            np.zeros(n_rows),
        ])
        upper = np.concatenate([
            np.minimum(pv, cur0 + radius),
            np.minimum(q_max, qp0 + radius),
            np.minimum(q_max, qn0 + radius),
            point.bat + radius,
            np.full(n_rows, np.inf),
        ])
        upper = np.maximum(upper, lower)

        result = linprog(
            cost,
            A_ub=sp.vstack(a_ub, format="csr") if a_ub else None,
            b_ub=np.concatenate(b_ub) if b_ub else None,
            A_eq=a_eq,
            b_eq=b_eq,
            bounds=np.column_stack([lower, upper]),
            method="highs",
        )
        if result.status != 0:
            logger.debug("Period %d LP status %d: %s", self.period.index, result.status, result.message)
            return None

        x = result.x
        candidate = _Point(
            cur=np.clip(x[:mn], 0.0, pv).reshape(m, n),
            qp=np.clip(x[mn:2 * mn], 0.0, None).reshape(m, n),
            qn=np.clip(x[2 * mn:3 * mn], 0.0, None).reshape(m, n),
            bat=np.clip(x[3 * mn:3 * mn + n_bat], 0.0, None),
        )
        slack = float(x[3 * mn + n_bat:].max()) if n_rows else 0.0
        return candidate, slack

    def _finish(self, point: _Point, iterations: int) -> OpfSolution:
        """Certify ``point`` with flat-start load flows and package the result."""
        ctx = self.context
        adm = ctx.admittance
        certified = self._evaluate(
            _Point(point.cur, point.qp, point.qn, point.bat), flat=True
        )
        slack = worst_margin(
            certified.vm[:, self._pq], certified.i_ka, certified.s_tr,
            adm.branch_ids, adm.transformer_ids, ctx.limits,
        )
        states = NetworkStateSeries(
            bus_ids=adm.bus_ids,
            branch_ids=adm.branch_ids,
            transformer_ids=adm.transformer_ids,
            vm=certified.vm,
            va=np.angle(np.array(certified.voltages)),
            i_ka=certified.i_ka,
            s_tr_mva=certified.s_tr,
            p_slack_pu=np.full(ctx.n_steps, np.nan),
            losses_pu=np.full(ctx.n_steps, np.nan),
        )
        controls = FlexControls(
            prosumers=ctx.prosumers,
            start=ctx.start,
            curtailment_kw=point.cur,
            p_bat_kw=self._battery_power(point.bat),
            q_kvar=point.q,
        )
        curtailed = float(point.cur.sum() * ctx.dt_hours)
        return OpfSolution(
            period=self.period,
            mode=self.mode,
            controls=controls,
            soc_kwh=self._battery_soc(point.bat),
            states=states,
            pv_kw=ctx.pv_kw,
            load_kw=ctx.load_kw,
            dt_hours=ctx.dt_hours,
            curtailed_kwh=curtailed,
            worst_slack=slack,
            iterations=iterations,
        )

    def solve(self) -> OpfSolution:
        """Run the SLP until the controls settle on a feasible point.

        Returns:
            Certified OpfSolution for the period

        Raises:
            InfeasiblePeriodError: The LP keeps a violation slack with no room to move
            OpfStagnationError: Outer iterations ran out or the trust region collapsed
        """
        ctx = self.context
        opts = self.options
        m, n = ctx.n_prosumers, ctx.n_steps
        zeros = np.zeros((m, n))
        point = self._evaluate(_Point(zeros.copy(), zeros.copy(), zeros.copy(), np.zeros(self._battery_size())))
        total, worst = self._violation(point)
        self._report("opf", f"Period {self.period.index} [{self.period.start}..{self.period.end}] "
                            f"{self.strategy_name}: initial worst excess {worst:.3e}")
        if worst <= opts.feas_tol:
            return self._finish(point, 0)

        max_radius = opts.trust_region * self._kw_per_pu
        min_radius = 0.1 * opts.tol * self._kw_per_pu
        radius = max_radius
        merit = self._objective(point) + opts.penalty * total
        watch = self._active(point)
        incumbent: Optional[_Point] = None

        for iteration in range(1, opts.max_outer_iter + 1):
            watch = tuple(w | a for w, a in zip(watch, self._active(point)))
            solved = self._solve_lp(point, watch, radius)
            if solved is None:
                radius *= 0.5
                if radius < min_radius:
                    break
                continue
            candidate, lp_slack = solved
            step = float(np.max(np.abs(candidate.flat() - point.flat()), initial=0.0)) / self._kw_per_pu

            try:
                self._evaluate(candidate, warm=point.voltages)
            except (ConvergenceError, SingularJacobianError) as e:
                logger.debug("Period %d: candidate load flow failed (%s); shrinking", self.period.index, e)
                radius *= 0.5
                if radius < min_radius:
                    break
                continue

            cand_total, cand_worst = self._violation(candidate)
            cand_merit = self._objective(candidate) + opts.penalty * cand_total
            watch = tuple(w | (e > 0) for w, e in zip(watch, self._excess(candidate)))
            logger.debug(
                "Period %d iter %d: step %.2e pu, merit %.6g -> %.6g, worst %.2e, lp slack %.2e, radius %.1f kW",
                self.period.index, iteration, step, merit, cand_merit, cand_worst, lp_slack, radius,
            )

            if step < opts.tol:
                if cand_worst <= opts.feas_tol:
                    self._report("opf", f"Period {self.period.index} converged in {iteration} iterations")
                    return self._finish(candidate, iteration)
                if lp_slack > opts.feas_tol and radius >= opts.tol * self._kw_per_pu:
                    element, excess = self._worst_element(candidate)
                    raise InfeasiblePeriodError(self.period.index, element, excess)

            if cand_merit <= merit + 1e-9 * max(1.0, abs(merit)):
                point, merit = candidate, cand_merit
                if cand_worst <= opts.feas_tol and (
                    incumbent is None or self._objective(point) < self._objective(incumbent)
                ):
                    incumbent = point
                if step >= 0.9 * radius / self._kw_per_pu:
                    radius = min(2.0 * radius, max_radius)
            else:
                radius *= 0.5
                if radius < min_radius:
                    break

        fallback = self._finish(incumbent, opts.max_outer_iter) if incumbent is not None else None
        raise OpfStagnationError(self.period.index, opts.max_outer_iter, incumbent=fallback)
