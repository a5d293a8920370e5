"""Polar Newton-Raphson load flow and year-long sweeps.

The slack bus holds V = 1 pu, angle 0; every other bus is PQ. The Jacobian
is assembled from the complex derivatives dS/dVa and dS/dVm of the bus power
injections, restricted to the PQ rows and columns.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field
from scipy.sparse.linalg import splu

from src.errors import ConvergenceError, SingularJacobianError
from src.grid import AdmittanceModel

logger = logging.getLogger(__name__)


class PowerFlowOptions(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    tol: float = Field(1e-8, gt=0, description="max power mismatch, pu")
    max_iter: int = Field(50, ge=1)
    warm_start: bool = True
    workers: int = Field(1, ge=1)


@dataclass(frozen=True)
class InjectionFrame:
    """Net bus injections in pu; positive P is generation."""
    p_pu: np.ndarray
    q_pu: np.ndarray

    @classmethod
    def zeros(cls, admittance: AdmittanceModel) -> "InjectionFrame":
        return cls(np.zeros(admittance.n_bus), np.zeros(admittance.n_bus))

    @classmethod
    def from_prosumer_kw(
        cls,
        admittance: AdmittanceModel,
        p_kw: Mapping[str, float],
        q_kvar: Optional[Mapping[str, float]] = None,
    ) -> "InjectionFrame":
        """Build an injection frame from per-prosumer kW/kVAr values.

        Raises:
            ValueError: If a key is not a prosumer bus of the network
        """
        p = np.zeros(admittance.n_bus)
        q = np.zeros(admittance.n_bus)
        prosumers = set(admittance.prosumer_ids)
        scale = 1000.0 * admittance.s_base_mva
        for values, target in ((p_kw, p), (q_kvar or {}, q)):
            for bus, value in values.items():
                if bus not in prosumers:
                    raise ValueError(f"bus '{bus}' is not a prosumer; it cannot inject power")
                target[admittance.bus_position(bus)] = value / scale
        return cls(p, q)


@dataclass(frozen=True)
class NetworkState:
    """Solved operating point of one time step."""
    vm: np.ndarray
    va: np.ndarray
    i_ka: np.ndarray
    s_tr_mva: np.ndarray
    p_slack_pu: float
    q_slack_pu: float
    losses_pu: float
    iterations: int = 0

    @property
    def voltage(self) -> np.ndarray:
        return self.vm * np.exp(1j * self.va)


def dsbus_dv(ybus: sp.csr_matrix, v: np.ndarray) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """Partial derivatives of complex bus injections w.r.t. angle and magnitude."""
    n = len(v)
    ibus = ybus @ v
    diag_v = sp.diags(v, format="csr")
    diag_i = sp.diags(ibus, format="csr")
    diag_vnorm = sp.diags(v / np.abs(v), format="csr")
    ds_dva = 1j * diag_v @ (diag_i - ybus @ diag_v).conj()
    ds_dvm = diag_v @ (ybus @ diag_vnorm).conj() + diag_i.conj() @ diag_vnorm
    return ds_dva.tocsr(), ds_dvm.tocsr()


def jacobian(admittance: AdmittanceModel, v: np.ndarray) -> sp.csc_matrix:
    """Real Jacobian [[dP/dVa, dP/dVm], [dQ/dVa, dQ/dVm]] over PQ buses."""
    pq = admittance.non_slack
    ds_dva, ds_dvm = dsbus_dv(admittance.ybus, v)
    a = ds_dva[pq][:, pq]
    m = ds_dvm[pq][:, pq]
    return sp.bmat([[a.real, m.real], [a.imag, m.imag]], format="csc")


def factorize(j: sp.csc_matrix):
    try:
        return splu(j)
    except RuntimeError as e:
        raise SingularJacobianError(f"Jacobian is singular: {e}") from None


def branch_flows(admittance: AdmittanceModel, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Branch current magnitudes (kA, from end) and transformer S (MVA, HV terminal)."""
    i_pu = np.abs(admittance.yf @ v)
    i_ka = i_pu * admittance.branch_base_current_ka
    tr = admittance.transformer_positions
    s_tr = np.abs(v[admittance.from_idx[tr]]) * i_pu[tr] * admittance.s_base_mva
    return i_ka, s_tr


def solve_loadflow(
    admittance: AdmittanceModel,
    injections: InjectionFrame,
    options: Optional[PowerFlowOptions] = None,
    v0: Optional[np.ndarray] = None,
) -> NetworkState:
    """Solve one operating point.

    Args:
        admittance: Network admittance model
        injections: Bus injections; the slack entries are ignored
        options: Tolerance and iteration limit
        v0: Optional complex warm start; the slack entry is reset to 1

    Returns:
        NetworkState with voltages, branch currents and transformer loading

    Raises:
        ConvergenceError: If the mismatch stays above tolerance after max_iter
        SingularJacobianError: If the Jacobian cannot be factorized
    """
    options = options or PowerFlowOptions()
    pq = admittance.non_slack
    n_pq = len(pq)
    s_sched = injections.p_pu + 1j * injections.q_pu

    if v0 is not None and np.all(np.isfinite(v0)):
        va = np.angle(v0).astype(float)
        vm = np.abs(v0).astype(float)
    else:
        va = np.zeros(admittance.n_bus)
        vm = np.ones(admittance.n_bus)
    va[admittance.slack] = 0.0
    vm[admittance.slack] = 1.0
    v = vm * np.exp(1j * va)

    iterations = 0
    while True:
        mismatch = v * np.conj(admittance.ybus @ v) - s_sched
        f = np.concatenate([mismatch.real[pq], mismatch.imag[pq]])
        worst = float(np.max(np.abs(f))) if n_pq else 0.0
        if worst < options.tol:
            break
        if iterations >= options.max_iter:
            at = int(np.argmax(np.abs(f))) % n_pq
            raise ConvergenceError(worst, admittance.bus_ids[pq[at]], iterations)

        dx = factorize(jacobian(admittance, v)).solve(f)
        if not np.all(np.isfinite(dx)):
            raise SingularJacobianError("Newton step is not finite; the Jacobian is numerically singular")
        va[pq] -= dx[:n_pq]
        vm[pq] -= dx[n_pq:]
        v = vm * np.exp(1j * va)
        iterations += 1
        logger.debug("NR iteration %d: worst mismatch %.3e", iterations, worst)

    s_bus = v * np.conj(admittance.ybus @ v)
    i_ka, s_tr = branch_flows(admittance, v)
    return NetworkState(
        vm=np.abs(v),
        va=np.angle(v),
        i_ka=i_ka,
        s_tr_mva=s_tr,
        p_slack_pu=float(s_bus[admittance.slack].real),
        q_slack_pu=float(s_bus[admittance.slack].imag),
        losses_pu=float(s_bus.real.sum()),
        iterations=iterations,
    )


@dataclass(frozen=True)
class NetworkStateSeries:
    """Stacked states of a horizon; rows of failed steps are NaN."""
    bus_ids: Tuple[str, ...]
    branch_ids: Tuple[str, ...]
    transformer_ids: Tuple[str, ...]
    vm: np.ndarray
    va: np.ndarray
    i_ka: np.ndarray
    s_tr_mva: np.ndarray
    p_slack_pu: np.ndarray
    losses_pu: np.ndarray
    failed_steps: Tuple[int, ...] = ()

    @property
    def horizon_steps(self) -> int:
        return self.vm.shape[0]

    def state_at(self, t: int) -> NetworkState:
        return NetworkState(
            vm=self.vm[t], va=self.va[t], i_ka=self.i_ka[t], s_tr_mva=self.s_tr_mva[t],
            p_slack_pu=float(self.p_slack_pu[t]), q_slack_pu=float("nan"),
            losses_pu=float(self.losses_pu[t]),
        )

    def to_frames(self) -> Dict[str, pd.DataFrame]:
        steps = pd.RangeIndex(self.horizon_steps, name="t")
        return {
            "voltages": pd.DataFrame(self.vm, index=steps, columns=list(self.bus_ids)),
            "angles": pd.DataFrame(self.va, index=steps, columns=list(self.bus_ids)),
            "currents": pd.DataFrame(self.i_ka, index=steps, columns=list(self.branch_ids)),
            "transformers": pd.DataFrame(self.s_tr_mva, index=steps, columns=list(self.transformer_ids)),
            "slack": pd.DataFrame(
                {"p_slack_pu": self.p_slack_pu, "losses_pu": self.losses_pu}, index=steps
            ),
        }

    @classmethod
    def from_frames(cls, frames: Mapping[str, pd.DataFrame]) -> "NetworkStateSeries":
        vm = frames["voltages"]
        slack = frames.get("slack")
        steps = len(vm)
        failed = tuple(int(t) for t in np.flatnonzero(vm.isna().any(axis=1).to_numpy()))
        return cls(
            bus_ids=tuple(vm.columns),
            branch_ids=tuple(frames["currents"].columns),
            transformer_ids=tuple(frames["transformers"].columns),
            vm=vm.to_numpy(dtype=float),
            va=frames["angles"].to_numpy(dtype=float) if "angles" in frames else np.zeros(vm.shape),
            i_ka=frames["currents"].to_numpy(dtype=float),
            s_tr_mva=frames["transformers"].to_numpy(dtype=float),
            p_slack_pu=slack["p_slack_pu"].to_numpy(dtype=float) if slack is not None else np.full(steps, np.nan),
            losses_pu=slack["losses_pu"].to_numpy(dtype=float) if slack is not None else np.full(steps, np.nan),
            failed_steps=failed,
        )


@dataclass
class _ChunkResult:
    start: int
    states: List[Optional[NetworkState]] = field(default_factory=list)
    failures: List[Tuple[int, str]] = field(default_factory=list)


def _solve_chunk(admittance, p_pu, q_pu, start, stop, options) -> _ChunkResult:
    result = _ChunkResult(start=start)
    v_prev = None
    for t in range(start, stop):
        try:
            state = solve_loadflow(
                admittance, InjectionFrame(p_pu[t], q_pu[t]), options,
                v0=v_prev if options.warm_start else None,
            )
        except (ConvergenceError, SingularJacobianError) as e:
            if v_prev is None:
                result.states.append(None)
                result.failures.append((t, str(e)))
                continue
            # A stale warm start can diverge; retry once from flat.
            try:
                state = solve_loadflow(admittance, InjectionFrame(p_pu[t], q_pu[t]), options)
            except (ConvergenceError, SingularJacobianError) as e2:
                result.states.append(None)
                result.failures.append((t, str(e2)))
                v_prev = None
                continue
        result.states.append(state)
        v_prev = state.voltage
    return result


def solve_series(
    admittance: AdmittanceModel,
    p_pu: np.ndarray,
    q_pu: Optional[np.ndarray] = None,
    options: Optional[PowerFlowOptions] = None,
    chunk_size: int = 2016,
) -> NetworkStateSeries:
    """Solve every row of a (steps x buses) injection matrix.

    Steps are swept in chunks with warm starts inside each chunk. Chunks run
    on ``options.workers`` threads. Steps that fail are logged, recorded in
    ``failed_steps`` and stored as NaN.
    """
    options = options or PowerFlowOptions()
    p_pu = np.atleast_2d(np.asarray(p_pu, dtype=float))
    q_pu = np.zeros_like(p_pu) if q_pu is None else np.atleast_2d(np.asarray(q_pu, dtype=float))
    steps = p_pu.shape[0]
    bounds = [(s, min(s + chunk_size, steps)) for s in range(0, steps, chunk_size)]

    run = lambda b: _solve_chunk(admittance, p_pu, q_pu, b[0], b[1], options)
    if options.workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=options.workers) as pool:
            chunks = list(pool.map(run, bounds))
    else:
        chunks = [run(b) for b in bounds]

    n_bus, n_branch = admittance.n_bus, admittance.n_branch
    n_tr = len(admittance.transformer_positions)
    vm = np.full((steps, n_bus), np.nan)
    va = np.full((steps, n_bus), np.nan)
    i_ka = np.full((steps, n_branch), np.nan)
    s_tr = np.full((steps, n_tr), np.nan)
    p_slack = np.full(steps, np.nan)
    losses = np.full(steps, np.nan)
    failed = []
    for chunk in chunks:
        for offset, state in enumerate(chunk.states):
            if state is None:
                continue
            t = chunk.start + offset
            vm[t], va[t], i_ka[t], s_tr[t] = state.vm, state.va, state.i_ka, state.s_tr_mva
            p_slack[t], losses[t] = state.p_slack_pu, state.losses_pu
        for t, message in chunk.failures:
            logger.warning("Load flow failed at step %d: %s", t, message)
            failed.append(t)

    logger.info("Solved %d load-flow steps (%d failed)", steps, len(failed))
    return NetworkStateSeries(
        bus_ids=admittance.bus_ids,
        branch_ids=admittance.branch_ids,
        transformer_ids=admittance.transformer_ids,
        vm=vm, va=va, i_ka=i_ka, s_tr_mva=s_tr,
        p_slack_pu=p_slack, losses_pu=losses,
        failed_steps=tuple(sorted(failed)),
    )


def injection_matrix(
    admittance: AdmittanceModel,
    p_kw: Mapping[str, np.ndarray],
    q_kvar: Optional[Mapping[str, np.ndarray]] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Stack per-prosumer kW/kVAr series into (steps x buses) pu matrices."""
    steps = len(next(iter(p_kw.values()))) if p_kw else 0
    p = np.zeros((steps, admittance.n_bus))
    q = np.zeros((steps, admittance.n_bus))
    prosumers = set(admittance.prosumer_ids)
    scale = 1000.0 * admittance.s_base_mva
    for values, target in ((p_kw, p), (q_kvar or {}, q)):
        for bus, series in values.items():
            if bus not in prosumers:
                raise ValueError(f"bus '{bus}' is not a prosumer; it cannot inject power")
            target[:, admittance.bus_position(bus)] = np.asarray(series, dtype=float) / scale
    return p, q
