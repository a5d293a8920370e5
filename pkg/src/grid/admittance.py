"""Per-unit conversion and nodal admittance assembly.

Bases: S_base = 1 MVA network-wide, V_base = the nominal kV of each bus.
"""

import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.sparse as sp

from src.errors import TopologyError
from .network import Network

logger = logging.getLogger(__name__)

S_BASE_MVA = 1.0
DEFAULT_TRAFO_R_PCT = 1.0
DEFAULT_TRAFO_X_PCT = 4.0


def base_impedance_ohm(base_kv: float, s_base_mva: float = S_BASE_MVA) -> float:
    return base_kv ** 2 / s_base_mva


def base_current_ka(base_kv: float, s_base_mva: float = S_BASE_MVA) -> float:
    return s_base_mva / (math.sqrt(3.0) * base_kv)


def current_to_pu(current_ka, base_kv, s_base_mva: float = S_BASE_MVA):
    return current_ka / base_current_ka(base_kv, s_base_mva)


def current_from_pu(current_pu, base_kv, s_base_mva: float = S_BASE_MVA):
    return current_pu * base_current_ka(base_kv, s_base_mva)


@dataclass(frozen=True)
class AdmittanceModel:
    """Series-branch admittances and the nodal matrix in per-unit.

    ``yf`` maps bus voltages to the current entering each branch at its from
    end, so ``yf @ V`` evaluates ``y_ik (V_i - V_k)`` for every branch.
    """
    bus_ids: Tuple[str, ...]
    branch_ids: Tuple[str, ...]
    from_idx: np.ndarray
    to_idx: np.ndarray
    y_branch: np.ndarray
    ybus: sp.csr_matrix
    yf: sp.csr_matrix
    base_kv: np.ndarray
    is_transformer: np.ndarray
    is_prosumer: np.ndarray
    slack: int
    s_base_mva: float = S_BASE_MVA

    @property
    def n_bus(self) -> int:
        return len(self.bus_ids)

    @property
    def n_branch(self) -> int:
        return len(self.branch_ids)

    @property
    def conductance(self) -> np.ndarray:
        """Per-branch G_ik."""
        return self.y_branch.real

    @property
    def susceptance(self) -> np.ndarray:
        """Per-branch B_ik."""
        return self.y_branch.imag

    @property
    def branch_impedance(self) -> np.ndarray:
        return 1.0 / self.y_branch

    @property
    def non_slack(self) -> np.ndarray:
        return np.array([i for i in range(self.n_bus) if i != self.slack], dtype=int)

    @property
    def transformer_positions(self) -> np.ndarray:
        return np.flatnonzero(self.is_transformer)

    @property
    def transformer_ids(self) -> Tuple[str, ...]:
        return tuple(self.branch_ids[i] for i in self.transformer_positions)

    @property
    def prosumer_positions(self) -> np.ndarray:
        return np.flatnonzero(self.is_prosumer)

    @property
    def prosumer_ids(self) -> Tuple[str, ...]:
        return tuple(self.bus_ids[i] for i in self.prosumer_positions)

    @property
    def branch_base_current_ka(self) -> np.ndarray:
        """Current base at the from end of every branch."""
        return base_current_ka(self.base_kv[self.from_idx], self.s_base_mva)

    def bus_position(self, bus_id: str) -> int:
        return self.bus_ids.index(bus_id)

    def branch_position(self, branch_id: str) -> int:
        return self.branch_ids.index(branch_id)


def _branch_impedance_pu(line, from_kv: float, s_base_mva: float,
                         trafo_r_pct: float, trafo_x_pct: float) -> complex:
    if line.is_transformer:
        r_pct, x_pct = line.r_ohm_per_km, line.x_ohm_per_km
        if r_pct == 0 and x_pct == 0:
            r_pct, x_pct = trafo_r_pct, trafo_x_pct
        # Percent on own rating, rebased to the system MVA base.
        return complex(r_pct, x_pct) / 100.0 * s_base_mva / line.rating_mva
    return line.impedance_ohm / base_impedance_ohm(from_kv, s_base_mva)


def build_admittance(
    network: Network,
    trafo_r_pct: float = DEFAULT_TRAFO_R_PCT,
    trafo_x_pct: float = DEFAULT_TRAFO_X_PCT,
    s_base_mva: float = S_BASE_MVA,
) -> AdmittanceModel:
    """Assemble the per-unit branch admittances and nodal matrix.

    Args:
        network: Validated network
        trafo_r_pct: Default transformer resistance, percent on own rating
        trafo_x_pct: Default transformer reactance, percent on own rating
        s_base_mva: System power base

    Returns:
        AdmittanceModel with a shunt-free nodal matrix

    Raises:
        TopologyError: If any branch has zero series impedance
    """
    index = network.bus_index
    n_bus = len(network.buses)
    n_branch = len(network.lines)
    base_kv = np.array([b.base_kv for b in network.buses], dtype=float)

    from_idx = np.empty(n_branch, dtype=int)
    to_idx = np.empty(n_branch, dtype=int)
    y_branch = np.empty(n_branch, dtype=complex)
    for k, line in enumerate(network.lines):
        f, t = index[line.from_bus], index[line.to_bus]
        z = _branch_impedance_pu(line, base_kv[f], s_base_mva, trafo_r_pct, trafo_x_pct)
        if z == 0:
            raise TopologyError(f"branch {line.id} has zero impedance")
        from_idx[k], to_idx[k] = f, t
        y_branch[k] = 1.0 / z

    rows = np.concatenate([from_idx, to_idx, from_idx, to_idx])
    cols = np.concatenate([from_idx, to_idx, to_idx, from_idx])
    data = np.concatenate([y_branch, y_branch, -y_branch, -y_branch])
    ybus = sp.coo_matrix((data, (rows, cols)), shape=(n_bus, n_bus)).tocsr()

    branch_rows = np.concatenate([np.arange(n_branch), np.arange(n_branch)])
    yf = sp.coo_matrix(
        (np.concatenate([y_branch, -y_branch]), (branch_rows, np.concatenate([from_idx, to_idx]))),
        shape=(n_branch, n_bus),
    ).tocsr()

    for arr in (from_idx, to_idx, y_branch, base_kv):
        arr.setflags(write=False)

    logger.debug("Built %dx%d nodal admittance with %d branches", n_bus, n_bus, n_branch)
    return AdmittanceModel(
        bus_ids=tuple(b.id for b in network.buses),
        branch_ids=tuple(line.id for line in network.lines),
        from_idx=from_idx,
        to_idx=to_idx,
        y_branch=y_branch,
        ybus=ybus,
        yf=yf,
        base_kv=base_kv,
        is_transformer=np.array([line.is_transformer for line in network.lines], dtype=bool),
        is_prosumer=np.array([b.is_prosumer for b in network.buses], dtype=bool),
        slack=index[network.slack.id],
        s_base_mva=s_base_mva,
    )
