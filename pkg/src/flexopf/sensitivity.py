"""First-order sensitivities of voltages and branch loading to prosumer injections.

At a solved operating point the load-flow equations give J dx = dS, so the
voltage response to a unit injection at bus j is the column of J^-1 for that
bus. Branch current and transformer apparent power sensitivities follow by
the chain rule through ``yf``.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from src.grid import AdmittanceModel
from src.powerflow import factorize, jacobian


@dataclass(frozen=True)
class Sensitivities:
    """Derivatives per kW (or kVAr) injected at each prosumer, one column each."""
    dvm_dp: np.ndarray
    dvm_dq: np.ndarray
    di_dp: np.ndarray
    di_dq: np.ndarray
    ds_dp: np.ndarray
    ds_dq: np.ndarray


def linearize(admittance: AdmittanceModel, v: np.ndarray, prosumer_positions: Sequence[int]) -> Sensitivities:
    """Sensitivities of |V| (pu), |I| (kA) and transformer |S| (MVA) at voltage ``v``."""
    pq = admittance.non_slack
    n_pq = len(pq)
    m = len(prosumer_positions)
    in_pq = {bus: i for i, bus in enumerate(pq)}

    rhs = np.zeros((2 * n_pq, 2 * m))
    for j, bus in enumerate(prosumer_positions):
        if bus not in in_pq:
            continue  # slack absorbs it
        rhs[in_pq[bus], j] = 1.0
        rhs[n_pq + in_pq[bus], m + j] = 1.0
    solution = factorize(jacobian(admittance, v)).solve(rhs)

    dva = np.zeros((admittance.n_bus, 2 * m))
    dvm = np.zeros((admittance.n_bus, 2 * m))
    dva[pq] = solution[:n_pq]
    dvm[pq] = solution[n_pq:]

    vm = np.abs(v)
    dv = np.exp(1j * np.angle(v))[:, None] * (dvm + 1j * vm[:, None] * dva)
    i_branch = admittance.yf @ v
    di = admittance.yf @ dv
    magnitude = np.abs(i_branch)
    live = magnitude > 1e-12
    dmag = np.zeros((admittance.n_branch, 2 * m))
    dmag[live] = (np.conj(i_branch[live])[:, None] * di[live]).real / magnitude[live][:, None]

    tr = admittance.transformer_positions
    hv = admittance.from_idx[tr]
    ds = (dvm[hv] * magnitude[tr][:, None] + vm[hv][:, None] * dmag[tr]) * admittance.s_base_mva
    di_ka = dmag * admittance.branch_base_current_ka[:, None]

    per_kw = 1.0 / (1000.0 * admittance.s_base_mva)
    return Sensitivities(
        dvm_dp=dvm[:, :m] * per_kw,
        dvm_dq=dvm[:, m:] * per_kw,
        di_dp=di_ka[:, :m] * per_kw,
        di_dq=di_ka[:, m:] * per_kw,
        ds_dp=ds[:, :m] * per_kw,
        ds_dq=ds[:, m:] * per_kw,
    )
