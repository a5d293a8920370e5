import numpy as np
import scipy.sparse as sp

from .base_solver import BasePeriodSolver, OpfMode


class StorageOpfSolver(BasePeriodSolver):
    """Period OPF with battery re-dispatch, reactive support and curtailment.

    The battery moves away from its stage-1 trajectory by ``u - w`` (both
    non-negative) with lossless energy accounting. The deviation sums to zero
    over the period, so the stored energy after the last step is unchanged.
    Only prosumers with a non-zero power limit get battery variables.
    """

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        ctx = self.context
        self._owners = np.flatnonzero(ctx.power_limit_kw > 0)
        n, k = ctx.n_steps, len(self._owners)
        self._delta = sp.hstack([sp.identity(k * n), -sp.identity(k * n)], format="csr")
        self._cumsum = sp.kron(sp.identity(k), sp.csr_matrix(np.tril(np.ones((n, n)))), format="csr")

    @property
    def strategy_name(self) -> str:
        return "with_storage"

    @property
    def mode(self) -> OpfMode:
        return OpfMode.WITH_STORAGE

    def _battery_base_kw(self) -> np.ndarray:
        return self.context.p_bat_kw

    def _battery_size(self) -> int:
        return 2 * len(self._owners) * self.context.n_steps

    def _battery_injection(self) -> sp.csr_matrix:
        ctx = self.context
        n = ctx.n_steps
        rows = (self._owners[:, None] * n + np.arange(n)).ravel()
        select = sp.csr_matrix(
            (np.ones(rows.size), (rows, np.arange(rows.size))),
            shape=(ctx.n_prosumers * n, rows.size),
        )
        return select @ self._delta

    def _battery_constraints(self):
        ctx = self.context
        if self._owners.size == 0:
            return None, None, None, None
        n = ctx.n_steps
        own = self._owners
        p1 = ctx.p_bat_kw[own].ravel()
        plim = np.repeat(ctx.power_limit_kw[own], n)
        soc_next = ctx.soc_kwh[own, 1:].ravel()
        soc_min = np.repeat(ctx.soc_min_kwh[own], n)
        soc_max = np.repeat(ctx.soc_max_kwh[own], n)
        energy = ctx.dt_hours * (self._cumsum @ self._delta)

        a_ub = sp.vstack([self._delta, -self._delta, -energy, energy], format="csr")
        b_ub = np.clip(np.concatenate([
            plim - p1,
            plim + p1,
            soc_max - soc_next,
            soc_next - soc_min,
        ]), 0.0, None)
        closing = sp.kron(sp.identity(own.size), sp.csr_matrix(np.ones((1, n))), format="csr") @ self._delta
        return a_ub, b_ub, closing, np.zeros(own.size)

    def _deviation(self, bat: np.ndarray) -> np.ndarray:
        ctx = self.context
        full = np.zeros((ctx.n_prosumers, ctx.n_steps))
        if self._owners.size:
            full[self._owners] = (self._delta @ bat).reshape(self._owners.size, ctx.n_steps)
        return full

    def _battery_power(self, bat: np.ndarray) -> np.ndarray:
        return self.context.p_bat_kw + self._deviation(bat)

    def _battery_soc(self, bat: np.ndarray) -> np.ndarray:
        ctx = self.context
        drawn = np.cumsum(self._deviation(bat), axis=1) * ctx.dt_hours
        soc = ctx.soc_kwh.copy()
        soc[:, 1:] -= drawn
        return soc
