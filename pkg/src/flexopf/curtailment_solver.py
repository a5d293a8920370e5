import numpy as np

from .base_solver import BasePeriodSolver, OpfMode


class CurtailmentOpfSolver(BasePeriodSolver):
    """Period OPF without storage: curtailment and reactive support only.

    Battery power is removed from the power balance; the stored energy stays at
    its value at the start of the period.
    """

    @property
    def strategy_name(self) -> str:
        return "no_storage"

    @property
    def mode(self) -> OpfMode:
        return OpfMode.NO_STORAGE

    def _battery_base_kw(self) -> np.ndarray:
        return np.zeros_like(self.context.pv_kw)
