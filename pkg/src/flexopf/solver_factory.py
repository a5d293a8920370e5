from typing import Dict, Type, Union

from .base_solver import BasePeriodSolver, OpfMode
from .curtailment_solver import CurtailmentOpfSolver
from .storage_solver import StorageOpfSolver


class OpfSolverFactory:
    """Factory for creating period OPF solvers by mode name."""

    _strategies: Dict[str, Type[BasePeriodSolver]] = {
        "with_storage": StorageOpfSolver,
        "storage": StorageOpfSolver,  # alias
        "no_storage": CurtailmentOpfSolver,
        "curtailment": CurtailmentOpfSolver,  # alias
    }

    @classmethod
    def create(cls, mode: Union[str, OpfMode], **kwargs) -> BasePeriodSolver:
        """Create a solver instance.

        Args:
            mode: Mode name or OpfMode ("with_storage", "no_storage" or an alias)
            **kwargs: Arguments passed to the solver constructor:
                - period: InterventionPeriod to clear
                - context: PeriodContext built from the stage-1 solutions
                - options: Optional OpfOptions
                - pf_options: Optional PowerFlowOptions
                - progress_callback: Optional progress callback

        Raises:
            ValueError: If the mode name is unknown
        """
        name = mode.value if isinstance(mode, OpfMode) else str(mode)
        key = name.lower().replace("-", "_")
        if key not in cls._strategies:
            available = ", ".join(sorted(cls._strategies))
            raise ValueError(f"Unknown OPF mode '{name}'. Available: {available}")
        return cls._strategies[key](**kwargs)
