"""Exception hierarchy for gridflex.

Every error raised on purpose by the library derives from GridFlexError so the
CLI can tell expected failures (bad input, non-convergence, infeasibility)
apart from programming errors.
"""

from typing import Any, Optional


class GridFlexError(Exception):
    pass


class ConfigError(GridFlexError):
    pass


class NetworkFormatError(GridFlexError):
    """Raised when a network file line cannot be parsed."""

    def __init__(self, path: str, line_no: int, message: str):
        self.path = path
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class TopologyError(GridFlexError):
    pass


class ProfileError(GridFlexError):
    pass


class ConvergenceError(GridFlexError):
    """Newton-Raphson stopped before the mismatch fell below tolerance."""

    def __init__(self, worst_mismatch: float, bus: str, iterations: int, step: Optional[int] = None):
        self.worst_mismatch = worst_mismatch
        self.bus = bus
        self.iterations = iterations
        self.step = step
        where = f" at step {step}" if step is not None else ""
        super().__init__(
            f"load flow did not converge{where} after {iterations} iterations "
            f"(worst mismatch {worst_mismatch:.3e} pu at bus {bus})"
        )


class SingularJacobianError(GridFlexError):
    pass


class DispatchError(GridFlexError):
    pass


class InfeasiblePeriodError(GridFlexError):
    """Even full curtailment and reactive support cannot clear a period."""

    def __init__(self, period: int, element: str, excess: float):
        self.period = period
        self.element = element
        self.excess = excess
        super().__init__(
            f"intervention period {period} is infeasible: {element} remains "
            f"{excess:.3e} beyond its limit"
        )


class OpfStagnationError(GridFlexError):
    """Outer iterations ran out; ``incumbent`` holds the best feasible point, if any."""

    def __init__(self, period: int, iterations: int, incumbent: Any = None):
        self.period = period
        self.iterations = iterations
        self.incumbent = incumbent
        suffix = "with" if incumbent is not None else "without"
        super().__init__(
            f"OPF for period {period} stagnated after {iterations} outer iterations "
            f"({suffix} a feasible incumbent)"
        )


class ConsistencyError(GridFlexError):
    pass
