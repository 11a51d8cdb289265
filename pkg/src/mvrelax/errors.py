"""Exception types shared across the package."""


class MvRelaxError(Exception):
    """Base class; ``code`` is the machine-readable tag used by the CLI."""

    code = "error"


class NewtonDivergence(MvRelaxError):
    code = "newton-divergence"


class SingularJacobian(MvRelaxError):
    code = "singular-jacobian"


class GridMismatch(MvRelaxError):
    code = "grid-mismatch"


class DegreeOverflow(MvRelaxError):
    code = "degree-overflow"


class NumericalBreakdown(MvRelaxError):
    code = "numerical-breakdown"


class ConfigError(MvRelaxError):
    def __init__(self, message: str, code: str = "config-error"):
        super().__init__(message)
        self.code = code
