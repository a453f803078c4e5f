"""Exception hierarchy shared by all modules."""


class FeasibleCDRCError(Exception):
    """Base class for all errors raised by this package."""


class DataError(FeasibleCDRCError, ValueError):
    """Invalid input table or dataset (missing column, bad cell, ...)."""


class ConfigError(FeasibleCDRCError, ValueError):
    """Invalid run configuration."""


class NumericalError(FeasibleCDRCError, RuntimeError):
    """A model fit or numerical routine failed."""


class SingularDesignError(NumericalError):
    """Design matrix is (numerically) rank deficient."""


class ConvergenceError(NumericalError):
    """Iterative fit did not converge."""


class SeparationError(NumericalError):
    """Logistic fit diverges towards complete separation."""


class SupportError(NumericalError):
    """A unit has no positive density anywhere on the intervention grid."""

    def __init__(self, unit, message=None):
        self.unit = unit
        super().__init__(message or f"unit {unit} has zero density at every grid point")


class ReplicateFailureError(NumericalError):
    """Too many bootstrap or Monte Carlo replicates failed."""

    def __init__(self, failed, total, message=None):
        self.failed = list(failed)
        self.total = total
        super().__init__(
            message
            or f"{len(self.failed)} of {total} replicates failed "
            f"(indices {self.failed[:10]}{'...' if len(self.failed) > 10 else ''})"
        )
