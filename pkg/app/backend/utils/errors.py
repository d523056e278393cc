"""Error hierarchy shared by the allocation engine, CLI and API."""


class AllocationError(Exception):
    """Root of every error raised on purpose by this package."""

    exit_code = 3


class UsageError(AllocationError, ValueError):
    """Bad arguments or a request the engine refuses to run."""

    exit_code = 1


class DataError(AllocationError, ValueError):
    """Malformed input files or inconsistent dimensions."""

    exit_code = 2


class NumericalError(AllocationError, ArithmeticError):
    """A numerical precondition failed (PD, singularity, convergence)."""

    exit_code = 3


class DimensionMismatchError(DataError):
    pass


class SeriesFormatError(DataError):
    pass


class NotPositiveDefiniteError(NumericalError):
    pass


class SingularRegressorError(NumericalError):
    pass


class MgfUndefinedError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass


class ZeroWealthError(NumericalError):
    pass


class OracleCostError(UsageError):
    pass


class HorizonMismatchError(UsageError):
    pass
