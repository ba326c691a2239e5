"""Exception and warning types shared across the package."""


class DHRetroError(Exception):
    """Base class for all package errors."""


class InputError(DHRetroError):
    """Malformed or inconsistent input data."""


class DanglingReference(InputError):
    pass


class NonPositiveGeometry(InputError):
    pass


class DisconnectedGraph(InputError):
    pass


class ShapeMismatch(InputError):
    pass


class NegativeCapacity(InputError):
    pass


class NonPositiveLift(DHRetroError):
    pass


class NegativePumpLift(DHRetroError):
    pass


class InactiveUnit(DHRetroError):
    pass


class ZeroHeat(DHRetroError):
    pass


class DegenerateSeries(InputError):
    pass


class NonFinite(DHRetroError):
    pass


class SolverError(DHRetroError):
    """Numerical failure inside the forward or optimization solvers."""


class SingularJacobian(SolverError):
    pass


class MaxIterationsExceeded(SolverError):
    pass


class LineSearchFailure(SolverError):
    pass


class StalledProgress(SolverError):
    pass


class OutOfValidityRange(UserWarning):
    """A fit was evaluated outside the range of the data it was fitted to."""
