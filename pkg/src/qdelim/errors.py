"""Exception hierarchy shared by all modules."""


class QdelimError(Exception):
    """Base class for all library errors."""


class DimensionMismatchError(QdelimError, ValueError):
    pass


class NonHermitianError(QdelimError, ValueError):
    pass


class UnstableGeneratorError(QdelimError):
    pass


class DegenerateKernelError(QdelimError):
    pass


class ProjectionViolationError(QdelimError):
    pass


class SolverFailureError(QdelimError):
    pass


class StiffnessError(QdelimError):
    pass


class FitQualityError(QdelimError):
    def __init__(self, message, r_squared=None):
        super().__init__(message)
        self.r_squared = r_squared


class DegenerateSteadyStateError(QdelimError):
    pass


class NumericalFailureError(QdelimError):
    pass


class BasisMismatchError(QdelimError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class InvalidSpectrumError(QdelimError, ValueError):
    pass


class RegimeError(QdelimError):
    pass


class QuadratureError(QdelimError):
    pass


class RegimeWarning(UserWarning):
    pass
