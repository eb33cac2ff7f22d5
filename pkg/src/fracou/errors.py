"""Exception hierarchy shared by every module."""


class FracOUError(Exception):
    """Base class for all package errors."""


class InvalidGridError(FracOUError, ValueError):
    pass


class DomainError(FracOUError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DimensionError(FracOUError, ValueError):
    pass


class SingularKernelError(FracOUError, ArithmeticError):
    pass


class DerivativeEstimationError(FracOUError, ValueError):
    pass


class ConfigurationError(FracOUError, ValueError):
    pass


class AlignmentError(FracOUError, ValueError):
    """A functional time does not coincide with a grid point."""


class InternalConsistencyError(FracOUError, RuntimeError):
    pass


class InsufficientSampleError(FracOUError, ValueError):
    pass


class RegularizationError(FracOUError, ArithmeticError):
    pass


class EstimatorError(FracOUError, ArithmeticError):
    pass


class DegenerateFunctionalError(FracOUError, ValueError):
    pass
