"""Exception types raised across the package."""


class CVQNNError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(CVQNNError, ValueError):
    pass


class InvalidCutoffError(CVQNNError, ValueError):
    pass


class IncompatibleStateError(CVQNNError, ValueError):
    pass


class DegenerateProjectionError(CVQNNError, ValueError):
    """The state has (numerically) no weight inside the requested subspace."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class IncompatibleParametersError(CVQNNError, ValueError):
    pass


class InvalidNetworkError(CVQNNError, ValueError):
    pass


class InvalidBatchError(CVQNNError, ValueError):
    pass


class NonFiniteCostError(CVQNNError, ArithmeticError):
    def __init__(self, message, coordinate=None):
        super().__init__(message)
        self.coordinate = coordinate


class InvalidUpdateError(CVQNNError, ValueError):
    pass


class InvalidInputError(CVQNNError, ValueError):
    pass


class SingularBasisError(CVQNNError, ValueError):
    pass


class InvalidLabelError(CVQNNError, ValueError):
    pass


class IncompatibleSpectraError(CVQNNError, ValueError):
    pass


class ShapeMismatchError(CVQNNError, ValueError):
    pass


class ChannelCountError(CVQNNError, ValueError):
    pass


class NoninvertibleWeightError(CVQNNError, ValueError):
    pass


class NonUnitaryError(CVQNNError, ValueError):
    def __init__(self, message, defect=None):
        super().__init__(message)
        self.defect = defect


class FormatError(CVQNNError, ValueError):
    pass


class LengthError(CVQNNError, ValueError):
    pass


class DimensionError(CVQNNError, ValueError):
    pass


class ConfigError(CVQNNError, ValueError):
    pass
