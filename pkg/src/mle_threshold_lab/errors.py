"""Exception types shared across the package."""


class ModelError(Exception):
    """Base class for model construction and evaluation failures."""


class GridSizeError(ModelError):
    """A requested sampling grid exceeds the configured sample budget."""


class DegenerateSignalError(ModelError):
    """Signal has no usable positive-frequency spectral content."""


class DegeneratePairError(ModelError):
    """Two test abscissae are perfectly correlated; comparison undefined."""


class CurvatureError(ModelError):
    """ACR curvature at the origin is not negative (no maximum there)."""


class PartitionError(ModelError):
    """Partition construction or consistency failure."""


class ConditioningError(ModelError):
    """A matrix solve failed even after diagonal regularization."""

    def __init__(self, message, condition_number=None):
        super().__init__(message)
        self.condition_number = condition_number


class NumericError(ModelError):
    """A numerical factorization failed beyond recovery."""


class DomainTooSmallError(ModelError):
    """The a priori domain cannot host the requested construction."""


class ThresholdRangeError(ModelError):
    """A threshold crossing was not bracketed by the supplied curve."""

    def __init__(self, message, missing=None):
        super().__init__(message)
        self.missing = missing
