"""Exception and warning types shared across the package."""


class HierflError(Exception):
    """Base class for all errors raised by hierfl."""


class SchemaError(HierflError):
    """A CSV header does not match the expected schema."""


class ValidationError(HierflError):
    """A dataset violates one of its invariants.

    ``row`` is the 1-based data row (header excluded) when the problem can be
    pinned to a single row, otherwise ``None``.
    """

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class AlignmentError(HierflError):
    """Datasets cannot be aligned on a common set of dates."""


class ConfigurationError(HierflError):
    pass


class ShapeError(HierflError):
    pass


class TrainingError(HierflError):
    pass


class InsufficientDataError(HierflError):
    pass


class RoutingError(HierflError):
    """A message was addressed to an unknown endpoint or broke a round barrier."""


class DegenerateFeatureWarning(UserWarning):
    """A feature column has zero variance and was pinned to weight 0."""


class ScoreWarning(UserWarning):
    """A score was defined by convention (zero variance, all-zero cohort, clamping)."""
