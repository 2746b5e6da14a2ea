"""Exception hierarchy shared by every module."""


class ExpertGateError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(ExpertGateError):
    """An argument is outside its legal range."""


class DimensionError(ParameterError):
    """Array shapes do not line up."""


class InsufficientDataError(ParameterError):
    """Too few samples for the requested operation."""


class UndercompleteViolation(ParameterError):
    """Requested code size is not smaller than the input dimensionality."""


class StatsRegimeError(ParameterError):
    """Gates built under different standardization statistics were mixed."""


class DegenerateErrorBase(ParameterError):
    """The new task's own reconstruction error is (near) zero; relatedness undefined."""


class EmptyEnsembleError(ParameterError):
    """Routing requested against an ensemble with no gates."""


class EmptyRegistryError(ParameterError):
    """Inference requested against a registry with no learned tasks."""


class DuplicateTaskError(ParameterError):
    """A task with this name was already learned."""


class UnknownHeadError(ParameterError):
    """The expert has no head for the requested task."""


class FormatError(ExpertGateError):
    """A dataset or weight file does not match its declared layout."""


class StoreCorruptError(ExpertGateError):
    """A model store references files that are missing or damaged."""
