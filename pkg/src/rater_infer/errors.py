"""Exception types shared across the package."""


class RaterInferError(Exception):
    """Base class for all package errors."""


class BadParameter(RaterInferError, ValueError):
    """A distribution or model parameter lies outside its valid domain."""


class NumericalFailure(RaterInferError, ArithmeticError):
    """A computation produced a non-finite value it cannot recover from."""


class DuplicateObservation(RaterInferError, ValueError):
    """The same (subject, rater) pair was observed more than once."""


class OutOfScale(RaterInferError, ValueError):
    """A score falls outside the declared rating scale."""


class EmptyDataset(RaterInferError, ValueError):
    """An input file holds no observations."""


class UsageError(RaterInferError, ValueError):
    """Invalid command-line or configuration request."""


class IoError(RaterInferError, OSError):
    """A file could not be read, parsed or written."""
