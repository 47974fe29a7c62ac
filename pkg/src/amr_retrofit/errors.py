"""Exception hierarchy shared by every stage of the pipeline.

The CLI maps :class:`DataError` to exit code 2 and :class:`NumericError`
to exit code 3.
"""


class AmrError(Exception):
    """Base class for all library errors."""


class DataError(AmrError):
    """Malformed or inconsistent input data."""


class NumericError(AmrError):
    """A computation hit a numerically undefined case."""


class ZeroVector(NumericError):
    """A vector with zero Euclidean norm was given where a direction is needed."""


class DimensionMismatch(DataError):
    pass


class EmptyCorpus(DataError):
    pass
