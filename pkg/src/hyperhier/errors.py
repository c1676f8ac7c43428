class HyperhierError(Exception):
    """Base class for library errors."""


class DomainError(HyperhierError, ValueError):
    """Input outside the domain of a geometric operation."""


class DimensionError(HyperhierError, ValueError):
    pass


class TreeError(HyperhierError, ValueError):
    """Malformed or invalid label tree."""


class DataError(HyperhierError, ValueError):
    """Bad dataset, label range, or file contents."""


class InvariantViolation(HyperhierError, RuntimeError):
    """A pipeline bookkeeping or normalization check failed."""
