"""Exception types raised across the package."""


class ProteusError(Exception):
    """Base class for all errors raised by this package."""


class InvalidLengthError(ProteusError, ValueError):
    """A prefix length lies outside ``[0, width]``."""


class InvalidQueryError(ProteusError, ValueError):
    """A range query is malformed (``left > right`` or outside the key space)."""


class QueryNotEmptyError(ProteusError, ValueError):
    """An operation that requires an empty query received one that intersects the keys."""


class InvalidDesignError(ProteusError, ValueError):
    """A design point violates its structural constraints."""


class InfeasibleDesignError(ProteusError):
    """A design point cannot be realised within the memory budget."""


class InvalidPrefixError(ProteusError, ValueError):
    """A Bloom filter was probed with a prefix of the wrong length."""


class PadOverflowError(ProteusError, ValueError):
    """A byte string is longer than the padding target."""


class FormatError(ProteusError, ValueError):
    """A dataset or query file does not match its declared layout."""


class InvariantViolation(ProteusError):
    """A run observed a false negative or another broken guarantee."""
