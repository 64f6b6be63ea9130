"""Exception hierarchy shared across the package."""


class HiggsError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(HiggsError, ValueError):
    """Invalid structural parameters (matrix side, fingerprint width, ...)."""


class LevelCapError(HiggsError):
    """Not enough fingerprint bits remain to lift an entry one more level."""


class OrderingError(HiggsError, ValueError):
    """An edge arrived with a timestamp older than the newest one seen."""


class NotFoundError(HiggsError, KeyError):
    """A deletion referenced an edge that is not stored."""


class UnderflowError(HiggsError, ValueError):
    """A deletion would drive a stored weight below zero."""


class OverflowChainError(HiggsError, ValueError):
    """Overflow-block insert with a timestamp that does not continue the chain."""


class FinalizedError(HiggsError):
    """Mutation attempted on a tree that has already been finalized."""


class ParseError(HiggsError, ValueError):
    """Malformed edge-list or workload input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SnapshotFormatError(HiggsError, ValueError):
    """Snapshot file is truncated, has a bad header, or an incompatible config."""


class UndefinedMetricError(HiggsError, ValueError):
    """A metric was requested over an empty sample."""
