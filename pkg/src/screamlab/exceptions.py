"""Exception hierarchy shared by every screamlab module."""


class ScreamLabError(Exception):
    """Base class for all analysis errors raised by screamlab."""


class EmptyTrace(ScreamLabError, ValueError):
    pass


class InvalidCutoff(ScreamLabError, ValueError):
    pass


class ZeroVariance(ScreamLabError, ValueError):
    pass


class ShapeError(ScreamLabError, ValueError):
    pass


class GroupingError(ScreamLabError, ValueError):
    pass


class StorageError(ScreamLabError, OSError):
    pass


class CorruptContainer(StorageError):
    pass


class EstimationFailed(ScreamLabError):
    pass


class NoMatches(ScreamLabError):
    pass


class GridMismatch(ScreamLabError, ValueError):
    pass


class InsufficientProfilingData(ScreamLabError, ValueError):
    pass


class DegenerateAttackSet(ScreamLabError, ValueError):
    pass


class OracleTooLarge(ScreamLabError, ValueError):
    pass


class SubsetError(ScreamLabError, ValueError):
    pass


class CollectionError(ScreamLabError):
    """A simulated or imported capture could not be turned into traces."""


class ConfigError(ScreamLabError, ValueError):
    pass
