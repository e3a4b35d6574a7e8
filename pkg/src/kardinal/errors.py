"""Exception hierarchy.

Everything raised on purpose by this package derives from :class:`KardinalError`.
Input-data problems derive from :class:`DataError` so the CLI can map them to
their own exit code.
"""


class KardinalError(Exception):
    pass


class ConfigError(KardinalError):
    pass


class DataError(KardinalError):
    pass


class MissingTicker(DataError):
    pass


class EmptyPanel(DataError):
    pass


class NonPositivePrice(DataError):
    pass


class InsufficientHistory(DataError):
    pass


class DateNotFound(DataError):
    pass


class CalendarError(DataError):
    pass


class DegenerateInput(KardinalError):
    pass


class InvalidCorrelation(KardinalError):
    pass


class DimensionMismatch(KardinalError, ValueError):
    pass


class NonPositivePenalty(KardinalError, ValueError):
    pass


class TooLarge(KardinalError):
    pass


class EigenFailure(KardinalError):
    pass


class EmptyReadout(KardinalError):
    pass


class ZeroVariance(KardinalError):
    pass


class ZeroRisk(KardinalError):
    pass


class InfeasibleBox(KardinalError):
    pass


class NumericFailure(KardinalError):
    pass


class EmptySeries(KardinalError):
    pass
