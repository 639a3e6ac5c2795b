"""Exception hierarchy shared by all wdsmc modules."""


class WDSMCError(Exception):
    """Base class for all errors raised by wdsmc."""


class ZeroMass(WDSMCError, ValueError):
    pass


class DimensionMismatch(WDSMCError, ValueError):
    pass


class NumericalFailure(WDSMCError, RuntimeError):
    pass


class EmptyInput(WDSMCError, ValueError):
    pass


class InvalidSpec(WDSMCError, ValueError):
    pass


class IndexOutOfRange(WDSMCError, IndexError):
    pass


class DegenerateDirection(WDSMCError, ValueError):
    pass


class CoincidentPositions(WDSMCError, ValueError):
    pass


class PlacementFailure(WDSMCError, RuntimeError):
    pass


class NonPositiveGap(WDSMCError, ValueError):
    pass


class HistoryTooShort(WDSMCError, ValueError):
    pass


class TotalDegeneracy(WDSMCError, RuntimeError):
    """Every sample in the ensemble has zero surrogate likelihood."""


class PriorExhausted(WDSMCError, RuntimeError):
    """Prior redraws failed to produce a non-degenerate sample."""


class InvalidConfig(WDSMCError, ValueError):
    pass


class ParseError(WDSMCError, ValueError):
    pass


class NonMonotoneTimes(ParseError):
    pass


class MissingRun(WDSMCError, FileNotFoundError):
    pass


class DegenerateSimulation(WDSMCError, RuntimeError):
    """A reference simulation (ground truth or report) produced an invalid trajectory."""
