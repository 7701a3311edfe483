"""Exception hierarchy shared by all scatlab modules."""


class ScatlabError(Exception):
    """Base class for every error raised by this package."""


class DimensionCapExceeded(ScatlabError):
    pass


class ModeOutOfRange(ScatlabError):
    pass


class OffLatticePosition(ScatlabError):
    pass


class GridMismatch(ScatlabError):
    pass


class BoundViolated(ScatlabError):
    """A Wick monomial violated its number-operator bound (assembly bug)."""


class NearSingularResolvent(ScatlabError):
    pass


class LowerBoundViolated(ScatlabError):
    pass


class NoConvergence(ScatlabError):
    pass


class NoSaturation(ScatlabError):
    pass


class SupportOverlap(ScatlabError):
    pass


class ShiftNotGridAligned(ScatlabError):
    pass


class SupportOutsideGrid(ScatlabError):
    pass


class BracketTooTight(ScatlabError):
    pass


class SupportsNotTimeSeparated(ScatlabError):
    pass


class InstabilityDetected(ScatlabError):
    pass


class ConfigInvalid(ScatlabError):
    """Configuration failed validation; ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message
