"""Exception hierarchy shared by all hjlab modules."""


class HJLabError(Exception):
    """Base class for every error raised by hjlab."""


class NotQuasiConvex(HJLabError):
    pass


class NotCoercive(HJLabError):
    pass


class OutOfRange(HJLabError):
    pass


class BelowMinimum(HJLabError):
    pass


class GridError(HJLabError):
    """Grid construction failed, e.g. a junction does not fall on a node."""


class GridMismatch(HJLabError):
    pass


class CflViolation(HJLabError):
    pass


class PhaseBoundaryCrossed(HJLabError):
    pass


class HorizonTooShort(HJLabError):
    pass


class RhoTooSmall(HJLabError):
    pass


class NotConverged(HJLabError):
    pass


class InvariantViolation(HJLabError):
    """A property that must hold for every run was observed to fail."""


class ProfileTooNarrow(HJLabError):
    pass


class UnderResolved(HJLabError):
    pass


class ToleranceExceeded(HJLabError):
    pass


class ScenarioInvalid(HJLabError):
    pass


class ConfigInvalid(HJLabError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class MissingResult(HJLabError):
    pass
