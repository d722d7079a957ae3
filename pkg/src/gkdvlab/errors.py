"""Exception types raised across the package."""


class GKdVLabError(Exception):
    """Base class for all package errors."""


class NegativeOrderOnNonzeroMean(GKdVLabError, ValueError):
    """A negative-order homogeneous multiplier was applied to data with a nonzero mean."""


class BlowupDetected(GKdVLabError, RuntimeError):
    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class BoxTooSmall(GKdVLabError, ValueError):
    """The soliton tail does not fit inside the periodic box."""


class FitDiverged(GKdVLabError, RuntimeError):
    def __init__(self, message, frame=None):
        super().__init__(message)
        self.frame = frame


class WindowTooShort(GKdVLabError, ValueError):
    pass


class ConfigInvalid(GKdVLabError, ValueError):
    pass


class UnknownQuantity(GKdVLabError, KeyError):
    pass
