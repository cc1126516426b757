"""Exception hierarchy shared by all pnrsim modules."""


class PnrError(Exception):
    """Base class for every error raised by pnrsim."""


class DomainError(PnrError, ValueError):
    """Argument outside the mathematical or physical domain of an operation."""


class AccuracyError(PnrError, ArithmeticError):
    """A numerical result could not be obtained to the required accuracy."""


class NoPulseError(PnrError, ValueError):
    """A waveform does not contain the pulse an operation needs."""


class SlotCapError(PnrError, RuntimeError):
    """Dataset generation hit the slot cap before collecting enough events."""


class EmptyHistogramError(PnrError, ValueError):
    pass


class FitError(PnrError, RuntimeError):
    """Peak fit did not converge.

    ``best`` carries the best parameters seen before giving up.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class NoPeaksError(FitError):
    pass


class InconsistencyError(PnrError, ValueError):
    pass


class DegenerateComparisonError(PnrError, ValueError):
    pass


class ConfigError(PnrError, ValueError):
    pass
