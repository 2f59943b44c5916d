"""Exception hierarchy shared by every calibration stage."""


class CalibrationError(Exception):
    """Base class for all errors raised by autocal."""


class InvalidArgument(CalibrationError, ValueError):
    pass


class InvalidState(CalibrationError, RuntimeError):
    pass


class DegenerateData(CalibrationError):
    """Input data cannot support the requested model (e.g. all points identical)."""


class FitFailed(CalibrationError):
    """A fit did not converge. ``residual`` holds the best objective value reached."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class DegenerateFit(FitFailed):
    """The fit converged onto a parameter set without physical meaning."""


class InitFailed(CalibrationError):
    pass


class BracketFailed(CalibrationError):
    pass


class CalibrationFailed(CalibrationError):
    pass


class DependencyError(CalibrationError):
    """A pipeline stage was requested before the stage it depends on."""
