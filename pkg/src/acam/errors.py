"""Exception types shared across the simulator."""


class AcamError(Exception):
    """Base class for simulator errors."""


class ConvergenceError(AcamError):
    """A bracketing root solve failed to converge (usually bad device parameters)."""


class NoCrossing(AcamError):
    """A VTC never reaches the requested output level inside the sweep range."""


class OutOfRange(AcamError):
    """A bound lookup target lies outside the LUT column range."""


class IntegrationError(AcamError):
    """The match-line integrator lost charge balance or left the rails."""


class DrUnreachable(AcamError):
    """The dynamic-range target cannot be reached on the requested time window."""

    def __init__(self, message, achieved=float("nan")):
        super().__init__(message)
        self.achieved = achieved


class ConfigError(AcamError):
    """Invalid experiment configuration; ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
