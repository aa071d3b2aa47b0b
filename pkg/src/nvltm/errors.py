"""Exception hierarchy shared by all modules."""


class NvltmError(Exception):
    pass


class InvalidGeometryError(NvltmError, ValueError):
    pass


class StabilityError(InvalidGeometryError):
    """Cavity geometry outside the symmetric stability range."""


class NoSteadyStateError(NvltmError):
    """Rate matrix has no unique normalized null vector."""


class AboveThresholdError(NvltmError):
    """Single-pass gain reached or exceeded the passive loss (lasing)."""


class InvalidReferenceError(NvltmError, ValueError):
    pass


class FitFailure(NvltmError):
    def __init__(self, message, iterations=None, diagnostics=None):
        super().__init__(message)
        self.iterations = iterations
        self.diagnostics = diagnostics or {}


class DegenerateFitError(FitFailure):
    """Double-dip fit collapsed; ``fallback`` holds a single-dip fit."""

    def __init__(self, message, fallback=None, **kwargs):
        super().__init__(message, **kwargs)
        self.fallback = fallback


class InsufficientPeaksError(NvltmError):
    pass


class ConfigError(NvltmError):
    """Config could not be parsed or failed validation.

    ``problems`` lists every violation as ``(key, message)`` pairs.
    """

    def __init__(self, problems, origin="<config>"):
        self.problems = list(problems)
        self.origin = origin
        lines = [f"{key}: {msg}" for key, msg in self.problems]
        super().__init__(f"invalid configuration ({origin}):\n  " + "\n  ".join(lines))


class CalibrationError(NvltmError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals or {}


class MissingCalibrationError(NvltmError):
    pass
