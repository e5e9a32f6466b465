"""Exception hierarchy shared across modules."""


class FpcError(Exception):
    """Base class for package errors."""


class InputError(FpcError, ValueError):
    """Malformed input data or parameters outside their domain."""


class CalibrationError(FpcError, RuntimeError):
    """A calibration target cannot be met (no root, inadmissible solution)."""


class NonConvergenceError(FpcError, RuntimeError):
    """An iterative numerical procedure stopped before converging."""
