"""Exception hierarchy shared by every subsystem."""


class BrainNetError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(BrainNetError, ValueError):
    """Invalid parameters or configuration values."""


class InvalidStateError(BrainNetError):
    """A game state that violates the one-orientation-fits invariant."""


class ProtocolError(BrainNetError):
    """Illegal transition or malformed traffic between participants."""


class FramingError(ProtocolError):
    """A wire frame that is truncated or exceeds the size limit."""


class ProtocolVersionError(ProtocolError):
    """Unknown message kind or incompatible protocol version."""


class RoleError(BrainNetError):
    """An operation invoked with a view or role it cannot use."""


class CalibrationError(BrainNetError):
    """Phosphene calibration failed to converge.

    ``partial_estimate`` holds the last intensity visited, if any.
    """

    def __init__(self, message, partial_estimate=None):
        super().__init__(message)
        self.partial_estimate = partial_estimate


class SessionAborted(BrainNetError):
    """A participant disconnected; ``log`` holds the partial session log."""

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log


class AnalysisError(BrainNetError, ValueError):
    """Degenerate or malformed input to a statistic."""


class LogFormatError(BrainNetError):
    """A session log that cannot be parsed.  ``line`` is 1-based."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
