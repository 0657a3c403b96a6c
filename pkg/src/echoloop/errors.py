"""Exception hierarchy shared by all echoloop modules."""


class EchoLoopError(Exception):
    """Base class for every error raised by echoloop."""

    exit_code = 1


class ParseError(EchoLoopError, ValueError):
    """Malformed input text; carries the offending line number when known."""

    exit_code = 2

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(EchoLoopError, ValueError):
    exit_code = 2


class ConfigError(EchoLoopError, ValueError):
    exit_code = 2


class DegenerateTimelineError(EchoLoopError, ValueError):
    exit_code = 3


class ScheduleError(EchoLoopError, ValueError):
    exit_code = 3


class GenerationError(EchoLoopError, ValueError):
    exit_code = 3


class LoopError(EchoLoopError, RuntimeError):
    exit_code = 3


class TemporalOrderError(LoopError):
    pass


class MetricError(EchoLoopError, ValueError):
    exit_code = 3


class AlignmentError(MetricError):
    pass


class TraceError(EchoLoopError, ValueError):
    """A stored trace directory is missing files or cannot be read back."""

    exit_code = 2


class UsageError(EchoLoopError, ValueError):
    """A caller passed arguments outside an operation's domain."""

    exit_code = 2
