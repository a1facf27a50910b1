"""Exception hierarchy shared across the engine."""


class IncCTRError(Exception):
    """Base class for all engine errors."""


class MalformedBlockError(IncCTRError, ValueError):
    pass


class UndefinedRatioError(IncCTRError, ValueError):
    pass


class DimensionError(IncCTRError, ValueError):
    pass


class ShrinkError(IncCTRError, ValueError):
    """Raised when a vocabulary or embedding table would lose rows."""


class IdLookupError(IncCTRError, IndexError):
    pass


class NumericError(IncCTRError, ArithmeticError):
    """Non-finite activation, loss or gradient.

    ``param`` names the offending tensor when known.
    """

    def __init__(self, message, param=None):
        super().__init__(message if param is None else f"{message} (param={param})")
        self.param = param


class ParseError(IncCTRError, ValueError):
    def __init__(self, message, line_no=None):
        super().__init__(message if line_no is None else f"line {line_no}: {message}")
        self.line_no = line_no


class RatioUnattainableError(IncCTRError, ValueError):
    pass


class UndefinedAUCError(IncCTRError, ValueError):
    pass


class ChecksumError(IncCTRError, ValueError):
    pass


class FormatError(IncCTRError, ValueError):
    """Unreadable or incompatible file (bad magic, version, kind or schema)."""


class ConfigError(IncCTRError, ValueError):
    pass


class TeacherError(IncCTRError, ValueError):
    """KD mode invoked without a teacher, or a teacher given outside KD mode."""


class ScheduleError(IncCTRError, ValueError):
    pass
