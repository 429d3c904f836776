"""Exception hierarchy shared by every module."""


class IlmeError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(IlmeError, ValueError):
    """A caller violated an operation's precondition."""


class FormatError(IlmeError):
    """A file on disk does not follow its declared format."""


class ScoringError(IlmeError):
    """An acoustic scorer or LM query failed.

    ``index`` holds the position of the failing input within a batch when
    the failure can be attributed to one element.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ArpaParseError(FormatError):
    """Malformed ARPA text. ``lineno`` is 1-based, or None for EOF errors."""

    def __init__(self, message, lineno=None):
        where = f"line {lineno}: " if lineno is not None else ""
        super().__init__(where + message)
        self.lineno = lineno


class ConfigError(IlmeError):
    """Invalid run or decode configuration. ``key`` names the offender."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
