"""Shared exception types.

The CLI maps these onto exit codes: format-level problems (ParseError,
ConfigError, FrameOrderError) exit 2, content-level problems (ContentError)
exit 1.
"""


class CricketSortError(Exception):
    """Base class for all toolkit errors."""


class GeometryError(CricketSortError, ValueError):
    """A box or image geometry violates its invariants."""


class ParseError(CricketSortError, ValueError):
    """An input file failed to parse. Carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no
        self.message = message


class FrameOrderError(CricketSortError, ValueError):
    """Frames were fed to the controller out of order."""


class ConfigError(CricketSortError, ValueError):
    """A configuration document is malformed or carries unknown keys."""


class ContentError(CricketSortError, ValueError):
    """Input parsed fine but its content is unusable."""


class NoGroundTruthError(ContentError):
    """Recall is undefined: no ground-truth object of the requested label."""
