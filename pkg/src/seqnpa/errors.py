"""Exception types shared across the package."""


class SeqNPAError(Exception):
    """Base class for all errors raised by seqnpa."""


class GameError(SeqNPAError):
    """Malformed game description or game file."""


class EnumerationTooLarge(SeqNPAError):
    """Brute-force classical value requested on a game that is too large."""


class WordError(SeqNPAError):
    """Invalid word operation (mixed levels, bad letter, bad syntax)."""


class SizeGuardError(SeqNPAError):
    """Moment index would exceed the configured size cap."""


class SDPAFormatError(SeqNPAError):
    """Malformed SDPA sparse file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class StrategyError(SeqNPAError):
    """Inconsistent strategy data (dimensions, non-unitary, ...)."""


class RepairError(SeqNPAError):
    """A repair stage received input it cannot handle."""
