"""Exception hierarchy.

Every error raised on bad data derives from :class:`PCFGError`, which is what
the command line maps to exit status 2.
"""


class PCFGError(ValueError):
    """Base class for data and validation errors."""


class GrammarSyntaxError(PCFGError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class GrammarError(PCFGError):
    """A grammar is structurally unusable for the requested operation."""


class ImproperGrammarError(GrammarError):
    """A closure series (unary or left-corner) does not converge."""


class TreeSyntaxError(PCFGError):
    pass


class UnknownTerminalError(PCFGError):
    pass


class UnparseableError(PCFGError):
    pass


class SplitExhaustionError(PCFGError):
    pass


class RecordFormatError(PCFGError):
    pass
