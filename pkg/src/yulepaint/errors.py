"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes, so library code should raise the most
specific class that applies instead of bare ValueError/RuntimeError.
"""


class YulepaintError(Exception):
    """Base class for all package errors."""


class DomainError(YulepaintError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class NumericsError(YulepaintError, RuntimeError):
    """A solver or quadrature failed to reach its requested tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class ResourceError(YulepaintError, RuntimeError):
    """A simulation would exceed an explicit node/memory budget."""


class UsageError(YulepaintError, ValueError):
    """Malformed configuration or command-line input."""
