"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes: configuration problems exit
with 2, numerical failures with 3, and unreachable targets with 4.
"""


class QmetroError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(QmetroError, ValueError):
    """Array shapes or operator dimensions are inconsistent."""


class DomainError(QmetroError, ValueError):
    """An argument lies outside the mathematically valid domain."""


class ConfigError(QmetroError, ValueError):
    """A scenario configuration failed validation.

    ``path`` carries the dotted key path of the offending entry when known.
    """

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class ConvergenceError(QmetroError, RuntimeError):
    """An iterative routine failed to reach its tolerance.

    ``details`` may carry residuals or the best value achieved.
    """

    def __init__(self, message, details=None):
        self.details = details or {}
        super().__init__(message)


class NonExistenceError(QmetroError, ValueError):
    """A logarithmic derivative does not exist for the given state.

    Raised when the support of the state does not contain the support of
    its derivative, in which case the RLD/LLD defining equations have no
    solution.
    """


class InvalidChannelError(QmetroError, ValueError):
    """Kraus operators do not form a (approximately) trace-preserving map."""


class InfeasibilityError(QmetroError, ValueError):
    """Constraints of an optimization problem cannot be satisfied."""


class DegeneracyError(QmetroError, RuntimeError):
    """A posterior or grid became degenerate (e.g. annihilated by data)."""


class UnsupportedError(QmetroError, ValueError):
    """The requested combination of options is not supported."""
