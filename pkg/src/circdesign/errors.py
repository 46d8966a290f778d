"""Exception types shared across the package."""


class CircDesignError(Exception):
    """Base class for all package errors."""


class ZeroInformation(CircDesignError):
    """Raised when no treatment contrast is estimable (block size k <= 3 under
    an interference model, k <= 2 under the crossover model, or a single class
    that carries no information)."""


class NonConvergence(CircDesignError):
    """Raised when an iterative solver exhausts its iteration budget.

    The best iterate found so far is attached as ``best``.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class SingularInformation(CircDesignError):
    """Raised when the moment matrix F of a measure is singular."""


class CapExceeded(CircDesignError):
    """Raised when an enumeration would exceed its configured size cap."""
