"""Exception hierarchy shared by all modules."""


class CoulombLabError(Exception):
    """Base class for every error raised by the package."""


class DomainError(CoulombLabError, ValueError):
    """A point lies outside the domain where an object is defined."""


class PotentialError(CoulombLabError, ValueError):
    """The potential violates the growth or positivity assumptions."""


class NoSupportError(CoulombLabError):
    """No support radius solves R V'(R) = 2 inside the search bracket."""


class SingularConfigurationError(CoulombLabError, ValueError):
    """Two points coincide (or coincide modulo a lattice)."""


class NumericalError(CoulombLabError):
    """A numerical routine failed (eigensolver, quadrature, ...)."""


class ConvergenceError(NumericalError):
    """An iterative solver hit its iteration cap."""


class DomainTooSmallError(NumericalError):
    """The computed support touches the boundary of the computational box."""


class StagnationError(NumericalError):
    """Line search collapsed; ``best`` holds the best iterate found."""

    def __init__(self, message, best=None, best_value=None):
        super().__init__(message)
        self.best = best
        self.best_value = best_value
