"""Exception hierarchy shared by all modules."""


class GaussTorsionError(Exception):
    """Base class for errors raised by the package."""


class DomainError(GaussTorsionError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class NumericalError(GaussTorsionError, ArithmeticError):
    """An iterative method failed to meet its convergence contract."""


class GeometryError(GaussTorsionError, ValueError):
    """A polygon, mesh or family calibration is degenerate or invalid."""
