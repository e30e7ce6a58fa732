"""Exception hierarchy shared by the library and the command line."""

from __future__ import annotations


class TriplePlateauError(Exception):
    """Base class for every error raised by this package."""


class GeometryError(TriplePlateauError, ValueError):
    """Degenerate or inconsistent geometric input."""


class NotAGraph(GeometryError):
    """Two branches do not form a single-valued graph over a side."""

    def __init__(self, message: str, side: str | None = None):
        super().__init__(message)
        self.side = side


class InvalidConnection(GeometryError):
    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class KnotBudgetTooSmall(TriplePlateauError, ValueError):
    pass


class NonConvergence(TriplePlateauError, RuntimeError):
    """Newton iteration stalled above tolerance."""

    def __init__(self, message: str, residual: float = float("nan"), side: str | None = None):
        super().__init__(message)
        self.residual = residual
        self.side = side


class GridMismatch(TriplePlateauError, ValueError):
    pass


class Case2NotSupported(TriplePlateauError, ValueError):
    """A jump angle is at least pi; only the three-acute-sector construction is built."""


class EpsilonTooLarge(TriplePlateauError, ValueError):
    pass


class ConfigError(TriplePlateauError, ValueError):
    def __init__(self, message: str, field: str | None = None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field
