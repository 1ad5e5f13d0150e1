"""Exception hierarchy shared by every ppsmeter module."""

from __future__ import annotations


class PPSError(Exception):
    """Base class for all ppsmeter errors."""


class DegenerateObservable(PPSError):
    """The observable has no spread of eigenvalues to measure."""


class VanishingPostselection(PPSError):
    """Postselection probability is at or below the floor; conditional moments are undefined."""


class OrthogonalPPS(PPSError):
    """Pre- and postselected states are orthogonal, so the weak value is undefined."""


class NumericalFailure(PPSError):
    """A non-finite intermediate or a materially negative variance was produced."""


class DegenerateSpread(PPSError):
    """A pointer spread is zero, so a signal-to-noise ratio cannot be formed."""


class InsensitivePointer(PPSError):
    """The pointer shift does not respond to g; the estimation error is infinite."""


class OutOfRegime(PPSError):
    """An approximation was requested outside its stated validity range."""


class GridTooCoarse(PPSError):
    """The quadrature grid cannot resolve the phase oscillation of the pointer state."""


class NoConvergence(PPSError):
    """The optimizer hit its evaluation budget; the best point found is attached."""

    def __init__(self, message: str, best_point=None, best_value=None):
        super().__init__(message)
        self.best_point = best_point
        self.best_value = best_value


class ConfigError(PPSError):
    """Invalid run configuration. ``field`` names the offending key when known."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        where = []
        if field:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.field = field
        self.line = line
