"""Exception hierarchy shared by all modules."""


class CardioTwinError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(CardioTwinError, ValueError):
    """Input violates a documented precondition or range."""


class FormatError(ValidationError):
    """A file does not follow the expected layout."""


class GeometryError(ValidationError):
    """Mesh or electrode geometry is unusable."""


class DegenerateGeometryError(GeometryError):
    pass


class ResolutionError(GeometryError):
    pass


class DomainError(ValidationError):
    """Coordinate outside the domain of a mapping (e.g. RV free wall for AHA)."""


class NumericalError(CardioTwinError, ArithmeticError):
    """A numerical procedure failed (unreachable nodes, no viable candidate...)."""
