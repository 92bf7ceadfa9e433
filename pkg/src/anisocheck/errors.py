class AnisocheckError(Exception):
    """Base class for all errors raised by anisocheck."""


class DimensionError(AnisocheckError, ValueError):
    """Operands have incompatible (N, m) dimensions."""


class PlaneError(AnisocheckError, ValueError):
    """A matrix is not (close to) an orthogonal projection of the declared rank."""


class ChartError(AnisocheckError, ValueError):
    """A plane lies outside the domain of the graph chart."""


class RetractionError(AnisocheckError, ValueError):
    """The retraction lost rank."""


class IntegrandError(AnisocheckError, ValueError):
    """An integrand evaluated to a non-positive or non-finite value."""


class ConditionError(AnisocheckError, ValueError):
    """A condition check was called outside its preconditions."""


class GraphFieldError(AnisocheckError, ValueError):
    """Malformed grid field, or a probe that does not fit inside the grid."""


class PlueckerError(AnisocheckError, ValueError):
    """Invalid two-vector or norm for the G(4,2) specialisation."""
