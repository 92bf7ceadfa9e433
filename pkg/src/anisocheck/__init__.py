"""Numerical verification of anisotropic stress tensors and ellipticity conditions.

Planes of G(N, m) are projection matrices (:mod:`~anisocheck.grassmann`),
integrands and their stresses live in :mod:`~anisocheck.integrand`, the
condition checkers in :mod:`~anisocheck.conditions`, graph diagnostics in
:mod:`~anisocheck.graph_energy` and the G(4, 2) Plücker family in
:mod:`~anisocheck.pluecker4`.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AnisocheckError,
    ChartError,
    ConditionError,
    DimensionError,
    GraphFieldError,
    IntegrandError,
    PlaneError,
    PlueckerError,
    RetractionError,
)
from .grassmann import (  # noqa: E402
    Plane,
    TangentVector,
    area_element,
    chart_inverse,
    complement,
    graph_chart,
    plane_distance,
    retract,
    sample_plane,
    tangent_basis,
)
from .integrand import (  # noqa: E402
    Integrand,
    StressTensor,
    area,
    dual_stress,
    integrand_from_label,
    manifold_gradient,
    pairing,
    perturbed_area,
    restrict_integrand,
    stress,
)

__all__ = [
    "AnisocheckError", "ChartError", "ConditionError", "DimensionError", "GraphFieldError",
    "IntegrandError", "PlaneError", "PlueckerError", "RetractionError",
    "Plane", "TangentVector", "area_element", "chart_inverse", "complement", "graph_chart",
    "plane_distance", "retract", "sample_plane", "tangent_basis",
    "Integrand", "StressTensor", "area", "dual_stress", "integrand_from_label",
    "manifold_gradient", "pairing", "perturbed_area", "restrict_integrand", "stress",
]
