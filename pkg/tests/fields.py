"""Grid fields with known derivatives, shared by the graph tests."""

import numpy as np

from anisocheck.graph_energy import GraphField

GRID = 129
SPACING = 2.0 / (GRID - 1)
ORIGIN = (-1.0, -1.0)


def harmonic_poly(eps=0.009):
    """eps * (x^2 - y^2 + (x^3 - 3 x y^2) / 2) and its exact derivatives."""

    def u(p):
        x, y = p[..., 0], p[..., 1]
        return eps * (x**2 - y**2 + 0.5 * (x**3 - 3 * x * y**2))

    def derivs(p):
        x, y = p[..., 0], p[..., 1]
        ux = eps * (2 * x + 1.5 * x**2 - 1.5 * y**2)
        uy = eps * (-2 * y - 3 * x * y)
        uxx = eps * (2 + 3 * x)
        uyy = -uxx
        uxy = eps * (-3 * y)
        return ux, uy, uxx, uyy, uxy

    return u, derivs


def harmonic_field(eps=0.009, grid=GRID):
    """The default amplitude keeps the pointwise |Du| below 0.05 on [-1, 1]^2."""
    u, _ = harmonic_poly(eps)
    return GraphField.from_function(u, (grid, grid), 2.0 / (grid - 1), ORIGIN)


def minimal_surface_operator(derivs, p):
    """div(Du / W) with W = sqrt(1 + |Du|^2), written out for a scalar u."""
    ux, uy, uxx, uyy, uxy = derivs(p)
    W = np.sqrt(1 + ux**2 + uy**2)
    return (uxx + uyy) / W - (ux * ux * uxx + 2 * ux * uy * uxy + uy * uy * uyy) / W**3, W


def affine_field(slope, offset, dims, spacing=SPACING, origin=ORIGIN):
    slope = np.asarray(slope, dtype=float)
    return GraphField.from_function(lambda p: p @ slope.T + offset, dims, spacing, origin)


def bump(p, centre, radius):
    """Smooth bump supported in the open ball B_radius(centre)."""
    s = np.sum((p - np.asarray(centre)) ** 2, axis=-1) / radius**2
    out = np.zeros_like(s)
    inside = s < 1
    out[inside] = np.exp(-1.0 / (1.0 - s[inside]))
    return out
