"""G(4, 2) in Plücker coordinates and the l^p family of integrands.

A 2-plane in R^4 is a unit simple 2-vector up to sign, with coordinates
``(v12, v13, v14, v23, v24, v34)``.  For an even, 1-homogeneous norm ``g`` on
R^6 the integrand is ``Psi_g(T) = g(tau / |tau|)`` and its stress has the
closed form ``B_g(tau) = Gamma(tau) V(tau)^t`` where ``V`` is the 4 x 4
antisymmetric matrix of coordinates and ``Gamma`` the antisymmetric matrix of
partial derivatives of ``g``.
"""

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import _kernels
from .errors import PlueckerError
from .grassmann import Plane, _plane_basis, as_matrix, reproject
from .integrand import Integrand

PAIRS = _kernels.PLUECKER_PAIRS
PAIR_LABELS = tuple(f"{i + 1}{j + 1}" for i, j in PAIRS)
TOL_PL = 1e-10
# atoms with a coordinate this small sit where l^p (p < 2) is not C^2
NEAR_ZERO = 1e-8


def antisym(coords):
    """4 x 4 antisymmetric matrix with V[i, j] = v_ij for i < j."""
    c = np.asarray(coords, dtype=float)
    V = np.zeros(c.shape[:-1] + (4, 4))
    for k, (i, j) in enumerate(PAIRS):
        V[..., i, j] = c[..., k]
        V[..., j, i] = -c[..., k]
    return V


def pluecker_relation(coords):
    c = np.asarray(coords, dtype=float)
    return c[..., 0] * c[..., 5] - c[..., 1] * c[..., 4] + c[..., 2] * c[..., 3]


def canonical_sign(coords):
    """Representative of +-tau whose first non-negligible coordinate is positive."""
    c = np.array(coords, dtype=float)
    flat = c.reshape(-1, 6)
    for row in flat:
        nz = np.flatnonzero(np.abs(row) > TOL_PL * max(np.abs(row).max(), 1e-300))
        if nz.size and row[nz[0]] < 0:
            row *= -1
    return flat.reshape(c.shape)


@dataclass(frozen=True, eq=False)
class TwoVector:
    coords: np.ndarray

    def __post_init__(self):
        c = np.array(self.coords, dtype=float).reshape(-1)
        if c.shape != (6,):
            raise PlueckerError(f"need 6 coordinates, got {c.size}")
        if abs(pluecker_relation(c)) > TOL_PL * max(c @ c, 1e-300):
            raise PlueckerError("coordinates violate the Plücker relation: not a simple 2-vector")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @classmethod
    def project(cls, coords):
        """Nearest simple 2-vector: keep the dominant rotation block of V."""
        V = antisym(coords)
        vals, vecs = np.linalg.eigh(V @ V.T)
        P = vecs[:, 2:] @ vecs[:, 2:].T
        W = P @ V @ P
        return cls(np.array([W[i, j] for i, j in PAIRS]))

    @property
    def norm(self):
        return float(np.linalg.norm(self.coords))

    def normalized(self):
        return TwoVector(self.coords / self.norm)

    def __neg__(self):
        return TwoVector(-self.coords)

    def __array__(self, dtype=None, copy=None):
        return self.coords if dtype is None else self.coords.astype(dtype)


def wedge(v1, v2):
    """Two-vector v1 ^ v2 with coordinates the 2 x 2 minors of [v1 v2]."""
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    if v1.shape != (4,) or v2.shape != (4,):
        raise PlueckerError("wedge needs two vectors in R^4")
    c = _kernels.wedge_coords(v1[None], v2[None])[0]
    if np.linalg.norm(c) <= TOL_PL * max(np.linalg.norm(v1) * np.linalg.norm(v2), 1e-300):
        raise PlueckerError("vectors are linearly dependent")
    return TwoVector(c)


def plane_of(tau):
    """Projection onto the plane of a simple tau; V V^t = |tau|^2 T."""
    tau = tau if isinstance(tau, TwoVector) else TwoVector(tau)
    n2 = tau.coords @ tau.coords
    if n2 == 0:
        raise PlueckerError("zero two-vector has no plane")
    V = antisym(tau.coords)
    return Plane(reproject(V @ V.T / n2, 2), 2)


def _unit_coords(Ts):
    """Unit Plücker coordinates (sign arbitrary) of a stack of 2-planes in R^4."""
    Q, _ = _plane_basis(np.asarray(Ts, dtype=float), 2)
    Q = np.ascontiguousarray(Q)
    return _kernels.wedge_coords(Q[:, :, 0], Q[:, :, 1])


def plucker_coords(T):
    """Canonical-sign unit two-vector of a plane in G(4, 2)."""
    return TwoVector(canonical_sign(_unit_coords(as_matrix(T)[None])[0]))


def lp_norm(p):
    def g(x):
        return np.sum(np.abs(x) ** p, axis=-1) ** (1.0 / p)

    return g


def lp_norm_grad(p):
    def dg(x):
        x = np.asarray(x, dtype=float)
        G = lp_norm(p)(x)
        return np.sign(x) * np.abs(x) ** (p - 1.0) / (G ** (p - 1.0))[..., None]

    return dg


def check_even_homogeneous(g, samples=1000, seed=0, tol=1e-9):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((samples, 6))
    gx = np.asarray(g(x), dtype=float)
    scale = np.maximum(1.0, np.abs(gx))
    if np.max(np.abs(np.asarray(g(-x)) - gx) / scale) > tol:
        raise PlueckerError("norm is not even")
    if np.max(np.abs(np.asarray(g(2 * x)) - 2 * gx) / scale) > tol:
        raise PlueckerError("norm is not 1-homogeneous")


def b_g(dg, tau):
    """Closed-form stress B_g(tau) = Gamma V^t for a unit simple tau.

    ``dg`` maps (..., 6) coordinates to the (..., 6) partial derivatives.
    """
    c = np.asarray(tau, dtype=float)
    return antisym(np.asarray(dg(c), dtype=float)) @ np.swapaxes(antisym(c), -1, -2)


def psi_from_norm(g, label, dg=None):
    """Integrand Psi_g(T) = g(unit Plücker coordinates of T) on G(4, 2).

    With ``dg`` (partial derivatives of g) the integrand carries the closed
    form ``A(T) = B_g(tau) - Psi(T) T``; otherwise it is differentiated
    numerically like any other integrand.
    """
    check_even_homogeneous(g)

    def func(Ts):
        return np.asarray(g(_unit_coords(Ts)), dtype=float)

    closed = None
    if dg is not None:

        def closed(Ts):
            Ts = np.asarray(Ts, dtype=float)
            c = _unit_coords(Ts)
            return b_g(dg, c) - np.asarray(g(c))[:, None, None] * Ts

    return Integrand(4, 2, func=func, label=label, closed_form_A=closed)


def _check_p(p):
    p = float(p)
    if not (1.0 < p < np.inf):
        raise PlueckerError(f"need 1 < p < inf, got p={p}")
    return p


def lp_b(tau, p):
    """Closed-form l^p stress sum_j sign(v_aj)|v_aj|^(p-1) v_bj / |tau|_p^(p-1)."""
    p = _check_p(p)
    c = np.asarray(tau, dtype=float)
    return _kernels.lp_stress(c.reshape(-1, 6), p).reshape(c.shape[:-1] + (4, 4))


def lp_integrand(p):
    """Psi(T) = |tau|_p on G(4, 2); p = 2 is the area functional."""
    p = _check_p(p)
    g = lp_norm(p)

    def func(Ts):
        return g(_unit_coords(Ts))

    def closed(Ts):
        Ts = np.asarray(Ts, dtype=float)
        c = _unit_coords(Ts)
        return _kernels.lp_stress(c, p) - g(c)[:, None, None] * Ts

    check_even_homogeneous(g)
    return Integrand(4, 2, func=func, label=f"lp-pluecker:{p!r}", closed_form_A=closed)


# ---------------------------------------------------------------------------
# even measures and the moment / subminor analysis
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EvenMeasure4:
    """Even probability measure on unit simple 2-vectors, stored on the quotient."""

    coords: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        c = np.array(self.coords, dtype=float).reshape(-1, 6)
        w = np.array(self.weights, dtype=float).reshape(-1)
        if c.shape[0] != w.size or w.size == 0:
            raise PlueckerError("need one weight per atom")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise PlueckerError("weights must be positive and sum to 1")
        norms = np.linalg.norm(c, axis=1)
        if np.any(np.abs(norms - 1.0) > TOL_PL):
            raise PlueckerError("atoms must be unit two-vectors")
        if np.any(np.abs(pluecker_relation(c)) > TOL_PL):
            raise PlueckerError("atoms must be simple two-vectors")
        c = canonical_sign(c)
        c.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "coords", c)
        object.__setattr__(self, "weights", w)

    @classmethod
    def dirac(cls, tau):
        return cls(np.asarray(tau, dtype=float)[None], [1.0])

    @property
    def planes(self):
        return np.stack([plane_of(TwoVector(c)).matrix for c in self.coords])

    def near_zero_atoms(self):
        """Indices of atoms with a coordinate below 1e-8 in magnitude."""
        return np.flatnonzero(np.any(np.abs(self.coords) < NEAR_ZERO, axis=1))


def random_even_measure(rng, max_atoms=8):
    """Random atoms (Haar planes) with Dirichlet weights."""
    k = int(rng.integers(1, max_atoms + 1))
    from .grassmann import _sample_bases

    Q = _sample_bases(rng, k, 4, 2)
    c = _kernels.wedge_coords(np.ascontiguousarray(Q[:, :, 0]), np.ascontiguousarray(Q[:, :, 1]))
    w = rng.dirichlet(np.ones(k))
    w = w / w.sum()
    return EvenMeasure4(c, w)


def moment_matrix(mu, p):
    """Moments a_ij = int |v_ij|^p dmu' and sigma(mu') = A(mu).

    ``mu'`` has density |tau|_p^(1-p) with respect to ``mu``; ``a`` is the
    symmetric 4 x 4 matrix with zero diagonal.
    """
    p = _check_p(p)
    c, w = mu.coords, mu.weights
    G = lp_norm(p)(c)
    w_lift = w / G ** (p - 1.0)
    a = np.zeros((4, 4))
    for k, (i, j) in enumerate(PAIRS):
        a[i, j] = a[j, i] = float(np.sum(w_lift * np.abs(c[:, k]) ** p))
    sigma = np.einsum("k,kab->ab", w, _kernels.lp_stress(c, p))
    return a, sigma


def subminor_analysis(mu, p, tol=1e-10, strict=1e-6):
    """Principal 2 x 2 subminors S_ij of sigma(mu') and the rank >= 2 verdict.

    Returns a dict with the six determinants (keyed ``"12"`` ... ``"34"``),
    the moment matrix, the Hölder bounds on the off-diagonal entries, and
    ``rank_at_least_2``: every det >= -tol and at least one det > strict.
    """
    a, sigma = moment_matrix(mu, p)
    q = (p - 1.0) / p
    dets, offdiag, holder = {}, {}, {}
    for i, j in combinations(range(4), 2):
        S = sigma[np.ix_([i, j], [i, j])]
        key = f"{i + 1}{j + 1}"
        dets[key] = float(np.linalg.det(S))
        others = [s for s in range(4) if s not in (i, j)]
        offdiag[key] = (float(S[0, 1]), float(S[1, 0]))
        holder[key] = (
            float(sum(a[i, s] ** q * a[j, s] ** (1 - q) for s in others)),
            float(sum(a[j, s] ** q * a[i, s] ** (1 - q) for s in others)),
        )
    values = np.array(list(dets.values()))
    return {
        "p": p,
        "dets": dets,
        "a": a,
        "sigma": sigma,
        "offdiag": offdiag,
        "holder_bounds": holder,
        "rank_at_least_2": bool(np.all(values >= -tol) and np.any(values > strict)),
        "near_zero_atoms": mu.near_zero_atoms().tolist(),
    }
