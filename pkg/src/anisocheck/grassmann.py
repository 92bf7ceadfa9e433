"""The Grassmannian G(N, m) as the set of rank-m orthogonal projections.

A plane is stored as its N x N projection matrix.  Functions whose names
start with an underscore work on raw ``(K, N, N)`` stacks and are the ones
used inside scans; the public functions take and return :class:`Plane`
values.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .errors import ChartError, DimensionError, PlaneError, RetractionError

TOL_PLANE = 1e-9
TOL_CHART = 1e-7
# relative threshold on |det T'| for the graph chart domain
CHART_RANK_REL = 1e-8
# drift beyond this is not accepted as a plane at all
TOL_ACCEPT = 1e-6


def plane_drift(P, m):
    """Largest violation of symmetry, idempotence and trace (Frobenius)."""
    P = np.asarray(P, dtype=float)
    return max(
        np.linalg.norm(P - P.T),
        np.linalg.norm(P @ P - P),
        abs(np.trace(P) - m),
    )


def reproject(M, m):
    """Nearest rank-m projection: symmetrise, then clamp the spectrum to {0, 1}."""
    M = np.asarray(M, dtype=float)
    S = 0.5 * (M + np.swapaxes(M, -1, -2))
    _, vecs = np.linalg.eigh(S)
    Q = vecs[..., :, ::-1][..., :, :m]
    return Q @ np.swapaxes(Q, -1, -2)


@dataclass(frozen=True, eq=False)
class Plane:
    """An m-plane in R^N, held as a symmetric idempotent trace-m matrix."""

    matrix: np.ndarray
    plane_dim: int
    # the plane this one was built as the complement of, so that taking the
    # complement twice returns the original object bit for bit
    _source: Optional["Plane"] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        P = np.array(self.matrix, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise DimensionError(f"plane matrix must be square, got shape {P.shape}")
        N, m = P.shape[0], int(self.plane_dim)
        if not 0 < m < N:
            raise DimensionError(f"need 0 < m < N, got m={m}, N={N}")
        drift = plane_drift(P, m)
        if not np.isfinite(drift) or drift > TOL_ACCEPT:
            raise PlaneError(f"matrix is not a rank-{m} projection (drift {drift:.3e})")
        if drift > TOL_PLANE / 10:
            P = reproject(P, m)
        P.setflags(write=False)
        object.__setattr__(self, "matrix", P)
        object.__setattr__(self, "plane_dim", m)

    @property
    def ambient_dim(self):
        return self.matrix.shape[0]

    @property
    def codim(self):
        return self.ambient_dim - self.plane_dim

    @property
    def dims(self):
        return (self.ambient_dim, self.plane_dim)

    def basis(self):
        """Orthonormal N x m basis of the plane and N x n basis of its complement."""
        Q, Qp = _plane_basis(self.matrix[None], self.plane_dim)
        return Q[0], Qp[0]

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)

    def __repr__(self):
        return f"Plane(N={self.ambient_dim}, m={self.plane_dim})"


@dataclass(frozen=True, eq=False)
class TangentVector:
    """A symmetric matrix V at a plane T with T V T = 0 and T^perp V T^perp = 0."""

    base: Plane
    matrix: np.ndarray

    def __post_init__(self):
        V = np.array(self.matrix, dtype=float)
        T = self.base.matrix
        if V.shape != T.shape:
            raise DimensionError(f"tangent matrix shape {V.shape} != plane shape {T.shape}")
        Tp = np.eye(T.shape[0]) - T
        scale = max(1.0, np.linalg.norm(V))
        err = max(np.linalg.norm(V - V.T), np.linalg.norm(T @ V @ T), np.linalg.norm(Tp @ V @ Tp))
        if err > TOL_PLANE * scale * 10:
            raise PlaneError(f"matrix is not tangent at the base plane (error {err:.3e})")
        V.setflags(write=False)
        object.__setattr__(self, "matrix", V)

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)


def as_matrix(T):
    return T.matrix if isinstance(T, Plane) else np.asarray(T, dtype=float)


def project_tangent(T, L):
    """T^perp L T + (T^perp L T)^t, the tangent component of an arbitrary matrix."""
    T = as_matrix(T)
    K = (np.eye(T.shape[-1]) - T) @ L @ T
    return K + np.swapaxes(K, -1, -2)


# ---------------------------------------------------------------------------
# batched helpers on raw arrays
# ---------------------------------------------------------------------------

def _plane_basis(Ts, m):
    _, vecs = np.linalg.eigh(Ts)
    vecs = vecs[..., :, ::-1]
    return vecs[..., :, :m], vecs[..., :, m:]


def _projector(Q):
    return Q @ np.swapaxes(Q, -1, -2)


def _graph_chart(X):
    X = np.asarray(X, dtype=float)
    n, m = X.shape[-2:]
    eye = np.broadcast_to(np.eye(m), X.shape[:-2] + (m, m))
    M = np.concatenate([eye, X], axis=-2)
    G = eye + np.swapaxes(X, -1, -2) @ X
    return M @ np.linalg.solve(G, np.swapaxes(M, -1, -2))


def _area_element(X):
    X = np.asarray(X, dtype=float)
    m = X.shape[-1]
    G = np.eye(m) + np.swapaxes(X, -1, -2) @ X
    return np.sqrt(np.linalg.det(G))


def _sample_bases(rng, K, N, m):
    out = np.empty((K, N, m))
    todo = np.arange(K)
    while todo.size:
        Q, ok = _kernels.orthonormalize(rng.standard_normal((todo.size, N, m)))
        out[todo[ok]] = Q[ok]
        todo = todo[~ok]
    return out


def _sample_planes(rng, K, N, m):
    return _projector(_sample_bases(rng, K, N, m))


def _tangent_basis(Q, Qp):
    """Frobenius-orthonormal tangent basis (q_perp_i q_j^t + q_j q_perp_i^t)/sqrt(2).

    Shapes: ``Q`` (..., N, m), ``Qp`` (..., N, n) -> (..., n*m, N, N), ordered
    with the complement index outermost.
    """
    outer = np.einsum("...ai,...bj->...ijab", Qp, Q)
    n, m = Qp.shape[-1], Q.shape[-1]
    outer = outer.reshape(outer.shape[:-4] + (n * m,) + outer.shape[-2:])
    return (outer + np.swapaxes(outer, -1, -2)) / np.sqrt(2.0)


def _retract(Q, V, t):
    """Plane spanned by the columns of ``Q + t V Q``; raises on rank loss."""
    t = np.asarray(t, dtype=float)
    A = Q + t[..., None, None] * (V @ Q) if t.ndim else Q + t * (V @ Q)
    shape = A.shape
    # Q has unit singular values, so the step scale is 1 + |t| ||V||
    scale = 1.0 + np.abs(t) * np.linalg.norm(V, axis=(-2, -1))
    smin = np.linalg.svd(A, compute_uv=False)[..., -1]
    R, ok = _kernels.orthonormalize(A.reshape((-1,) + shape[-2:]))
    if not ok.all() or np.any(smin <= 1e-10 * scale):
        raise RetractionError("retraction collapsed rank; step too large")
    return _projector(R.reshape(shape))


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def graph_chart(X, n=None, m=None):
    """Plane h(X) = M(X) (M(X)^t M(X))^{-1} M(X)^t of the graph of X.

    Parameters
    ----------
    X : (n, m) array
        Slope matrix.
    n, m : int, optional
        Declared dimensions; a mismatch raises :class:`DimensionError`.

    Returns
    -------
    Plane
        The m-plane in R^(n+m) spanned by the columns of ``[I_m; X]``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionError(f"X must be an n x m matrix, got shape {X.shape}")
    if (n is not None and X.shape[0] != n) or (m is not None and X.shape[1] != m):
        raise DimensionError(f"X has shape {X.shape}, declared ({n}, {m})")
    return Plane(_graph_chart(X), X.shape[1])


def chart_inverse(T):
    """Slope matrix X with ``graph_chart(X) == T``.

    Raises :class:`ChartError` if the leading m x m block of T is
    (numerically) singular, i.e. the plane is vertical in this chart.
    """
    P = as_matrix(T)
    m = T.plane_dim if isinstance(T, Plane) else int(round(np.trace(P)))
    Tm = P[:m, :m]
    if abs(np.linalg.det(Tm)) <= CHART_RANK_REL * np.linalg.norm(P):
        raise ChartError("leading block is singular: plane is vertical in the graph chart")
    # T = [[G^-1, G^-1 X^t], [X G^-1, X G^-1 X^t]] with G = I + X^t X
    return np.linalg.solve(Tm.T, P[m:, :m].T).T


def area_element(X):
    """sqrt(det(I + X^t X)), the Jacobian of x -> (x, X x); always >= 1."""
    return float(_area_element(X))


def complement(T):
    """The orthogonal complement I - T as an (N - m)-plane; an exact involution."""
    if T._source is not None:
        return T._source
    return Plane(np.eye(T.ambient_dim) - T.matrix, T.codim, _source=T)


def plane_distance(T, S):
    """Frobenius distance ||T - S||; note <T, I - S> = ||T - S||^2 / 2."""
    if T.dims != S.dims:
        raise DimensionError(f"planes of different dimensions: {T.dims} vs {S.dims}")
    return float(np.linalg.norm(T.matrix - S.matrix))


def sample_plane(rng, N, m):
    """Haar-uniform m-plane in R^N drawn from ``rng`` (a numpy Generator)."""
    if not 0 < m < N:
        raise DimensionError(f"need 0 < m < N, got m={m}, N={N}")
    return Plane(_sample_planes(rng, 1, N, m)[0], m)


def tangent_basis(T):
    """m*(N-m) Frobenius-orthonormal tangent vectors spanning Tan_T G(N, m)."""
    Q, Qp = T.basis()
    return [TangentVector(T, V) for V in _tangent_basis(Q, Qp)]


def retract(T, V, t):
    """Curve through T with initial velocity V: re-orthonormalised basis perturbation."""
    if t == 0:
        return T
    Vm = V.matrix if isinstance(V, TangentVector) else np.asarray(V, dtype=float)
    Q, _ = T.basis()
    return Plane(_retract(Q, Vm, float(t)), T.plane_dim)
