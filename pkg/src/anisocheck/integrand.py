"""Integrands on G(N, m), their manifold differential and stress tensors.

An integrand is a positive function of the plane.  Its differential enters
only through

    A(T) = T^perp dPsi(T) T,

the part of the (extension-dependent) ambient derivative that is intrinsic
to the manifold.  We never pick an extension: A(T) is rebuilt from
directional derivatives along the tangent basis, using
``<A(T), V> = D_V Psi(T)`` for every tangent V.

The stress is ``B(T) = Psi(T) T + A(T)``; the dual stress at the complement
is ``Psi(S) S^perp - A(S)^t``.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionError, IntegrandError
from .grassmann import (
    Plane,
    _plane_basis,
    _retract,
    _sample_planes,
    _tangent_basis,
    as_matrix,
)

FD_STEP = 1e-5
C1_STEP = 1e-3
C2_STEP = 1e-2
TOL_STRESS = 1e-8
POSITIVITY_SAMPLES = 1000


@dataclass(frozen=True, eq=False)
class Integrand:
    """A positive function on G(N, m).

    ``func`` maps a ``(K, N, N)`` stack of projections to ``K`` values.
    ``closed_form_A``, when given, maps the same stack to ``A(T)``; otherwise
    the differential is taken by central finite differences on the manifold.
    """

    ambient_dim: int
    plane_dim: int
    func: Callable[[np.ndarray], np.ndarray]
    label: str
    closed_form_A: Optional[Callable[[np.ndarray], np.ndarray]] = None
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        if not 0 < self.plane_dim < self.ambient_dim:
            raise DimensionError(f"need 0 < m < N, got {self.dims}")
        if self.validate:
            rng = np.random.default_rng(0x5EED)
            self.evaluate_batch(
                _sample_planes(rng, POSITIVITY_SAMPLES, self.ambient_dim, self.plane_dim)
            )

    @property
    def dims(self):
        return (self.ambient_dim, self.plane_dim)

    @property
    def codim(self):
        return self.ambient_dim - self.plane_dim

    @property
    def differential_mode(self):
        return "finite_difference" if self.closed_form_A is None else "closed_form"

    def evaluate_batch(self, Ts):
        Ts = np.asarray(Ts, dtype=float)
        if Ts.shape[-2:] != (self.ambient_dim,) * 2:
            raise DimensionError(f"{self.label} lives on G{self.dims}, got matrices {Ts.shape[-2:]}")
        flat = Ts.reshape((-1,) + Ts.shape[-2:])
        vals = np.asarray(self.func(flat), dtype=float).reshape(Ts.shape[:-2])
        if not np.all(np.isfinite(vals)):
            raise IntegrandError(f"{self.label}: non-finite value")
        if not np.all(vals > 0):
            raise IntegrandError(f"{self.label}: non-positive value {vals.min():.6g}")
        return vals

    def evaluate(self, T):
        self._check_plane(T)
        return float(self.evaluate_batch(as_matrix(T)[None])[0])

    __call__ = evaluate

    def _check_plane(self, T):
        if isinstance(T, Plane) and T.dims != self.dims:
            raise DimensionError(f"{self.label} lives on G{self.dims}, got a plane in G{T.dims}")


@dataclass(frozen=True, eq=False)
class StressTensor:
    matrix: np.ndarray
    base: Plane
    kind: str  # "primal" or "dual"

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)


# ---------------------------------------------------------------------------
# batched core
# ---------------------------------------------------------------------------

def _directional_derivatives(func, Ts, m, h):
    """Central differences of ``func`` along the tangent basis at each plane."""
    Ts = np.asarray(Ts, dtype=float)
    K, N, _ = Ts.shape
    Q, Qp = _plane_basis(Ts, m)
    Vs = _tangent_basis(Q, Qp)
    d = Vs.shape[1]
    Qb = np.broadcast_to(Q[:, None], (K, d, N, m))
    moved = np.stack([_retract(Qb, Vs, h), _retract(Qb, Vs, -h)])
    vals = np.asarray(func(moved.reshape(-1, N, N)), dtype=float).reshape(2, K, d)
    if not np.all(np.isfinite(vals)):
        raise IntegrandError("differentiation failed: non-finite evaluations")
    return (vals[0] - vals[1]) / (2 * h), Vs


def gradient_matrices(psi, Ts, h=FD_STEP):
    """A(T) = T^perp dPsi(T) T for a ``(K, N, N)`` stack of planes."""
    Ts = np.asarray(Ts, dtype=float)
    if psi.closed_form_A is not None:
        return np.asarray(psi.closed_form_A(Ts), dtype=float)
    D, Vs = _directional_derivatives(psi.evaluate_batch, Ts, psi.plane_dim, h)
    # Riemannian gradient g = sum_k D_k V_k; <A, V> = <g, V> forces A = 2 T^perp g T
    g = np.einsum("kd,kdab->kab", D, Vs)
    Tp = np.eye(Ts.shape[-1]) - Ts
    return 2.0 * Tp @ g @ Ts


def stress_parts(psi, Ts):
    """``(Psi(T), A(T))`` for a stack of planes."""
    Ts = np.asarray(Ts, dtype=float)
    return psi.evaluate_batch(Ts), gradient_matrices(psi, Ts)


def stress_matrices(psi, Ts):
    vals, A = stress_parts(psi, Ts)
    return vals[:, None, None] * np.asarray(Ts) + A


def dual_stress_matrices(psi, Ss):
    """B_{Psi*}(S^perp) = Psi(S) S^perp - A(S)^t for a stack of m-planes S."""
    Ss = np.asarray(Ss, dtype=float)
    vals, A = stress_parts(psi, Ss)
    Sp = np.eye(Ss.shape[-1]) - Ss
    return vals[:, None, None] * Sp - np.swapaxes(A, -1, -2)


def pairing_from_parts(Ts, vT, AT, Ss, vS, AS):
    BT = vT[:, None, None] * Ts + AT
    Sp = np.eye(Ss.shape[-1]) - Ss
    Bd = vS[:, None, None] * Sp - np.swapaxes(AS, -1, -2)
    return np.einsum("kab,kab->k", BT, Bd)


def pairings(psi, Ts, Ss):
    """<B(T_k), B*(S_k^perp)> for matched stacks of planes."""
    Ts = np.asarray(Ts, dtype=float)
    Ss = np.asarray(Ss, dtype=float)
    K = Ts.shape[0]
    vals, A = stress_parts(psi, np.concatenate([Ts, Ss]))
    return pairing_from_parts(Ts, vals[:K], A[:K], Ss, vals[K:], A[K:])


# ---------------------------------------------------------------------------
# public single-plane operations
# ---------------------------------------------------------------------------

def manifold_gradient(psi, T):
    """A(T) = T^perp dPsi(T) T, independent of any off-manifold extension."""
    psi._check_plane(T)
    return gradient_matrices(psi, as_matrix(T)[None])[0]


def stress(psi, T):
    """Anisotropic stress B(T) = Psi(T) T + A(T)."""
    psi._check_plane(T)
    return StressTensor(stress_matrices(psi, as_matrix(T)[None])[0], T, "primal")


def dual_stress(psi, S):
    """Stress of the dual integrand at S^perp, via dPsi*(S^perp) = -dPsi(S)."""
    psi._check_plane(S)
    return StressTensor(dual_stress_matrices(psi, as_matrix(S)[None])[0], S, "dual")


def pairing(psi, T, S):
    """<B(T), B*(S^perp)>; equals <T, S^perp> = ||T - S||^2 / 2 for the area."""
    psi._check_plane(T)
    psi._check_plane(S)
    return float(pairings(psi, as_matrix(T)[None], as_matrix(S)[None])[0])


def extension_stress(f, T, h=1e-6):
    """Stress computed from an explicit ambient extension ``f`` of the integrand.

    ``f`` must accept any ``(K, N, N)`` stack of matrices, not only
    projections.  The ambient gradient is taken by central differences over
    all N^2 entries; only its tangential part survives in the result.
    """
    T = as_matrix(T)
    N = T.shape[0]
    E = np.eye(N * N).reshape(N * N, N, N)
    vals = np.asarray(f(np.concatenate([T[None] + h * E, T[None] - h * E, T[None]])), dtype=float)
    D = ((vals[: N * N] - vals[N * N: 2 * N * N]) / (2 * h)).reshape(N, N)
    dpsi = D + D.T
    return vals[-1] * T + (np.eye(N) - T) @ dpsi @ T


# ---------------------------------------------------------------------------
# built-in integrands
# ---------------------------------------------------------------------------

def area(N, m):
    """The area functional Psi = 1; its stress is the plane itself."""
    return Integrand(
        N, m,
        func=lambda Ts: np.ones(Ts.shape[0]),
        label="area",
        closed_form_A=lambda Ts: np.zeros_like(np.asarray(Ts, dtype=float)),
    )


def restrict_integrand(psi, frame):
    """Phi(P) = Psi(M P M^t) on G(m+1, m) for an orthonormal N x (m+1) frame M."""
    M = np.asarray(frame, dtype=float)
    N, m = psi.dims
    if M.shape != (N, m + 1):
        raise DimensionError(f"frame must be {N} x {m + 1}, got {M.shape}")
    if np.linalg.norm(M.T @ M - np.eye(m + 1)) > 1e-10:
        raise DimensionError("frame columns are not orthonormal")
    M = M.copy()
    M.setflags(write=False)

    def func(Ps):
        return psi.evaluate_batch(M @ Ps @ M.T)

    return Integrand(m + 1, m, func=func, label=f"restrict({psi.label})")


@dataclass(frozen=True, eq=False)
class PolynomialPerturbation:
    """phi(T) = <T, D1> + <T, D2>^2 / 2 with fixed symmetric D1, D2.

    Defined for any square matrix, so it doubles as an explicit ambient
    extension in consistency checks.
    """

    D1: np.ndarray
    D2: np.ndarray

    @property
    def ambient_dim(self):
        return self.D1.shape[0]

    def __call__(self, Ts):
        Ts = np.asarray(Ts, dtype=float)
        a = np.einsum("...ab,ab->...", Ts, self.D1)
        b = np.einsum("...ab,ab->...", Ts, self.D2)
        return a + 0.5 * b * b

    @classmethod
    def linear(cls, D):
        D = np.asarray(D, dtype=float)
        return cls(D, np.zeros_like(D))

    @classmethod
    def random(cls, seed, N, quadratic=True):
        rng = np.random.default_rng(seed)
        mats = []
        for _ in range(2):
            G = rng.standard_normal((N, N))
            S = G + G.T
            mats.append(S / np.linalg.norm(S))
        if not quadratic:
            mats[1] = np.zeros((N, N))
        return cls(*mats)


def perturbed_area(phi, eps, N, m, label=None):
    """Psi' = 1 + eps * phi, differentiated by finite differences."""
    eps = float(eps)
    if eps < 0:
        raise ValueError("eps must be non-negative")

    def func(Ts):
        return 1.0 + eps * np.asarray(phi(Ts), dtype=float)

    return Integrand(N, m, func=func, label=label or f"perturbed-area:{eps!r}")


def c2_proxy(func, N, m, samples=200, seed=0):
    """Sampled stand-in for the C^2 norm of a function on G(N, m).

    Returns a dict with the sup of ``|f|`` (``c0``), of central first
    differences with step 1e-3 (``c1``) and of second differences with step
    1e-2 (``c2``) along the tangent basis, plus ``norm`` = max of the three.
    """
    rng = np.random.default_rng(seed)
    Ts = _sample_planes(rng, samples, N, m)
    Q, Qp = _plane_basis(Ts, m)
    Vs = _tangent_basis(Q, Qp)
    d = Vs.shape[1]
    Qb = np.broadcast_to(Q[:, None], (samples, d, N, m))

    def along(t):
        return np.asarray(func(_retract(Qb, Vs, t).reshape(-1, N, N)), dtype=float).reshape(samples, d)

    f0 = np.asarray(func(Ts), dtype=float)
    first = (along(C1_STEP) - along(-C1_STEP)) / (2 * C1_STEP)
    second = (along(C2_STEP) - 2 * f0[:, None] + along(-C2_STEP)) / C2_STEP**2
    out = {
        "c0": float(np.max(np.abs(f0))),
        "c1": float(np.max(np.abs(first))),
        "c2": float(np.max(np.abs(second))),
    }
    out["norm"] = max(out.values())
    return out


def integrand_from_label(label, N=4, m=2):
    """Registry used by the CLI.

    ``area``, ``perturbed-area:<eps>:<seed>`` and ``lp-pluecker:<p>`` (the
    last only on G(4, 2)).
    """
    head, *args = label.split(":")
    try:
        nums = [float(a) for a in args]
    except ValueError as exc:
        raise KeyError(f"malformed integrand label {label!r}") from exc
    if head == "area" and not args:
        return area(N, m)
    if head == "perturbed-area" and len(args) == 2 and nums[1].is_integer():
        phi = PolynomialPerturbation.random(int(nums[1]), N)
        return perturbed_area(phi, nums[0], N, m, label=label)
    if head == "lp-pluecker" and len(args) == 1:
        from .pluecker4 import lp_integrand

        if (N, m) != (4, 2):
            raise DimensionError("lp-pluecker integrands live on G(4, 2)")
        return lp_integrand(nums[0])
    raise KeyError(f"unknown integrand label {label!r}")
