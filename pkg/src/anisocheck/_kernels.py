"""Hot inner loops, in two interchangeable flavours.

Every kernel exists as a vectorised numpy function and as a numba ``@njit``
loop.  The numba path is used when numba imports and ``ANISOCHECK_JIT`` is
not set to ``0``; both paths must agree to rounding (see
``tests/test_kernels.py`` and ``benchmarks/bench_kernels.py``).
"""

import os

import numpy as np

PLUECKER_PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))

_PAIR_I = np.array([i for i, _ in PLUECKER_PAIRS])
_PAIR_J = np.array([j for _, j in PLUECKER_PAIRS])

# relative column norm below which a Gram-Schmidt column counts as dependent
RANK_EPS = 1e-12


def _jit_requested():
    return os.environ.get("ANISOCHECK_JIT", "1").strip().lower() not in ("0", "false", "no", "off")


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------

def orthonormalize_numpy(A):
    A = np.array(A, dtype=float, copy=True)
    K, N, m = A.shape
    ok = np.ones(K, dtype=bool)
    for j in range(m):
        v = A[:, :, j].copy()
        ref = np.linalg.norm(v, axis=1)
        # two passes of modified Gram-Schmidt ("twice is enough")
        for _ in range(2):
            for i in range(j):
                qi = A[:, :, i]
                v -= np.sum(qi * v, axis=1)[:, None] * qi
        nrm = np.linalg.norm(v, axis=1)
        bad = ~(nrm > RANK_EPS * np.maximum(ref, 1e-300))
        ok &= ~bad
        nrm = np.where(bad, 1.0, nrm)
        A[:, :, j] = v / nrm[:, None]
    return A, ok


def wedge_coords_numpy(v1, v2):
    return v1[:, _PAIR_I] * v2[:, _PAIR_J] - v1[:, _PAIR_J] * v2[:, _PAIR_I]


def _antisym_numpy(c):
    V = np.zeros(c.shape[:-1] + (4, 4))
    V[..., _PAIR_I, _PAIR_J] = c
    V[..., _PAIR_J, _PAIR_I] = -c
    return V


def lp_stress_numpy(c, p):
    c = np.asarray(c, dtype=float)
    G = np.sum(np.abs(c) ** p, axis=-1) ** (1.0 / p)
    V = _antisym_numpy(c)
    # sign(0) * |0|**(p-1) = 0 for p > 1
    W = np.sign(V) * np.abs(V) ** (p - 1.0)
    return np.einsum("kaj,kbj->kab", W, V) / (G ** (p - 1.0))[:, None, None]


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional extra
    HAVE_NUMBA = False


if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def orthonormalize_numba(A):
        K, N, m = A.shape
        Q = A.copy()
        ok = np.ones(K, dtype=np.bool_)
        for k in range(K):
            for j in range(m):
                ref = 0.0
                for r in range(N):
                    ref += Q[k, r, j] * Q[k, r, j]
                ref = np.sqrt(ref)
                for _ in range(2):
                    for i in range(j):
                        dot = 0.0
                        for r in range(N):
                            dot += Q[k, r, i] * Q[k, r, j]
                        for r in range(N):
                            Q[k, r, j] -= dot * Q[k, r, i]
                nrm = 0.0
                for r in range(N):
                    nrm += Q[k, r, j] * Q[k, r, j]
                nrm = np.sqrt(nrm)
                if not nrm > RANK_EPS * max(ref, 1e-300):
                    ok[k] = False
                    nrm = 1.0
                for r in range(N):
                    Q[k, r, j] /= nrm
        return Q, ok

    @njit(cache=True, nogil=True)
    def wedge_coords_numba(v1, v2):
        K = v1.shape[0]
        out = np.empty((K, 6))
        for k in range(K):
            idx = 0
            for i in range(4):
                for j in range(i + 1, 4):
                    out[k, idx] = v1[k, i] * v2[k, j] - v1[k, j] * v2[k, i]
                    idx += 1
        return out

    @njit(cache=True, nogil=True)
    def lp_stress_numba(c, p):
        K = c.shape[0]
        out = np.zeros((K, 4, 4))
        V = np.zeros((4, 4))
        W = np.zeros((4, 4))
        for k in range(K):
            G = 0.0
            idx = 0
            for i in range(4):
                for j in range(i + 1, 4):
                    x = c[k, idx]
                    V[i, j] = x
                    V[j, i] = -x
                    a = abs(x)
                    G += a ** p
                    w = 0.0
                    if a > 0.0:
                        w = np.sign(x) * a ** (p - 1.0)
                    W[i, j] = w
                    W[j, i] = -w
                    idx += 1
            G = G ** (1.0 / p)
            scale = 1.0 / G ** (p - 1.0)
            for a_ in range(4):
                for b in range(4):
                    s = 0.0
                    for j in range(4):
                        s += W[a_, j] * V[b, j]
                    out[k, a_, b] = s * scale
        return out


def _pick(name):
    if HAVE_NUMBA and _jit_requested():
        return globals()[name + "_numba"]
    return globals()[name + "_numpy"]


def backend():
    """Name of the active kernel backend: ``"numba"`` or ``"numpy"``."""
    return "numba" if HAVE_NUMBA and _jit_requested() else "numpy"


def orthonormalize(A):
    """Orthonormalise the columns of each matrix in a ``(K, N, m)`` stack.

    Returns ``(Q, ok)`` where ``ok[k]`` is False if stack entry ``k`` was
    numerically rank deficient.
    """
    A = np.ascontiguousarray(A, dtype=float)
    return _pick("orthonormalize")(A)


def wedge_coords(v1, v2):
    """Plücker coordinates ``(v12, v13, v14, v23, v24, v34)`` of ``v1 ^ v2``, row-wise."""
    v1 = np.ascontiguousarray(v1, dtype=float)
    v2 = np.ascontiguousarray(v2, dtype=float)
    return _pick("wedge_coords")(v1, v2)


def lp_stress(c, p):
    """Closed-form l^p stress for a ``(K, 6)`` stack of Plücker coordinates."""
    c = np.ascontiguousarray(c, dtype=float)
    return _pick("lp_stress")(c, float(p))
