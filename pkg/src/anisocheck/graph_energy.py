"""Nonparametric energies on graphs and grid diagnostics.

For u: Omega in R^m -> R^n the graph energy density is

    F(X) = Psi(h(X)) * sqrt(det(I + X^t X)),    X = Du(x),

with ``h`` the graph chart of :mod:`anisocheck.grassmann`.  The first
variation of the graph pairs ``(B, A) = (X^t DF - F I, DF)`` with the
gradients of the tangential and normal parts of a test field.

All derivatives of F are central finite differences.  Grid fields live on a
uniform, axis-aligned grid with a single spacing.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, GraphFieldError
from .grassmann import _area_element, _graph_chart

DF_STEP = 1e-5
D2F_STEP = 1e-3
LH_STARTS = 1000
LH_SWEEPS = 60
QC_BOUNDARY_TOL = 1e-12


# ---------------------------------------------------------------------------
# grid fields
# ---------------------------------------------------------------------------

def _cell_jacobians(values, spacing):
    """Forward-difference Jacobians on every cell corner that has all neighbours."""
    m = values.ndim - 1
    base = tuple(slice(0, -1) for _ in range(m))
    cols = []
    for i in range(m):
        sl = list(base)
        sl[i] = slice(1, None)
        cols.append((values[tuple(sl)] - values[base]) / spacing)
    return np.stack(cols, axis=-1)


def _lipschitz(values, spacing):
    if min(values.shape[:-1]) < 2:
        return 0.0
    J = _cell_jacobians(values, spacing)
    return float(np.max(np.linalg.norm(J, ord=2, axis=(-2, -1))))


@dataclass(frozen=True, eq=False)
class GraphField:
    """Samples of u: Omega -> R^n on the grid ``origin + spacing * index``.

    ``values`` has shape ``dims + (n,)``; the domain dimension m is
    ``len(dims)``.  ``lipschitz_estimate`` is the largest operator norm of a
    forward-difference Jacobian over the grid cells.
    """

    values: np.ndarray
    spacing: float
    origin: np.ndarray
    lipschitz_estimate: float = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim < 2:
            raise GraphFieldError("values need shape dims + (n,)")
        o = np.array(self.origin, dtype=float).reshape(-1)
        if o.size != v.ndim - 1:
            raise GraphFieldError(f"origin has {o.size} coordinates, grid is {v.ndim - 1}-dimensional")
        h = float(self.spacing)
        if not (np.isfinite(h) and h > 0):
            raise GraphFieldError(f"spacing must be positive, got {self.spacing}")
        if not np.all(np.isfinite(v)):
            raise GraphFieldError("values must be finite")
        if min(v.shape[:-1]) < 1 or v.shape[-1] < 1:
            raise GraphFieldError(f"empty grid {v.shape}")
        lip = _lipschitz(v, h)
        if self.lipschitz_estimate is not None and abs(self.lipschitz_estimate - lip) > 1e-12 * max(1.0, lip):
            raise GraphFieldError("lipschitz_estimate does not match the stored values")
        v.setflags(write=False)
        o.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "spacing", h)
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "lipschitz_estimate", lip)

    @classmethod
    def from_function(cls, f, dims, spacing, origin):
        """Sample ``f`` (points of shape (..., m) -> values (..., n)) on the grid."""
        dims = tuple(int(d) for d in dims)
        origin = np.asarray(origin, dtype=float)
        axes = [origin[i] + spacing * np.arange(d) for i, d in enumerate(dims)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        vals = np.asarray(f(pts), dtype=float)
        if vals.shape == dims:
            vals = vals[..., None]
        return cls(vals, spacing, origin)

    @property
    def dims(self):
        return self.values.shape[:-1]

    @property
    def m(self):
        return self.values.ndim - 1

    @property
    def n(self):
        return self.values.shape[-1]

    @property
    def upper(self):
        return self.origin + self.spacing * (np.array(self.dims) - 1)

    def points(self):
        axes = [self.origin[i] + self.spacing * np.arange(d) for i, d in enumerate(self.dims)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def gradient(self):
        """Du by central differences, shape ``dims + (n, m)`` (second-order one-sided at edges)."""
        if min(self.dims) < 3:
            raise GraphFieldError("need at least 3 grid points per axis")
        grads = np.gradient(self.values, self.spacing, axis=tuple(range(self.m)), edge_order=2)
        if self.m == 1:
            grads = [grads]
        return np.stack(grads, axis=-1)

    def scaled(self, factor):
        return GraphField(self.values * factor, self.spacing, self.origin)

    def to_text(self):
        head = " ".join(
            ["gridfield", str(self.m), str(self.n)]
            + [str(d) for d in self.dims]
            + [f"spacing={self.spacing!r}", "origin=" + ",".join(repr(float(c)) for c in self.origin)]
        )
        rows = self.values.reshape(-1, self.n)
        body = "\n".join(" ".join(format(x, ".17g") for x in row) for row in rows)
        return head + "\n" + body + "\n"

    @classmethod
    def from_text(cls, text):
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise GraphFieldError("empty gridfield text")
        head = lines[0].split()
        try:
            if head[0] != "gridfield":
                raise GraphFieldError("missing 'gridfield' header")
            m, n = int(head[1]), int(head[2])
            dims = tuple(int(d) for d in head[3:3 + m])
            opts = dict(tok.split("=", 1) for tok in head[3 + m:])
            spacing = float(opts["spacing"])
            origin = [float(c) for c in opts["origin"].split(",")]
        except GraphFieldError:
            raise
        except (IndexError, ValueError, KeyError) as exc:
            raise GraphFieldError(f"malformed gridfield header: {lines[0]!r}") from exc
        if len(dims) != m or len(head) != 5 + m:
            raise GraphFieldError(f"malformed gridfield header: {lines[0]!r}")
        if len(lines) - 1 != int(np.prod(dims)):
            raise GraphFieldError(f"expected {int(np.prod(dims))} rows, got {len(lines) - 1}")
        try:
            rows = np.array([[float(x) for x in ln.split()] for ln in lines[1:]])
        except ValueError as exc:
            raise GraphFieldError("non-numeric gridfield row") from exc
        if rows.ndim != 2 or rows.shape[1] != n:
            raise GraphFieldError(f"every row must hold {n} values")
        return cls(rows.reshape(dims + (n,)), spacing, origin)

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())


# ---------------------------------------------------------------------------
# the energy density and its derivatives
# ---------------------------------------------------------------------------

def _check_dims(psi, n, m):
    if psi.dims != (n + m, m):
        raise DimensionError(f"integrand on G{psi.dims} cannot act on graphs R^{m} -> R^{n}")


def f_psi_batch(psi, Xs):
    """F(X) = Psi(h(X)) A(X) for a stack of (n, m) slope matrices."""
    Xs = np.asarray(Xs, dtype=float)
    n, m = Xs.shape[-2:]
    _check_dims(psi, n, m)
    flat = Xs.reshape((-1, n, m))
    out = psi.evaluate_batch(_graph_chart(flat)) * _area_element(flat)
    return out.reshape(Xs.shape[:-2])


def f_psi(psi, X):
    """Graph energy density Psi(h(X)) * sqrt(det(I + X^t X))."""
    return float(f_psi_batch(psi, np.asarray(X, dtype=float)[None])[0])


def _unit_directions(n, m):
    return np.eye(n * m).reshape(n * m, n, m)


def df_psi_batch(psi, Xs, h=DF_STEP):
    Xs = np.asarray(Xs, dtype=float)
    n, m = Xs.shape[-2:]
    E = _unit_directions(n, m)
    lead = Xs.shape[:-2]
    shifted = np.stack([Xs[..., None, :, :] + h * E, Xs[..., None, :, :] - h * E])
    vals = f_psi_batch(psi, shifted)
    return ((vals[0] - vals[1]) / (2 * h)).reshape(lead + (n, m))


def df_psi(psi, X, h=DF_STEP):
    """DF(X) by central differences, entry by entry."""
    return df_psi_batch(psi, np.asarray(X, dtype=float)[None], h)[0]


def d2f_psi_batch(psi, Xs, h=D2F_STEP):
    """Hessian of F as ``(..., n, m, n, m)`` from the four-point formula."""
    Xs = np.asarray(Xs, dtype=float)
    n, m = Xs.shape[-2:]
    d = n * m
    E = _unit_directions(n, m)
    lead = Xs.shape[:-2]
    i, j = np.triu_indices(d)
    shifts = np.stack([E[i] + E[j], E[i] - E[j], -E[i] + E[j], -E[i] - E[j]]) * h
    vals = f_psi_batch(psi, Xs[..., None, None, :, :] + shifts)  # lead + (4, pairs)
    hess_ij = (vals[..., 0, :] - vals[..., 1, :] - vals[..., 2, :] + vals[..., 3, :]) / (4 * h * h)
    H = np.zeros(lead + (d, d))
    H[..., i, j] = hess_ij
    H[..., j, i] = hess_ij
    return H.reshape(lead + (n, m, n, m))


def d2f_psi(psi, X, h=D2F_STEP):
    return d2f_psi_batch(psi, np.asarray(X, dtype=float)[None], h)[0]


@dataclass(frozen=True, eq=False)
class InclusionPoint:
    """Stacked matrix [X; A; B] of shape (2n + m, m)."""

    matrix: np.ndarray
    n: int

    def __post_init__(self):
        M = np.array(self.matrix, dtype=float)
        m = M.shape[1]
        if M.shape[0] != 2 * self.n + m:
            raise DimensionError(f"inclusion point must be {(2 * self.n + m, m)}, got {M.shape}")
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @property
    def X(self):
        return self.matrix[: self.n]

    @property
    def a_block(self):
        return self.matrix[self.n: 2 * self.n]

    @property
    def b_block(self):
        return self.matrix[2 * self.n:]


def build_inclusion_point(psi, X):
    """(X, DF(X), X^t DF(X) - F(X) I), a point of the inclusion set of F."""
    X = np.asarray(X, dtype=float)
    n, m = X.shape
    A = df_psi(psi, X)
    B = X.T @ A - f_psi(psi, X) * np.eye(m)
    return InclusionPoint(np.concatenate([X, A, B]), n)


# ---------------------------------------------------------------------------
# curvature, excess and the Caccioppoli probe
# ---------------------------------------------------------------------------

def _second_differences(u):
    """D^2 u by central differences, shape dims + (n, m, m); valid one cell in."""
    v, h, m = u.values, u.spacing, u.m
    out = np.full(v.shape + (m, m), np.nan)
    inner = tuple(slice(1, -1) for _ in range(m))

    def shift(offsets):
        return v[tuple(slice(1 + o, v.shape[a] - 1 + o) for a, o in enumerate(offsets))]

    for a in range(m):
        e = [0] * m
        e[a] = 1
        ea = tuple(e)
        out[inner + (slice(None), a, a)] = (shift(ea) - 2 * shift([0] * m) + shift(tuple(-x for x in ea))) / h**2
        for b in range(a + 1, m):
            f = [0] * m
            f[b] = 1
            pp = tuple(x + y for x, y in zip(e, f))
            pm = tuple(x - y for x, y in zip(e, f))
            mp = tuple(-x + y for x, y in zip(e, f))
            mm = tuple(-x - y for x, y in zip(e, f))
            val = (shift(pp) - shift(pm) - shift(mp) + shift(mm)) / (4 * h**2)
            out[inner + (slice(None), a, b)] = val
            out[inner + (slice(None), b, a)] = val
    return out


def _interior_mask(dims, width):
    mask = np.zeros(dims, dtype=bool)
    mask[tuple(slice(width, d - width) for d in dims)] = True
    return mask


def mean_curvature_residual(psi, u):
    """Strong-form Psi-mean curvature H' of the graph of u, shape ``dims + (m + n,)``.

    With ``A = DF(Du)`` and ``B = Du^t A - F I``,

        H' = [-div B ; div A] / sqrt(det(I + Du^t Du)),

    the sign convention making the first variation ``-int (H', g) dA``.  The
    divergence is taken through the chain rule, ``div A = D^2F(Du)[D^2 u]``,
    so that it vanishes to rounding for affine u; the identity
    ``div B = Du^t div A`` then gives the tangential part.  Points closer than
    two cells to the boundary are NaN (not computed).
    """
    m, n = u.m, u.n
    _check_dims(psi, n, m)
    if min(u.dims) < 5:
        raise GraphFieldError("need at least 5 grid points per axis for curvature")
    mask = _interior_mask(u.dims, 2)
    Du = u.gradient()[mask]
    D2u = _second_differences(u)[mask]
    H = d2f_psi_batch(psi, Du)
    div_a = np.einsum("krjsl,ksjl->kr", H, D2u)
    normal = div_a / _area_element(Du)[:, None]
    tangential = -np.einsum("kri,kr->ki", Du, normal)
    out = np.full(u.dims + (m + n,), np.nan)
    out[mask] = np.concatenate([tangential, normal], axis=-1)
    return out


def _ball_mask(u, x, r, shrink=0):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != u.m:
        raise GraphFieldError(f"centre needs {u.m} coordinates")
    if r < 2 * u.spacing:
        raise GraphFieldError(f"radius {r} below grid resolution (2 x spacing = {2 * u.spacing})")
    lo = u.origin + shrink * u.spacing
    hi = u.upper - shrink * u.spacing
    if np.any(x - r < lo - 1e-12) or np.any(x + r > hi + 1e-12):
        raise GraphFieldError("ball does not fit inside the admissible part of the grid")
    d = np.linalg.norm(u.points() - x, axis=-1)
    return d <= r


def excess(u, x, r):
    """Mean over grid points of B_r(x) of ||Du - mean(Du)||^2."""
    mask = _ball_mask(u, x, r)
    Du = u.gradient()[mask]
    return float(np.mean(np.sum((Du - Du.mean(axis=0)) ** 2, axis=(-2, -1))))


def caccioppoli_probe(psi, u, x, r, A, curvature=None, k=None):
    """The three terms of the graph Caccioppoli inequality on B_r(x) and B_kr(x).

    Returns ``(lhs, rhs_flat, rhs_curv)`` with k = 2 (1 + Lip u) unless
    ``k`` is given (useful to compare fields on the same balls):

    * lhs      = mean_{B_r} ||Du - A||^2
    * rhs_flat = mean_{B_kr} ||u - mean u - A (. - x)||^2 / r^2
    * rhs_curv = r^2 mean_{B_kr} ||H'||^2

    ``B_kr`` must stay two cells away from the boundary, where H' is
    defined.  A precomputed ``curvature`` field may be passed in.
    """
    A = np.asarray(A, dtype=float)
    if A.shape != (u.n, u.m):
        raise DimensionError(f"A must be {u.n} x {u.m}")
    L = u.lipschitz_estimate
    if np.linalg.norm(A, 2) > 2 * L + 1e-12:
        raise GraphFieldError(f"||A|| = {np.linalg.norm(A, 2):.6g} exceeds 2 Lip(u) = {2 * L:.6g}")
    k = 2.0 * (1.0 + L) if k is None else float(k)
    if k < 1:
        raise GraphFieldError(f"enlargement factor k = {k} must be at least 1")
    inner = _ball_mask(u, x, r)
    outer = _ball_mask(u, x, k * r, shrink=2)
    lhs = np.mean(np.sum((u.gradient()[inner] - A) ** 2, axis=(-2, -1)))
    vals = u.values[outer]
    offs = u.points()[outer] - np.asarray(x, dtype=float)
    dev = vals - vals.mean(axis=0) - offs @ A.T
    rhs_flat = np.mean(np.sum(dev**2, axis=-1)) / r**2
    H = mean_curvature_residual(psi, u) if curvature is None else curvature
    rhs_curv = r**2 * np.mean(np.sum(H[outer] ** 2, axis=-1))
    return float(lhs), float(rhs_flat), float(rhs_curv)


# ---------------------------------------------------------------------------
# quasiconvexity and Legendre-Hadamard
# ---------------------------------------------------------------------------

def cell_gradient(phi):
    """Gradient on cell centres: forward differences averaged over parallel edges.

    For a field vanishing on the boundary the cell gradients sum to zero
    exactly (telescoping), matching the zero-mean property of D(phi).
    """
    v, h, m = phi.values, phi.spacing, phi.m
    cols = []
    for i in range(m):
        lo = [slice(None)] * m
        hi = [slice(None)] * m
        lo[i], hi[i] = slice(0, -1), slice(1, None)
        diff = (v[tuple(hi)] - v[tuple(lo)]) / h
        for j in range(m):
            if j != i:
                sl_a = [slice(None)] * m
                sl_b = [slice(None)] * m
                sl_a[j], sl_b[j] = slice(0, -1), slice(1, None)
                diff = 0.5 * (diff[tuple(sl_a)] + diff[tuple(sl_b)])
        cols.append(diff)
    return np.stack(cols, axis=-1)


def _boundary_max(phi):
    v = phi.values
    worst = 0.0
    for i in range(phi.m):
        worst = max(worst, np.abs(np.take(v, 0, axis=i)).max(), np.abs(np.take(v, -1, axis=i)).max())
    return float(worst)


def _qc_integrals(psi, A, phi):
    A = np.asarray(A, dtype=float)
    if A.shape != (phi.n, phi.m):
        raise DimensionError(f"A must be {phi.n} x {phi.m}")
    if _boundary_max(phi) > QC_BOUNDARY_TOL * max(1.0, np.abs(phi.values).max()):
        raise GraphFieldError("test field must vanish on the boundary")
    G = cell_gradient(phi)
    cells = A + G.reshape((-1,) + A.shape)
    vol = phi.spacing**phi.m
    # sum of per-cell differences: exact zero for phi = 0
    F_int = vol * np.sum(f_psi_batch(psi, cells) - f_psi(psi, A))
    a_int = vol * np.sum(_area_element(cells) - float(_area_element(A)))
    return float(F_int), float(a_int)


def quasiconvexity_gap(psi, A, testfield, alpha):
    """int F(A + D phi) - F(A) - alpha int area(A + D phi) - area(A), midpoint rule on cells."""
    F_int, a_int = _qc_integrals(psi, A, testfield)
    return F_int - alpha * a_int


def quasiconvexity_ratio(psi, A, testfield):
    """Largest alpha with a non-negative gap for this test field."""
    F_int, a_int = _qc_integrals(psi, A, testfield)
    return F_int / a_int if a_int > 0 else np.inf


def sinusoidal_testfield(modes, coeffs, dims, spacing, origin=None):
    """phi = sum_k c_k prod_i sin(pi j_ki t_i), t the [0, 1] box coordinates.

    ``modes`` is an integer array (K, m); ``coeffs`` is (K, n).  The field
    vanishes on the box boundary up to rounding of sin(pi j).
    """
    modes = np.asarray(modes, dtype=int)
    coeffs = np.asarray(coeffs, dtype=float)
    dims = tuple(int(d) for d in dims)
    origin = np.zeros(len(dims)) if origin is None else np.asarray(origin, dtype=float)
    grids = np.meshgrid(*[np.arange(d) / (d - 1) for d in dims], indexing="ij")
    vals = np.zeros(dims + (coeffs.shape[1],))
    for j, c in zip(modes, coeffs):
        prod = np.ones(dims)
        for t, ji in zip(grids, j):
            prod = prod * np.sin(np.pi * ji * t)
        vals += prod[..., None] * c
    for i in range(len(dims)):
        idx = [slice(None)] * len(dims)
        idx[i] = 0
        vals[tuple(idx)] = 0.0
        idx[i] = -1
        vals[tuple(idx)] = 0.0
    return GraphField(vals, spacing, origin)


def random_testfield(rng, n, m, dims, spacing, terms=3, max_mode=4, amplitude=0.1):
    modes = rng.integers(1, max_mode + 1, size=(terms, m))
    coeffs = amplitude * rng.standard_normal((terms, n))
    return modes, coeffs, sinusoidal_testfield(modes, coeffs, dims, spacing)


def _rank_one_form(H, a, b):
    return np.einsum("...rjsk,...r,...j,...s,...k->...", H, a, b, a, b)


def legendre_hadamard_min(psi, X, starts=LH_STARTS, seed=0, return_witness=False):
    """min over unit a, b of D^2F(X)[a b^t, a b^t], by alternating eigen-sweeps.

    Each sweep fixes one factor and replaces the other by the lowest
    eigenvector of the resulting quadratic form; ``starts`` random initial
    pairs run in parallel as one batch.
    """
    X = np.asarray(X, dtype=float)
    n, m = X.shape
    H = d2f_psi(psi, X)
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((starts, n))
    b = rng.standard_normal((starts, m))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    b /= np.linalg.norm(b, axis=1, keepdims=True)
    for _ in range(LH_SWEEPS):
        Ka = np.einsum("rjsk,tj,tk->trs", H, b, b)
        a = np.linalg.eigh(0.5 * (Ka + np.swapaxes(Ka, 1, 2)))[1][:, :, 0]
        Kb = np.einsum("rjsk,tr,ts->tjk", H, a, a)
        b = np.linalg.eigh(0.5 * (Kb + np.swapaxes(Kb, 1, 2)))[1][:, :, 0]
    vals = _rank_one_form(H[None], a, b)
    i = int(np.argmin(vals))
    if return_witness:
        return float(vals[i]), {"quantity": "lh_min", "X": X, "a": a[i], "b": b[i]}
    return float(vals[i])


def witness_value(psi, witness):
    """Re-evaluate LH and QC witnesses (see :func:`anisocheck.conditions.witness_value`)."""
    if witness["quantity"] == "lh_min":
        X = np.asarray(witness["X"], dtype=float)
        H = d2f_psi(psi, X)
        return float(_rank_one_form(H, np.asarray(witness["a"]), np.asarray(witness["b"])))
    if witness["quantity"] == "qc_gap":
        phi = sinusoidal_testfield(witness["modes"], witness["coeffs"], witness["dims"], witness["spacing"])
        return quasiconvexity_ratio(psi, witness["A"], phi)
    raise KeyError(f"unknown witness quantity {witness['quantity']!r}")
