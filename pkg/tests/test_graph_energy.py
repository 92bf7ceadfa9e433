import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from anisocheck import graph_energy as ge
from anisocheck import integrand as itg
from anisocheck.errors import DimensionError, GraphFieldError
from anisocheck.grassmann import _area_element, area_element
from anisocheck.pluecker4 import lp_integrand
from fields import affine_field, bump, harmonic_field, harmonic_poly, minimal_surface_operator

AREA32 = itg.area(3, 2)
seeds = st.integers(0, 2**32 - 1)


def perturbed32(eps=0.01, seed=1):
    return itg.perturbed_area(itg.PolynomialPerturbation.random(seed, 3), eps, 3, 2)


# --- grid fields -------------------------------------------------------------

def test_field_validation():
    with pytest.raises(GraphFieldError):
        ge.GraphField(np.zeros(5), 0.1, [0.0])
    with pytest.raises(GraphFieldError):
        ge.GraphField(np.zeros((5, 1)), -0.1, [0.0])
    with pytest.raises(GraphFieldError):
        ge.GraphField(np.zeros((5, 1)), 0.1, [0.0, 0.0])
    with pytest.raises(GraphFieldError):
        ge.GraphField(np.full((5, 1), np.nan), 0.1, [0.0])
    with pytest.raises(GraphFieldError):
        ge.GraphField(np.zeros((5, 1)), 0.1, [0.0], lipschitz_estimate=3.0)


def test_lipschitz_of_affine():
    u = affine_field([[3.0, -4.0]], 1.0, (9, 9))
    assert u.lipschitz_estimate == pytest.approx(5.0, rel=1e-12)
    np.testing.assert_allclose(u.gradient(), np.broadcast_to([[3.0, -4.0]], (9, 9, 1, 2)), atol=1e-12)


def test_text_round_trip(tmp_path):
    u = harmonic_field(grid=9)
    text = u.to_text()
    assert text.splitlines()[0] == f"gridfield 2 1 9 9 spacing={0.25!r} origin=-1.0,-1.0"
    back = ge.GraphField.from_text(text)
    np.testing.assert_array_equal(back.values, u.values)
    assert back.to_text() == text
    path = tmp_path / "u.txt"
    u.save(path)
    np.testing.assert_array_equal(ge.GraphField.load(path).values, u.values)


@pytest.mark.parametrize(
    "text",
    [
        "",
        "field 1 1 3 spacing=1 origin=0\n0\n0\n0\n",
        "gridfield 1 1 3 spacing=1\n0\n0\n0\n",
        "gridfield 1 1 3 spacing=1 origin=0\n0\n0\n",
        "gridfield 1 1 3 spacing=1 origin=0\n0\nx\n0\n",
        "gridfield 1 2 3 spacing=1 origin=0\n0\n0\n0\n",
        "gridfield one 1 3 spacing=1 origin=0\n0\n0\n0\n",
    ],
)
def test_malformed_text(text):
    with pytest.raises(GraphFieldError):
        ge.GraphField.from_text(text)


def test_gradient_needs_three_points():
    with pytest.raises(GraphFieldError):
        ge.GraphField(np.zeros((2, 2, 1)), 0.1, [0, 0]).gradient()


# --- energy density ------------------------------------------------------------

@given(arrays(np.float64, (1, 2), elements=st.floats(-5, 5)))
def test_area_density_is_area_element(X):
    assert ge.f_psi(AREA32, X) == pytest.approx(area_element(X), rel=1e-14)


def test_density_at_zero():
    psi = perturbed32(0.2)
    assert ge.f_psi(psi, np.zeros((1, 2))) == pytest.approx(psi(np.diag([1.0, 1, 0])), rel=1e-14)


def test_l2_pluecker_density():
    rng = np.random.default_rng(0)
    Xs = rng.uniform(-2, 2, (1000, 2, 2))
    np.testing.assert_allclose(ge.f_psi_batch(lp_integrand(2.0), Xs), _area_element(Xs), atol=1e-9)


def test_density_dims():
    with pytest.raises(DimensionError):
        ge.f_psi(itg.area(4, 2), np.zeros((1, 2)))


@given(st.floats(-10, 10))
def test_scalar_area_derivative(x):
    psi = itg.area(2, 1)
    assert ge.df_psi(psi, [[x]])[0, 0] == pytest.approx(x / np.sqrt(1 + x * x), abs=1e-9)


def test_area_derivative_at_zero():
    np.testing.assert_allclose(ge.df_psi(AREA32, np.zeros((1, 2))), 0.0, atol=1e-15)


@pytest.mark.parametrize("psi", [AREA32, perturbed32(0.1), lp_integrand(3.0)], ids=["area", "perturbed", "lp3"])
def test_gradient_check(psi):
    rng = np.random.default_rng(1)
    n, m = psi.dims[0] - psi.dims[1], psi.dims[1]
    Xs = rng.uniform(-1, 1, (200, n, m))
    Es = rng.standard_normal((200, n, m))
    Es /= np.linalg.norm(Es, axis=(1, 2), keepdims=True)
    D = ge.df_psi_batch(psi, Xs)
    h = 1e-5
    fd = (ge.f_psi_batch(psi, Xs + h * Es) - ge.f_psi_batch(psi, Xs - h * Es)) / (2 * h)
    assert np.max(np.abs(fd - np.einsum("kab,kab->k", D, Es))) <= 1e-6


def test_hessian_of_area_at_zero():
    H = ge.d2f_psi(AREA32, np.zeros((1, 2)))
    np.testing.assert_allclose(H.reshape(2, 2), np.eye(2), atol=1e-6)


# --- inclusion points ------------------------------------------------------------

def test_inclusion_point_area_zero():
    p = ge.build_inclusion_point(AREA32, np.zeros((1, 2)))
    np.testing.assert_allclose(p.X, 0)
    np.testing.assert_allclose(p.a_block, 0, atol=1e-12)
    np.testing.assert_allclose(p.b_block, -np.eye(2), atol=1e-12)


@given(seeds)
def test_inclusion_point_identities(seed):
    rng = np.random.default_rng(seed)
    psi = perturbed32(0.1, seed % 50)
    X = rng.uniform(-1, 1, (1, 2))
    p = ge.build_inclusion_point(psi, X)
    F = ge.f_psi(psi, X)
    np.testing.assert_array_equal(p.b_block, X.T @ p.a_block - F * np.eye(2))
    assert np.trace(p.b_block) == pytest.approx(np.sum(X * p.a_block) - 2 * F, abs=1e-12)
    np.testing.assert_allclose(p.a_block, ge.df_psi(psi, X), atol=1e-7)


@pytest.mark.parametrize("scale", [1e-1, 1e-2])
def test_inclusion_b_block_expansion(scale):
    X = scale * np.array([[0.6, -0.8]])
    p = ge.build_inclusion_point(AREA32, X)
    assert np.linalg.norm(p.b_block + np.eye(2)) <= 2 * scale**2


def test_inclusion_point_shape():
    with pytest.raises(DimensionError):
        ge.InclusionPoint(np.zeros((3, 2)), 1)


# --- mean curvature ------------------------------------------------------------------

def _affine_tolerance(u):
    # second differences of an affine field are rounding: a few ulps of |u| over h^2
    return 100 * np.finfo(float).eps * np.abs(u.values).max() / u.spacing**2


@pytest.mark.parametrize("psi", [AREA32, perturbed32(0.2)], ids=["area", "perturbed"])
def test_affine_graph_is_stationary(psi):
    u = affine_field([[0.3, -0.7]], 0.2, (33, 33), spacing=1 / 16)
    H = ge.mean_curvature_residual(psi, u)
    assert np.isnan(H[:2]).all() and np.isnan(H[:, -2:]).all()
    assert np.nanmax(np.abs(H)) <= _affine_tolerance(u)


def test_affine_codim_two():
    u = affine_field([[0.3, -0.7], [0.1, 0.5]], 0.0, (17, 17), spacing=1 / 8)
    H = ge.mean_curvature_residual(itg.perturbed_area(itg.PolynomialPerturbation.random(2, 4), 0.1, 4, 2), u)
    assert H.shape == (17, 17, 4)
    assert np.nanmax(np.abs(H)) <= _affine_tolerance(u)


def test_minimal_surface_oracle():
    u = harmonic_field()
    _, derivs = harmonic_poly()
    H = ge.mean_curvature_residual(AREA32, u)
    ms, W = minimal_surface_operator(derivs, u.points())
    interior = ~np.isnan(H[..., 2])
    assert np.linalg.norm(u.gradient(), axis=(-2, -1)).max() <= 0.05
    assert np.max(np.abs(H[..., 2] - ms / W)[interior]) <= 1e-6
    assert np.nanmax(np.abs(H)) <= 0.01


def test_tangential_part_is_orthogonal_to_graph():
    u = harmonic_field(0.3, grid=33)
    H = ge.mean_curvature_residual(perturbed32(0.2), u)
    Du = u.gradient()[..., 0, :]
    # H' = (-Du^t nu, nu) is normal to the tangent vectors (e_i, d_i u)
    tangent_dot = H[..., :2] + Du * H[..., 2:3]
    assert np.nanmax(np.abs(tangent_dot)) <= 1e-12


def _weak_form_residuals(psi, grid):
    def u_fn(p):
        return 0.3 * np.sin(p[..., 0]) * np.cos(0.7 * p[..., 1]) + 0.2 * p[..., 0] * p[..., 1]

    h = 2.0 / (grid - 1)
    u = ge.GraphField.from_function(u_fn, (grid, grid), h, (-1, -1))
    P = u.points()
    b = bump(P, (0.0, 0.0), 0.5)
    g1 = np.stack([b * np.cos(P[..., 1]), b * P[..., 0]], axis=-1)
    g2 = (b * np.sin(P[..., 0] + P[..., 1]))[..., None]
    Du = u.gradient()
    flat = Du.reshape(-1, 1, 2)
    A = ge.df_psi_batch(psi, flat).reshape(Du.shape)
    F = ge.f_psi_batch(psi, flat).reshape(u.dims)
    B = np.einsum("...ri,...rj->...ij", Du, A) - F[..., None, None] * np.eye(2)

    def jac(g):
        return np.stack([np.stack(np.gradient(g[..., i], h, axis=(0, 1)), -1) for i in range(g.shape[-1])], -2)

    H = np.nan_to_num(ge.mean_curvature_residual(psi, u))
    w = _area_element(flat).reshape(u.dims)[..., None] * h * h
    tangential = np.sum(B * jac(g1)) * h * h - np.sum(H[..., :2] * g1 * w)
    normal = np.sum(A * jac(g2)) * h * h + np.sum(H[..., 2:] * g2 * w)
    return abs(tangential), abs(normal)


def test_weak_form_second_order():
    psi = perturbed32(0.2, 3)
    coarse = _weak_form_residuals(psi, 41)
    fine = _weak_form_residuals(psi, 81)
    for c, f in zip(coarse, fine):
        assert f <= 5e-6
        assert c / f > 3.0  # O(h^2): halving h divides the residual by about 4


def test_curvature_needs_interior():
    with pytest.raises(GraphFieldError):
        ge.mean_curvature_residual(AREA32, affine_field([[1.0, 0.0]], 0, (4, 4)))


# --- excess ---------------------------------------------------------------------------

def test_excess_of_affine_is_zero():
    u = affine_field([[0.3, -0.7]], 0.2, (65, 65), spacing=1 / 32)
    # central differences of an affine field are exact up to rounding
    assert ge.excess(u, (0.0, 0.0), 0.5) <= 1e-28


def test_excess_quadratic_quarter_ratio():
    Q = np.array([[1.0, 0.3], [0.3, -0.5]])
    u = ge.GraphField.from_function(
        lambda p: 0.5 * np.einsum("...i,ij,...j->...", p, Q, p), (257, 257), 1 / 128, (-1, -1)
    )
    e1, e2 = ge.excess(u, (0, 0), 0.4), ge.excess(u, (0, 0), 0.2)
    assert e1 > 0
    assert e2 / e1 == pytest.approx(0.25, abs=0.01)


def test_excess_scaling_covariance():
    lam = 2.0

    def f(p):
        return np.sin(p[..., 0]) * np.cos(p[..., 1])

    u = ge.GraphField.from_function(f, (129, 129), 1 / 64, (-1, -1))
    ul = ge.GraphField.from_function(lambda p: f(lam * p) / lam, (129, 129), 1 / 128, (-0.5, -0.5))
    assert ge.excess(ul, (0, 0), 0.4 / lam) == pytest.approx(ge.excess(u, (0, 0), 0.4), rel=1e-3)


@pytest.mark.parametrize("x,r", [((0.9, 0.0), 0.5), ((0.0, 0.0), 0.01), ((0.0,), 0.5)])
def test_excess_domain_errors(x, r):
    with pytest.raises(GraphFieldError):
        ge.excess(harmonic_field(grid=33), x, r)


# --- Caccioppoli -------------------------------------------------------------------------

def test_caccioppoli_affine():
    u = affine_field([[0.3, -0.2]], 0.1, (65, 65), spacing=1 / 32)
    lhs, flat, curv = ge.caccioppoli_probe(AREA32, u, (0, 0), 0.2, np.array([[0.3, -0.2]]))
    assert lhs <= 1e-26 and flat <= 1e-26 and curv <= 1e-16


def test_caccioppoli_scaling():
    u = harmonic_field(0.02, grid=65)
    A = u.gradient()[ge._ball_mask(u, (0, 0), 0.2)].mean(axis=0)
    # k follows Lip(u), so hold it fixed to compare the same balls
    k = 2 * (1 + u.lipschitz_estimate)
    full = ge.caccioppoli_probe(AREA32, u, (0, 0), 0.2, A, k=k)
    half = ge.caccioppoli_probe(AREA32, u.scaled(0.5), (0, 0), 0.2, A / 2, k=k)
    assert half[0] == pytest.approx(full[0] / 4, rel=1e-12)
    assert half[1] == pytest.approx(full[1] / 4, rel=1e-12)


def test_caccioppoli_errors():
    u = harmonic_field(grid=65)
    with pytest.raises(GraphFieldError):
        ge.caccioppoli_probe(AREA32, u, (0, 0), 0.2, np.array([[5.0, 0.0]]))
    with pytest.raises(GraphFieldError):
        ge.caccioppoli_probe(AREA32, u, (0, 0), 0.45, np.zeros((1, 2)))
    with pytest.raises(DimensionError):
        ge.caccioppoli_probe(AREA32, u, (0, 0), 0.2, np.zeros((2, 1)))


# --- quasiconvexity and Legendre-Hadamard --------------------------------------------------

def test_cell_gradient_telescopes():
    rng = np.random.default_rng(2)
    _, _, phi = ge.random_testfield(rng, 2, 2, (17, 17), 1 / 16)
    np.testing.assert_allclose(ge.cell_gradient(phi).sum(axis=(0, 1)), 0.0, atol=1e-11)


def test_testfield_vanishes_on_boundary():
    phi = ge.sinusoidal_testfield([[1, 2]], [[0.5]], (9, 9), 1 / 8)
    for edge in (phi.values[0], phi.values[-1], phi.values[:, 0], phi.values[:, -1]):
        assert np.all(edge == 0.0)


def test_zero_testfield_gap():
    phi = ge.GraphField(np.zeros((9, 9, 1)), 1 / 8, (0, 0))
    assert ge.quasiconvexity_gap(perturbed32(0.1), np.array([[0.2, 0.1]]), phi, 0.7) == 0.0


def test_area_gap_vanishes_at_one():
    rng = np.random.default_rng(3)
    for _ in range(10):
        _, _, phi = ge.random_testfield(rng, 1, 2, (33, 33), 1 / 32)
        A = rng.uniform(-0.5, 0.5, (1, 2))
        assert abs(ge.quasiconvexity_gap(AREA32, A, phi, 1.0)) <= 1e-12
        assert ge.quasiconvexity_ratio(AREA32, A, phi) == pytest.approx(1.0, abs=1e-10)


def test_perturbed_gap_at_half():
    psi = perturbed32(0.01)
    rng = np.random.default_rng(4)
    for _ in range(20):
        _, _, phi = ge.random_testfield(rng, 1, 2, (33, 33), 1 / 32)
        assert ge.quasiconvexity_gap(psi, np.array([[0.3, -0.2]]), phi, 0.5) >= 0.0


def test_gap_rejects_boundary_values():
    phi = ge.GraphField(np.ones((9, 9, 1)), 1 / 8, (0, 0))
    with pytest.raises(GraphFieldError):
        ge.quasiconvexity_gap(AREA32, np.zeros((1, 2)), phi, 1.0)
    with pytest.raises(DimensionError):
        ge.quasiconvexity_gap(AREA32, np.zeros((2, 1)), ge.GraphField(np.zeros((9, 9, 1)), 1 / 8, (0, 0)), 1.0)


def test_lh_area_at_zero():
    assert ge.legendre_hadamard_min(AREA32, np.zeros((1, 2))) == pytest.approx(1.0, abs=1e-4)


def test_lh_positive_and_stable():
    rng = np.random.default_rng(5)
    psi_area = itg.area(5, 2)
    psi_pert = itg.perturbed_area(itg.PolynomialPerturbation.random(6, 5), 0.01, 5, 2)
    for _ in range(3):
        X = rng.standard_normal((3, 2))
        X *= rng.uniform(0.1, 1.0) / np.linalg.norm(X)
        a = ge.legendre_hadamard_min(psi_area, X, starts=200)
        assert a > 0
        assert ge.legendre_hadamard_min(psi_pert, X, starts=200) >= 0.5 * a


def test_lh_witness_reevaluates():
    psi = perturbed32(0.1)
    X = np.array([[0.4, -0.1]])
    value, witness = ge.legendre_hadamard_min(psi, X, starts=50, return_witness=True)
    assert ge.witness_value(psi, witness) == pytest.approx(value, abs=1e-12)
    with pytest.raises(KeyError):
        ge.witness_value(psi, {"quantity": "other"})
