import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from anisocheck import conditions as cond
from anisocheck import integrand as itg
from anisocheck._parallel import CHUNK, chunk_sizes, map_chunks, thread_count
from anisocheck.errors import ConditionError, DimensionError
from anisocheck.grassmann import _sample_planes, retract, sample_plane, tangent_basis
from anisocheck.pluecker4 import lp_integrand

P0 = np.diag([1.0, 1, 0, 0])


def constant_stress(M, label):
    """Psi = 1 with a stress frozen at M: every averaged stress equals M."""
    M = np.asarray(M, dtype=float)
    return itg.Integrand(4, 2, func=lambda Ts: np.ones(len(Ts)), label=label,
                         closed_form_A=lambda Ts: M - np.asarray(Ts))


def doubled_stress():
    """B(T) = 2 T, so lambda_max(B) / Psi - 1 = 1 = 1/(m - 1) on G(4, 2)."""
    return itg.Integrand(4, 2, func=lambda Ts: np.ones(len(Ts)), label="doubled",
                         closed_form_A=lambda Ts: np.asarray(Ts, dtype=float).copy())


def two_atoms(T, S, w=0.5):
    return cond.DiscreteMeasure([T, S], [w, 1 - w], T.plane_dim)


# --- verdicts --------------------------------------------------------------

@pytest.mark.parametrize(
    "value,threshold,above,expected",
    [
        (1.0, 0.0, True, "pass"),
        (5e-5, 0.0, True, "inconclusive"),
        (0.0, 0.0, True, "fail"),
        (-1.0, 0.0, True, "fail"),
        (0.5, 1.0, False, "pass"),
        (1.0, 1.0, False, "fail"),
        (np.inf, 0.0, True, "pass"),
        (np.nan, 0.0, True, "inconclusive"),
    ],
)
def test_verdict_for(value, threshold, above, expected):
    assert cond.verdict_for(value, threshold, 1e-4, above) == expected


@given(st.lists(st.sampled_from(cond.VERDICTS)))
def test_combine_verdicts(vs):
    out = cond.combine_verdicts(vs)
    if "fail" in vs:
        assert out == "fail"
    elif "inconclusive" in vs:
        assert out == "inconclusive"
    else:
        assert out == "pass"


# --- measures ----------------------------------------------------------------

def test_measure_validation(rng):
    T = sample_plane(rng, 4, 2)
    with pytest.raises(ValueError):
        cond.DiscreteMeasure([T], [0.5], 2)
    with pytest.raises(ValueError):
        cond.DiscreteMeasure([T, T], [1.5, -0.5], 2)
    with pytest.raises(DimensionError):
        cond.DiscreteMeasure.from_atoms([(T, 0.5), (sample_plane(rng, 4, 1), 0.5)])


def test_clusters_and_mix(rng):
    T, S = sample_plane(rng, 4, 2), sample_plane(rng, 4, 2)
    mu = cond.DiscreteMeasure.dirac(T)
    assert mu.is_dirac() and len(mu) == 1
    nu = mu.mix(cond.DiscreteMeasure.dirac(S), 0.25)
    assert nu.cluster_count() == 2
    np.testing.assert_allclose(nu.weights, [0.25, 0.75])
    assert two_atoms(T, T).is_dirac()


# --- averaged stress and AC checks ----------------------------------------

def test_kernel_dim():
    assert cond.kernel_dim(np.diag([1.0, 1, 0, 0])) == 2
    assert cond.kernel_dim(np.zeros((3, 3))) == 3
    assert cond.kernel_dim(np.diag([1.0, 1e-9, 1])) == 1
    assert cond.kernel_dim(np.diag([1.0, 1e-9, 1]), tol_rank=1e-10) == 0


def test_area_trace_chain():
    rng = np.random.default_rng(0)
    psi = itg.perturbed_area(itg.PolynomialPerturbation.random(1, 4), 0.01, 4, 2)
    for _ in range(50):
        mu = cond.DiscreteMeasure.random(rng, 4, 2)
        A = cond.a_matrix(psi, mu)
        expected = 2 * np.sum(mu.weights * psi.evaluate_batch(mu.planes))
        assert np.trace(A) == pytest.approx(expected, abs=1e-8)


def test_a_matrix_dims(rng):
    with pytest.raises(DimensionError):
        cond.a_matrix(itg.area(5, 2), cond.DiscreteMeasure.dirac(sample_plane(rng, 4, 2)))


def test_ac1_area_dirac(rng):
    r = cond.check_ac1(itg.area(4, 2), cond.DiscreteMeasure.dirac(sample_plane(rng, 4, 2)))
    assert r.verdict == "pass"
    assert r.details["kernel_dim"] == 2
    assert r.constant_estimate == pytest.approx(1.0)


def test_ac1_fail_on_zero_stress(rng):
    psi = constant_stress(np.zeros((4, 4)), "zero-stress")
    r = cond.check_ac1(psi, cond.DiscreteMeasure.random(rng, 4, 2))
    assert r.verdict == "fail"
    assert r.details["kernel_dim"] == 4


@pytest.mark.parametrize("psi_factory", [lambda: itg.area(4, 2), lambda: lp_integrand(3.0)])
def test_ac2_separated_atoms_pass(psi_factory, rng):
    psi = psi_factory()
    r = cond.check_ac2(psi, two_atoms(sample_plane(rng, 4, 2), sample_plane(rng, 4, 2)))
    assert r.verdict == "pass"


def test_ac2_fail_on_frozen_stress(rng):
    psi = constant_stress(P0, "frozen")
    r = cond.check_ac2(psi, two_atoms(sample_plane(rng, 4, 2), sample_plane(rng, 4, 2)))
    assert r.verdict == "fail"
    assert r.details["kernel_dim"] == 2 and r.details["clusters"] == 2


def test_ac2_near_coincident_atoms_inconclusive(rng):
    T = sample_plane(rng, 4, 2)
    S = retract(T, tangent_basis(T)[0], 1e-5 / np.sqrt(2))
    assert 1e-6 < np.linalg.norm(T.matrix - S.matrix) < 1e-4
    r = cond.check_ac2(itg.area(4, 2), two_atoms(T, S))
    assert r.details["kernel_dim"] == 2
    assert r.verdict == "inconclusive"
    assert r.details["normalized_gap"] > cond.TOL_RANK


def test_ac_scan_counts():
    r = cond.ac_scan(itg.area(4, 2), "AC1", 50, seed=3)
    assert r.verdict == "pass"
    assert r.details["verdict_counts"] == {"pass": 50, "fail": 0, "inconclusive": 0}
    assert r.reevaluate(itg.area(4, 2)) == pytest.approx(r.constant_estimate, abs=1e-14)
    with pytest.raises(ValueError):
        cond.ac_scan(itg.area(4, 2), "AC1", 0, seed=3)


# --- SAC1 --------------------------------------------------------------------

def test_sac1_area():
    r = cond.sac1_scan(itg.area(4, 2), 500, seed=1)
    assert r.verdict == "pass"
    assert abs(r.constant_estimate) <= 1e-12
    assert r.details["threshold"] == 1.0


def test_sac1_hypersurface_threshold():
    r = cond.sac1_scan(itg.area(3, 1), 100, seed=1)
    assert r.verdict == "pass"
    assert cond.sac1_threshold(1) == np.inf


def test_sac1_boundary_fails():
    r = cond.sac1_scan(doubled_stress(), 100, seed=1)
    assert r.constant_estimate == pytest.approx(1.0)
    assert r.verdict == "fail"
    with pytest.raises(ConditionError):
        cond.sac1_radius(doubled_stress(), samples=100)


def test_sac1_radius_area():
    eps, details = cond.sac1_radius(itg.area(4, 2), samples=300, probes=4)
    assert details["gamma"] == 0.5
    assert details["c"] > 0
    assert 0 < eps == pytest.approx(0.5 / (details["c"] + 1.0))


def test_sac1_radius_is_safe():
    area = itg.area(4, 2)
    radius, _ = cond.sac1_radius(area, samples=300, probes=10)
    for k in range(100):
        phi = itg.PolynomialPerturbation.random(500 + k, 4)
        proxy = itg.c2_proxy(phi, 4, 2, samples=200, seed=k)
        eps = radius / max(proxy["c0"], proxy["c1"])
        r = cond.sac1_scan(itg.perturbed_area(phi, eps, 4, 2), 300, seed=k)
        assert r.verdict == "pass", (k, r.constant_estimate)


def test_sac1_witness_reevaluates():
    psi = itg.perturbed_area(itg.PolynomialPerturbation.random(2, 4), 0.05, 4, 2)
    r = cond.sac1_scan(psi, 300, seed=4)
    assert r.reevaluate(psi) == pytest.approx(r.constant_estimate, abs=1e-14)


# --- pair scans ----------------------------------------------------------------

def test_usac_area_constant():
    psi = itg.area(5, 2)
    r = cond.usac_scan(psi, 2000, seed=3, refine=2, maxfev=100)
    assert r.verdict == "pass"
    assert abs(r.constant_estimate - 0.5) <= 1e-9
    assert abs(r.details["sampled_max"] - 0.5) <= 1e-9
    assert abs(r.details["near_diagonal"]["min"] - 0.5) <= 1e-9
    assert r.samples_used >= 2000


def test_usac_frozen_stress_fails():
    # pairing <P0, P0^perp-ish> vanishes at many pairs; the constant must hit zero or below
    psi = constant_stress(P0, "frozen")
    r = cond.usac_scan(psi, 500, seed=1, refine=2, maxfev=200)
    assert r.verdict == "fail"
    assert r.reevaluate(psi) == pytest.approx(r.constant_estimate, abs=1e-12)


def test_sac_scan_reports_probes():
    psi = lp_integrand(3.0)
    r = cond.sac_scan(psi, 1000, seed=5, refine=2, maxfev=100)
    assert r.verdict == "pass"
    assert r.details["evidence_only"] is True
    minima = r.details["probe_minima"]
    assert set(minima) == {"separated", "near_diagonal", "boundary"}
    assert r.constant_estimate == min(minima.values())
    assert r.details["argmin_probe"] == min(minima, key=minima.get)


@pytest.mark.parametrize("kwargs", [{"samples": 0}, {"min_separation": 0.0}, {"min_separation": 3.0}])
def test_pair_scan_arguments(kwargs):
    args = {"samples": 10, "seed": 0, **kwargs}
    with pytest.raises(ValueError):
        cond.usac_scan(itg.area(4, 2), **args)


# --- adversarial search ----------------------------------------------------

def test_search_area_finds_nothing():
    r = cond.search_ac_violation(itg.area(4, 2), 2, 2000, seed=0)
    assert r.verdict != "fail"
    assert "violated_phase" not in r.details
    assert r.details["phase_minima"]["normalized"] > 0.2


def test_search_frozen_stress_finds_violation():
    psi = constant_stress(P0, "frozen")
    r = cond.search_ac_violation(psi, 2, 1000, seed=0)
    assert r.verdict == "fail"
    assert r.details["violated_phase"] == "normalized"
    assert r.reevaluate(psi) == pytest.approx(r.constant_estimate, abs=1e-12)


def test_search_zero_stress_gap_phase():
    psi = constant_stress(np.zeros((4, 4)), "zero-stress")
    r = cond.search_ac_violation(psi, 1, 200, seed=0)
    assert r.verdict == "fail"
    assert r.condition == "AC1" and r.details["violated_phase"] == "gap"


def test_search_arguments():
    with pytest.raises(ValueError):
        cond.search_ac_violation(itg.area(4, 2), 0, 100, seed=0)


# --- reports ---------------------------------------------------------------------

def test_report_round_trip():
    psi = itg.area(4, 2)
    r = cond.usac_scan(psi, 200, seed=9, refine=1, maxfev=50)
    text = r.to_json()
    back = cond.ConditionReport.from_json(text)
    assert back.to_json() == text
    assert back.reevaluate(psi) == pytest.approx(r.constant_estimate, abs=1e-15)
    keys = list(json.loads(text))
    assert keys == ["condition", "verdict", "constant_estimate", "witness",
                    "samples_used", "seed", "integrand", "details"]


def test_report_validation():
    with pytest.raises(ValueError):
        cond.ConditionReport("XYZ", "pass", 0.0, {}, 1, 0)
    with pytest.raises(ValueError):
        cond.ConditionReport("SAC", "maybe", 0.0, {}, 1, 0)


def test_csv_row_and_floats():
    r = cond.ConditionReport("SAC", "pass", 0.1, {}, 10, 3, "area")
    assert r.to_csv_row() == "SAC,pass,0.10000000000000001,10,3,area"
    assert cond.format_float(np.inf) == "null"
    nan = cond.ConditionReport.from_json(cond.ConditionReport("SAC", "pass", np.nan, {}, 1, 0).to_json())
    assert np.isnan(nan.constant_estimate)


def test_unknown_witness():
    with pytest.raises(KeyError):
        cond.witness_value(itg.area(4, 2), {"quantity": "bogus"})


# --- parallel determinism -----------------------------------------------------

def test_chunk_sizes():
    assert chunk_sizes(10, 4) == [4, 4, 2]
    assert chunk_sizes(8, 4) == [4, 4]
    assert sum(chunk_sizes(CHUNK * 3 + 1, CHUNK)) == CHUNK * 3 + 1


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("ANISOCHECK_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.setenv("ANISOCHECK_THREADS", "zero")
    with pytest.raises(ValueError):
        thread_count()


def test_map_chunks_order_independent_of_threads():
    def fn(rng, k, i):
        return (i, k, float(rng.standard_normal(k).sum()))

    a = map_chunks(fn, 10 * CHUNK + 5, 42, threads=1)
    b = map_chunks(fn, 10 * CHUNK + 5, 42, threads=4)
    assert a == b
    assert [x[0] for x in a] == list(range(11))


def test_scan_bytes_independent_of_threads(monkeypatch):
    psi = itg.perturbed_area(itg.PolynomialPerturbation.random(0, 4), 0.01, 4, 2)
    out = []
    for threads in ("1", "4"):
        monkeypatch.setenv("ANISOCHECK_THREADS", threads)
        out.append(cond.usac_scan(psi, 2 * CHUNK + 17, seed=11, refine=1, maxfev=60).to_json())
    assert out[0] == out[1]
