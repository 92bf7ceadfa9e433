"""Ellipticity checks: SAC1, SAC, USAC, AC1, AC2.

Every check returns a :class:`ConditionReport`.  Scans only ever produce
evidence, so verdicts are three-valued: a constant has to clear its
threshold by ``MARGIN`` to pass, lands on ``inconclusive`` when closer than
that, and fails on the wrong side.

The witness stored in a report is enough to recompute the reported
constant (``witness_value``); that is how reports are regression-tested.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from ._parallel import map_chunks
from .errors import ConditionError, DimensionError
from .grassmann import (
    Plane,
    _graph_chart,
    _plane_basis,
    _retract,
    _sample_planes,
    _tangent_basis,
    as_matrix,
)
from .integrand import (
    Integrand,
    PolynomialPerturbation,
    c2_proxy,
    pairings,
    stress_matrices,
)

TOL_RANK = 1e-7
MARGIN = 1e-4
DIRAC_RADIUS = 1e-6
MIN_SEPARATION = 0.1
NEAR_DIAGONAL_MIN = 1e-3
REFINE_STARTS = 10
REFINE_MAXFEV = 400
# objective value for configurations outside the admissible region
_PENALTY = 1e3
# below this atom spread the normalised gap is dominated by rounding
SPREAD_FLOOR = 1e-8

CONDITIONS = ("SAC1", "SAC", "USAC", "AC1", "AC2", "LH", "QC")
VERDICTS = ("pass", "fail", "inconclusive")


# ---------------------------------------------------------------------------
# measures
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Probability measure with finitely many plane atoms.

    ``planes`` is a ``(K, N, N)`` stack of projections and ``weights`` a
    positive vector summing to one.
    """

    planes: np.ndarray
    weights: np.ndarray
    plane_dim: int

    def __post_init__(self):
        P = np.array([as_matrix(T) for T in self.planes], dtype=float)
        w = np.array(self.weights, dtype=float).reshape(-1)
        if P.ndim != 3 or P.shape[1] != P.shape[2]:
            raise DimensionError(f"atoms must be square matrices, got {P.shape}")
        if P.shape[0] != w.size or w.size == 0:
            raise ValueError("need one positive weight per atom")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")
        for T in self.planes:
            if isinstance(T, Plane) and T.plane_dim != self.plane_dim:
                raise DimensionError("atoms of different dimensions")
        P.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "planes", P)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_atoms(cls, atoms):
        """Build from a list of ``(Plane, weight)`` pairs."""
        planes = [T for T, _ in atoms]
        dims = {T.dims for T in planes}
        if len(dims) != 1:
            raise DimensionError(f"atoms of different dimensions: {sorted(dims)}")
        return cls(planes, [w for _, w in atoms], planes[0].plane_dim)

    @classmethod
    def dirac(cls, T):
        return cls([T], [1.0], T.plane_dim)

    @classmethod
    def random(cls, rng, N, m, max_atoms=8):
        k = int(rng.integers(1, max_atoms + 1))
        w = rng.dirichlet(np.ones(k))
        return cls(_sample_planes(rng, k, N, m), w / w.sum(), m)

    @property
    def dims(self):
        return (self.planes.shape[1], self.plane_dim)

    def __len__(self):
        return self.weights.size

    def mix(self, other, alpha):
        """alpha * self + (1 - alpha) * other, atoms concatenated."""
        w = np.concatenate([alpha * self.weights, (1 - alpha) * other.weights])
        keep = w > 0
        P = np.concatenate([self.planes, other.planes])[keep]
        w = w[keep]
        return DiscreteMeasure(P, w / w.sum(), self.plane_dim)

    def cluster_count(self, radius=DIRAC_RADIUS):
        """Number of groups after merging atoms closer than ``radius``."""
        reps = []
        for T in self.planes:
            if not any(np.linalg.norm(T - R) <= radius for R in reps):
                reps.append(T)
        return len(reps)

    def is_dirac(self, radius=DIRAC_RADIUS):
        return self.cluster_count(radius) == 1


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def format_float(x):
    x = float(x)
    if not np.isfinite(x):
        return "null"
    return format(x, ".17g")


def dumps(obj):
    """JSON with insertion-ordered keys and 17 significant digits per float."""
    obj = _jsonable(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(k)}: {dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, list):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return format_float(obj)
    return json.dumps(obj)


CSV_FIELDS = ("condition", "verdict", "constant_estimate", "samples_used", "seed", "integrand")


@dataclass(frozen=True)
class ConditionReport:
    condition: str
    verdict: str
    constant_estimate: float
    witness: dict
    samples_used: int
    seed: int
    integrand: str = ""
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise ValueError(f"unknown condition {self.condition!r}")
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")

    def to_dict(self):
        return {
            "condition": self.condition,
            "verdict": self.verdict,
            "constant_estimate": float(self.constant_estimate),
            "witness": self.witness,
            "samples_used": int(self.samples_used),
            "seed": int(self.seed),
            "integrand": self.integrand,
            "details": self.details,
        }

    def to_json(self):
        return dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        if d["constant_estimate"] is None:
            d["constant_estimate"] = float("nan")
        return cls(**d)

    def to_csv_row(self):
        vals = [
            self.condition,
            self.verdict,
            format_float(self.constant_estimate),
            str(int(self.samples_used)),
            str(int(self.seed)),
            self.integrand,
        ]
        return ",".join(vals)

    def reevaluate(self, psi):
        """Recompute the constant from the stored witness."""
        return witness_value(psi, self.witness)


def verdict_for(value, threshold, margin=MARGIN, above=True):
    """``pass`` if ``value`` clears ``threshold`` by ``margin`` on the required side."""
    gap = value - threshold if above else threshold - value
    if not np.isfinite(gap):
        return "pass" if gap == np.inf else "inconclusive"
    if gap >= margin:
        return "pass"
    return "inconclusive" if gap > 0 else "fail"


def combine_verdicts(verdicts):
    verdicts = list(verdicts)
    if "fail" in verdicts:
        return "fail"
    if "inconclusive" in verdicts:
        return "inconclusive"
    return "pass"


# ---------------------------------------------------------------------------
# quantities shared by scans and witness re-evaluation
# ---------------------------------------------------------------------------

def _sac1_values(psi, Ts):
    vals = psi.evaluate_batch(Ts)
    B = stress_matrices(psi, Ts)
    sym = 0.5 * (B + np.swapaxes(B, -1, -2))
    return np.linalg.eigvalsh(sym)[:, -1] / vals - 1.0


def _pair_ratios(psi, Ts, Ss):
    d2 = np.sum((Ts - Ss) ** 2, axis=(-1, -2))
    return pairings(psi, Ts, Ss) / d2, np.sqrt(d2)


def _singular_values(psi, planes, weights):
    A = np.einsum("k,kab->ab", weights, stress_matrices(psi, planes))
    return np.linalg.svd(A, compute_uv=False)[::-1]


def _relative(num, den):
    """num / den with 0 / 0 = 0: a zero matrix has a full kernel."""
    return 0.0 if den == 0 else float(num / den)


def _spread(planes, weights):
    mean = np.einsum("k,kab->ab", weights, planes)
    return float(np.einsum("k,kab->", weights, (planes - mean) ** 2))


def witness_value(psi, witness):
    """Recompute a report constant from its witness dictionary."""
    q = witness["quantity"]
    if q == "sac1_delta":
        return float(_sac1_values(psi, np.asarray(witness["plane"], dtype=float)[None])[0])
    if q == "pair_ratio":
        T = np.asarray(witness["T"], dtype=float)[None]
        S = np.asarray(witness["S"], dtype=float)[None]
        return float(_pair_ratios(psi, T, S)[0][0])
    if q in ("singular_value", "relative_singular_value", "normalized_gap"):
        planes = np.asarray(witness["planes"], dtype=float)
        weights = np.asarray(witness["weights"], dtype=float)
        s = _singular_values(psi, planes, weights)
        k = int(witness["index"])
        if q == "singular_value":
            return float(s[k])
        if q == "relative_singular_value":
            return _relative(s[k], s[-1])
        return _relative(s[k], s[-1] * _spread(planes, weights))
    if q in ("lh_min", "qc_gap"):
        from .graph_energy import witness_value as graph_witness_value

        return graph_witness_value(psi, witness)
    raise KeyError(f"unknown witness quantity {q!r}")


# ---------------------------------------------------------------------------
# averaged stress and rank certificates
# ---------------------------------------------------------------------------

def a_matrix(psi, mu):
    """A(mu) = sum_i w_i B(T_i)."""
    if mu.dims != psi.dims:
        raise DimensionError(f"measure on G{mu.dims}, integrand on G{psi.dims}")
    return np.einsum("k,kab->ab", mu.weights, stress_matrices(psi, mu.planes))


def kernel_dim(M, tol_rank=TOL_RANK):
    """Number of singular values <= tol_rank * sigma_max (all of them if M = 0)."""
    M = np.asarray(M, dtype=float)
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return M.shape[0]
    return int(np.sum(s <= tol_rank * s[0]))


def _measure_witness(mu, quantity, index):
    return {
        "quantity": quantity,
        "index": int(index),
        "planes": mu.planes,
        "weights": mu.weights,
    }


def check_ac1(psi, mu, tol_rank=TOL_RANK, margin=MARGIN, seed=0):
    """dim Ker A(mu) <= n, certified by the (n+1)-th smallest singular value."""
    n = psi.codim
    s = _singular_values(psi, mu.planes, mu.weights)
    kd = int(np.sum(s <= tol_rank * s[-1])) if s[-1] > 0 else s.size
    if kd > n:
        verdict = "fail"
    else:
        verdict = verdict_for(s[n], tol_rank * s[-1], margin)
    return ConditionReport(
        "AC1", verdict, float(s[n]), _measure_witness(mu, "singular_value", n),
        1, seed, psi.label, {"kernel_dim": kd, "codim": n, "sigma_max": float(s[-1])},
    )


def check_ac2(psi, mu, tol_rank=TOL_RANK, radius=DIRAC_RADIUS, seed=0):
    """If dim Ker A(mu) = n then mu must be a Dirac mass.

    When the kernel looks n-dimensional but the atoms are only nearly
    coincident, the smallest non-kernel singular value is compared with the
    spread of the atoms: a kernel that is small merely because the atoms
    are close is ``inconclusive``, not a violation.
    """
    n = psi.codim
    s = _singular_values(psi, mu.planes, mu.weights)
    kd = int(np.sum(s <= tol_rank * s[-1])) if s[-1] > 0 else s.size
    clusters = mu.cluster_count(radius)
    details = {"kernel_dim": kd, "codim": n, "clusters": clusters, "sigma_max": float(s[-1])}
    if kd != n or clusters == 1:
        verdict = "pass"
    else:
        spread = _spread(mu.planes, mu.weights)
        normalized = _relative(s[n - 1], s[-1] * spread)
        details["normalized_gap"] = float(normalized)
        verdict = "fail" if normalized <= tol_rank else "inconclusive"
    return ConditionReport(
        "AC2", verdict, float(s[n - 1]), _measure_witness(mu, "singular_value", n - 1),
        1, seed, psi.label, details,
    )


def ac_scan(psi, condition, measures, seed, max_atoms=8, tol_rank=TOL_RANK):
    """Run AC1 or AC2 on random measures; report the worst one."""
    if measures < 1:
        raise ValueError("measures must be >= 1")
    check = {"AC1": check_ac1, "AC2": check_ac2}[condition]
    rng = np.random.default_rng(seed)
    N, m = psi.dims
    reports = [
        check(psi, DiscreteMeasure.random(rng, N, m, max_atoms), tol_rank=tol_rank, seed=seed)
        for _ in range(measures)
    ]
    worst = min(reports, key=lambda r: r.constant_estimate)
    counts = {v: sum(r.verdict == v for r in reports) for v in VERDICTS}
    return ConditionReport(
        condition, combine_verdicts(r.verdict for r in reports), worst.constant_estimate,
        worst.witness, measures, seed, psi.label, {**worst.details, "verdict_counts": counts},
    )


# ---------------------------------------------------------------------------
# chart parametrisation for derivative-free search
# ---------------------------------------------------------------------------

class _RotatedChart:
    """Graph chart centred at a plane: X = 0 is the plane itself.

    Coordinates are taken in an orthonormal frame ``[Q, Q_perp]`` adapted to
    the centre, so the leading block is the identity there and the chart is
    never singular at its starting point.
    """

    def __init__(self, T, m):
        Q, Qp = _plane_basis(np.asarray(T, dtype=float)[None], m)
        self.R = np.concatenate([Q[0], Qp[0]], axis=1)
        self.n, self.m = Qp.shape[-1], m

    @property
    def size(self):
        return self.n * self.m

    def plane(self, x):
        X = np.asarray(x, dtype=float).reshape(self.n, self.m)
        return self.R @ _graph_chart(X) @ self.R.T


def _softmax(z):
    e = np.exp(z - np.max(z))
    return e / e.sum()


# ---------------------------------------------------------------------------
# SAC1
# ---------------------------------------------------------------------------

def sac1_threshold(m):
    return np.inf if m == 1 else 1.0 / (m - 1)


def sac1_scan(psi, samples, seed, margin=MARGIN):
    """delta = max_T lambda_max(sym B(T)) / Psi(T) - 1 over Haar samples."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    N, m = psi.dims

    def chunk(rng, k, _):
        Ts = _sample_planes(rng, k, N, m)
        d = _sac1_values(psi, Ts)
        i = int(np.argmax(d))
        return d[i], Ts[i], float(np.min(psi.evaluate_batch(Ts)))

    parts = map_chunks(chunk, samples, seed)
    best = max(range(len(parts)), key=lambda i: (parts[i][0], -i))
    delta, T, _ = parts[best]
    threshold = sac1_threshold(m)
    return ConditionReport(
        "SAC1", verdict_for(delta, threshold, margin, above=False), float(delta),
        {"quantity": "sac1_delta", "plane": T}, samples, seed, psi.label,
        {"threshold": float(threshold), "min_psi": min(p[2] for p in parts)},
    )


def _perturbed(psi, phi, eps):
    func = psi.func
    return Integrand(
        psi.ambient_dim, psi.plane_dim,
        func=lambda Ts: np.asarray(func(Ts), dtype=float) + eps * phi(Ts),
        label=f"{psi.label}+{eps!r}*phi",
    )


def sac1_radius(psi, samples=1000, probes=10, seed=0, probe_eps=1e-3):
    """Largest C^1 perturbation size that provably keeps SAC1.

    Solves ``(c + 1 + delta) eps / gamma + delta < 1/(m-1)`` for eps with
    ``gamma`` half the sampled minimum of Psi and ``c`` the sampled ratio of
    the stress change (operator norm of its symmetric part) to the C^1 size
    of the perturbation, maximised over random probe perturbations.

    Returns ``(eps, details)``.
    """
    N, m = psi.dims
    report = sac1_scan(psi, samples, seed)
    delta = report.constant_estimate
    threshold = sac1_threshold(m)
    if not delta < threshold:
        raise ConditionError(f"SAC1 fails (delta = {delta:.6g} >= {threshold:.6g}); no radius")
    rng = np.random.default_rng(seed)
    Ts = _sample_planes(rng, samples, N, m)
    gamma = 0.5 * float(np.min(psi.evaluate_batch(Ts)))
    B0 = stress_matrices(psi, Ts)
    c_hat = 0.0
    for k in range(probes):
        phi = PolynomialPerturbation.random((seed, k), N)
        proxy = c2_proxy(phi, N, m, samples=200, seed=k)
        size = probe_eps * max(proxy["c0"], proxy["c1"])
        dB = stress_matrices(_perturbed(psi, phi, probe_eps), Ts) - B0
        op = np.abs(np.linalg.eigvalsh(0.5 * (dB + np.swapaxes(dB, -1, -2)))).max()
        c_hat = max(c_hat, op / size)
    if threshold == np.inf:
        eps = np.inf
    else:
        eps = (threshold - delta) * gamma / (c_hat + 1.0 + delta)
    return float(eps), {"delta": delta, "gamma": gamma, "c": c_hat, "threshold": threshold}


# ---------------------------------------------------------------------------
# SAC / USAC pair scans
# ---------------------------------------------------------------------------

def _worst(values, Ts, Ss, keep):
    order = np.argsort(values, kind="stable")[:keep]
    return [(float(values[i]), Ts[i], Ss[i]) for i in order]


def _merge_worst(lists, keep):
    flat = [item for lst in lists for item in lst]
    flat.sort(key=lambda item: item[0])  # stable: chunk order breaks ties
    return flat[:keep]


def _separated_chunks(psi, samples, seed, min_sep, keep):
    N, m = psi.dims

    def chunk(rng, k, _):
        Ts = _sample_planes(rng, k, N, m)
        Ss = _sample_planes(rng, k, N, m)
        r, d = _pair_ratios(psi, Ts, Ss)
        ok = d >= min_sep
        r, Ts, Ss = r[ok], Ts[ok], Ss[ok]
        if r.size == 0:
            return 0, np.inf, -np.inf, []
        return r.size, float(r.min()), float(r.max()), _worst(r, Ts, Ss, keep)

    parts = map_chunks(chunk, samples, seed)
    return (
        sum(p[0] for p in parts),
        max((p[2] for p in parts), default=-np.inf),
        _merge_worst([p[3] for p in parts], keep),
    )


def _near_diagonal_chunks(psi, samples, seed, min_sep):
    N, m = psi.dims
    lo, hi = NEAR_DIAGONAL_MIN, min_sep

    def chunk(rng, k, _):
        Ts = _sample_planes(rng, k, N, m)
        Q, Qp = _plane_basis(Ts, m)
        Vs = _tangent_basis(Q, Qp)
        coef = rng.standard_normal((k, Vs.shape[1]))
        coef /= np.linalg.norm(coef, axis=1, keepdims=True)
        V = np.einsum("kd,kdab->kab", coef, Vs)
        t = np.exp(rng.uniform(np.log(lo), np.log(hi), size=k))
        Ss = _retract(Q, V, t)
        r, d = _pair_ratios(psi, Ts, Ss)
        ok = (d >= lo) & (d <= hi)
        return int(ok.sum()), _worst(r[ok], Ts[ok], Ss[ok], 1)

    parts = map_chunks(chunk, samples, seed)
    return sum(p[0] for p in parts), _merge_worst([p[1] for p in parts], 1)


def _boundary_probes(psi, samples, seed):
    """Pairs with <T, S> as small as possible (zero when n >= m)."""
    N, m = psi.dims
    n = N - m
    rng = np.random.default_rng(seed)
    Ts = _sample_planes(rng, samples, N, m)
    Q, Qp = _plane_basis(Ts, m)
    k = min(m, n)
    basis = np.concatenate([Qp[..., :k], Q[..., : m - k]], axis=-1)
    Ss = basis @ np.swapaxes(basis, -1, -2)
    r, _ = _pair_ratios(psi, Ts, Ss)
    return samples, _worst(r, Ts, Ss, 1)


def _refine_pair(psi, T0, S0, min_sep, maxfev):
    """Nelder-Mead on the pair ratio in charts centred at T0 and S0."""
    m = psi.plane_dim
    cT, cS = _RotatedChart(T0, m), _RotatedChart(S0, m)
    best = [np.inf, T0, S0]
    count = [0]

    def objective(x):
        count[0] += 1
        T = cT.plane(x[: cT.size])
        S = cS.plane(x[cT.size:])
        r, d = _pair_ratios(psi, T[None], S[None])
        if d[0] < min_sep:
            return _PENALTY + (min_sep - d[0])
        if r[0] < best[0]:
            best[:] = [float(r[0]), T, S]
        return float(r[0])

    x0 = np.zeros(cT.size + cS.size)
    minimize(objective, x0, method="Nelder-Mead",
             options={"maxfev": maxfev, "xatol": 1e-10, "fatol": 1e-12})
    return best, count[0]


def _pair_scan(psi, samples, seed, min_sep, refine, maxfev, boundary):
    N, m = psi.dims
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if not 0 < min_sep < np.sqrt(2 * m):
        raise ValueError(f"min_separation must lie in (0, sqrt(2m)) = (0, {np.sqrt(2 * m):.6g})")
    kept, max_ratio, worst = _separated_chunks(psi, samples, seed, min_sep, max(refine, 1))
    used = samples
    best = list(worst[0]) if worst else [np.inf, None, None]
    refined_from = best[0]
    for value, T, S in worst[:refine]:
        (rv, rT, rS), n_eval = _refine_pair(psi, T, S, min_sep, maxfev)
        used += n_eval
        if rv < best[0]:
            best = [rv, rT, rS]
    near_n = max(1, samples // 10)
    near_count, near = _near_diagonal_chunks(psi, near_n, seed + 1, min_sep)
    used += near_n
    out = {
        "separated": best,
        "separated_pairs": kept,
        "sampled_min": refined_from,
        "sampled_max": max_ratio,
        "near": near[0] if near else (np.inf, None, None),
        "near_pairs": near_count,
    }
    if boundary:
        nb = max(1, samples // 100)
        _, bnd = _boundary_probes(psi, nb, seed + 2)
        used += nb
        out["boundary"] = bnd[0]
    out["used"] = used
    return out


def _pair_witness(T, S):
    return {"quantity": "pair_ratio", "T": T, "S": S}


def usac_scan(psi, samples, seed, min_separation=MIN_SEPARATION, refine=REFINE_STARTS,
              maxfev=REFINE_MAXFEV, margin=MARGIN):
    """C = min pairing / ||T - S||^2 over separated pairs, plus a near-diagonal band.

    Pairs with ``||T - S|| >= min_separation`` are sampled from Haar
    measure and the worst ``refine`` of them are pushed further down by a
    simplex search.  Pairs with separation in ``[1e-3, min_separation]`` are
    reported separately under ``details["near_diagonal"]``.
    """
    res = _pair_scan(psi, samples, seed, min_separation, refine, maxfev, boundary=False)
    value, T, S = res["separated"]
    near_value, nT, nS = res["near"]
    verdict = combine_verdicts([verdict_for(value, 0.0, margin), verdict_for(near_value, 0.0, margin)])
    details = {
        "min_separation": min_separation,
        "separated_pairs": res["separated_pairs"],
        "sampled_min": res["sampled_min"],
        "sampled_max": res["sampled_max"],
        "near_diagonal": {"min": near_value, "pairs": res["near_pairs"],
                          "band": [NEAR_DIAGONAL_MIN, min_separation]},
    }
    if nT is not None:
        details["near_diagonal"]["witness"] = _pair_witness(nT, nS)
    return ConditionReport("USAC", verdict, float(value), _pair_witness(T, S),
                           res["used"], seed, psi.label, details)


def sac_scan(psi, samples, seed, min_separation=MIN_SEPARATION, refine=REFINE_STARTS,
             maxfev=REFINE_MAXFEV, margin=MARGIN):
    """Positivity of the normalised pairing at every probe.

    Probes are separated Haar pairs (refined), the near-diagonal band and
    maximally separated pairs with ``<T, S>`` minimal.  The reported
    constant is the smallest normalised pairing over all of them; the
    numbers are numerical evidence for the condition, never a proof.
    """
    res = _pair_scan(psi, samples, seed, min_separation, refine, maxfev, boundary=True)
    probes = {"separated": res["separated"], "near_diagonal": res["near"], "boundary": res["boundary"]}
    kind = min(probes, key=lambda k: probes[k][0])
    value, T, S = probes[kind]
    details = {
        "min_separation": min_separation,
        "evidence_only": True,
        "argmin_probe": kind,
        "argmin_distance": float(np.linalg.norm(T - S)),
        "probe_minima": {k: v[0] for k, v in probes.items()},
        "sampled_max": res["sampled_max"],
    }
    return ConditionReport("SAC", verdict_for(value, 0.0, margin), float(value),
                           _pair_witness(T, S), res["used"], seed, psi.label, details)


# ---------------------------------------------------------------------------
# adversarial measure search
# ---------------------------------------------------------------------------

def search_ac_violation(psi, n_atoms, budget, seed, tol_rank=TOL_RANK, margin=MARGIN,
                        radius=DIRAC_RADIUS):
    """Simplex search for a measure that breaks the atomic condition.

    Two objectives share the budget (all of it when ``n_atoms == 1``):

    * ``s_(n+1) / s_max`` of A(mu); zero means a kernel larger than n.
    * ``s_n / (s_max * spread)`` with ``spread = sum w_i ||T_i - mean||^2``;
      zero with separated atoms means a kernel of dimension exactly n for a
      non-Dirac measure.  Dividing by the spread removes the trivial decay
      of ``s_n`` as the atoms merge; measures with spread below
      ``SPREAD_FLOOR`` are excluded because there ``s_n`` is rounding noise.

    Atoms are parametrised in graph charts centred at random Haar planes and
    weights through a softmax.  Any evaluation crossing ``tol_rank`` is
    returned as a ``fail`` witness (in the second phase only for non-Dirac
    measures).  If no restart
    converges before the budget runs out the verdict is ``inconclusive``.
    """
    if n_atoms < 1 or budget < 1:
        raise ValueError("need n_atoms >= 1 and budget >= 1")
    N, m = psi.dims
    n = N - m
    rng = np.random.default_rng(seed)
    phases = ["gap"] if n_atoms == 1 else ["gap", "normalized"]
    share = budget // len(phases)
    state = {"used": 0, "violation": None, "converged": False}
    best = {ph: [np.inf, None, None] for ph in phases}

    def decode(charts, x):
        d = charts[0].size
        planes = np.stack([c.plane(x[i * d:(i + 1) * d]) for i, c in enumerate(charts)])
        weights = _softmax(x[n_atoms * d:]) if n_atoms > 1 else np.ones(1)
        return planes, weights

    def make_objective(phase, charts):
        def objective(x):
            state["used"] += 1
            planes, weights = decode(charts, x)
            s = _singular_values(psi, planes, weights)
            if phase == "gap":
                value = _relative(s[n], s[-1])
            else:
                spread = _spread(planes, weights)
                if spread < SPREAD_FLOOR:
                    return _PENALTY
                value = _relative(s[n - 1], s[-1] * spread)
            if value < best[phase][0]:
                best[phase] = [float(value), planes, weights]
            if value <= tol_rank and state["violation"] is None:
                # a kernel above n breaks AC1 even for a Dirac mass
                mu = DiscreteMeasure(planes, weights / weights.sum(), m)
                if phase == "gap" or not mu.is_dirac(radius):
                    state["violation"] = (phase, float(value), planes, weights)
            return value

        return objective

    for phase in phases:
        spent = 0
        while spent < share and state["violation"] is None:
            charts = [_RotatedChart(T, m) for T in _sample_planes(rng, n_atoms, N, m)]
            dim = n_atoms * charts[0].size + (n_atoms if n_atoms > 1 else 0)
            x0 = np.concatenate([np.zeros(n_atoms * charts[0].size),
                                 rng.standard_normal(dim - n_atoms * charts[0].size) * 0.5])
            cap = min(share - spent, max(400, 200 * dim))
            before = state["used"]
            res = minimize(make_objective(phase, charts), x0, method="Nelder-Mead",
                           options={"maxfev": cap, "xatol": 1e-4, "fatol": 1e-7})
            spent += state["used"] - before
            if res.status == 0:
                state["converged"] = True

    details = {
        "n_atoms": n_atoms,
        "budget": budget,
        "converged": state["converged"],
        "phase_minima": {ph: best[ph][0] for ph in phases},
    }
    if state["violation"] is not None:
        phase, value, planes, weights = state["violation"]
        index = n if phase == "gap" else n - 1
        quantity = "relative_singular_value" if phase == "gap" else "normalized_gap"
        witness = {"quantity": quantity, "index": index, "planes": planes, "weights": weights}
        details["violated_phase"] = phase
        return ConditionReport("AC2" if phase == "normalized" else "AC1", "fail", value,
                               witness, state["used"], seed, psi.label, details)

    value, planes, weights = best["gap"]
    witness = {"quantity": "relative_singular_value", "index": n,
               "planes": planes, "weights": weights}
    if n_atoms > 1:
        nv, nplanes, nweights = best["normalized"]
        details["normalized_witness"] = {"quantity": "normalized_gap", "index": n - 1,
                                         "planes": nplanes, "weights": nweights}
    mu = DiscreteMeasure(planes, weights / weights.sum(), m)
    details["kernel_dim"] = kernel_dim(np.einsum("k,kab->ab", mu.weights, stress_matrices(psi, planes)), tol_rank)
    verdicts = [verdict_for(v, tol_rank, margin) for v in details["phase_minima"].values()]
    if not state["converged"]:
        verdicts.append("inconclusive")
    return ConditionReport("AC1" if n_atoms == 1 else "AC2", combine_verdicts(verdicts), value,
                           witness, state["used"], seed, psi.label, details)
