"""Run configuration, orchestration and report emission for the CLI.

A :class:`RunConfig` is a flat record of everything a run depends on.  It
serialises to ``key=value`` lines (the config-file format), is echoed into
every report header, and re-running it reproduces the report bytes.
"""

import dataclasses
import io
from dataclasses import dataclass

import numpy as np

from . import __version__, _kernels
from ._parallel import thread_count
from .conditions import (
    CSV_FIELDS,
    MARGIN,
    MIN_SEPARATION,
    REFINE_MAXFEV,
    REFINE_STARTS,
    TOL_RANK,
    ConditionReport,
    ac_scan,
    combine_verdicts,
    dumps,
    format_float,
    kernel_dim,
    sac1_scan,
    sac_scan,
    search_ac_violation,
    usac_scan,
    verdict_for,
)
from .errors import AnisocheckError
from .integrand import integrand_from_label

EXIT_PASS, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_USAGE = 0, 1, 2, 3

ACTIONS = {
    "check": ("sac1", "sac", "usac", "ac1", "ac2", "search-ac"),
    "graph": ("curvature", "excess", "caccioppoli", "quasiconvexity", "lh"),
    "pluecker": ("scan-sac", "subminors"),
}

PLUECKER_FIELDS = ("p", "seed", "min_pairing", "argmin_distance",
                   "det_S12", "det_S13", "det_S14", "det_S23", "det_S24", "det_S34", "kernel_dim")

QC_TOL = 1e-8


class UsageError(AnisocheckError, ValueError):
    """Invalid flag value or flag combination."""


@dataclass(frozen=True)
class RunConfig:
    verb: str
    action: str
    integrand: str = "area"
    ambient_dim: int = 4
    plane_dim: int = 2
    seed: int = 0
    samples: int = 1000
    tol_rank: float = TOL_RANK
    min_separation: float = MIN_SEPARATION
    margin: float = MARGIN
    refine: int = REFINE_STARTS
    maxfev: int = REFINE_MAXFEV
    measures: int = 1000
    max_atoms: int = 8
    n_atoms: int = 2
    budget: int = 10000
    p: float = 3.0
    field: str = ""
    x: str = ""
    r: float = 0.0
    scales: int = 3
    matrix: str = ""
    alpha: float = 1.0
    starts: int = 1000
    testfields: int = 100
    grid: int = 33
    output: str = "-"
    format: str = "json"

    def __post_init__(self):
        if self.verb not in ACTIONS:
            raise UsageError(f"unknown verb {self.verb!r}")
        if self.action not in ACTIONS[self.verb]:
            raise UsageError(f"unknown action {self.action!r} for {self.verb}")
        if self.format not in ("json", "csv"):
            raise UsageError("format must be json or csv")
        for name in ("samples", "measures", "max_atoms", "n_atoms", "budget", "starts",
                     "testfields", "scales"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name.replace('_', '-')} must be >= 1")
        for name in ("refine", "maxfev"):
            if getattr(self, name) < 0:
                raise UsageError(f"{name} must be >= 0")
        if self.grid < 3:
            raise UsageError("grid must be >= 3")
        if not 0 < self.plane_dim < self.ambient_dim:
            raise UsageError("need 0 < plane-dim < ambient-dim")
        if not 0 < self.tol_rank < 1:
            raise UsageError("tol-rank must lie in (0, 1)")
        if self.margin < 0:
            raise UsageError("margin must be >= 0")
        if not 0 < self.min_separation < np.sqrt(2 * self.plane_dim):
            raise UsageError("min-separation must lie in (0, sqrt(2 m))")
        if not 0 <= self.seed < 2**64:
            raise UsageError("seed must be a 64-bit unsigned integer")

    @staticmethod
    def key(name):
        return name.replace("_", "-")

    def to_lines(self):
        out = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out.append(f"{self.key(f.name)}={format_float(v) if isinstance(v, float) else v}")
        return out

    def to_text(self):
        return "\n".join(self.to_lines()) + "\n"

    @classmethod
    def parse_items(cls, items):
        """Typed values from ``(key, text)`` pairs with flag-style keys."""
        types = {cls.key(f.name): f for f in dataclasses.fields(cls)}
        out = {}
        for k, text in items:
            if k not in types:
                raise UsageError(f"unknown config key {k!r}")
            f = types[k]
            try:
                out[f.name] = f.type(text)
            except ValueError:
                raise UsageError(f"bad value for {k}: {text!r}") from None
        return out

    @classmethod
    def read_file(cls, path):
        """Flat ``key=value`` file; blank lines and ``#`` comments ignored."""
        items = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{lineno}: expected key=value")
                k, v = line.split("=", 1)
                items.append((k.strip(), v.strip()))
        return cls.parse_items(items)


def parse_vector(text, size=None):
    try:
        vals = [float(t) for t in text.split(",")] if text.strip() else []
    except ValueError:
        raise UsageError(f"bad vector {text!r}") from None
    if size is not None and len(vals) != size:
        raise UsageError(f"expected {size} comma-separated numbers, got {text!r}")
    return np.array(vals)


def parse_matrix(text, shape):
    """Rows separated by ';', entries by ','.  Empty text is the zero matrix."""
    if not text.strip():
        return np.zeros(shape)
    try:
        rows = [[float(t) for t in row.split(",")] for row in text.split(";")]
        M = np.array(rows, dtype=float)
    except ValueError:
        raise UsageError(f"bad matrix {text!r}") from None
    if M.shape != tuple(shape):
        raise UsageError(f"matrix must be {shape[0]} x {shape[1]}, got {M.shape}")
    return M


# ---------------------------------------------------------------------------
# runners: each returns (verdicts, json_payload, csv_header, csv_rows)
# ---------------------------------------------------------------------------

def _check(cfg):
    psi = integrand_from_label(cfg.integrand, cfg.ambient_dim, cfg.plane_dim)
    a = cfg.action
    if a == "sac1":
        rep = sac1_scan(psi, cfg.samples, cfg.seed, margin=cfg.margin)
    elif a == "sac":
        rep = sac_scan(psi, cfg.samples, cfg.seed, cfg.min_separation, cfg.refine, cfg.maxfev, cfg.margin)
    elif a == "usac":
        rep = usac_scan(psi, cfg.samples, cfg.seed, cfg.min_separation, cfg.refine, cfg.maxfev, cfg.margin)
    elif a in ("ac1", "ac2"):
        rep = ac_scan(psi, a.upper(), cfg.measures, cfg.seed, cfg.max_atoms, cfg.tol_rank)
    else:
        rep = search_ac_violation(psi, cfg.n_atoms, cfg.budget, cfg.seed, cfg.tol_rank, cfg.margin)
    return _reports_output([rep])


def _reports_output(reports):
    payload = {"reports": [r.to_dict() for r in reports]}
    rows = [r.to_csv_row() for r in reports]
    return [r.verdict for r in reports], payload, ",".join(CSV_FIELDS), rows


def _graph_psi(cfg, n, m):
    return integrand_from_label(cfg.integrand, n + m, m)


def _load_field(cfg):
    from .graph_energy import GraphField

    if not cfg.field:
        raise UsageError(f"graph {cfg.action} needs --field")
    return GraphField.load(cfg.field)


def _results_output(results, verdicts=()):
    keys = list(results)
    row = ",".join(format_float(results[k]) if isinstance(results[k], float) else str(results[k])
                   for k in keys)
    return list(verdicts), {"results": results}, ",".join(keys), [row]


def _graph(cfg):
    from . import graph_energy as ge

    a = cfg.action
    if a in ("quasiconvexity", "lh"):
        N, m = cfg.ambient_dim, cfg.plane_dim
        n = N - m
        psi = integrand_from_label(cfg.integrand, N, m)
        M = parse_matrix(cfg.matrix, (n, m))
        if a == "lh":
            value, witness = ge.legendre_hadamard_min(psi, M, cfg.starts, cfg.seed, return_witness=True)
            rep = ConditionReport("LH", verdict_for(value, 0.0, cfg.margin), value, witness,
                                  cfg.starts, cfg.seed, psi.label, {"sweeps": ge.LH_SWEEPS})
            return _reports_output([rep])
        rng = np.random.default_rng(cfg.seed)
        dims = (cfg.grid,) * m
        spacing = 1.0 / (cfg.grid - 1)
        worst, min_gap = None, np.inf
        for _ in range(cfg.testfields):
            modes, coeffs, phi = ge.random_testfield(rng, n, m, dims, spacing)
            ratio = ge.quasiconvexity_ratio(psi, M, phi)
            min_gap = min(min_gap, ge.quasiconvexity_gap(psi, M, phi, cfg.alpha))
            if worst is None or ratio < worst[0]:
                worst = (ratio, modes, coeffs)
        ratio, modes, coeffs = worst
        witness = {"quantity": "qc_gap", "A": M, "modes": modes, "coeffs": coeffs,
                   "dims": list(dims), "spacing": spacing}
        verdict = "pass" if ratio >= cfg.alpha - QC_TOL else "fail"
        rep = ConditionReport("QC", verdict, ratio, witness, cfg.testfields, cfg.seed, psi.label,
                              {"alpha": cfg.alpha, "min_gap": min_gap})
        return _reports_output([rep])

    u = _load_field(cfg)
    if a == "curvature":
        psi = _graph_psi(cfg, u.n, u.m)
        H = ge.mean_curvature_residual(psi, u)
        inner = ~np.isnan(H[..., 0])
        norms = np.linalg.norm(H[inner], axis=-1)
        return _results_output({
            "interior_points": int(inner.sum()),
            "sup_norm": float(norms.max()),
            "l2_norm": float(np.sqrt(np.sum(norms**2) * u.spacing**u.m)),
        })
    x = parse_vector(cfg.x, u.m) if cfg.x else (u.origin + u.upper) / 2
    if cfg.r <= 0:
        raise UsageError(f"graph {a} needs --r > 0")
    if a == "excess":
        return _results_output({"excess": ge.excess(u, x, cfg.r)})
    psi = _graph_psi(cfg, u.n, u.m)
    H = ge.mean_curvature_residual(psi, u)
    results = {}
    ratios = []
    for s in range(cfg.scales):
        r = cfg.r / 2**s
        if cfg.matrix:
            A = parse_matrix(cfg.matrix, (u.n, u.m))
        else:
            A = u.gradient()[ge._ball_mask(u, x, r)].mean(axis=0)
        lhs, flat, curv = ge.caccioppoli_probe(psi, u, x, r, A, curvature=H)
        ratio = lhs / (flat + curv) if flat + curv > 0 else float("nan")
        ratios.append(ratio)
        results.update({f"r{s}": r, f"lhs{s}": lhs, f"rhs_flat{s}": flat,
                        f"rhs_curv{s}": curv, f"ratio{s}": ratio})
    finite = [q for q in ratios if np.isfinite(q) and q > 0]
    results["ratio_spread"] = float(max(finite) / min(finite)) if finite else float("nan")
    return _results_output(results)


def _pluecker(cfg):
    from . import pluecker4 as pl

    if cfg.action == "scan-sac":
        psi = pl.lp_integrand(cfg.p)
        rep = sac_scan(psi, cfg.samples, cfg.seed, cfg.min_separation, cfg.refine, cfg.maxfev, cfg.margin)
        row = [format_float(cfg.p), str(cfg.seed), format_float(rep.constant_estimate),
               format_float(rep.details["argmin_distance"])] + [""] * 7
        payload = {"reports": [rep.to_dict()]}
        return [rep.verdict], payload, ",".join(PLUECKER_FIELDS), [",".join(row)]
    rng = np.random.default_rng(cfg.seed)
    rows, results, verdicts = [], [], []
    for _ in range(cfg.measures):
        mu = pl.random_even_measure(rng, cfg.max_atoms)
        res = pl.subminor_analysis(mu, cfg.p)
        kd = kernel_dim(res["sigma"], cfg.tol_rank)
        ok = res["rank_at_least_2"] and kd <= 2
        verdicts.append("pass" if ok else "fail")
        dets = [res["dets"][k] for k in pl.PAIR_LABELS]
        rows.append(",".join([format_float(cfg.p), str(cfg.seed), "", ""]
                             + [format_float(d) for d in dets] + [str(kd)]))
        results.append({"dets": dets, "kernel_dim": kd, "rank_at_least_2": res["rank_at_least_2"],
                        "near_zero_atoms": res["near_zero_atoms"]})
    return verdicts, {"results": results}, ",".join(PLUECKER_FIELDS), rows


def exit_code(verdicts):
    v = combine_verdicts(verdicts)
    return {"pass": EXIT_PASS, "fail": EXIT_FAIL, "inconclusive": EXIT_INCONCLUSIVE}[v]


def header(cfg):
    return {
        "tool": "anisocheck",
        "version": __version__,
        "backend": _kernels.backend(),
        "threads": thread_count(),
        "config": dict(line.split("=", 1) for line in cfg.to_lines()),
    }


def render(cfg):
    """Run the configured experiment; returns ``(exit_code, report_text)``."""
    runner = {"check": _check, "graph": _graph, "pluecker": _pluecker}[cfg.verb]
    verdicts, payload, csv_header, rows = runner(cfg)
    code = exit_code(verdicts)
    head = header(cfg)
    if cfg.format == "json":
        doc = dict(head)
        doc["verdict"] = combine_verdicts(verdicts) if verdicts else "pass"
        doc.update(payload)
        return code, dumps(doc) + "\n"
    buf = io.StringIO()
    for k, v in head.items():
        if k != "config":
            buf.write(f"# {k}={v}\n")
    for line in cfg.to_lines():
        buf.write(f"# {line}\n")
    buf.write(csv_header + "\n")
    for row in rows:
        buf.write(row + "\n")
    return code, buf.getvalue()


def run(cfg, stdout=None):
    """Render and write the report (``output='-'`` means ``stdout``); returns the exit code."""
    code, text = render(cfg)
    if cfg.output == "-":
        import sys

        (stdout or sys.stdout).write(text)
    else:
        with open(cfg.output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return code
