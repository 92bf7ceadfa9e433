"""Command line interface: ``anisocheck {check|graph|pluecker} <action> [flags]``.

Exit codes: 0 all pass, 1 any fail, 2 any inconclusive (no fail),
3 usage or input error.
"""

import argparse
import dataclasses
import sys

from .errors import AnisocheckError
from .report import ACTIONS, EXIT_USAGE, RunConfig, UsageError, run


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


HELP = {
    "integrand": "integrand label: area, perturbed-area:<eps>:<seed>, lp-pluecker:<p>",
    "ambient_dim": "ambient dimension N",
    "plane_dim": "plane dimension m",
    "seed": "master seed (64-bit)",
    "samples": "Haar samples or pairs",
    "tol_rank": "relative singular-value threshold for kernels",
    "min_separation": "smallest ||T - S|| in the separated pair scan",
    "margin": "absolute margin a constant must clear to pass",
    "refine": "number of worst pairs refined by simplex search",
    "maxfev": "evaluations per refinement",
    "measures": "random measures to test",
    "max_atoms": "atoms per random measure (upper bound)",
    "n_atoms": "atoms in the adversarial search",
    "budget": "objective evaluations in the adversarial search",
    "p": "exponent of the l^p Plücker norm, 1 < p < inf",
    "field": "gridfield text file",
    "x": "probe centre, comma separated",
    "r": "probe radius",
    "scales": "number of dyadic radii r, r/2, ... in the Caccioppoli table",
    "matrix": "matrix A (or X): rows separated by ';', entries by ','",
    "alpha": "comparison constant in the quasiconvexity inequality",
    "starts": "random starts for the rank-one minimisation",
    "testfields": "random sinusoidal test fields",
    "grid": "grid points per axis for test fields",
    "output": "output path, '-' for stdout",
    "format": "json or csv",
}


def build_parser():
    parser = _Parser(prog="anisocheck", description="Numerical checks of anisotropic ellipticity conditions.")
    verbs = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    for verb, actions in ACTIONS.items():
        vp = verbs.add_parser(verb, help=f"{verb} actions")
        sub = vp.add_subparsers(dest="action", required=True, parser_class=_Parser)
        for action in actions:
            ap = sub.add_parser(action)
            ap.add_argument("--config", help="flat key=value file; explicit flags override it")
            ap.add_argument("--save-config", help="write the resolved configuration to this path")
            for f in dataclasses.fields(RunConfig):
                if f.name in ("verb", "action"):
                    continue
                kwargs = {"type": f.type, "default": None, "dest": f.name, "help": HELP.get(f.name)}
                if f.name == "format":
                    kwargs["choices"] = ("json", "csv")
                ap.add_argument("--" + RunConfig.key(f.name), **kwargs)
    return parser


def config_from_args(args):
    values = {}
    if args.config:
        values.update(RunConfig.read_file(args.config))
    for f in dataclasses.fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    values["verb"], values["action"] = args.verb, args.action
    return RunConfig(**values)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits on --help and on bad flags; hand the code back instead
        return exc.code
    try:
        cfg = config_from_args(args)
        if args.save_config:
            with open(args.save_config, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(cfg.to_text())
        return run(cfg)
    except (AnisocheckError, KeyError, ValueError, OSError) as exc:
        kind = "usage error" if isinstance(exc, UsageError) else "error"
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"anisocheck: {kind}: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
