"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--size 20000]

Each kernel is run on the same inputs through both paths; the script checks
that the results agree before reporting timings.
"""

import argparse
import time

import numpy as np

from anisocheck import _kernels


def _best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--size", type=int, default=20000)
    args = parser.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        print("numba is not installed; nothing to compare")
        return 0

    rng = np.random.default_rng(0)
    K = args.size
    A = rng.standard_normal((K, 4, 2))
    v1, v2 = rng.standard_normal((K, 4)), rng.standard_normal((K, 4))
    coords = _kernels.wedge_coords_numpy(v1, v2)
    cases = {
        "orthonormalize": (_kernels.orthonormalize_numpy, _kernels.orthonormalize_numba, (A,)),
        "wedge_coords": (_kernels.wedge_coords_numpy, _kernels.wedge_coords_numba, (v1, v2)),
        "lp_stress": (_kernels.lp_stress_numpy, _kernels.lp_stress_numba, (coords, 3.0)),
    }

    print(f"{'kernel':<16}{'numpy [ms]':>12}{'numba [ms]':>12}{'speed-up':>10}")
    for name, (slow, fast, inputs) in cases.items():
        ref, got = slow(*inputs), fast(*inputs)  # also triggers compilation
        ref = ref if isinstance(ref, tuple) else (ref,)
        got = got if isinstance(got, tuple) else (got,)
        for r, g in zip(ref, got):
            if not np.allclose(r, g, rtol=1e-12, atol=1e-12):
                raise SystemExit(f"{name}: backends disagree")
        t_np = _best_of(lambda: slow(*inputs), args.repeat)
        t_nb = _best_of(lambda: fast(*inputs), args.repeat)
        print(f"{name:<16}{1e3 * t_np:>12.3f}{1e3 * t_nb:>12.3f}{t_np / t_nb:>10.1f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
