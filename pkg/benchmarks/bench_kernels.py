"""Compare the compiled and pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints the best wall time per kernel for each backend and the speedup.
"""

import argparse
import timeit

import numpy as np

from chicrit import _kernels_py

try:
    from chicrit import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def cases(gen):
    lmax, npts = 20, 2000
    ct = gen.uniform(-1, 1, npts)
    st = np.sqrt(1 - ct ** 2)
    ph = gen.uniform(0, 2 * np.pi, npts)
    coeffs = gen.standard_normal((4, (lmax + 1) ** 2))
    cols6 = gen.standard_normal((6, 1 << 16))
    cols8 = gen.standard_normal((8, 1 << 16))
    return {
        "sh_derivs l=20 order=2": lambda m: m.sh_derivs(coeffs, ct, st, ph, lmax, 2),
        "tilde3_det_pd 65536": lambda m: m.tilde3_det_pd(*cols6, 1e-10),
        "ek_det2 65536": lambda m: m.ek_det2(*cols8),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = [("python", _kernels_py)] + ([("cython", _kernels_c)] if _kernels_c else [])
    if _kernels_c is None:
        print("compiled extension not built; timing the Python backend only")
    print(f"{'kernel':26s}" + "".join(f"{name:>12s}" for name, _ in backends) + ("     speedup" if _kernels_c else ""))
    for label, fn in cases(np.random.default_rng(0)).items():
        times = [min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)) for _, mod in backends]
        row = f"{label:26s}" + "".join(f"{t * 1e3:10.2f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
