"""Compare the compiled and pure-Python string kernels.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from tdras import kernels
from tdras.fock import FockSpace, RasScheme

CASES = [
    ("SD(0,2,6) Ne=4", RasScheme("SD", 0, 2, 6), 4),
    ("MCTDHF(8) Ne=4", RasScheme.mctdhf(8), 4),
    ("SDT(0,3,5) Ne=6", RasScheme("SDT", 0, 3, 5), 6),
    ("MCTDHF(10) Ne=6", RasScheme.mctdhf(10), 6),
]


def _time(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if kernels._ext is None:
        print("compiled kernels not built; only the Python backend is available")
    rng = np.random.default_rng(0)
    print(f"{'space':<18}{'strings':>8}{'kernel':>14}{'python ms':>12}{'cython ms':>12}{'speedup':>9}")
    for label, scheme, ne in CASES:
        space = FockSpace(scheme, ne)
        ns, M = space.n_strings, space.n_orbitals
        c = rng.normal(size=(ns, ns)) + 1j * rng.normal(size=(ns, ns))
        g = rng.normal(size=(M * M, ns, ns)) + 1j * rng.normal(size=(M * M, ns, ns))
        jobs = {
            "excite_all": lambda b: kernels.excite_all(c, space.table, backend=b),
            "deexcite_sum": lambda b: kernels.deexcite_sum(g, space.table, backend=b),
        }
        for name, fn in jobs.items():
            tp = _time(lambda: fn("python"), args.repeat) * 1e3
            if kernels._ext is not None:
                tc = _time(lambda: fn("cython"), args.repeat) * 1e3
                np.testing.assert_allclose(fn("cython"), fn("python"), atol=1e-10)
                print(f"{label:<18}{ns:>8}{name:>14}{tp:>12.3f}{tc:>12.3f}{tp / tc:>9.1f}")
            else:
                print(f"{label:<18}{ns:>8}{name:>14}{tp:>12.3f}{'-':>12}{'-':>9}")


if __name__ == "__main__":
    main()
