"""Compare the numba kernels with the pure-numpy fallback.

Times column annotation over a grid of unique-value counts on both backends
and prints the table, the per-backend linear fits and the speed-up.

    python3 benchmarks/bench_backends.py [--grid 1000 10000 100000] [--length 8]
"""

import argparse

from typemix import _settings, bench


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--grid", nargs="*", type=int, default=list(bench.DEFAULT_GRID))
    parser.add_argument("--length", type=int, default=bench.DEFAULT_LENGTH)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    backends = ("numba", "numpy") if _settings.HAS_NUMBA else ("numpy",)
    rows, fits = bench.run(args.grid, args.length, backends, args.repeats)
    print(bench.format_table(rows, fits))
    if len(backends) == 2:
        by_u = {}
        for r in rows:
            by_u.setdefault(r.n_unique, {})[r.backend] = r.seconds
        for u, t in sorted(by_u.items()):
            print(f"U={u:>7d}: numba is {t['numpy'] / t['numba']:.1f}x faster")


if __name__ == "__main__":
    main()
