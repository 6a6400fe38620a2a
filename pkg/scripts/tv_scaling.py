"""Exact TV between the two hard-instance Mallows mixtures as eps = 1 - phi shrinks.

Prints the scan for each m with the fitted log-log slope, which should sit
near m.

    python3 scripts/tv_scaling.py --m 1 2 3
"""

import argparse
import time

from permdemix.moments import tv_slope_scan
from permdemix.noiseless import hard_instance

GRID = [10**-1, 10**-1.5, 10**-2, 10**-2.5, 10**-3]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--m", type=int, nargs="+", default=[1, 2, 3])
    p.add_argument("--drop-largest", action="store_true")
    args = p.parse_args()
    for m in args.m:
        start = time.perf_counter()
        scan = tv_slope_scan(hard_instance(m), GRID, drop_largest=args.drop_largest)
        print(f"m={m} slope={scan.fitted_slope:.4f} ({time.perf_counter() - start:.1f}s)")
        for eps, tv, _, _ in scan.rows():
            print(f"  eps={eps:.2e} tv={tv:.6e}")


if __name__ == "__main__":
    main()
