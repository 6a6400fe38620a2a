"""Invertibility of the diagonal blocks of L for each collision convention.

    python3 scripts/verify_L.py --r 1 2 3 4 5 6
"""

import argparse
import time

from permdemix.moments import CONVENTIONS, check_L_invertible


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--r", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    p.add_argument("--convention", choices=sorted(CONVENTIONS), nargs="+", default=["sum", "max", "min"])
    args = p.parse_args()
    for conv in args.convention:
        for r in args.r:
            start = time.perf_counter()
            ok, mins = check_L_invertible(r, conv)
            print(f"{conv:>3} r={r} invertible={ok} min_sv={min(mins):.4f} ({time.perf_counter() - start:.1f}s)")


if __name__ == "__main__":
    main()
