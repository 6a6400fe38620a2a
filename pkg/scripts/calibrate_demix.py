"""Pilot calibration for noisy demixing and weight estimation.

Runs seeded trials on n=6, k=2, phi=0.3 with random distinct centrals and
reports the recovery frequency per sample size. Used to fix the sample size
of the acceptance run before running it.

    python3 scripts/calibrate_demix.py --sizes 2000 20000 200000 --trials 100
"""

import argparse
import time

import numpy as np

from permdemix.mallows import MallowsMixture, sample
from permdemix.noisy import DemixConfig, demix_mallows, estimate_weights
from permdemix.perm import Permutation


def planted_pair(rng, n):
    while True:
        a = Permutation(tuple(rng.permutation(n).tolist()))
        b = Permutation(tuple(rng.permutation(n).tolist()))
        if a != b:
            return a, b


def demix_trial(tag, trial, N, n=6, phi=0.3, weights=(0.5, 0.5), gamma=0.25):
    rng = np.random.default_rng([tag, trial])
    a, b = planted_pair(rng, n)
    data_rng = np.random.default_rng([tag, trial, N])
    S = sample(MallowsMixture.from_lists([a, b], list(weights), phi), N, data_rng)
    res = demix_mallows(S, 2, phi, gamma, cfg=DemixConfig(seed=trial))
    return res.perms == {a, b}


def weights_trial(tag, trial, N, n=6, phi=0.3, weights=(0.7, 0.3), gamma=0.1):
    rng = np.random.default_rng([tag, trial])
    a, b = planted_pair(rng, n)
    data_rng = np.random.default_rng([tag, trial, N])
    S = sample(MallowsMixture.from_lists([a, b], list(weights), phi), N, data_rng)
    est = estimate_weights(S, phi, gamma, [a, b], DemixConfig(seed=trial))
    return max(abs(x - y) for x, y in zip(est, weights))


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[2000, 20000, 200000])
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--tag", type=int, default=1)
    p.add_argument("--weights", action="store_true", help="calibrate weight estimation instead")
    args = p.parse_args()
    for N in args.sizes:
        start = time.perf_counter()
        if args.weights:
            errs = [weights_trial(args.tag, t, N) for t in range(args.trials)]
            hits = sum(e <= 0.05 for e in errs)
            print(f"N={N} within 0.05: {hits}/{args.trials} max err {max(errs):.4f} ({time.perf_counter() - start:.1f}s)")
        else:
            hits = sum(demix_trial(args.tag, t, N) for t in range(args.trials))
            print(f"N={N} recovered: {hits}/{args.trials} ({time.perf_counter() - start:.1f}s)")


if __name__ == "__main__":
    main()
