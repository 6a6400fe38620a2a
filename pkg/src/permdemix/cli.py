"""Command-line front end.

Every subcommand writes a JSON report holding the resolved ``config``, the
``result``, and a ``runtime`` block (wall time, worker count). Only
``runtime`` may differ between two runs with the same flags and seed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Sequence

import jsonschema
import numpy as np

from .errors import DomainError
from .mallows import MallowsMixture, SampleSet, sample
from .moments import check_L_invertible, moments_match, tv_slope_scan
from .noiseless import (
    demix_strong,
    hard_instance,
    indistinguishable,
    insertion_demixing,
    m_star,
    random_delta_mixture,
    strong_query_bound,
    weak_query_bound,
)
from .noisy import DEFAULT_SEED, DemixConfig, demix_mallows, estimate_weights
from .oracle import GroundTruthStrongOracle, GroundTruthWeakOracle
from .perm import format_perm, parse_perm, read_perms

WORKERS_ENV = "PERMDEMIX_WORKERS"
DEFAULT_EPS = (1e-1, 10**-1.5, 1e-2, 10**-2.5, 1e-3)


class InputError(Exception):
    """Unreadable or malformed input file."""


# ---------------------------------------------------------------------------
# Report schemas


def _report_schema(config: dict, result: dict) -> dict:
    def obj(props: dict) -> dict:
        return {"type": "object", "properties": props, "required": sorted(props), "additionalProperties": False}

    return obj({
        "command": {"type": "string"},
        "config": obj(config),
        "result": obj(result),
        "runtime": obj({"wall_seconds": {"type": "number"}, "workers": {"type": "integer"}}),
    })


NUM = {"type": "number"}
INT = {"type": "integer"}
STR = {"type": "string"}
BOOL = {"type": "boolean"}
NULLNUM = {"type": ["number", "null"]}
NULLINT = {"type": ["integer", "null"]}
STRS = {"type": "array", "items": STR}
NUMS = {"type": "array", "items": NUM}

DEMIX_CONFIG = {
    "samples": STR, "k": INT, "phi": NUM, "gamma": NUM, "mode": STR, "n_prime": NULLINT, "L": NULLINT,
    "threshold": NULLNUM, "delta": NUM, "seed": INT, "prune_radius": NULLINT, "top_atoms": NULLINT,
    "max_candidates": INT, "feasibility_cap": NUM,
}

SCHEMAS = {
    "sample": _report_schema(
        {"n": INT, "phi": NUM, "centrals": STRS, "weights": NUMS, "count": INT, "seed": INT},
        {"draws": INT},
    ),
    "demix": _report_schema(
        DEMIX_CONFIG,
        {"perms": STRS, "queries": INT, "query_bound": NUM, "per_query": {"type": "array"}},
    ),
    "weights": _report_schema(
        {"samples": STR, "phi": NUM, "gamma": NUM, "centrals": STRS, "L": INT, "n_prime": INT, "seed": INT},
        {"weights": NUMS},
    ),
    "noiseless-demo": _report_schema(
        {"n": INT, "k": INT, "trials": INT, "grid": INT, "seed": INT},
        {"trials": {"type": "array"}, "strong_recovered": INT, "weak_recovered": INT},
    ),
    "hard-instance": _report_schema(
        {"m": INT, "ell": NULLINT},
        {"sigma1": STRS, "sigma2": STRS, "verdicts": {"type": "object"}},
    ),
    "verify-determinant": _report_schema(
        {"r": INT, "convention": STR},
        {"invertible": BOOL, "min_singular_value": NUMS, "block_size": INT},
    ),
    "tv-scan": _report_schema(
        {"m": INT, "eps_grid": NUMS, "drop_largest": BOOL},
        {"eps": NUMS, "tv": NUMS, "fitted_slope": NUM},
    ),
    "moments": _report_schema(
        {"m": INT, "max_ell": NULLINT},
        {"order": INT},
    ),
}


# ---------------------------------------------------------------------------
# Helpers


def _read_samples(path: str) -> SampleSet:
    try:
        with open(path) as fh:
            return SampleSet.read(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def _parse_centrals(texts: Sequence[str]) -> list:
    try:
        return [parse_perm(t) for t in texts]
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _workers(args) -> int:
    if args.workers is not None:
        return max(1, args.workers)
    env = os.environ.get(WORKERS_ENV)
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        raise InputError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None


def _pmap(fn: Callable, items: list, workers: int) -> list:
    if workers == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def render_report(command: str, config: dict, result: dict, wall: float, workers: int) -> str:
    report = {
        "command": command,
        "config": config,
        "result": result,
        "runtime": {"wall_seconds": round(wall, 6), "workers": workers},
    }
    jsonschema.validate(report, SCHEMAS[command])
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# Subcommands; each returns (config, result, text written to --output or None)


def cmd_sample(args, workers):
    centrals = _parse_centrals(args.central)
    if any(p.n != args.n for p in centrals):
        raise DomainError(f"every central must have n={args.n} elements")
    weights = args.weights or [1 / len(centrals)] * len(centrals)
    mix = MallowsMixture.from_lists(centrals, weights, args.phi)
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    s = sample(mix, args.count, rng)
    s.provenance["seed"] = args.seed
    buf = io.StringIO()
    s.write(buf)
    config = {
        "n": args.n, "phi": args.phi, "centrals": [format_perm(p) for p in centrals],
        "weights": list(mix.weights), "count": args.count, "seed": args.seed,
    }
    return config, {"draws": len(s)}, buf.getvalue()


def _demix_cfg(args) -> DemixConfig:
    return DemixConfig(
        mode=args.mode, n_prime=args.n_prime, L=args.L, threshold=args.threshold, delta=args.delta,
        seed=args.seed, prune_radius=args.prune_radius, top_atoms=args.top_atoms,
    )


def cmd_demix(args, workers):
    samples = _read_samples(args.samples)
    gamma = args.gamma if args.gamma is not None else 1 / args.k
    cfg = _demix_cfg(args)
    res = demix_mallows(samples, args.k, args.phi, gamma, cfg=cfg)
    perms = sorted(res.perms)
    config = {"samples": os.path.basename(args.samples), "k": args.k, "phi": args.phi, "gamma": gamma,
              **{key: v for key, v in cfg.resolved(args.k, args.phi).items()}}
    result = {
        "perms": [format_perm(p) for p in perms],
        "queries": res.queries,
        "query_bound": weak_query_bound(samples.n, args.k),
        "per_query": res.diagnostics,
    }
    return config, result, "".join(format_perm(p) + "\n" for p in perms)


def cmd_weights(args, workers):
    samples = _read_samples(args.samples)
    if args.perms:
        try:
            with open(args.perms) as fh:
                centrals = read_perms(fh)
        except OSError as exc:
            raise InputError(f"cannot read {args.perms}: {exc.strerror}") from None
        except ValueError as exc:
            raise InputError(f"{args.perms}: {exc}") from None
    else:
        centrals = _parse_centrals(args.central or [])
    if not centrals:
        raise InputError("give the centrals with --central or --perms")
    k, N = len(centrals), len(samples)
    gamma = args.gamma if args.gamma is not None else 1 / (2 * k)
    L = args.L or math.ceil(k * math.sqrt(N))
    n_prime = args.n_prime or math.ceil(k * N * math.log(max(N, 2)))
    w = estimate_weights(samples, args.phi, gamma, centrals, DemixConfig(seed=args.seed), L=L, n_prime=n_prime)
    config = {"samples": os.path.basename(args.samples), "phi": args.phi, "gamma": gamma,
              "centrals": [format_perm(p) for p in centrals], "L": L, "n_prime": n_prime, "seed": args.seed}
    return config, {"weights": list(w)}, None


def _noiseless_trial(job: tuple[int, int, int, np.random.SeedSequence]) -> dict:
    n, k, grid, seq = job
    rng = np.random.default_rng(seq)
    k = min(k, math.factorial(n))
    mix = random_delta_mixture(n, k, rng, grid)
    strong = GroundTruthStrongOracle(mix, m_star(k))
    rec = demix_strong(strong, n, k)
    weak = GroundTruthWeakOracle(mix.support(), k + 1)
    found = insertion_demixing(weak, n, k)
    return {
        "planted": [format_perm(p) for p in sorted(mix.support())],
        "weights": [str(w) for w, _ in mix.components],
        "strong_recovered": rec.as_dict() == mix.as_dict(),
        "strong_queries": strong.budget.count,
        "strong_bound": strong_query_bound(n, k),
        "weak_recovered": found == mix.support(),
        "weak_queries": weak.budget.count,
        "weak_bound": weak_query_bound(n, k),
    }


def cmd_noiseless_demo(args, workers):
    seqs = np.random.SeedSequence(args.seed).spawn(args.trials)
    trials = _pmap(_noiseless_trial, [(args.n, args.k, args.grid, s) for s in seqs], workers)
    config = {"n": args.n, "k": args.k, "trials": args.trials, "grid": args.grid, "seed": args.seed}
    result = {
        "trials": trials,
        "strong_recovered": sum(t["strong_recovered"] for t in trials),
        "weak_recovered": sum(t["weak_recovered"] for t in trials),
    }
    return config, result, None


def cmd_hard_instance(args, workers):
    h = hard_instance(args.m)
    ells = [args.ell] if args.ell is not None else list(range(2, h.n + 1))
    verdicts = {str(ell): "indistinguishable" if indistinguishable(h, ell) else "distinguishable" for ell in ells}
    result = {
        "sigma1": [format_perm(p) for p in h.sigma1],
        "sigma2": [format_perm(p) for p in h.sigma2],
        "verdicts": verdicts,
    }
    return {"m": args.m, "ell": args.ell}, result, None


def cmd_verify_determinant(args, workers):
    ok, mins = check_L_invertible(args.r, args.convention)
    result = {"invertible": ok, "min_singular_value": list(mins), "block_size": math.factorial(args.r)}
    return {"r": args.r, "convention": args.convention}, result, None


def cmd_tv_scan(args, workers):
    scan = tv_slope_scan(hard_instance(args.m), args.eps_grid, drop_largest=args.drop_largest)
    config = {"m": args.m, "eps_grid": list(scan.eps_grid), "drop_largest": args.drop_largest}
    result = {"eps": list(scan.eps_grid), "tv": list(scan.tv_values), "fitted_slope": scan.fitted_slope}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["eps", "tv", "log_eps", "log_tv"])
    for row in scan.rows():
        writer.writerow([repr(x) for x in row])
    return config, result, buf.getvalue()


def cmd_moments(args, workers):
    order = moments_match(hard_instance(args.m), max_ell=args.max_ell)
    return {"m": args.m, "max_ell": args.max_ell}, {"order": order}, None


COMMANDS = {
    "sample": cmd_sample,
    "demix": cmd_demix,
    "weights": cmd_weights,
    "noiseless-demo": cmd_noiseless_demo,
    "hard-instance": cmd_hard_instance,
    "verify-determinant": cmd_verify_determinant,
    "tv-scan": cmd_tv_scan,
    "moments": cmd_moments,
}


# ---------------------------------------------------------------------------
# Parser


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("--workers", type=int, default=None, help=f"worker processes (default ${WORKERS_ENV} or 1)")
    common.add_argument("--output", default=None, help="data output path (default stdout)")
    common.add_argument("--report", default=None, help="JSON report path (default stdout, or stderr when data goes to stdout)")

    p = argparse.ArgumentParser(prog="permdemix", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", parents=[common], help="draw from a Mallows mixture")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--phi", type=float, required=True)
    s.add_argument("--central", action="append", required=True, help="display notation, repeat per component")
    s.add_argument("--weights", type=_floats, default=None)
    s.add_argument("--count", type=int, required=True)

    s = sub.add_parser("demix", parents=[common], help="recover central permutations from samples")
    s.add_argument("--samples", required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--phi", type=float, required=True)
    s.add_argument("--gamma", type=float, default=None)
    s.add_argument("--mode", choices=["practical", "theoretical"], default="practical")
    s.add_argument("--n-prime", type=int, default=None)
    s.add_argument("--L", type=int, default=None)
    s.add_argument("--threshold", type=float, default=None)
    s.add_argument("--delta", type=float, default=0.05)
    s.add_argument("--prune-radius", type=int, default=None)
    s.add_argument("--top-atoms", type=int, default=None)

    s = sub.add_parser("weights", parents=[common], help="estimate mixture weights for known centrals")
    s.add_argument("--samples", required=True)
    s.add_argument("--phi", type=float, required=True)
    s.add_argument("--gamma", type=float, default=None)
    s.add_argument("--central", action="append", default=None)
    s.add_argument("--perms", default=None, help="file of centrals, one per line")
    s.add_argument("--L", type=int, default=None)
    s.add_argument("--n-prime", type=int, default=None)

    s = sub.add_parser("noiseless-demo", parents=[common], help="plant mixtures and run both noiseless demixers")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--trials", type=int, default=1)
    s.add_argument("--grid", type=int, default=64, help="weights lie on multiples of 1/grid")

    s = sub.add_parser("hard-instance", parents=[common], help="emit the two hard sets and indistinguishability verdicts")
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--ell", type=int, default=None)

    s = sub.add_parser("verify-determinant", parents=[common], help="check invertibility of L's diagonal blocks")
    s.add_argument("--r", type=int, required=True)
    s.add_argument("--convention", choices=["sum", "max", "min"], default="sum")

    s = sub.add_parser("tv-scan", parents=[common], help="exact TV between hard-instance mixtures against eps")
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--eps-grid", type=_floats, default=list(DEFAULT_EPS))
    s.add_argument("--drop-largest", action="store_true")

    s = sub.add_parser("moments", parents=[common], help="distance-moment matching order of a hard instance")
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--max-ell", type=int, default=None)
    return p


def run(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        workers = _workers(args)
        config, result, data = COMMANDS[args.command](args, workers)
        report = render_report(args.command, config, result, time.perf_counter() - start, workers)
        if data is not None:
            _write_text(args.output, data)
        if args.report:
            _write_text(args.report, report)
        elif data is not None and args.output in (None, "-"):
            sys.stderr.write(report)
        else:
            sys.stdout.write(report)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    except (DomainError, ValueError, IndexError) as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())
