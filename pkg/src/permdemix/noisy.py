"""Demixing Mallows mixtures from samples by simulating a weak comparison oracle.

The oracle is simulated by minimum-TV model selection on a marginal: for an
index set J, candidate mixtures sum_i (r_i/L) M(pi_rho_i, phi) are compared
with the empirical marginal of the data on J. The marginal of M(pi_rho, phi)
on J only depends on rho = pi_rho|_J, and equals the law of
(sigma0(rho(j)))_{j in J} for sigma0 ~ M(id, phi). One shared pool of
M(id, phi) draws therefore yields every candidate's component marginal.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from itertools import combinations_with_replacement, product
from typing import Any, Iterator, Sequence

import numpy as np
from scipy.cluster.vq import kmeans2

from .errors import DomainError, InfeasibleModeError
from .mallows import SampleSet, injection_codes, sample_identity_ranks
from .noiseless import find_tuple, insertion_demixing
from .oracle import OracleBudget
from .perm import ChiVector, Injection, Permutation, RelativeOrder, chi, check_pairs, index_set, tuple_support

DEFAULT_SEED = 12345


def _check_domain(k: int, ell: int, phi: float, gamma: float) -> None:
    if k < 1 or ell < 1:
        raise ValueError("k and ell must be >= 1")
    if not 0 < phi < 1:
        raise ValueError("phi must lie in (0, 1)")
    if not 0 < gamma <= 1 / k + 1e-12:
        raise ValueError("gamma must lie in (0, 1/k]")


def log_eta(k: float, ell: int, phi: float, gamma: float) -> float:
    """Natural log of the TV separation constant eta(k, ell, phi, gamma)."""
    _check_domain(math.ceil(k), ell, phi, gamma)
    a = (3 * ell) ** (ell + 1)
    b = (4 * ell) ** ell + 2 * k * ell**2
    return a * math.log(gamma / (6 * k)) + b * math.log((1 - phi) / ell)


def log_zeta(k: int, ell: int, phi: float, gamma: float) -> float:
    """Natural log of the sample-size constant zeta(k, ell, phi, gamma)."""
    _check_domain(k, ell, phi, gamma)
    a = (9 * ell) ** (ell + 1)
    b = (6 * ell) ** (ell + 1)
    c = 3 * (4 * ell) ** ell + 8 * k * ell**2
    return a + b * math.log(k / gamma) + c * math.log(ell / (1 - phi))


@dataclass
class DemixConfig:
    """Settings for the simulated oracle.

    Practical mode picks the candidate with the smallest marginal TV. The
    candidate injections are the ``top_atoms`` most frequent atoms of the
    empirical marginal whose ranks all lie within ``prune_radius`` of a
    1-D k-means center of that index's empirical ranks.
    """

    mode: str = "practical"
    n_prime: int | None = None
    L: int | None = None
    threshold: float | None = None
    delta: float = 0.05
    seed: int = DEFAULT_SEED
    prune_radius: int | None = None
    top_atoms: int | None = None
    max_candidates: int = 2_000_000
    feasibility_cap: float = 1e7

    def __post_init__(self) -> None:
        if self.mode not in ("practical", "theoretical"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.n_prime is not None and self.n_prime < 1:
            raise ValueError("n_prime must be >= 1")
        if self.L is not None and self.L < 1:
            raise ValueError("L must be >= 1")
        if self.threshold is not None and not 0 < self.threshold <= 1:
            raise ValueError("threshold must lie in (0, 1]")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")

    def resolved(self, k: int, phi: float) -> dict[str, Any]:
        out = asdict(self)
        if self.mode == "practical":
            out["n_prime"] = self.practical_n_prime()
            out["L"] = self.practical_L()
            out["prune_radius"] = self.radius(phi)
            out["top_atoms"] = self.pool_size(k)
        return out

    def practical_n_prime(self) -> int:
        return self.n_prime if self.n_prime is not None else 50_000

    def practical_L(self) -> int:
        return self.L if self.L is not None else 20

    def radius(self, phi: float) -> int:
        return self.prune_radius if self.prune_radius is not None else math.ceil(3 / (1 - phi))

    def pool_size(self, k: int) -> int:
        return self.top_atoms if self.top_atoms is not None else max(10, 6 * k)


def weight_grid(k: int, L: int, gamma: float) -> list[tuple[int, ...]]:
    """All r in {1..L}^k with r_i >= gamma L and sum r = L."""
    lo = max(1, math.ceil(gamma * L - 1e-9))
    out: list[tuple[int, ...]] = []

    def rec(prefix: tuple[int, ...], left: int) -> None:
        slots = k - len(prefix)
        if slots == 1:
            if left >= lo:
                out.append(prefix + (left,))
            return
        for r in range(lo, left - lo * (slots - 1) + 1):
            rec(prefix + (r,), left - r)

    rec((), L)
    return out


def complete_injection(rho: Injection, n: int) -> Permutation:
    """pi_rho: rho on J, remaining ranks given to the remaining elements in increasing index order."""
    ranks = [-1] * n
    for j, v in zip(rho.domain, rho.values):
        ranks[j] = v
    free = iter(sorted(set(range(n)) - set(rho.values)))
    return Permutation(tuple(r if r >= 0 else next(free) for r in ranks))


def all_injections(J: Sequence[int], n: int) -> Iterator[Injection]:
    from itertools import permutations

    for vals in permutations(range(n), len(J)):
        yield Injection(tuple(J), vals)


@dataclass(frozen=True)
class CandidateClass:
    """Discretized mixtures sum_i (r_i/L) M(pi_rho_i, phi) with rho_i injections on J."""

    n: int
    k: int
    phi: float
    gamma: float
    J: tuple[int, ...]
    L: int

    def weights(self) -> list[tuple[int, ...]]:
        return weight_grid(self.k, self.L, self.gamma)

    def count(self) -> int:
        injections = math.perm(self.n, len(self.J))
        return len(self.weights()) * injections**self.k

    def __iter__(self) -> Iterator[tuple[tuple[Injection, ...], tuple[int, ...]]]:
        for rhos in product(list(all_injections(self.J, self.n)), repeat=self.k):
            for r in self.weights():
                yield rhos, r


def kmeans_1d(x: np.ndarray, k: int) -> np.ndarray:
    """Deterministic 1-D k-means: quantile initialisation, Lloyd iterations."""
    x = np.asarray(x, dtype=float)
    init = np.quantile(x, (np.arange(k) + 0.5) / k)
    with warnings.catch_warnings():
        # an empty cluster keeps its initial center, which is harmless here
        warnings.simplefilter("ignore", UserWarning)
        centers, _ = kmeans2(x[:, None], init[:, None], minit="matrix", missing="warn", seed=0)
    return np.sort(centers[:, 0])


def rank_window(samples: SampleSet, J: Sequence[int], k: int, radius: int) -> list[set[int]]:
    """Allowed ranks for each j in J: within ``radius`` of a cluster center."""
    out = []
    for j in J:
        centers = kmeans_1d(samples.ranks[:, j], k)
        allowed = {r for r in range(samples.n) if np.min(np.abs(centers - r)) <= radius}
        out.append(allowed)
    return out


def _decode(code: int, ell: int, n: int) -> tuple[int, ...]:
    vals = []
    for _ in range(ell):
        code, r = divmod(int(code), n)
        vals.append(r)
    return tuple(reversed(vals))


@dataclass
class SubOrderResult:
    orders: frozenset[RelativeOrder]
    injections: tuple[Injection, ...]
    weights: tuple[float, ...]
    tv: float
    runner_up_tv: float | None
    candidates: int


class SubOrderSolver:
    """Answers relative-order queries on index sets J from one sample set.

    Results are memoized per J. The M(id, phi) pool is drawn once, from the
    configured seed, so every query of a run shares it.
    """

    def __init__(self, samples: SampleSet, k: int, phi: float, gamma: float, cfg: DemixConfig | None = None,
                 n_prime: int | None = None) -> None:
        _check_domain(k, 1, phi, gamma)
        self.samples = samples
        self.n = samples.n
        self.k = k
        self.phi = float(phi)
        self.gamma = float(gamma)
        self.cfg = cfg or DemixConfig()
        self._n_prime = n_prime
        self._cache: dict[tuple[int, ...], SubOrderResult] = {}
        self._pool: np.ndarray | None = None
        self._component: dict[tuple[int, ...], dict[int, float]] = {}
        self._seeds = np.random.SeedSequence(self.cfg.seed)

    # -- shared helpers -------------------------------------------------

    def n_prime(self, ell: int) -> int:
        if self._n_prime is not None:
            return self._n_prime
        if self.cfg.n_prime is not None:
            return self.cfg.n_prime
        if self.cfg.mode == "practical":
            return self.cfg.practical_n_prime()
        log_np = log_zeta(self.k, ell, self.phi, self.gamma) + math.log(math.log(self.n / self.cfg.delta))
        if log_np > math.log(self.cfg.feasibility_cap):
            raise InfeasibleModeError(
                f"theoretical N' = exp({log_np:.1f}) is not computable; pass n_prime or use practical mode"
            )
        return math.ceil(math.exp(log_np))

    def pool(self) -> np.ndarray:
        if self._pool is None:
            rng = np.random.default_rng(self._seeds.spawn(1)[0])
            self._pool = sample_identity_ranks(self.n, self.phi, self.n_prime(2 * self.k + 2), rng)
        return self._pool

    def data_marginal(self, J: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
        codes, counts = np.unique(injection_codes(self.samples.ranks, J, self.n), return_counts=True)
        return codes, counts / counts.sum()

    def component_marginal(self, values: tuple[int, ...]) -> dict[int, float]:
        """Law of the code of (sigma0(v))_{v in values} under the pool."""
        hit = self._component.get(values)
        if hit is None:
            pool = self.pool()
            codes, counts = np.unique(injection_codes(pool, values, self.n), return_counts=True)
            hit = dict(zip(codes.tolist(), (counts / counts.sum()).tolist()))
            self._component[values] = hit
        return hit

    # -- queries ----------------------------------------------------------

    def __call__(self, J) -> SubOrderResult:
        J = index_set(J, self.n)
        hit = self._cache.get(J)
        if hit is None:
            if self.cfg.mode == "practical":
                hit = self._practical(J)
            else:
                hit = self._theoretical(J)
            self._cache[J] = hit
        return hit

    def candidate_injections(self, J: tuple[int, ...]) -> list[tuple[int, ...]]:
        codes, probs = self.data_marginal(J)
        window = rank_window(self.samples, J, self.k, self.cfg.radius(self.phi))
        ranked = np.argsort(-probs, kind="stable")
        out = []
        for idx in ranked:
            vals = _decode(codes[idx], len(J), self.n)
            if all(v in w for v, w in zip(vals, window)):
                out.append(vals)
                if len(out) == self.cfg.pool_size(self.k):
                    break
        if not out:
            raise DomainError(f"no candidate injections survive pruning on J={J}")
        return out

    def _practical(self, J: tuple[int, ...]) -> SubOrderResult:
        pool_vals = self.candidate_injections(J)
        grid = weight_grid(self.k, self.cfg.practical_L(), self.gamma)
        if not grid:
            raise DomainError("weight grid is empty under the gamma constraint")
        data_codes, data_probs = self.data_marginal(J)

        comps = [self.component_marginal(v) for v in pool_vals]
        atoms = sorted(set(data_codes.tolist()).union(*comps))
        col = {a: i for i, a in enumerate(atoms)}
        C = np.zeros((len(comps), len(atoms)))
        for i, c in enumerate(comps):
            for a, p in c.items():
                C[i, col[a]] = p
        d = np.zeros(len(atoms))
        d[[col[a] for a in data_codes.tolist()]] = data_probs

        combos = list(combinations_with_replacement(range(len(comps)), self.k))
        W = np.array(grid, dtype=float) / self.cfg.practical_L()
        count = len(combos) * len(grid)
        if count > self.cfg.max_candidates:
            raise DomainError(f"{count} candidates exceed max_candidates={self.cfg.max_candidates}")

        scores = np.empty((len(combos), len(grid)))
        for ci, combo in enumerate(combos):
            mix = W @ C[list(combo)]
            scores[ci] = 0.5 * np.abs(mix - d).sum(axis=1)
        flat = int(np.argmin(scores))
        ci, wi = divmod(flat, len(grid))
        best = combos[ci]
        orders = frozenset(RelativeOrder.from_values(J, pool_vals[i]) for i in best)

        runner_up = None
        for cj in np.argsort(scores.min(axis=1), kind="stable"):
            other = frozenset(RelativeOrder.from_values(J, pool_vals[i]) for i in combos[cj])
            if other != orders:
                runner_up = float(scores[cj].min())
                break
        return SubOrderResult(
            orders=orders,
            injections=tuple(Injection(J, pool_vals[i]) for i in best),
            weights=tuple(W[wi].tolist()),
            tv=float(scores[ci, wi]),
            runner_up_tv=runner_up,
            candidates=count,
        )

    def _theoretical(self, J: tuple[int, ...]) -> SubOrderResult:
        ell = len(J)
        le = log_eta(self.k, ell, self.phi, self.gamma)
        if self.cfg.L is not None:
            L = self.cfg.L
        else:
            log_L = math.log(3 * self.k) - le
            if log_L > math.log(self.cfg.feasibility_cap):
                raise InfeasibleModeError(
                    f"L = ceil(3k/eta) = exp({log_L:.1f}) is not enumerable; override L and threshold or use practical mode"
                )
            L = math.ceil(math.exp(log_L))
        threshold = self.cfg.threshold if self.cfg.threshold is not None else math.exp(le) / 2
        if threshold <= 0:
            raise InfeasibleModeError("eta/2 underflows to zero; override threshold or use practical mode")
        cls = CandidateClass(self.n, self.k, self.phi, self.gamma, J, L)
        count = cls.count()
        if count > self.cfg.max_candidates:
            raise DomainError(f"{count} candidates exceed max_candidates={self.cfg.max_candidates}")
        n_prime = self.n_prime(ell)
        data_codes, data_probs = self.data_marginal(J)
        data = dict(zip(data_codes.tolist(), data_probs.tolist()))
        rng = np.random.default_rng(self._seeds.spawn(1)[0])

        accepted: SubOrderResult | None = None
        best_tv = math.inf
        for rhos, r in cls:
            labels = rng.choice(self.k, size=n_prime, p=np.array(r) / L)
            base = sample_identity_ranks(self.n, self.phi, n_prime, rng)
            vals = np.empty((n_prime, ell), dtype=np.int64)
            for c, rho in enumerate(rhos):
                rows = labels == c
                vals[rows] = base[rows][:, list(rho.values)]
            codes, counts = np.unique(injection_codes(vals, range(ell), self.n), return_counts=True)
            sim = dict(zip(codes.tolist(), (counts / n_prime).tolist()))
            dist = 0.5 * sum(abs(sim.get(a, 0.0) - data.get(a, 0.0)) for a in set(sim) | set(data))
            best_tv = min(best_tv, dist)
            if dist <= threshold:
                accepted = SubOrderResult(
                    orders=frozenset(RelativeOrder.from_values(J, rho.values) for rho in rhos),
                    injections=tuple(rhos),
                    weights=tuple(x / L for x in r),
                    tv=dist,
                    runner_up_tv=None,
                    candidates=count,
                )
        if accepted is None:
            return SubOrderResult(frozenset(), (), (), best_tv, None, count)
        return accepted


def sub_order(samples: SampleSet, k: int, phi: float, gamma: float, cfg: DemixConfig | None, J) -> frozenset[RelativeOrder]:
    return SubOrderSolver(samples, k, phi, gamma, cfg)(J).orders


class SimulatedOracle:
    """Weak group oracle answered from samples via relative-order selection."""

    def __init__(self, solver: SubOrderSolver) -> None:
        self.solver = solver
        self.budget = OracleBudget()
        self.log: list[dict[str, Any]] = []

    def query(self, t) -> frozenset[ChiVector]:
        t = check_pairs(t, self.solver.n)
        self.budget.charge()
        J = tuple_support(t)
        res = self.solver(J)
        self.log.append({
            "J": list(J),
            "tv": res.tv,
            "runner_up_tv": res.runner_up_tv,
            "candidates": res.candidates,
            "orders": len(res.orders),
        })
        return frozenset(chi(tau, t) for tau in res.orders)


def simulate_oracle(samples: SampleSet, k: int, phi: float, gamma: float, cfg: DemixConfig | None, t) -> frozenset[ChiVector]:
    return SimulatedOracle(SubOrderSolver(samples, k, phi, gamma, cfg)).query(t)


@dataclass
class DemixResult:
    perms: frozenset[Permutation]
    queries: int
    diagnostics: list[dict[str, Any]] = field(default_factory=list)


def demix_n_prime(n: int, k: int, phi: float, gamma: float, delta: float, cap: float) -> int:
    """N' = zeta(k, 2k+2, phi, gamma) log(n^(2k+3)/delta), refused when not computable."""
    log_np = log_zeta(k, 2 * k + 2, phi, gamma) + math.log((2 * k + 3) * math.log(n) - math.log(delta))
    if log_np > math.log(cap):
        raise InfeasibleModeError(f"theoretical N' = exp({log_np:.1f}) is not computable; pass n_prime or use practical mode")
    return math.ceil(math.exp(log_np))


def demix_mallows(samples: SampleSet, k: int, phi: float, gamma: float, delta: float | None = None,
                  cfg: DemixConfig | None = None) -> DemixResult:
    """Recover the set of central permutations by insertion demixing over a simulated oracle."""
    cfg = cfg or DemixConfig()
    if delta is not None:
        cfg = DemixConfig(**{**asdict(cfg), "delta": delta})
    n_prime = None
    if cfg.mode == "theoretical" and cfg.n_prime is None:
        n_prime = demix_n_prime(samples.n, k, phi, gamma, cfg.delta, cfg.feasibility_cap)
    oracle = SimulatedOracle(SubOrderSolver(samples, k, phi, gamma, cfg, n_prime=n_prime))
    perms = insertion_demixing(oracle, samples.n, k)
    return DemixResult(perms, oracle.budget.count, oracle.log)


def estimate_weights(samples: SampleSet, phi: float, gamma: float, perms: Sequence[Permutation],
                     cfg: DemixConfig | None = None, L: int | None = None,
                     n_prime: int | None = None) -> tuple[float, ...]:
    """Weights of the given centrals, aligned with ``perms``, by minimum marginal TV over a grid."""
    perms = list(perms)
    k = len(perms)
    if len(set(perms)) != k:
        raise ValueError("perms must be distinct")
    if any(p.n != samples.n for p in perms):
        raise ValueError("perms and samples differ in n")
    _check_domain(k, 1, phi, gamma)
    if k == 1:
        return (1.0,)
    cfg = cfg or DemixConfig()
    N = len(samples)
    L = L or cfg.L or math.ceil(k * math.sqrt(N))
    n_prime = n_prime or cfg.n_prime or math.ceil(k * N * math.log(N))
    grid = weight_grid(k, L, gamma)
    if not grid:
        raise DomainError("weight grid is empty under the gamma constraint")

    J = tuple_support(find_tuple(perms))
    solver = SubOrderSolver(samples, k, phi, gamma, cfg, n_prime=n_prime)
    comps = [solver.component_marginal(tuple(p.ranks[j] for j in J)) for p in perms]
    data_codes, data_probs = solver.data_marginal(J)
    atoms = sorted(set(data_codes.tolist()).union(*comps))
    col = {a: i for i, a in enumerate(atoms)}
    C = np.zeros((k, len(atoms)))
    for i, c in enumerate(comps):
        for a, p in c.items():
            C[i, col[a]] = p
    d = np.zeros(len(atoms))
    d[[col[a] for a in data_codes.tolist()]] = data_probs
    R = np.array(grid, dtype=float)
    scores = 0.5 * np.abs(R / L @ C - d).sum(axis=1)
    best = grid[int(np.argmin(scores))]
    return tuple(r / L for r in best)
