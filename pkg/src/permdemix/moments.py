"""Moment equivalences, exact TV scaling, minimum-TV estimation, and the matrix L."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations_with_replacement
from typing import Sequence

import numpy as np

from .errors import EnumerationCapError
from .mallows import MallowsMixture, SampleSet, all_perm_ranks, all_perms, pmf_vector
from .noiseless import HardInstance
from .oracle import DeltaMixture
from .perm import Permutation, kendall_tau, kendall_tau_matrix

L_CAP = 7
MIN_TV_CAP = 500_000


def distance_moment(m: DeltaMixture, s: Permutation, ell: int):
    """sum_i w_i d_KT(s, pi_i)^ell."""
    if ell < 1:
        raise ValueError("ell must be >= 1")
    return sum(w * kendall_tau(s, p) ** ell for w, p in m.components)


def moments_match(a: HardInstance | DeltaMixture, b: DeltaMixture | None = None,
                  max_ell: int | None = None, cap: int = 8) -> int:
    """Largest ell <= max_ell with all distance moments of order 1..ell equal at every s in S_n."""
    if isinstance(a, HardInstance):
        a, b = a.mixtures()
    if b is None:
        raise ValueError("need two mixtures or a hard instance")
    if a.n != b.n:
        raise ValueError("mixtures live on different S_n")
    if a.n > cap:
        raise EnumerationCapError(f"exhaustive moment check over S_{a.n} exceeds the cap n <= {cap}")
    max_ell = a.n * (a.n - 1) // 2 if max_ell is None else max_ell
    ranks = all_perm_ranks(a.n)
    da = [(Fraction(w), kendall_tau_matrix(ranks, p.ranks).tolist()) for w, p in a.components]
    db = [(Fraction(w), kendall_tau_matrix(ranks, p.ranks).tolist()) for w, p in b.components]
    for ell in range(1, max_ell + 1):
        for row in range(len(ranks)):
            ma = sum(w * d[row] ** ell for w, d in da)
            mb = sum(w * d[row] ** ell for w, d in db)
            if ma != mb:
                return ell - 1
    return max_ell


def tv_mixtures_exact(a: MallowsMixture, b: MallowsMixture, cap: int | None = None) -> float:
    if a.n != b.n:
        raise ValueError("mixtures live on different S_n")
    if a.phi != b.phi:
        raise ValueError("mixtures must share phi")
    return 0.5 * float(np.abs(pmf_vector(a, cap) - pmf_vector(b, cap)).sum())


def hard_mixtures(h: HardInstance, phi: float) -> tuple[MallowsMixture, MallowsMixture]:
    """Equally weighted Mallows mixtures centered at the two sides of a hard instance."""
    k = len(h.sigma1)
    return (
        MallowsMixture.from_lists(h.sigma1, [1 / k] * k, phi),
        MallowsMixture.from_lists(h.sigma2, [1 / k] * k, phi),
    )


@dataclass(frozen=True)
class EpsScan:
    eps_grid: tuple[float, ...]
    tv_values: tuple[float, ...]
    fitted_slope: float

    def __post_init__(self) -> None:
        if any(b >= a for a, b in zip(self.eps_grid, self.eps_grid[1:])):
            raise ValueError("eps grid must be strictly decreasing")
        if any(not 0 <= v <= 1 for v in self.tv_values):
            raise ValueError("TV values must lie in [0, 1]")

    def rows(self) -> list[tuple[float, float, float, float]]:
        return [(e, t, math.log(e), math.log(t)) for e, t in zip(self.eps_grid, self.tv_values)]


def fit_slope(eps: Sequence[float], tvs: Sequence[float]) -> float:
    """Least-squares slope of log TV against log eps."""
    slope, _ = np.polyfit(np.log(eps), np.log(tvs), 1)
    return float(slope)


def tv_slope_scan(h: HardInstance, eps_grid: Sequence[float], drop_largest: bool = False,
                  cap: int | None = None) -> EpsScan:
    eps = tuple(sorted((float(e) for e in eps_grid), reverse=True))
    if not eps or any(not 0 < e < 1 for e in eps):
        raise ValueError("eps values must lie in (0, 1)")
    tvs = tuple(tv_mixtures_exact(*hard_mixtures(h, 1 - e), cap=cap) for e in eps)
    fit = slice(1, None) if drop_largest and len(eps) > 2 else slice(None)
    return EpsScan(eps, tvs, fit_slope(eps[fit], tvs[fit]))


def min_tv_estimate(samples: SampleSet, n: int, k: int, phi: float, cap: int = MIN_TV_CAP,
                    chunk: int = 4096) -> MallowsMixture:
    """Minimum-TV estimator over equally weighted k-mixtures of M(pi, phi) on S_n.

    Candidates are multisets of k centrals; the first minimizer in the
    lexicographic order of sorted central lists wins.
    """
    if samples.n != n:
        raise ValueError("sample size n does not match")
    size = math.factorial(n)
    count = math.comb(size + k - 1, k)
    if count > cap:
        raise EnumerationCapError(f"candidate class has {count} members, above the cap {cap}")
    ranks = all_perm_ranks(n)
    rows = np.vstack([pmf_vector(MallowsMixture.from_lists([p], [1.0], phi)) for p in all_perms(n)])

    index = {tuple(r): i for i, r in enumerate(ranks.tolist())}
    emp = np.bincount([index[tuple(r)] for r in samples.ranks.tolist()], minlength=size) / len(samples)

    best_tv, best = math.inf, None
    combos = combinations_with_replacement(range(size), k)
    while True:
        block = np.array(list(_take(combos, chunk)), dtype=np.int64).reshape(-1, k)
        if not len(block):
            break
        cand = rows[block].mean(axis=1)
        scores = 0.5 * np.abs(cand - emp).sum(axis=1)
        i = int(np.argmin(scores))
        if scores[i] < best_tv:
            best_tv, best = float(scores[i]), block[i]
    perms = all_perms(n)
    return MallowsMixture.from_lists([perms[i] for i in best], [1 / k] * k, phi)


def _take(it, count):
    for _ in range(count):
        try:
            yield next(it)
        except StopIteration:
            return


# ---------------------------------------------------------------------------
# The matrix L on S_{r+1}


def tau(s: int, r: int) -> Permutation:
    """tau_s on r+1 points (s is 1-based): keep 1..s, send s+1 to r+1, shift the rest down."""
    if not 1 <= s <= r + 1:
        raise ValueError(f"s must lie in 1..{r + 1}")
    out = []
    for i in range(1, r + 2):
        out.append(i if i <= s else r + 1 if i == s + 1 else i - 1)
    return Permutation(tuple(v - 1 for v in out))


CONVENTIONS = {"sum": sum, "max": max, "min": min}


def tau_values(r: int, convention: str = "sum") -> dict[Permutation, int]:
    """Value t(g) for each distinct g among tau_1..tau_{r+1}, resolving collisions by ``convention``."""
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}")
    hits: dict[Permutation, list[int]] = {}
    for s in range(1, r + 2):
        hits.setdefault(tau(s, r), []).append(s)
    return {g: CONVENTIONS[convention](ss) for g, ss in hits.items()}


@dataclass(frozen=True)
class LMatrix:
    """Block-diagonal form of L; block b holds the pi with pi^-1(0) = b.

    Within block b, pi is ordered by the lexicographic order of pi o (0 b),
    which makes all blocks equal as matrices.
    """

    r: int
    convention: str
    blocks: tuple[np.ndarray, ...]
    members: tuple[tuple[Permutation, ...], ...]

    def position(self, p: Permutation) -> tuple[int, int]:
        b = p.order[0]
        return b, self.members[b].index(p)

    def dense(self) -> np.ndarray:
        size = math.factorial(self.r + 1)
        perms = all_perms(self.r + 1)
        where = {p: i for i, p in enumerate(perms)}
        out = np.zeros((size, size))
        for blk, mem in zip(self.blocks, self.members):
            idx = [where[p] for p in mem]
            out[np.ix_(idx, idx)] = blk
        return out


def _swap0(b: int, size: int) -> Permutation:
    ranks = list(range(size))
    ranks[0], ranks[b] = ranks[b], ranks[0]
    return Permutation(tuple(ranks))


def build_L(r: int, convention: str = "sum", cap: int = L_CAP) -> LMatrix:
    if r < 1:
        raise ValueError("r must be >= 1")
    if r > cap:
        raise EnumerationCapError(f"r = {r} exceeds the cap r <= {cap}")
    size = r + 1
    values = tau_values(r, convention)
    base = all_perms(size)
    members = []
    for b in range(size):
        c = _swap0(b, size)
        # p o c runs over block 0 in lexicographic order, so p = q o c with q in block 0
        members.append(tuple(q.compose(c) for q in base if q.order[0] == 0))
    blocks = []
    for mem in members:
        where = {p: i for i, p in enumerate(mem)}
        blk = np.zeros((len(mem), len(mem)))
        for col, sigma in enumerate(mem):
            for g, val in values.items():
                blk[where[g.compose(sigma)], col] = val
        blocks.append(blk)
    return LMatrix(r, convention, tuple(blocks), tuple(members))


def check_L_invertible(r: int, convention: str = "sum", rtol: float = 1e-8,
                       cap: int = L_CAP) -> tuple[bool, tuple[float, ...]]:
    """Certify each diagonal block by its singular values; repeated blocks are factorized once."""
    L = build_L(r, convention, cap)
    mins: list[float] = []
    done: list[tuple[np.ndarray, float, bool]] = []
    ok = True
    for blk in L.blocks:
        hit = next(((m, good) for prev, m, good in done if np.array_equal(prev, blk)), None)
        if hit is None:
            sv = np.linalg.svd(blk, compute_uv=False)
            m, good = float(sv[-1]), bool(sv[-1] > rtol * sv[0])
            done.append((blk, m, good))
        else:
            m, good = hit
        mins.append(m)
        ok &= good
    return ok, tuple(mins)
