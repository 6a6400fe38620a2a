"""Noiseless demixing from pairwise-comparison oracles, and the hard instance."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations, product
from typing import Any, Iterable, Sequence

from .errors import DomainError, InconsistentOracleError
from .mallows import DiscreteDist
from .oracle import DeltaMixture, StrongOracle, WeakOracle, lwise_query
from .perm import ChiVector, Pairs, Permutation, chi

FLOAT_TOL = 1e-9


def m_star(k: int) -> int:
    """Smallest group size that identifies any k-mixture: floor(log2 k) + 1."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return k.bit_length()


def strong_query_bound(n: int, k: int) -> float:
    return 1 + k / 2 * (n - 2) * (n + 1)


def weak_query_bound(n: int, k: int) -> float:
    return 1 + k / 2 * (n - 2) * (n - 1)


def _check_distinct(perms: Sequence[Permutation]) -> None:
    if len(set(perms)) != len(perms):
        raise ValueError("permutations must be pairwise distinct")
    if len({p.n for p in perms}) > 1:
        raise ValueError("permutations must share the same n")


def find_signature(s: Iterable[Permutation]) -> tuple[Permutation, Pairs]:
    """Bisect on comparisons until one permutation is isolated.

    Each round splits the survivors on the first pair (i, j), i < j, that
    separates them and keeps the smaller side (ties keep the side with
    pi(i) > pi(j)), so the tuple has at most floor(log2 k) pairs.
    """
    rest = sorted(s)
    if not rest:
        raise ValueError("need at least one permutation")
    _check_distinct(rest)
    n = rest[0].n
    pairs: list[tuple[int, int]] = []
    while len(rest) > 1:
        for i, j in combinations(range(n), 2):
            plus = [p for p in rest if p(i) > p(j)]
            minus = [p for p in rest if p(i) < p(j)]
            if plus and minus:
                break
        rest = plus if len(plus) <= len(minus) else minus
        pairs.append((i, j))
    return rest[0], tuple(pairs)


def find_tuple(perms: Sequence[Permutation]) -> Pairs:
    """Tuple of at most k-1 pairs on which the given permutations have distinct chi vectors."""
    perms = list(perms)
    _check_distinct(perms)
    if not perms:
        return ()
    n = perms[0].n
    t: list[tuple[int, int]] = []
    for j in range(1, len(perms)):
        cj = chi(perms[j], t)
        clash = next((p for p in perms[:j] if chi(p, t) == cj), None)
        if clash is None:
            continue
        pj = perms[j]
        t.append(next(
            (r, s) for r in range(n) for s in range(n)
            if r != s and clash(r) < clash(s) and pj(r) > pj(s)
        ))
    return tuple(t)


def _pad(t: Sequence[tuple[int, int]], m: int) -> Pairs:
    t = tuple(t)
    if len(t) > m:
        raise DomainError(f"query needs {len(t)} pairs but the oracle answers groups of {m}")
    return t + (t[0],) * (m - len(t))


# ---------------------------------------------------------------------------
# Strong oracle


def _clean(value: Any, exact: bool, what: str) -> Any:
    if exact:
        if value < 0:
            raise InconsistentOracleError(f"{what} is negative ({value})")
        return value
    if value < -FLOAT_TOL:
        raise InconsistentOracleError(f"{what} is negative ({value:.3g})")
    return value if value > FLOAT_TOL else 0.0


def demix_strong(oracle: StrongOracle, n: int, k: int, m: int | None = None) -> DeltaMixture:
    """Recover a hidden delta mixture of at most k permutations, weights included.

    Grows the prefix mixture on elements 0..s-1 one element at a time. For
    each recovered prefix, a signature tuple isolates its extensions in the
    oracle answer (after subtracting extensions already recovered at this
    level), and one query per rank position gives the mass of extensions that
    place the new element after that position. Successive differences of
    those masses are the weights of the extensions.
    """
    m = m_star(k) if m is None else m
    if m < 1:
        raise ValueError("group size must be >= 1")
    if n == 1:
        return DeltaMixture(((Fraction(1), Permutation.identity(1)),))

    ans = oracle.query(_pad(((0, 1),), m))
    exact = all(isinstance(v, (int, Fraction)) for _, v in ans.items())
    up = sum((v for vec, v in ans.items() if vec[0] == 1), Fraction(0) if exact else 0.0)
    down = sum((v for vec, v in ans.items() if vec[0] == 0), Fraction(0) if exact else 0.0)
    level: dict[Permutation, Any] = {}
    if up:
        level[Permutation((0, 1))] = up
    if down:
        level[Permutation((1, 0))] = down

    for size in range(2, n):
        new = size
        nxt: dict[Permutation, Any] = {}
        remaining = dict(level)
        while remaining:
            star, sig = find_signature(remaining)
            target = chi(star, sig)
            W = remaining.pop(star)
            g = []
            for p, e in enumerate(star.order):
                t = _pad(sig + ((e, new),), m)
                ans = oracle.query(t)
                masses: dict[ChiVector, Any] = dict(ans.items())
                for perm, w in nxt.items():
                    v = chi(perm, t)
                    masses[v] = masses.get(v, 0) - w
                total = sum(
                    (w for v, w in masses.items() if v[: len(sig)] == target and v[len(sig)] == 1),
                    Fraction(0) if exact else 0.0,
                )
                g.append(_clean(total, exact, f"residual mass at rank {p}"))
            diffs = [W - g[0]] + [g[q - 1] - g[q] for q in range(1, size)] + [g[-1]]
            for q, w in enumerate(diffs):
                w = _clean(w, exact, f"insertion weight at rank {q}")
                if w:
                    nxt[star.insert(q)] = w
        if len(nxt) > k:
            raise InconsistentOracleError(f"recovered {len(nxt)} permutations on {size + 1} elements, more than k={k}")
        level = nxt

    if not exact:
        total = sum(level.values())
        level = {p: w / total for p, w in level.items()}
    return DeltaMixture(tuple((w, p) for p, w in level.items()))


# ---------------------------------------------------------------------------
# Weak oracle


def insertion_demixing(oracle: WeakOracle, n: int, k: int) -> frozenset[Permutation]:
    """Recover a hidden set of at most k permutations from a weak group-of-(k+1) oracle."""
    if n < 1 or k < 1:
        raise ValueError("need n >= 1 and k >= 1")
    if n == 1:
        return frozenset({Permutation.identity(1)})
    width = k + 1
    bits = {v[0] for v in oracle.query(((0, 1),) * width)}
    current = sorted(Permutation((0, 1) if b else (1, 0)) for b in bits)

    I: Pairs = ()
    prev_size = 1
    for size in range(2, n):
        new = size
        if len(current) > k:
            raise InconsistentOracleError(f"found {len(current)} permutations on {size} elements, more than k={k}")
        if len(current) > prev_size:
            I = find_tuple(current)
        prev_size = len(current)
        found: set[Permutation] = set()
        for sigma in current:
            o = sigma.order
            key = chi(sigma, I)
            X: dict[int, list[ChiVector]] = {}
            for p in range(1, size):
                tail = ((o[p - 1], new), (new, o[p]))
                head = I if I else tail[:1]
                t = I + (head[0],) * (width - 2 - len(I)) + tail
                X[p] = [v for v in oracle.query(t) if v[: len(I)] == key]
                if any(v[-2] == 1 and v[-1] == 1 for v in X[p]):
                    found.add(sigma.insert(p))
            if any(v[-2] == 0 for v in X[1]):
                found.add(sigma.insert(0))
            if any(v[-1] == 0 for v in X[size - 1]):
                found.add(sigma.insert(size))
        current = sorted(found)
    if len(current) > k:
        raise InconsistentOracleError(f"found {len(current)} permutations, more than k={k}")
    return frozenset(current)


# ---------------------------------------------------------------------------
# Hard instance


@dataclass(frozen=True)
class HardInstance:
    """Two disjoint sets of 2^(m-1) permutations of [2m] agreeing on all (2m-1)-wise queries."""

    m: int
    sigma1: tuple[Permutation, ...]
    sigma2: tuple[Permutation, ...]

    @property
    def n(self) -> int:
        return 2 * self.m

    def mixtures(self) -> tuple[DeltaMixture, DeltaMixture]:
        return DeltaMixture.uniform(self.sigma1), DeltaMixture.uniform(self.sigma2)


def pi_v(v: Sequence[int]) -> Permutation:
    """Swap elements 2j and 2j+1 (0-based) exactly where v_j = 1."""
    ranks: list[int] = []
    for j, b in enumerate(v):
        ranks += [2 * j + 1, 2 * j] if b else [2 * j, 2 * j + 1]
    return Permutation(tuple(ranks))


def hard_instance(m: int) -> HardInstance:
    if m < 1:
        raise ValueError("m must be >= 1")
    odd, even = [], []
    for v in product((0, 1), repeat=m):
        (odd if sum(v) % 2 else even).append(pi_v(v))
    return HardInstance(m, tuple(odd), tuple(even))


def indistinguishable(h: HardInstance, ell: int) -> bool:
    """True iff every ell-wise strong query gives the same answer on both uniform mixtures."""
    if not 2 <= ell <= h.n:
        raise ValueError(f"ell must lie in 2..{h.n}")
    a, b = h.mixtures()
    for J in combinations(range(h.n), ell):
        da: DiscreteDist = lwise_query(a, J)
        db: DiscreteDist = lwise_query(b, J)
        if Counter(da.masses) != Counter(db.masses):
            return False
    return True


def random_delta_mixture(n: int, k: int, rng, grid: int = 64) -> DeltaMixture:
    """k distinct uniform permutations with random positive weights on a 1/grid lattice."""
    if k > math.factorial(n):
        raise ValueError(f"cannot draw {k} distinct permutations of size {n}")
    perms: set[Permutation] = set()
    while len(perms) < k:
        perms.add(Permutation(tuple(rng.permutation(n).tolist())))
    cuts = sorted(rng.choice(range(1, grid), size=k - 1, replace=False).tolist()) if k > 1 else []
    parts = [b - a for a, b in zip([0] + cuts, cuts + [grid])]
    return DeltaMixture(tuple((Fraction(c, grid), p) for c, p in zip(parts, sorted(perms))))
