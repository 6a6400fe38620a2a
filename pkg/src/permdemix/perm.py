"""Permutation algebra on [n].

Everything in the Python API is 0-based: a :class:`Permutation` stores
``ranks[i]``, the (0-based) rank that the permutation assigns to element ``i``.
Text I/O uses the 1-based display notation, which lists the elements in rank
order, so ``"3 2 4 1"`` is the permutation placing element 3 first, element 2
second, and so on.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

Pair = tuple[int, int]
Pairs = tuple[Pair, ...]
ChiVector = tuple[int, ...]


@dataclass(frozen=True, order=True)
class Permutation:
    """A bijection [n] -> [n], stored as 0-based ranks."""

    ranks: tuple[int, ...]

    def __post_init__(self) -> None:
        ranks = tuple(int(r) for r in self.ranks)
        if not ranks:
            raise ValueError("permutation must have size n >= 1")
        if sorted(ranks) != list(range(len(ranks))):
            raise ValueError(f"not a permutation of 0..{len(ranks) - 1}: {ranks}")
        object.__setattr__(self, "ranks", ranks)

    @classmethod
    def identity(cls, n: int) -> Permutation:
        return cls(tuple(range(n)))

    @classmethod
    def reversal(cls, n: int) -> Permutation:
        return cls(tuple(range(n - 1, -1, -1)))

    @classmethod
    def from_order(cls, order: Sequence[int]) -> Permutation:
        """Build from 0-based elements listed in rank order."""
        ranks = [0] * len(order)
        for rank, elem in enumerate(order):
            if not 0 <= elem < len(order):
                raise ValueError(f"element {elem} out of range")
            ranks[elem] = rank
        return cls(tuple(ranks))

    @classmethod
    def from_display(cls, display: Sequence[int]) -> Permutation:
        """Build from the 1-based display notation (pi^-1(1), ..., pi^-1(n))."""
        return cls.from_order([int(e) - 1 for e in display])

    @property
    def n(self) -> int:
        return len(self.ranks)

    def __len__(self) -> int:
        return len(self.ranks)

    def __call__(self, i: int) -> int:
        return self.ranks[i]

    @property
    def order(self) -> tuple[int, ...]:
        """0-based elements sorted by rank (the inverse permutation)."""
        out = [0] * self.n
        for elem, rank in enumerate(self.ranks):
            out[rank] = elem
        return tuple(out)

    def display(self) -> tuple[int, ...]:
        return tuple(e + 1 for e in self.order)

    def inverse(self) -> Permutation:
        return Permutation(self.order)

    def compose(self, other: Permutation) -> Permutation:
        """Return ``self o other``, i.e. ``i -> self(other(i))``."""
        _check_same_size(self, other)
        return Permutation(tuple(self.ranks[r] for r in other.ranks))

    def insert(self, rank: int) -> Permutation:
        """Extend to size n+1 by placing the new element n at ``rank``."""
        if not 0 <= rank <= self.n:
            raise ValueError(f"insertion rank {rank} outside 0..{self.n}")
        order = list(self.order)
        order.insert(rank, self.n)
        return Permutation.from_order(order)

    def __str__(self) -> str:
        return format_perm(self)


@dataclass(frozen=True)
class Injection:
    """A map J -> [n] with distinct values; ``values[t]`` is the image of ``domain[t]``."""

    domain: tuple[int, ...]
    values: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.domain:
            raise ValueError("injection domain must be nonempty")
        if len(self.domain) != len(self.values):
            raise ValueError("domain and values differ in length")
        if len(set(self.values)) != len(self.values):
            raise ValueError(f"values are not distinct: {self.values}")
        if list(self.domain) != sorted(set(self.domain)):
            raise ValueError("domain must be sorted without repeats")

    def as_dict(self) -> dict[int, int]:
        return dict(zip(self.domain, self.values))


@dataclass(frozen=True)
class RelativeOrder:
    """A bijection J -> {0, ..., |J|-1}; ``order[t]`` is the rank of ``domain[t]`` within J."""

    domain: tuple[int, ...]
    order: tuple[int, ...]

    def __post_init__(self) -> None:
        if sorted(self.order) != list(range(len(self.domain))):
            raise ValueError(f"order {self.order} is not a bijection onto 0..{len(self.domain) - 1}")

    @classmethod
    def from_values(cls, domain: Sequence[int], values: Sequence[int]) -> RelativeOrder:
        """Rank-compress arbitrary distinct values."""
        ranked = sorted(range(len(values)), key=values.__getitem__)
        order = [0] * len(values)
        for r, t in enumerate(ranked):
            order[t] = r
        return cls(tuple(domain), tuple(order))

    def as_dict(self) -> dict[int, int]:
        return dict(zip(self.domain, self.order))

    def elements_in_order(self) -> tuple[int, ...]:
        out = [0] * len(self.domain)
        for j, r in zip(self.domain, self.order):
            out[r] = j
        return tuple(out)

    def as_permutation(self) -> Permutation:
        """Identify J with 0..|J|-1 in ascending order."""
        return Permutation(self.order)


@dataclass(frozen=True)
class BlockStructure:
    """Pairs (B_j, B'_j): B_j disjoint index sets, B'_j disjoint increasing contiguous rank runs."""

    blocks: tuple[tuple[frozenset[int], tuple[int, ...]], ...]

    def __post_init__(self) -> None:
        normalized = []
        seen: set[int] = set()
        prev_max = -1
        for src, dst in self.blocks:
            src = frozenset(int(i) for i in src)
            dst = tuple(sorted(int(i) for i in dst))
            if not src or len(src) != len(dst):
                raise ValueError("each block needs |B| = |B'| > 0")
            if src & seen:
                raise ValueError("blocks B_j must be pairwise disjoint")
            if dst != tuple(range(dst[0], dst[0] + len(dst))):
                raise ValueError(f"target block {dst} is not contiguous")
            if dst[0] <= prev_max:
                raise ValueError("target blocks must be increasing and disjoint")
            seen |= src
            prev_max = dst[-1]
            normalized.append((src, dst))
        object.__setattr__(self, "blocks", tuple(normalized))

    @property
    def size(self) -> int:
        return sum(len(src) for src, _ in self.blocks)


def index_set(J: Iterable[int], n: int | None = None) -> tuple[int, ...]:
    out = tuple(sorted({int(j) for j in J}))
    if not out:
        raise ValueError("index set must be nonempty")
    if out[0] < 0 or (n is not None and out[-1] >= n):
        raise IndexError(f"index set {out} not within 0..{n - 1 if n else '?'}")
    return out


def _check_same_size(a: Permutation, b: Permutation) -> None:
    if a.n != b.n:
        raise ValueError(f"size mismatch: {a.n} vs {b.n}")


def _count_inversions(seq: list[int]) -> int:
    """Merge-sort inversion count."""
    if len(seq) < 2:
        return 0
    width, count = 1, 0
    src = list(seq)
    buf = [0] * len(src)
    n = len(src)
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if src[i] <= src[j]:
                    buf[k] = src[i]
                    i += 1
                else:
                    buf[k] = src[j]
                    count += mid - i
                    j += 1
                k += 1
            buf[k:hi] = src[i:mid] if i < mid else src[j:hi]
        src, buf = buf, src
        width *= 2
    return count


def kendall_tau(a: Permutation, b: Permutation) -> int:
    """Number of element pairs ordered differently by ``a`` and ``b``; O(n log n)."""
    _check_same_size(a, b)
    return _count_inversions([b.ranks[e] for e in a.order])


def kendall_tau_matrix(ranks: np.ndarray, central: Sequence[int]) -> np.ndarray:
    """Kendall tau from every row of an (N, n) rank array to ``central``."""
    ranks = np.asarray(ranks)
    c = np.asarray(central)
    out = np.zeros(ranks.shape[0], dtype=np.int64)
    for i, j in combinations(range(ranks.shape[1]), 2):
        out += (ranks[:, i] < ranks[:, j]) != (c[i] < c[j])
    return out


def restrict(p: Permutation, J: Iterable[int]) -> Injection:
    J = index_set(J, p.n)
    return Injection(J, tuple(p.ranks[j] for j in J))


def relative_order(p: Permutation, J: Iterable[int]) -> RelativeOrder:
    J = index_set(J, p.n)
    return RelativeOrder.from_values(J, [p.ranks[j] for j in J])


def check_pairs(t: Sequence[Pair], n: int | None = None) -> Pairs:
    out = tuple((int(i), int(j)) for i, j in t)
    for i, j in out:
        if i == j:
            raise ValueError(f"pair ({i}, {j}) does not have distinct indices")
        if min(i, j) < 0 or (n is not None and max(i, j) >= n):
            raise IndexError(f"pair ({i}, {j}) out of range for n={n}")
    return out


def tuple_support(t: Sequence[Pair]) -> tuple[int, ...]:
    return tuple(sorted({x for pair in t for x in pair}))


def chi(p: Permutation | RelativeOrder, t: Sequence[Pair]) -> ChiVector:
    """Bit r is 1 iff the first index of pair r is ranked before the second."""
    if isinstance(p, RelativeOrder):
        rank = p.as_dict()
        try:
            return tuple(int(rank[i] < rank[j]) for i, j in t)
        except KeyError as exc:
            raise IndexError(f"index {exc.args[0]} outside the relative order's domain") from None
    check_pairs(t, p.n)
    return tuple(int(p.ranks[i] < p.ranks[j]) for i, j in t)


def satisfies_block(p: Permutation, bs: BlockStructure) -> bool:
    for src, dst in bs.blocks:
        if max(src) >= p.n or dst[-1] >= p.n:
            raise IndexError("block structure exceeds permutation size")
        if {p.ranks[i] for i in src} != set(dst):
            return False
    return True


def hausdorff(A: Iterable[int], B: Iterable[int]) -> int:
    A, B = set(A), set(B)
    if not A or not B:
        raise ValueError("Hausdorff distance needs nonempty sets")
    ab = max(min(abs(a - b) for b in B) for a in A)
    ba = max(min(abs(a - b) for a in A) for b in B)
    return max(ab, ba)


def format_perm(p: Permutation) -> str:
    return " ".join(str(e) for e in p.display())


def parse_perm(line: str) -> Permutation:
    try:
        display = [int(tok) for tok in line.split()]
    except ValueError:
        raise ValueError(f"malformed permutation line: {line!r}") from None
    return Permutation.from_display(display)


def read_perms(lines: Iterable[str]) -> list[Permutation]:
    return [parse_perm(line) for line in lines if line.strip() and not line.lstrip().startswith("#")]
