"""Pairwise-comparison oracles backed by a known (noiseless) mixture."""

from __future__ import annotations

import threading
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Protocol, Sequence

import numpy as np

from .errors import EnumerationCapError
from .mallows import DiscreteDist
from .perm import ChiVector, Permutation, RelativeOrder, chi, check_pairs, index_set, relative_order

MOMENT_CAP = 20


@dataclass(frozen=True)
class DeltaMixture:
    """Noiseless mixture sum_i w_i delta_{pi_i}; repeated permutations are merged."""

    components: tuple[tuple[Any, Permutation], ...]

    def __post_init__(self) -> None:
        merged: dict[Permutation, Any] = {}
        for w, p in self.components:
            if w <= 0:
                raise ValueError("weights must be positive")
            merged[p] = merged.get(p, 0) + w
        if not merged:
            raise ValueError("mixture needs at least one component")
        if len({p.n for p in merged}) != 1:
            raise ValueError("all components must share the same n")
        total = sum(merged.values())
        exact = all(isinstance(w, (int, Fraction)) for w in merged.values())
        if (total != 1) if exact else abs(float(total) - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {float(total)}, not 1")
        comps = tuple(sorted(((w, p) for p, w in merged.items()), key=lambda c: c[1]))
        object.__setattr__(self, "components", comps)

    @classmethod
    def uniform(cls, perms: Iterable[Permutation]) -> DeltaMixture:
        perms = list(perms)
        return cls(tuple((Fraction(1, len(perms)), p) for p in perms))

    @property
    def n(self) -> int:
        return self.components[0][1].n

    @property
    def k(self) -> int:
        return len(self.components)

    def support(self) -> frozenset[Permutation]:
        return frozenset(p for _, p in self.components)

    def as_dict(self) -> dict[Permutation, Any]:
        return {p: w for w, p in self.components}


@dataclass
class OracleBudget:
    """Thread-safe query counter."""

    count: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def charge(self) -> None:
        with self._lock:
            self.count += 1


class WeakOracle(Protocol):
    budget: OracleBudget

    def query(self, t: Sequence[tuple[int, int]]) -> frozenset[ChiVector]: ...


class StrongOracle(Protocol):
    budget: OracleBudget

    def query(self, t: Sequence[tuple[int, int]]) -> DiscreteDist: ...


def strong_group_query(m: DeltaMixture, t: Sequence[tuple[int, int]]) -> DiscreteDist:
    """Law of chi(pi, t) when pi is drawn from the mixture."""
    t = check_pairs(t, m.n)
    out: Counter = Counter()
    for w, p in m.components:
        out[chi(p, t)] += w
    return DiscreteDist(dict(out))


def weak_group_query(s: Iterable[Permutation], t: Sequence[tuple[int, int]]) -> frozenset[ChiVector]:
    s = list(s)
    if not s:
        raise ValueError("weak query needs a nonempty permutation set")
    t = check_pairs(t, s[0].n)
    return frozenset(chi(p, t) for p in s)


def lwise_query(m: DeltaMixture | Iterable[Permutation], J: Iterable[int], strength: str = "strong"):
    """Relative orders on J: a distribution (strong) or a set (weak)."""
    J = index_set(J)
    if len(J) < 2:
        raise ValueError("l-wise queries need |J| >= 2")
    if strength == "strong":
        if not isinstance(m, DeltaMixture):
            m = DeltaMixture.uniform(m)
        out: Counter = Counter()
        for w, p in m.components:
            out[relative_order(p, J)] += w
        return DiscreteDist(dict(out))
    if strength == "weak":
        perms = m.support() if isinstance(m, DeltaMixture) else list(m)
        if not perms:
            raise ValueError("weak query needs a nonempty permutation set")
        return frozenset(relative_order(p, J) for p in perms)
    raise ValueError(f"unknown strength {strength!r}")


def chi_from_relative_order(tau: RelativeOrder, t: Sequence[tuple[int, int]]) -> ChiVector:
    """Answer a group query on pairs inside J from an l-wise answer on J."""
    return chi(tau, t)


def chi_index(v: ChiVector) -> int:
    """Position of a chi vector in a moment vector (first bit most significant)."""
    out = 0
    for b in v:
        out = 2 * out + b
    return out


def comparison_moment(m: DeltaMixture, t: Sequence[tuple[int, int]]) -> np.ndarray:
    t = check_pairs(t, m.n)
    if len(t) > MOMENT_CAP:
        raise EnumerationCapError(f"moment vector of length 2^{len(t)} exceeds the cap 2^{MOMENT_CAP}")
    out = np.zeros(2 ** len(t))
    for w, p in m.components:
        out[chi_index(chi(p, t))] += float(w)
    return out


class _GroupOracle:
    def __init__(self, n: int, m: int | None) -> None:
        self.n = n
        self.m = m
        self.budget = OracleBudget()

    def _check(self, t: Sequence[tuple[int, int]]):
        t = check_pairs(t, self.n)
        if self.m is not None and len(t) != self.m:
            raise ValueError(f"this oracle answers groups of exactly {self.m} pairs, got {len(t)}")
        self.budget.charge()
        return t


class GroundTruthStrongOracle(_GroupOracle):
    """Strong group-of-m oracle over a hidden delta mixture."""

    def __init__(self, mixture: DeltaMixture, m: int | None = None) -> None:
        super().__init__(mixture.n, m)
        self._mixture = mixture

    def query(self, t: Sequence[tuple[int, int]]) -> DiscreteDist:
        return strong_group_query(self._mixture, self._check(t))


class GroundTruthWeakOracle(_GroupOracle):
    """Weak group-of-m oracle over a hidden permutation set."""

    def __init__(self, perms: Iterable[Permutation], m: int | None = None) -> None:
        self._perms = frozenset(perms)
        if not self._perms:
            raise ValueError("hidden set must be nonempty")
        super().__init__(next(iter(self._perms)).n, m)

    def query(self, t: Sequence[tuple[int, int]]) -> frozenset[ChiVector]:
        return weak_group_query(self._perms, self._check(t))
