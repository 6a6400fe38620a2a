"""Mallows models and mixtures: exact PMF, sampling, marginals, TV distance."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import permutations
from typing import Any, Hashable, Iterable, Mapping, Sequence, TextIO

import numpy as np

from .errors import EnumerationCapError
from .perm import (
    BlockStructure,
    Injection,
    Permutation,
    index_set,
    kendall_tau,
    kendall_tau_matrix,
    read_perms,
    format_perm,
)

ENUMERATION_CAP = 8


def _check_phi(phi: float) -> float:
    phi = float(phi)
    if not 0.0 < phi < 1.0:
        raise ValueError(f"phi must lie in (0, 1), got {phi}")
    return phi


def _check_cap(n: int, cap: int | None) -> None:
    cap = ENUMERATION_CAP if cap is None else cap
    if n > cap:
        raise EnumerationCapError(
            f"exact enumeration of S_{n} exceeds the cap n <= {cap}; use the sampling path instead"
        )


@lru_cache(maxsize=16)
def all_perm_ranks(n: int) -> np.ndarray:
    """All of S_n as an (n!, n) array of 0-based ranks, in lexicographic order."""
    arr = np.array(list(permutations(range(n))), dtype=np.int64).reshape(-1, n)
    arr.setflags(write=False)
    return arr


def all_perms(n: int) -> list[Permutation]:
    return [Permutation(tuple(row)) for row in all_perm_ranks(n).tolist()]


@dataclass(frozen=True)
class MallowsModel:
    central: Permutation
    phi: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "phi", _check_phi(self.phi))

    @property
    def n(self) -> int:
        return self.central.n

    @property
    def beta(self) -> float:
        return 1.0 / math.log(1.0 / self.phi)


@dataclass(frozen=True)
class MallowsMixture:
    """Components ``(weight, central)`` sharing one noise parameter ``phi``."""

    components: tuple[tuple[float, Permutation], ...]
    phi: float

    def __post_init__(self) -> None:
        comps = tuple((float(w), p) for w, p in self.components)
        if not comps:
            raise ValueError("mixture needs at least one component")
        if any(w <= 0 for w, _ in comps):
            raise ValueError("mixture weights must be positive")
        if abs(sum(w for w, _ in comps) - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to 1")
        if len({p.n for _, p in comps}) != 1:
            raise ValueError("all components must share the same n")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "phi", _check_phi(self.phi))

    @classmethod
    def from_lists(cls, centrals: Sequence[Permutation], weights: Sequence[float], phi: float) -> MallowsMixture:
        if len(centrals) != len(weights):
            raise ValueError("centrals and weights differ in length")
        return cls(tuple(zip(weights, centrals)), phi)

    @classmethod
    def single(cls, model: MallowsModel) -> MallowsMixture:
        return cls(((1.0, model.central),), model.phi)

    @property
    def n(self) -> int:
        return self.components[0][1].n

    @property
    def k(self) -> int:
        return len(self.components)

    @property
    def weights(self) -> tuple[float, ...]:
        return tuple(w for w, _ in self.components)

    @property
    def centrals(self) -> tuple[Permutation, ...]:
        return tuple(p for _, p in self.components)

    @property
    def gamma(self) -> float:
        return min(self.weights)

    def models(self) -> list[MallowsModel]:
        return [MallowsModel(p, self.phi) for p in self.centrals]


def _as_mixture(m: MallowsModel | MallowsMixture) -> MallowsMixture:
    return MallowsMixture.single(m) if isinstance(m, MallowsModel) else m


# ---------------------------------------------------------------------------
# Discrete distributions


@dataclass(frozen=True)
class DiscreteDist:
    """Finite distribution over hashable atoms of one type."""

    masses: Mapping[Hashable, Any]

    def __post_init__(self) -> None:
        masses = dict(self.masses)
        if not masses:
            raise ValueError("distribution needs at least one atom")
        if any(v < 0 for v in masses.values()):
            raise ValueError("masses must be nonnegative")
        total = sum(masses.values())
        if abs(float(total) - 1.0) > 1e-9:
            raise ValueError(f"masses sum to {float(total)}, not 1")
        if len({type(a) for a in masses}) != 1:
            raise TypeError("atoms must share a single type")
        object.__setattr__(self, "masses", masses)

    @classmethod
    def from_counts(cls, counts: Mapping[Hashable, int]) -> DiscreteDist:
        total = sum(counts.values())
        return cls({a: c / total for a, c in counts.items() if c})

    @classmethod
    def point(cls, atom: Hashable) -> DiscreteDist:
        return cls({atom: 1.0})

    @property
    def atom_type(self) -> type:
        return type(next(iter(self.masses)))

    def support(self) -> set:
        return {a for a, v in self.masses.items() if v > 0}

    def __getitem__(self, atom: Hashable) -> Any:
        return self.masses.get(atom, 0)

    def items(self):
        return self.masses.items()

    def __len__(self) -> int:
        return len(self.masses)


def tv(a: DiscreteDist, b: DiscreteDist) -> float:
    """Total variation distance, half the L1 distance over the union of supports."""
    if a.atom_type is not b.atom_type:
        raise TypeError(f"cannot compare distributions over {a.atom_type.__name__} and {b.atom_type.__name__}")
    atoms = set(a.masses) | set(b.masses)
    return 0.5 * sum(abs(float(a[x]) - float(b[x])) for x in atoms)


# ---------------------------------------------------------------------------
# PMF


def log_normalizer(n: int, phi: float) -> float:
    """log Z(phi) via the product of q-integers (1 + phi + ... + phi^(i-1))."""
    if n < 1:
        raise ValueError("n must be >= 1")
    phi = _check_phi(phi)
    return sum(math.log1p(-phi**i) - math.log1p(-phi) for i in range(1, n + 1))


def log_pmf(m: MallowsModel, s: Permutation) -> float:
    return kendall_tau(s, m.central) * math.log(m.phi) - log_normalizer(m.n, m.phi)


def pmf_vector(m: MallowsModel | MallowsMixture, cap: int | None = None) -> np.ndarray:
    """Exact PMF aligned with :func:`all_perm_ranks`, accumulated in log space."""
    mix = _as_mixture(m)
    _check_cap(mix.n, cap)
    ranks = all_perm_ranks(mix.n)
    log_phi = math.log(mix.phi)
    log_z = log_normalizer(mix.n, mix.phi)
    terms = [
        math.log(w) + kendall_tau_matrix(ranks, p.ranks) * log_phi - log_z
        for w, p in mix.components
    ]
    return np.exp(np.logaddexp.reduce(np.vstack(terms), axis=0))


def exact_dist(m: MallowsModel | MallowsMixture, cap: int | None = None) -> DiscreteDist:
    mix = _as_mixture(m)
    pmf = pmf_vector(mix, cap)
    return DiscreteDist(dict(zip(all_perms(mix.n), pmf.tolist())))


def pairwise_prob(m: MallowsModel, i: int, j: int) -> float:
    """P{sigma(i) < sigma(j)} under M(pi, phi) for a pair with pi(i) < pi(j)."""
    d = m.central(j) - m.central(i)
    if d <= 0:
        raise ValueError("pair must be oriented so that central(i) < central(j)")
    phi = m.phi
    return (d + 1) / -math.expm1((d + 1) * math.log(phi)) - d / -math.expm1(d * math.log(phi))


# ---------------------------------------------------------------------------
# Sampling


@dataclass
class SampleSet:
    """N draws as an (N, n) array of 0-based ranks plus provenance metadata."""

    ranks: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.ranks = np.asarray(self.ranks, dtype=np.int64)
        if self.ranks.ndim != 2 or self.ranks.shape[1] < 1:
            raise ValueError("sample ranks must be an (N, n) array with n >= 1")

    @property
    def n(self) -> int:
        return self.ranks.shape[1]

    def __len__(self) -> int:
        return self.ranks.shape[0]

    @property
    def draws(self) -> list[Permutation]:
        return [Permutation(tuple(row)) for row in self.ranks.tolist()]

    @classmethod
    def from_perms(cls, perms: Sequence[Permutation], provenance: dict | None = None) -> SampleSet:
        if len({p.n for p in perms}) > 1:
            raise ValueError("all draws must have the same size n")
        return cls(np.array([p.ranks for p in perms], dtype=np.int64), dict(provenance or {}))

    def write(self, stream: TextIO) -> None:
        header = {"n": self.n, **self.provenance}
        stream.write("# " + json.dumps(header, sort_keys=True) + "\n")
        order = np.argsort(self.ranks, axis=1) + 1
        for row in order.tolist():
            stream.write(" ".join(map(str, row)) + "\n")

    @classmethod
    def read(cls, stream: TextIO) -> SampleSet:
        lines = stream.read().splitlines()
        provenance: dict = {}
        if lines and lines[0].startswith("#"):
            try:
                provenance = json.loads(lines[0][1:])
            except json.JSONDecodeError:
                raise ValueError("malformed sample-file header") from None
        perms = read_perms(lines)
        if not perms:
            raise ValueError("sample file contains no permutations")
        n = provenance.pop("n", perms[0].n)
        if any(p.n != n for p in perms):
            raise ValueError(f"sample file mixes sizes (header n={n})")
        return cls.from_perms(perms, provenance)


@lru_cache(maxsize=64)
def _insertion_cdfs(n: int, phi: float) -> tuple[np.ndarray, ...]:
    # step i inserts element i among i placed ones; extra inversions v has mass phi^v
    out = []
    for i in range(n):
        w = phi ** np.arange(i + 1)
        out.append(np.cumsum(w / w.sum()))
    return tuple(out)


def sample_identity_ranks(n: int, phi: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorized repeated insertion: (size, n) rank array drawn from M(id, phi)."""
    phi = _check_phi(phi)
    cdfs = _insertion_cdfs(n, phi)
    ranks = np.zeros((size, n), dtype=np.int64)
    u = rng.random((size, n))
    for i in range(1, n):
        v = np.minimum(np.searchsorted(cdfs[i], u[:, i], side="right"), i)
        pos = i - v
        head = ranks[:, :i]
        head += head >= pos[:, None]
        ranks[:, i] = pos
    return ranks


def sample_rim(m: MallowsModel, rng: np.random.Generator) -> Permutation:
    """One exact draw: repeated insertion for M(id, phi), then relabel by the central."""
    order: list[int] = []
    for i in range(m.n):
        weights = [m.phi ** (i - j) for j in range(i + 1)]
        u = rng.random() * sum(weights)
        acc, pos = 0.0, i
        for j, w in enumerate(weights):
            acc += w
            if u < acc:
                pos = j
                break
        order.insert(pos, i)
    base = Permutation.from_order(order)
    return Permutation(tuple(base.ranks[r] for r in m.central.ranks))


def sample(m: MallowsModel | MallowsMixture, size: int, rng: np.random.Generator) -> SampleSet:
    mix = _as_mixture(m)
    labels = rng.choice(mix.k, size=size, p=np.array(mix.weights) / sum(mix.weights))
    base = sample_identity_ranks(mix.n, mix.phi, size, rng)
    out = np.empty_like(base)
    for c, (_, p) in enumerate(mix.components):
        rows = labels == c
        out[rows] = base[rows][:, list(p.ranks)]
    provenance = {
        "phi": mix.phi,
        "generator": "repeated-insertion",
        "weights": list(mix.weights),
        "centrals": [format_perm(p) for p in mix.centrals],
    }
    return SampleSet(out, provenance)


# ---------------------------------------------------------------------------
# Marginals


def injection_codes(ranks: np.ndarray, J: Sequence[int], n: int) -> np.ndarray:
    """Encode each row's restriction to J as one integer (base-n digits)."""
    codes = np.zeros(ranks.shape[0], dtype=np.int64)
    for j in J:
        codes = codes * n + ranks[:, j]
    return codes


def decode_injection(code: int, J: Sequence[int], n: int) -> Injection:
    vals = []
    for _ in J:
        code, r = divmod(int(code), n)
        vals.append(r)
    return Injection(tuple(J), tuple(reversed(vals)))


def marginal(d: DiscreteDist | SampleSet, J: Iterable[int]) -> DiscreteDist:
    """Pushforward under restriction to J (the empirical marginal for a SampleSet)."""
    if isinstance(d, SampleSet):
        Jt = index_set(J, d.n)
        codes, counts = np.unique(injection_codes(d.ranks, Jt, d.n), return_counts=True)
        total = counts.sum()
        return DiscreteDist({decode_injection(c, Jt, d.n): k / total for c, k in zip(codes.tolist(), counts.tolist())})
    out: Counter = Counter()
    n = next(iter(d.masses)).n
    Jt = index_set(J, n)
    for p, w in d.items():
        out[Injection(Jt, tuple(p.ranks[j] for j in Jt))] += w
    return DiscreteDist(dict(out))


# ---------------------------------------------------------------------------
# Deviation and block-structure probabilities


def deviation_tail(m: MallowsModel, j: int, r: int, cap: int | None = None) -> float:
    """Exact P{|sigma(j) - pi(j)| >= r}."""
    pmf = pmf_vector(m, cap)
    dev = np.abs(all_perm_ranks(m.n)[:, j] - m.central(j))
    return float(pmf[dev >= r].sum())


def deviation_tail_bound(phi: float, r: int) -> float:
    return 2 * phi**r / (1 - phi)


def block_lower_bound(phi: float, ell: int, D: int) -> float:
    """phi^(ell*D) (1-phi)^(3 ell) / (2 (6 ell)^(2 ell))."""
    return phi ** (ell * D) * (1 - phi) ** (3 * ell) / (2 * (6 * ell) ** (2 * ell))


def _satisfies_rows(ranks: np.ndarray, bs: BlockStructure) -> np.ndarray:
    ok = np.ones(ranks.shape[0], dtype=bool)
    for src, dst in bs.blocks:
        sub = ranks[:, sorted(src)]
        ok &= (sub >= dst[0]).all(axis=1) & (sub <= dst[-1]).all(axis=1)
    return ok


def block_prob(
    m: MallowsModel,
    bs: BlockStructure,
    mode: str = "exact",
    rng: np.random.Generator | None = None,
    draws: int = 100_000,
    cap: int | None = None,
) -> float:
    """P{sigma satisfies bs} for sigma ~ M(pi, phi)."""
    if any(max(src) >= m.n or dst[-1] >= m.n for src, dst in bs.blocks):
        raise IndexError("block structure exceeds the model size")
    if mode == "exact":
        pmf = pmf_vector(m, cap)
        return float(pmf[_satisfies_rows(all_perm_ranks(m.n), bs)].sum())
    if mode == "montecarlo":
        if rng is None:
            raise ValueError("montecarlo mode needs an explicit rng")
        s = sample(m, draws, rng)
        return float(_satisfies_rows(s.ranks, bs).mean())
    raise ValueError(f"unknown mode {mode!r}")


def exact_weights(weights: Sequence[Any]) -> bool:
    return all(isinstance(w, (int, Fraction)) for w in weights)
