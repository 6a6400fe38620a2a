import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brute import mixture_table, normalizer, pair_prob, pmf_table
from permdemix.errors import EnumerationCapError
from permdemix.mallows import (
    DiscreteDist,
    MallowsMixture,
    MallowsModel,
    SampleSet,
    block_lower_bound,
    block_prob,
    deviation_tail,
    deviation_tail_bound,
    exact_dist,
    log_normalizer,
    log_pmf,
    marginal,
    pairwise_prob,
    pmf_vector,
    sample,
    sample_rim,
    tv,
)
from permdemix.perm import BlockStructure, Injection, Permutation, hausdorff, restrict


def model(display, phi):
    return MallowsModel(Permutation.from_display(display), phi)


def test_log_normalizer_examples():
    assert log_normalizer(1, 0.3) == 0.0
    assert log_normalizer(2, 0.5) == pytest.approx(math.log(1.5))
    assert log_normalizer(3, 0.5) == pytest.approx(math.log(2.625))
    with pytest.raises(ValueError):
        log_normalizer(3, 1.0)


@pytest.mark.parametrize("n", range(1, 7))
@pytest.mark.parametrize("phi", [0.1, 0.5, 0.9])
def test_log_normalizer_matches_enumeration(n, phi):
    assert log_normalizer(n, phi) == pytest.approx(math.log(normalizer(n, phi)), rel=1e-12)


def test_log_pmf_examples():
    m = model((2, 1, 3), 0.4)
    assert log_pmf(m, m.central) == pytest.approx(-log_normalizer(3, 0.4))
    m2 = model((1, 2), 0.5)
    assert log_pmf(m2, Permutation((1, 0))) == pytest.approx(math.log(0.5 / 1.5))
    m4 = MallowsModel(Permutation.identity(4), 0.999)
    assert math.exp(log_pmf(m4, Permutation.reversal(4))) == pytest.approx(1 / 24, abs=1e-3)
    with pytest.raises(ValueError):
        log_pmf(m, Permutation.identity(4))


def test_pmf_vector_matches_brute_force():
    central = (2, 0, 3, 1)
    table = pmf_table(4, 0.35, central)
    d = exact_dist(MallowsModel(Permutation(central), 0.35))
    for s, p in table.items():
        assert d[Permutation(s)] == pytest.approx(p, rel=1e-12)


def test_exact_dist_examples():
    assert exact_dist(MallowsModel(Permutation.identity(1), 0.5)).masses == {Permutation.identity(1): 1.0}
    m = MallowsModel(Permutation.identity(3), 0.5)
    assert exact_dist(m)[Permutation.identity(3)] == pytest.approx(1 / 2.625)
    assert exact_dist(MallowsMixture.single(m)).masses == exact_dist(m).masses
    with pytest.raises(EnumerationCapError):
        exact_dist(MallowsModel(Permutation.identity(9), 0.5))


def test_mixture_pmf_matches_brute_force():
    comps = [(0.25, (0, 1, 2, 3)), (0.75, (3, 1, 0, 2))]
    mix = MallowsMixture.from_lists([Permutation(c) for _, c in comps], [w for w, _ in comps], 0.6)
    table = mixture_table(4, 0.6, comps)
    d = exact_dist(mix)
    assert max(abs(d[Permutation(s)] - p) for s, p in table.items()) < 1e-12


def test_mixture_validation():
    p = Permutation.identity(3)
    with pytest.raises(ValueError):
        MallowsMixture(((0.5, p), (0.4, p)), 0.5)
    with pytest.raises(ValueError):
        MallowsMixture(((0.5, p), (0.5, Permutation.identity(4))), 0.5)
    with pytest.raises(ValueError):
        MallowsMixture(((1.0, p),), 0.0)
    mix = MallowsMixture.from_lists([p, Permutation.reversal(3)], [0.3, 0.7], 0.5)
    assert mix.gamma == 0.3 and mix.k == 2 and mix.n == 3
    assert model((1, 2), 0.5).beta == pytest.approx(1 / math.log(2))


@pytest.mark.parametrize("n", range(2, 7))
@pytest.mark.parametrize("phi", [0.2, 0.5, 0.8])
def test_pairwise_prob_matches_enumeration(n, phi):
    rng = np.random.default_rng(n)
    central = tuple(rng.permutation(n).tolist())
    m = MallowsModel(Permutation(central), phi)
    for i in range(n):
        for j in range(n):
            if central[i] < central[j]:
                got = pairwise_prob(m, i, j)
                assert got == pytest.approx(pair_prob(n, phi, central, i, j), abs=1e-12)
                assert got >= 0.5 + (1 - phi) / 4


def test_pairwise_prob_examples():
    m = MallowsModel(Permutation.identity(2), 0.5)
    assert pairwise_prob(m, 0, 1) == pytest.approx(2 / 0.75 - 1 / 0.5)
    assert pairwise_prob(m, 0, 1) == pytest.approx(0.6667, abs=1e-4)
    with pytest.raises(ValueError):
        pairwise_prob(m, 1, 0)


def test_sample_rim_noiseless_limit():
    m = model((3, 1, 4, 2, 5), 1e-9)
    rng = np.random.default_rng(0)
    assert all(sample_rim(m, rng) == m.central for _ in range(50))


def test_sample_rim_two_point():
    m = model((2, 1), 0.5)
    rng = np.random.default_rng(1)
    N = 100_000
    hits = sum(sample_rim(m, rng) == m.central for _ in range(N))
    p = 1 / 1.5
    assert abs(hits / N - p) <= 3 * math.sqrt(p * (1 - p) / N)


def test_sample_rim_matches_pmf():
    m = model((2, 4, 1, 3), 0.5)
    rng = np.random.default_rng(2)
    draws = [sample_rim(m, rng) for _ in range(40_000)]
    emp = DiscreteDist.from_counts({p: draws.count(p) for p in set(draws)})
    assert tv(emp, exact_dist(m)) < 0.03


@pytest.mark.parametrize("phi", [0.3, 0.7])
def test_vectorized_sampler_matches_pmf(phi):
    m = model((3, 1, 4, 2), phi)
    s = sample(m, 200_000, np.random.default_rng(4))
    emp = marginal(s, range(4))
    exact = marginal(exact_dist(m), range(4))
    assert tv(emp, exact) < 0.01


def test_sample_mixture_component_frequencies():
    a, b = Permutation.identity(5), Permutation.reversal(5)
    mix = MallowsMixture.from_lists([a, b], [0.8, 0.2], 1e-9)
    s = sample(mix, 20_000, np.random.default_rng(5))
    frac = np.mean([p == a for p in s.draws])
    assert abs(frac - 0.8) < 0.02


def test_sampleset_roundtrip():
    s = sample(model((2, 3, 1), 0.5), 50, np.random.default_rng(6))
    s.provenance["seed"] = 6
    buf = io.StringIO()
    s.write(buf)
    text = buf.getvalue()
    assert text.splitlines()[0].startswith("# {")
    back = SampleSet.read(io.StringIO(text))
    assert np.array_equal(back.ranks, s.ranks)
    assert back.provenance["seed"] == 6
    with pytest.raises(ValueError):
        SampleSet.read(io.StringIO("# {}\n1 2 3\n1 2\n"))
    with pytest.raises(ValueError):
        SampleSet.read(io.StringIO("# {}\n"))


def test_tv_examples():
    a = DiscreteDist({"x": 0.7, "y": 0.3})
    b = DiscreteDist({"x": 0.5, "y": 0.5})
    assert tv(a, a) == 0
    assert tv(a, b) == pytest.approx(0.2)
    assert tv(DiscreteDist.point("x"), DiscreteDist.point("y")) == 1
    with pytest.raises(TypeError):
        tv(a, DiscreteDist.point((1,)))
    with pytest.raises(ValueError):
        DiscreteDist({"x": 0.5})


@settings(max_examples=40)
@given(st.lists(st.lists(st.floats(0.01, 1.0), min_size=4, max_size=4), min_size=3, max_size=3))
def test_tv_metric_properties(rows):
    ds = [DiscreteDist({i: v / sum(r) for i, v in enumerate(r)}) for r in rows]
    a, b, c = ds
    assert tv(a, b) == pytest.approx(tv(b, a))
    assert 0 <= tv(a, b) <= 1
    assert tv(a, c) <= tv(a, b) + tv(b, c) + 1e-12


def test_marginal_examples():
    m = model((2, 3, 1, 4), 0.5)
    full = exact_dist(m)
    relabelled = marginal(full, range(4))
    assert relabelled[restrict(m.central, range(4))] == pytest.approx(full[m.central])
    uniform = DiscreteDist({p: 1 / 6 for p in exact_dist(model((1, 2, 3), 0.5)).masses})
    single = marginal(uniform, [1])
    assert all(v == pytest.approx(1 / 3) for _, v in single.items())


def test_marginal_depends_only_on_restriction():
    # two centrals with the same restriction to J have equal marginals on J
    J = [1, 3]
    a = Permutation((4, 0, 1, 2, 3))
    b = Permutation((1, 0, 4, 2, 3))
    assert restrict(a, J) == restrict(b, J) and a != b
    ma = marginal(exact_dist(MallowsModel(a, 0.4)), J)
    mb = marginal(exact_dist(MallowsModel(b, 0.4)), J)
    assert tv(ma, mb) < 1e-12


def test_empirical_marginal_matches_counts():
    s = SampleSet.from_perms([Permutation((0, 1, 2)), Permutation((1, 0, 2)), Permutation((0, 2, 1))])
    m = marginal(s, [0])
    assert m[Injection((0,), (0,))] == pytest.approx(2 / 3)
    assert m[Injection((0,), (1,))] == pytest.approx(1 / 3)


def test_block_prob_examples():
    m = MallowsModel(Permutation.identity(4), 0.5)
    assert block_prob(m, BlockStructure(((range(4), range(4)),))) == pytest.approx(1.0)
    bs = BlockStructure((({0}, (0,)),))
    exact = block_prob(m, bs)
    # element 0 ranked first: the remaining three elements are unconstrained
    assert exact == pytest.approx(normalizer(3, 0.5) / normalizer(4, 0.5))
    assert exact >= block_lower_bound(0.5, 1, 0)


def test_block_prob_montecarlo_within_3sd():
    m = model((2, 5, 1, 3, 4), 0.6)
    bs = BlockStructure((({0, 2}, (1, 2)), ({4}, (4,))))
    exact = block_prob(m, bs)
    N = 50_000
    est = block_prob(m, bs, mode="montecarlo", rng=np.random.default_rng(9), draws=N)
    assert abs(est - exact) <= 3 * math.sqrt(exact * (1 - exact) / N)
    with pytest.raises(ValueError):
        block_prob(m, bs, mode="montecarlo")


def _random_instance(rng):
    n = int(rng.integers(2, 7))
    phi = float(rng.uniform(0.05, 0.95))
    central = Permutation(tuple(rng.permutation(n).tolist()))
    elems = rng.permutation(n).tolist()
    nblocks = int(rng.integers(1, min(n, 3) + 1))
    cuts = sorted(rng.choice(range(1, n), size=nblocks - 1, replace=False).tolist()) if nblocks > 1 else []
    sizes = [b - a for a, b in zip([0] + cuts, cuts + [n])]
    sizes = [s for s in sizes if s > 0]
    # keep a random subset of blocks, targets as consecutive rank runs
    blocks, start, pos = [], 0, 0
    for s in sizes:
        src = elems[pos:pos + s]
        pos += s
        if rng.random() < 0.7:
            blocks.append((frozenset(src), tuple(range(start, start + s))))
        start += s
    if not blocks:
        blocks.append((frozenset(elems[:sizes[0]]), tuple(range(sizes[0]))))
    return MallowsModel(central, phi), BlockStructure(tuple(blocks))


def test_block_lower_bound_random_instances():
    rng = np.random.default_rng(11)
    for _ in range(50):
        m, bs = _random_instance(rng)
        ell = bs.size
        D = max(hausdorff({m.central(i) for i in src}, dst) for src, dst in bs.blocks)
        assert block_prob(m, bs) >= block_lower_bound(m.phi, ell, D)


def test_deviation_tail_bound_random_instances():
    rng = np.random.default_rng(12)
    for _ in range(50):
        n = int(rng.integers(2, 7))
        m = MallowsModel(Permutation(tuple(rng.permutation(n).tolist())), float(rng.uniform(0.05, 0.95)))
        for j in range(n):
            for r in range(1, n):
                assert deviation_tail(m, j, r) <= deviation_tail_bound(m.phi, r)


@pytest.mark.parametrize("n", range(1, 8))
@pytest.mark.parametrize("phi", [0.1, 0.5, 0.9])
def test_pmf_normalization(n, phi):
    m = MallowsModel(Permutation.identity(n), phi)
    assert abs(pmf_vector(m).sum() - 1) < 1e-9
