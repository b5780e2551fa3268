import numpy as np
import pytest

from src.core.components import UnionFind, analyze, ensemble_tail, n_at_least, perturb
from src.core.graphgen import SparseGraph, sample_bernoulli, sampler_for
from src.core.kernel import WeightMatrix
from src.core.rng import RngStream


def _graph(n, pairs, multigraph=False):
    return SparseGraph(n=n, edges=np.array(pairs, dtype=np.int64).reshape(-1, 2), multigraph=multigraph)


def test_union_find_counts_components():
    uf = UnionFind(5)
    assert uf.union(0, 1)
    assert uf.union(3, 4)
    assert not uf.union(1, 0)
    assert uf.count == 3
    labels = uf.labels()
    assert labels[0] == labels[1]
    assert labels[3] == labels[4]
    assert labels[2] not in (labels[0], labels[3])


def test_analyze_splits_tree_and_cyclic_components():
    # triangle {0,1,2}, path {3,4,5,6}, isolated 7
    g = _graph(8, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (5, 6)])
    stats = analyze(g)
    assert stats.c1 == 4
    assert stats.c2 == 3
    assert stats.components == 3
    assert stats.nk == {1: 1, 3: 3, 4: 4}
    assert stats.nk_tree == {1: 1, 4: 4}
    assert stats.nk_cyc == {3: 3}
    assert sum(stats.nk.values()) == g.n
    assert stats.nk_fraction(4) == pytest.approx(0.5)
    assert stats.c1_fraction() == pytest.approx(0.5)


def test_parallel_edges_collapse_before_tree_check():
    stats = analyze(_graph(2, [(0, 1), (0, 1)], multigraph=True))
    assert stats.nk_tree == {2: 2}
    assert stats.nk_cyc == {}


def test_empty_and_edgeless_graphs():
    empty = analyze(SparseGraph.empty(0))
    assert empty.c1 == 0
    assert empty.c1_fraction() == 0.0
    isolated = analyze(SparseGraph.empty(5))
    assert isolated.c1 == 1
    assert isolated.c2 == 1
    assert isolated.nk == {1: 5}


def test_digest_is_stable_and_sensitive():
    a = analyze(_graph(4, [(0, 1)]))
    b = analyze(_graph(4, [(2, 3)]))
    c = analyze(_graph(4, [(0, 1), (2, 3)]))
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()
    assert len(a.digest()) == 12


def test_n_at_least():
    stats = analyze(_graph(6, [(0, 1), (1, 2), (3, 4)]))
    assert n_at_least(stats, 1) == 6
    assert n_at_least(stats, 2) == 5
    assert n_at_least(stats, 3) == 3
    with pytest.raises(ValueError):
        n_at_least(stats, 0)


def test_perturb_random_counts():
    g = sample_bernoulli(WeightMatrix.constant(400, 3.0), RngStream(3))
    out = perturb(g, del_vertices=10, del_edges=20, add_edges=5, mode="random", rng=1)
    assert out.n == 390
    survivors = out.m - 5
    assert survivors <= g.m - 20
    assert survivors >= 0


def test_perturb_adversarial_removes_hubs():
    star = _graph(6, [(0, k) for k in range(1, 6)] + [(1, 2)])
    out = perturb(star, del_vertices=1, del_edges=0, add_edges=0, mode="adversarial_greedy", rng=0)
    assert out.n == 5
    assert out.m == 1
    assert analyze(out).c1 == 2


def test_perturb_adversarial_edges_cut_the_giant():
    path = _graph(10, [(k, k + 1) for k in range(9)])
    out = perturb(path, del_vertices=0, del_edges=3, add_edges=0, mode="adversarial_greedy", rng=0)
    assert out.m == 6
    assert analyze(out).c1 < 10


def test_perturb_deletes_everything_when_asked_for_too_much():
    g = _graph(4, [(0, 1), (2, 3)])
    assert perturb(g, 0, 5, 0, "random", 0).m == 0


def test_perturb_added_edges_keep_graph_simple():
    g = _graph(4, [(0, 1)])
    out = perturb(g, 0, 0, 10, "random", 0)
    assert out.m == 6
    assert not out.multigraph


def test_perturb_validation():
    g = _graph(3, [(0, 1)])
    with pytest.raises(ValueError):
        perturb(g, -1, 0, 0, "random", 0)
    with pytest.raises(ValueError):
        perturb(g, 4, 0, 0, "random", 0)
    with pytest.raises(ValueError):
        perturb(g, 0, 0, 0, "smart", 0)


def test_ensemble_tail_is_thread_invariant():
    draw = sampler_for(WeightMatrix.constant(300, 2.0), "bernoulli")
    serial = ensemble_tail(draw, reps=8, threshold_lo=0.5, threshold_hi=0.95, rng=11, threads=1)
    pooled = ensemble_tail(draw, reps=8, threshold_lo=0.5, threshold_hi=0.95, rng=11, threads=4)
    assert serial.c1_fractions == pooled.c1_fractions
    assert serial.lower == pooled.lower
    assert 0.0 <= serial.upper <= 1.0
    with pytest.raises(ValueError):
        ensemble_tail(draw, reps=0, threshold_lo=0.5, threshold_hi=0.9, rng=0)


def test_supercritical_giant_has_expected_size():
    n = 20_000
    stats = analyze(sample_bernoulli(WeightMatrix.constant(n, 2.0), RngStream(7)))
    # rho(2) solves rho = 1 - exp(-2 rho)
    assert stats.c1_fraction() == pytest.approx(0.7968, abs=0.02)
    assert stats.c2_fraction() < 0.01


def _random_simple(gen: np.random.Generator, n: int, m: int) -> SparseGraph:
    pairs = {tuple(sorted(map(int, gen.choice(n, size=2, replace=False)))) for _ in range(m)}
    return _graph(n, sorted(pairs))


def _dfs_stats(g: SparseGraph):
    adjacency = [set() for _ in range(g.n)]
    for u, v in g.edges.tolist():
        adjacency[u].add(v)
        adjacency[v].add(u)
    seen = [False] * g.n
    sizes, trees = [], []
    for start in range(g.n):
        if seen[start]:
            continue
        seen[start] = True
        stack, members = [start], []
        while stack:
            v = stack.pop()
            members.append(v)
            for w in adjacency[v]:
                if not seen[w]:
                    seen[w] = True
                    stack.append(w)
        edges = sum(len(adjacency[v]) for v in members) // 2
        sizes.append(len(members))
        trees.append(edges == len(members) - 1)
    nk, nk_tree, nk_cyc = {}, {}, {}
    for size, tree in zip(sizes, trees):
        nk[size] = nk.get(size, 0) + size
        bucket = nk_tree if tree else nk_cyc
        bucket[size] = bucket.get(size, 0) + size
    ordered = sorted(sizes, reverse=True) + [0]
    return ordered[0], ordered[1], nk, nk_tree, nk_cyc, len(sizes)


def test_analyze_matches_depth_first_search():
    gen = np.random.default_rng(41)
    for _ in range(30):
        n = int(gen.integers(1, 40))
        g = _random_simple(gen, n, int(gen.integers(0, 2 * n))) if n > 1 else _graph(1, [])
        stats = analyze(g)
        assert (stats.c1, stats.c2, stats.nk, stats.nk_tree, stats.nk_cyc, stats.components) == _dfs_stats(g)


def test_analyze_is_invariant_under_relabelling():
    gen = np.random.default_rng(43)
    g = _random_simple(gen, 50, 45)
    stats = analyze(g)
    relabelled = analyze(g.relabel(gen.permutation(50)))
    assert relabelled.as_dict() == stats.as_dict()
    assert relabelled.digest() == stats.digest()


def test_adding_an_edge_never_shrinks_the_giant():
    gen = np.random.default_rng(47)
    g = _random_simple(gen, 40, 25)
    for _ in range(40):
        u, v = map(int, gen.choice(40, size=2, replace=False))
        before = analyze(g).c1
        present = {tuple(sorted(e)) for e in g.edges.tolist()}
        if tuple(sorted((u, v))) in present:
            continue
        g = _graph(40, sorted(present | {tuple(sorted((u, v)))}))
        assert analyze(g).c1 >= before
