from collections import Counter

import numpy as np
import pytest

from src.core.errors import DomainError, GraphError, NotPrimeError
from src.core.graphgen import (
    SparseGraph,
    _skip_positions,
    _triangle_pairs,
    adjacency_matrix,
    convert_matrix,
    disc_statistic,
    is_prime,
    percolate,
    polarity_graph,
    projective_points,
    sample,
    sample_bernoulli,
    sample_iid_types,
    sample_poisson_multi,
    sample_poisson_simple,
    sampler_for,
)
from src.core.kernel import StepKernel, WeightMatrix
from src.core.rng import RngStream


def test_sparse_graph_canonicalizes_edges():
    g = SparseGraph(n=4, edges=np.array([[3, 1], [2, 0], [1, 0]]))
    assert g.edges.tolist() == [[0, 1], [0, 2], [1, 3]]
    assert g.degrees().tolist() == [2, 2, 1, 1]
    assert g.m == 3


def test_sparse_graph_rejects_loops_duplicates_and_range():
    with pytest.raises(GraphError, match="loops"):
        SparseGraph(n=3, edges=np.array([[1, 1]]))
    with pytest.raises(GraphError, match="repeated"):
        SparseGraph(n=3, edges=np.array([[0, 1], [1, 0]]))
    with pytest.raises(GraphError):
        SparseGraph(n=3, edges=np.array([[0, 3]]))
    multi = SparseGraph(n=3, edges=np.array([[0, 1], [1, 0]]), multigraph=True)
    assert multi.m == 2
    assert multi.simple().m == 1


def test_relabel_and_same_edges():
    g = SparseGraph(n=3, edges=np.array([[0, 1]]))
    moved = g.relabel(np.array([2, 0, 1]))
    assert moved.edges.tolist() == [[0, 2]]
    assert not moved.same_edges(g)
    assert g.same_edges(SparseGraph(n=3, edges=np.array([[1, 0]])))


def test_is_prime():
    assert [q for q in range(20) if is_prime(q)] == [2, 3, 5, 7, 11, 13, 17, 19]


def test_triangle_pairs_enumerates_upper_triangle_in_order():
    size = 6
    total = size * (size - 1) // 2
    i, j = _triangle_pairs(np.arange(total), size)
    expected = [(a, b) for a in range(size) for b in range(a + 1, size)]
    assert list(zip(i.tolist(), j.tolist())) == expected


def test_skip_positions_edge_cases_and_rate():
    gen = np.random.default_rng(0)
    assert _skip_positions(0, 0.5, gen).size == 0
    assert _skip_positions(10, 0.0, gen).size == 0
    assert _skip_positions(5, 1.0, gen).tolist() == [0, 1, 2, 3, 4]
    hits = _skip_positions(200_000, 0.01, gen)
    assert np.all(np.diff(hits) > 0)
    assert hits.max() < 200_000
    assert abs(hits.size - 2000) < 5 * np.sqrt(2000)


def test_constant_matrix_edge_count():
    n = 20_000
    g = sample_bernoulli(WeightMatrix.constant(n, 2.0), RngStream(1).derive(0))
    expected = (n - 1)
    assert abs(g.m - expected) < 5 * np.sqrt(expected)
    assert not g.multigraph


def test_sampling_is_deterministic_per_stream():
    A = WeightMatrix.constant(500, 3.0)
    first = sample(A, "bernoulli", RngStream(42).derive(1, 2))
    second = sample(A, "bernoulli", RngStream(42).derive(1, 2))
    other = sample(A, "bernoulli", RngStream(42).derive(1, 3))
    assert first.same_edges(second)
    assert not first.same_edges(other)
    draw = sampler_for(A, "bernoulli")
    assert draw(RngStream(42).derive(1, 2)).same_edges(first)


def test_unknown_model_rejected():
    with pytest.raises(ValueError):
        sample(WeightMatrix.constant(3, 1.0), "geometric", 0)


def test_dense_pair_frequencies_follow_entries():
    n = 3
    A = WeightMatrix.dense(np.array([[0.0, 1.5, 0.3], [1.5, 0.0, 2.4], [0.3, 2.4, 0.0]]))
    gen = np.random.default_rng(5)
    counts = Counter()
    reps = 20_000
    for _ in range(reps):
        for u, v in sample_bernoulli(A, gen).edges.tolist():
            counts[(u, v)] += 1
    for (u, v), a in (((0, 1), 1.5), ((0, 2), 0.3), ((1, 2), 2.4)):
        p = a / n
        assert abs(counts[(u, v)] / reps - p) < 5 * np.sqrt(p * (1 - p) / reps)


def test_convert_matrix_matches_bernoulli_in_distribution():
    A = WeightMatrix.dense(np.array([[0.0, 1.2, 0.4], [1.2, 0.0, 2.1], [0.4, 2.1, 0.0]]))
    converted = convert_matrix(A)
    assert converted.to_dense()[0, 1] == pytest.approx(-3 * np.log(1 - 0.4))
    gen_a = np.random.default_rng(1)
    gen_b = np.random.default_rng(2)
    reps = 20_000
    left = Counter(tuple(map(tuple, sample_bernoulli(A, gen_a).edges.tolist())) for _ in range(reps))
    right = Counter(tuple(map(tuple, sample_poisson_simple(converted, gen_b).edges.tolist())) for _ in range(reps))
    tv = 0.5 * sum(abs(left[key] - right[key]) for key in set(left) | set(right)) / reps
    assert tv < 0.03


def test_convert_matrix_domain():
    with pytest.raises(DomainError):
        convert_matrix(WeightMatrix.dense(np.array([[0.0, 3.0], [3.0, 0.0]])))
    block = convert_matrix(WeightMatrix.constant(10, 1.0))
    assert block.layout == "block"
    assert block.table[0, 0] == pytest.approx(-10 * np.log(0.9))


def test_poisson_multigraph_keeps_parallel_edges():
    A = WeightMatrix.dense(np.array([[0.0, 6.0], [6.0, 0.0]]))
    gen = np.random.default_rng(3)
    counts = [sample_poisson_multi(A, gen).m for _ in range(5000)]
    assert np.mean(counts) == pytest.approx(3.0, abs=0.15)
    assert max(counts) > 1
    g = sample_poisson_multi(A, np.random.default_rng(4))
    assert g.multigraph


def test_sparse_layout_sampling():
    A = WeightMatrix.from_sparse(WeightMatrix.dense(np.array([[0.0, 2.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, 0.0]])).csr, 3)
    gen = np.random.default_rng(6)
    seen = set()
    for _ in range(200):
        seen.update(map(tuple, sample_bernoulli(A, gen).edges.tolist()))
    assert seen == {(0, 1)}


def test_sample_iid_types_follows_masses():
    k = StepKernel(masses=[0.25, 0.75], values=[[1.0, 2.0], [2.0, 0.0]])
    A = sample_iid_types(k, 40_000, np.random.default_rng(0))
    assert A.layout == "block"
    share = np.mean(A.types == 0)
    assert abs(share - 0.25) < 5 * np.sqrt(0.25 * 0.75 / 40_000)
    assert np.array_equal(A.table, k.values)


def test_projective_points_and_polarity_graph_small():
    points = projective_points(3)
    assert points.shape == (13, 3)
    assert len({tuple(p) for p in points.tolist()}) == 13
    g = polarity_graph(2)
    assert g.n == 7
    assert g.m == 9
    assert sorted(g.degrees().tolist()) == [2, 2, 2, 3, 3, 3, 3]


def test_polarity_graph_degrees():
    q = 5
    g = polarity_graph(q)
    degrees = g.degrees()
    assert g.n == q * q + q + 1
    assert set(degrees.tolist()) == {q, q + 1}
    assert int(np.sum(degrees == q)) == q + 1


def test_polarity_graph_requires_prime():
    with pytest.raises(NotPrimeError) as excinfo:
        polarity_graph(4)
    assert excinfo.value.q == 4


def test_percolate_extremes():
    g = polarity_graph(3)
    assert percolate(g, 1.0, 0).same_edges(g)
    assert percolate(g, 0.0, 0).m == 0
    with pytest.raises(ValueError):
        percolate(g, 1.5, 0)


def test_adjacency_matrix_scaled_by_p():
    g = SparseGraph(n=3, edges=np.array([[0, 1], [1, 2]]))
    A = adjacency_matrix(g, p=0.5)
    assert A.layout == "sparse"
    assert A.to_dense().tolist() == [[0.0, 2.0, 0.0], [2.0, 0.0, 2.0], [0.0, 2.0, 0.0]]


def test_disc_statistic_on_complete_graph():
    n = 10
    edges = np.array([(u, v) for u in range(n) for v in range(u + 1, n)])
    g = SparseGraph(n=n, edges=edges)
    half = n // 2
    expected = (half / 2) / (n * n)
    assert disc_statistic(g, 1.0, trials=5, rng=0) == pytest.approx(expected)
