from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
from loguru import logger
from scipy import sparse

from src.core.errors import DomainError, GraphError, NotPrimeError
from src.core.kernel import StepKernel, WeightMatrix
from src.core.rng import RngStream, as_generator

Model = Literal["bernoulli", "poisson", "multi"]
RngLike = RngStream | np.random.Generator | int | None

_POLARITY_CHUNK = 512


@dataclass(frozen=True, eq=False)
class SparseGraph:
    """Vertex count plus an edge multiset stored as a canonical (E, 2) array.

    Every row satisfies u < v and rows are sorted lexicographically; simple
    graphs carry no repeated row.
    """

    n: int
    edges: np.ndarray
    multigraph: bool = False

    def __post_init__(self) -> None:
        edges = np.array(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            if edges.min() < 0 or edges.max() >= self.n:
                raise GraphError(f"edge endpoints must lie in [0, {self.n})")
            edges = np.sort(edges, axis=1)
            if np.any(edges[:, 0] == edges[:, 1]):
                raise GraphError("loops are not allowed")
            edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
            if not self.multigraph and np.any(np.all(edges[1:] == edges[:-1], axis=1)):
                raise GraphError("simple graph has a repeated edge")
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)

    @classmethod
    def empty(cls, n: int) -> "SparseGraph":
        return cls(n=n, edges=np.empty((0, 2), dtype=np.int64))

    @property
    def m(self) -> int:
        return int(self.edges.shape[0])

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.reshape(-1), minlength=self.n)

    def simple(self) -> "SparseGraph":
        """Underlying simple graph (parallel edges collapsed)."""
        if not self.multigraph:
            return self
        return SparseGraph(n=self.n, edges=np.unique(self.edges, axis=0))

    def relabel(self, perm: np.ndarray) -> "SparseGraph":
        perm = np.asarray(perm, dtype=np.int64)
        return SparseGraph(n=self.n, edges=perm[self.edges], multigraph=self.multigraph)

    def same_edges(self, other: "SparseGraph") -> bool:
        return self.n == other.n and np.array_equal(self.edges, other.edges)

    def __repr__(self) -> str:
        return f"SparseGraph(n={self.n}, m={self.m}, multigraph={self.multigraph})"


def is_prime(q: int) -> bool:
    if q < 2:
        return False
    if q % 2 == 0:
        return q == 2
    d = 3
    while d * d <= q:
        if q % d == 0:
            return False
        d += 2
    return True


def _edge_probability(model: Model, values: np.ndarray, n: int) -> np.ndarray:
    scaled = np.asarray(values, dtype=float) / n
    if model == "bernoulli":
        return np.minimum(scaled, 1.0)
    return -np.expm1(-scaled)


def _skip_positions(total: int, p: float, gen: np.random.Generator) -> np.ndarray:
    """Positions of successes among ``total`` Bernoulli(p) trials by geometric skipping."""
    if total <= 0 or p <= 0.0:
        return np.empty(0, dtype=np.int64)
    if p >= 1.0:
        return np.arange(total, dtype=np.int64)
    chunks = []
    last = -1
    while True:
        expected = (total - last - 1) * p
        batch = int(expected + 6.0 * np.sqrt(expected) + 16)
        hits = last + np.cumsum(gen.geometric(p, size=batch))
        inside = hits[hits < total]
        chunks.append(inside)
        if inside.size < batch:
            break
        last = int(hits[-1])
    return np.concatenate(chunks)


def _triangle_pairs(positions: np.ndarray, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Map linear indices over {(i, j): 0 <= i < j < size} (row-major) to pairs."""
    rows = np.arange(size, dtype=np.int64)
    offsets = rows * size - rows * (rows + 1) // 2
    i = np.searchsorted(offsets, positions, side="right") - 1
    j = positions - offsets[i] + i + 1
    return i, j


def _sample_block(A: WeightMatrix, model: Model, gen: np.random.Generator) -> np.ndarray:
    n = A.n
    table = A.table
    members = [np.flatnonzero(A.types == t) for t in range(table.shape[0])]
    out = []
    for a in range(table.shape[0]):
        for b in range(a, table.shape[0]):
            value = float(table[a, b])
            size_a, size_b = members[a].size, members[b].size
            total = size_a * (size_a - 1) // 2 if a == b else size_a * size_b
            if value <= 0.0 or total == 0:
                continue
            if model == "multi":
                count = gen.poisson(total * value / n)
                positions = gen.integers(0, total, size=count)
            else:
                p = float(_edge_probability(model, np.array(value), n))
                positions = _skip_positions(total, p, gen)
            if a == b:
                i, j = _triangle_pairs(positions, size_a)
                out.append(np.column_stack([members[a][i], members[a][j]]))
            else:
                out.append(np.column_stack([members[a][positions // size_b], members[b][positions % size_b]]))
    return np.vstack(out) if out else np.empty((0, 2), dtype=np.int64)


def _sample_dense(A: WeightMatrix, model: Model, gen: np.random.Generator) -> np.ndarray:
    n = A.n
    entries = A.to_dense()
    out = []
    for i in range(n - 1):
        row = entries[i, i + 1 :]
        if not row.any():
            continue
        if model == "multi":
            counts = gen.poisson(row / n)
            cols = np.repeat(np.arange(i + 1, n), counts)
        else:
            cols = i + 1 + np.flatnonzero(gen.random(row.size) < _edge_probability(model, row, n))
        if cols.size:
            out.append(np.column_stack([np.full(cols.size, i), cols]))
    return np.vstack(out) if out else np.empty((0, 2), dtype=np.int64)


def _sample_sparse(A: WeightMatrix, model: Model, gen: np.random.Generator) -> np.ndarray:
    upper = sparse.triu(A.csr, k=1).tocoo()
    order = np.lexsort((upper.col, upper.row))
    rows, cols, values = upper.row[order], upper.col[order], upper.data[order]
    if model == "multi":
        counts = gen.poisson(values / A.n)
        return np.column_stack([np.repeat(rows, counts), np.repeat(cols, counts)]).astype(np.int64)
    keep = gen.random(values.size) < _edge_probability(model, values, A.n)
    return np.column_stack([rows[keep], cols[keep]]).astype(np.int64)


def sample(A: WeightMatrix, model: Model, rng: RngLike) -> SparseGraph:
    if model not in ("bernoulli", "poisson", "multi"):
        raise ValueError(f"unknown model {model!r}")
    gen = as_generator(rng)
    if A.layout == "block":
        edges = _sample_block(A, model, gen)
    elif A.layout == "sparse":
        edges = _sample_sparse(A, model, gen)
    else:
        edges = _sample_dense(A, model, gen)
    return SparseGraph(n=A.n, edges=edges, multigraph=model == "multi")


def sample_bernoulli(A: WeightMatrix, rng: RngLike) -> SparseGraph:
    return sample(A, "bernoulli", rng)


def sample_poisson_simple(A: WeightMatrix, rng: RngLike) -> SparseGraph:
    return sample(A, "poisson", rng)


def sample_poisson_multi(A: WeightMatrix, rng: RngLike) -> SparseGraph:
    return sample(A, "multi", rng)


def convert_matrix(A: WeightMatrix) -> WeightMatrix:
    """a' = -n log(1 - a/n), so that the Poisson simple model on A' matches G(A)."""
    n = A.n

    def transform(values: np.ndarray) -> np.ndarray:
        if np.any(values >= n):
            raise DomainError(f"convert_matrix needs every entry < n={n} (max {values.max():.6g})")
        return -n * np.log1p(-values / n)

    if A.layout == "block":
        return WeightMatrix.block(A.types, transform(np.array(A.table)))
    if A.layout == "sparse":
        csr = A.csr.copy()
        csr.data = transform(csr.data)
        return WeightMatrix.from_sparse(csr, n)
    return WeightMatrix.dense(transform(A.to_dense()))


def sample_iid_types(k: StepKernel, n: int, rng: RngLike) -> WeightMatrix:
    """Draw vertex types iid from the kernel's masses; a_ij = k(t_i, t_j) off the diagonal."""
    if n < 1:
        raise ValueError("n must be >= 1")
    gen = as_generator(rng)
    types = gen.choice(k.m, size=n, p=k.masses)
    return WeightMatrix.block(types, k.values)


def projective_points(q: int) -> np.ndarray:
    """Points of PG(2, q) with the first nonzero coordinate scaled to 1."""
    field = np.arange(q, dtype=np.int64)
    a, b = np.meshgrid(field, field, indexing="ij")
    leading = np.column_stack([np.ones(q * q, dtype=np.int64), a.reshape(-1), b.reshape(-1)])
    middle = np.column_stack([np.zeros(q, dtype=np.int64), np.ones(q, dtype=np.int64), field])
    last = np.array([[0, 0, 1]], dtype=np.int64)
    return np.vstack([leading, middle, last])


def polarity_graph(q: int) -> SparseGraph:
    """Erdos-Renyi polarity graph: x ~ y iff x . y = 0 over GF(q), loops dropped."""
    if not is_prime(q):
        raise NotPrimeError(q)
    points = projective_points(q)
    n = points.shape[0]
    chunks = []
    for start in range(0, n, _POLARITY_CHUNK):
        stop = min(n, start + _POLARITY_CHUNK)
        dots = (points[start:stop] @ points.T) % q
        rows, cols = np.nonzero(dots == 0)
        rows = rows + start
        upper = cols > rows
        chunks.append(np.column_stack([rows[upper], cols[upper]]))
    edges = np.vstack(chunks)
    logger.debug("polarity graph built", q=q, n=n, m=edges.shape[0])
    return SparseGraph(n=n, edges=edges)


def percolate(g: SparseGraph, keep_prob: float, rng: RngLike) -> SparseGraph:
    if not 0.0 <= keep_prob <= 1.0:
        raise DomainError(f"keep_prob must be in [0, 1], got {keep_prob}")
    keep = as_generator(rng).random(g.m) < keep_prob
    return SparseGraph(n=g.n, edges=g.edges[keep], multigraph=g.multigraph)


def adjacency_matrix(g: SparseGraph, p: float = 1.0) -> WeightMatrix:
    """1/p times the adjacency matrix (edge multiplicities summed), sparse layout."""
    if p <= 0:
        raise ValueError("p must be > 0")
    rows = np.concatenate([g.edges[:, 0], g.edges[:, 1]])
    cols = np.concatenate([g.edges[:, 1], g.edges[:, 0]])
    data = np.full(rows.size, 1.0 / p)
    return WeightMatrix.from_sparse(sparse.coo_matrix((data, (rows, cols)), shape=(g.n, g.n)).tocsr(), g.n)


def disc_statistic(g: SparseGraph, p: float, trials: int, rng: RngLike) -> float:
    """Largest |e(V) - p|V|^2/2| / (p n^2) over random half-size vertex subsets V."""
    if g.n < 2:
        return 0.0
    gen = as_generator(rng)
    half = g.n // 2
    worst = 0.0
    for _ in range(trials):
        inside = np.zeros(g.n, dtype=bool)
        inside[gen.choice(g.n, size=half, replace=False)] = True
        e_v = int(np.count_nonzero(inside[g.edges[:, 0]] & inside[g.edges[:, 1]]))
        worst = max(worst, abs(e_v - p * half * half / 2.0) / (p * g.n * g.n))
    return worst


def sampler_for(A: WeightMatrix, model: Model) -> Callable[[RngLike], SparseGraph]:
    """Closure over a fixed matrix, used by ensembles and runners."""

    def _draw(rng: RngLike) -> SparseGraph:
        return sample(A, model, rng)

    return _draw


__all__ = [
    "SparseGraph",
    "adjacency_matrix",
    "convert_matrix",
    "disc_statistic",
    "is_prime",
    "percolate",
    "polarity_graph",
    "projective_points",
    "sample",
    "sample_bernoulli",
    "sample_iid_types",
    "sample_poisson_multi",
    "sample_poisson_simple",
    "sampler_for",
]
