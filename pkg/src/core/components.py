from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Literal

import numpy as np
from loguru import logger

from src.config import get_settings
from src.core.graphgen import SparseGraph
from src.core.rng import RngStream, as_generator

settings = get_settings()

PerturbMode = Literal["random", "adversarial_greedy"]


class UnionFind:
    """Disjoint sets with union by size and path compression."""

    def __init__(self, n: int):
        self.parent: List[int] = list(range(n))
        self.size: List[int] = [1] * n
        self.count = n

    def find(self, x: int) -> int:
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        self.count -= 1
        return True

    def labels(self) -> np.ndarray:
        return np.fromiter((self.find(x) for x in range(len(self.parent))), dtype=np.int64, count=len(self.parent))


@dataclass(frozen=True)
class ComponentStats:
    n: int
    c1: int
    c2: int
    nk: Dict[int, int]
    nk_tree: Dict[int, int]
    nk_cyc: Dict[int, int]
    components: int

    def c1_fraction(self) -> float:
        return self.c1 / self.n if self.n else 0.0

    def c2_fraction(self) -> float:
        return self.c2 / self.n if self.n else 0.0

    def nk_fraction(self, k: int) -> float:
        return self.nk.get(k, 0) / self.n if self.n else 0.0

    def digest(self) -> str:
        """Short stable fingerprint of the N_k histogram."""
        payload = ";".join(f"{k}:{v}" for k, v in sorted(self.nk.items()))
        return hashlib.sha1(payload.encode()).hexdigest()[:12]

    def as_dict(self) -> Dict[str, object]:
        return {
            "n": self.n,
            "c1": self.c1,
            "c2": self.c2,
            "components": self.components,
            "nk": dict(sorted(self.nk.items())),
            "nk_tree": dict(sorted(self.nk_tree.items())),
            "nk_cyc": dict(sorted(self.nk_cyc.items())),
        }


def component_labels(g: SparseGraph) -> np.ndarray:
    """Union-find root of every vertex."""
    uf = UnionFind(g.n)
    for u, v in g.edges.tolist():
        uf.union(u, v)
    return uf.labels()


def analyze(g: SparseGraph) -> ComponentStats:
    if g.n == 0:
        return ComponentStats(n=0, c1=0, c2=0, nk={}, nk_tree={}, nk_cyc={}, components=0)
    _, compact = np.unique(component_labels(g), return_inverse=True)
    sizes = np.bincount(compact)
    simple = g.simple()
    edge_counts = np.bincount(compact[simple.edges[:, 0]], minlength=sizes.size) if simple.m else np.zeros(sizes.size, dtype=np.int64)
    is_tree = edge_counts == sizes - 1

    nk: Dict[int, int] = {}
    nk_tree: Dict[int, int] = {}
    nk_cyc: Dict[int, int] = {}
    for k, tree in zip(sizes.tolist(), is_tree.tolist()):
        nk[k] = nk.get(k, 0) + k
        bucket = nk_tree if tree else nk_cyc
        bucket[k] = bucket.get(k, 0) + k

    ordered = np.sort(sizes)[::-1]
    return ComponentStats(
        n=g.n,
        c1=int(ordered[0]),
        c2=int(ordered[1]) if ordered.size > 1 else 0,
        nk=nk,
        nk_tree=nk_tree,
        nk_cyc=nk_cyc,
        components=int(sizes.size),
    )


def n_at_least(stats: ComponentStats, omega: int) -> int:
    if omega < 1:
        raise ValueError("omega must be >= 1")
    return sum(count for k, count in stats.nk.items() if k >= omega)


def _delete_vertices(g: SparseGraph, doomed: np.ndarray) -> SparseGraph:
    keep = np.ones(g.n, dtype=bool)
    keep[doomed] = False
    new_label = np.cumsum(keep) - 1
    alive = keep[g.edges[:, 0]] & keep[g.edges[:, 1]]
    return SparseGraph(n=int(keep.sum()), edges=new_label[g.edges[alive]], multigraph=g.multigraph)


def _largest_component_tree_edges(g: SparseGraph) -> np.ndarray:
    uf = UnionFind(g.n)
    tree = np.array([uf.union(u, v) for u, v in g.edges.tolist()], dtype=bool)
    labels = uf.labels()
    giant = np.bincount(labels, minlength=g.n).argmax()
    return np.flatnonzero(tree & (labels[g.edges[:, 0]] == giant))


def _add_random_edges(g: SparseGraph, count: int, gen: np.random.Generator) -> SparseGraph:
    if count <= 0:
        return g
    if g.n < 2:
        logger.warning("cannot add edges to a graph with fewer than 2 vertices", n=g.n, requested=count)
        return g
    edges = g.edges
    if g.multigraph:
        u = gen.integers(0, g.n, size=count)
        v = (u + gen.integers(1, g.n, size=count)) % g.n
        return SparseGraph(n=g.n, edges=np.vstack([edges, np.column_stack([u, v])]), multigraph=True)

    capacity = g.n * (g.n - 1) // 2 - g.m
    if count > capacity:
        logger.warning("not enough free pairs to add edges", requested=count, available=capacity)
        count = capacity
    existing = set(map(tuple, edges.tolist()))
    added: List[tuple[int, int]] = []
    while len(added) < count:
        u = gen.integers(0, g.n, size=count - len(added))
        v = (u + gen.integers(1, g.n, size=u.size)) % g.n
        for a, b in zip(np.minimum(u, v).tolist(), np.maximum(u, v).tolist()):
            if (a, b) not in existing and len(added) < count:
                existing.add((a, b))
                added.append((a, b))
    new_edges = np.vstack([edges, np.array(added, dtype=np.int64).reshape(-1, 2)])
    return SparseGraph(n=g.n, edges=new_edges)


def perturb(
    g: SparseGraph,
    del_vertices: int,
    del_edges: int,
    add_edges: int,
    mode: PerturbMode,
    rng: RngStream | np.random.Generator | int | None,
) -> SparseGraph:
    """Delete vertices, then delete and add edges.

    ``adversarial_greedy`` removes the highest-degree vertices and then the
    spanning-tree edges of the current largest component. It is an attack
    heuristic, a lower bound on the damage an optimal adversary could do.
    Added edges are uniformly random in both modes.
    """

    if del_vertices < 0 or del_edges < 0 or add_edges < 0:
        raise ValueError("perturbation counts must be >= 0")
    if del_vertices > g.n:
        raise ValueError(f"cannot delete {del_vertices} vertices from a graph on {g.n}")
    if mode not in ("random", "adversarial_greedy"):
        raise ValueError(f"unknown perturbation mode {mode!r}")
    gen = as_generator(rng)

    out = g
    if del_vertices:
        if mode == "random":
            doomed = gen.choice(g.n, size=del_vertices, replace=False)
        else:
            doomed = np.argsort(-g.degrees(), kind="stable")[:del_vertices]
        out = _delete_vertices(out, doomed)

    if del_edges:
        if del_edges >= out.m:
            if del_edges > out.m:
                logger.warning("insufficient edges to delete, removing all", requested=del_edges, available=out.m)
            out = SparseGraph(n=out.n, edges=np.empty((0, 2), dtype=np.int64), multigraph=out.multigraph)
        else:
            if mode == "random":
                doomed_edges = gen.choice(out.m, size=del_edges, replace=False)
            else:
                tree_edges = gen.permutation(_largest_component_tree_edges(out))
                doomed_edges = tree_edges[:del_edges]
                if doomed_edges.size < del_edges:
                    rest = np.setdiff1d(np.arange(out.m), doomed_edges)
                    extra = gen.choice(rest, size=del_edges - doomed_edges.size, replace=False)
                    doomed_edges = np.concatenate([doomed_edges, extra])
            keep = np.ones(out.m, dtype=bool)
            keep[doomed_edges] = False
            out = SparseGraph(n=out.n, edges=out.edges[keep], multigraph=out.multigraph)

    return _add_random_edges(out, add_edges, gen)


@dataclass(frozen=True)
class TailFrequencies:
    reps: int
    lower: float
    upper: float
    second: float
    c1_fractions: List[float] = field(default_factory=list)


def ensemble_tail(
    sampler: Callable[[RngStream], SparseGraph],
    reps: int,
    threshold_lo: float,
    threshold_hi: float,
    rng: RngStream | int,
    threads: int | None = None,
) -> TailFrequencies:
    """Empirical frequencies of C1 < lo*n, C1 > hi*n and C2 >= lo*n over independent samples."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    root = rng if isinstance(rng, RngStream) else RngStream(int(rng))
    threads = settings.THREADS if threads is None else threads

    def _one(replica: int) -> ComponentStats:
        return analyze(sampler(root.derive(replica)))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            stats = list(pool.map(_one, range(reps)))
    else:
        stats = [_one(r) for r in range(reps)]

    lower = sum(s.c1 < threshold_lo * s.n for s in stats)
    upper = sum(s.c1 > threshold_hi * s.n for s in stats)
    second = sum(s.c2 >= threshold_lo * s.n for s in stats)
    return TailFrequencies(
        reps=reps,
        lower=lower / reps,
        upper=upper / reps,
        second=second / reps,
        c1_fractions=[s.c1_fraction() for s in stats],
    )


__all__ = [
    "ComponentStats",
    "TailFrequencies",
    "UnionFind",
    "analyze",
    "component_labels",
    "ensemble_tail",
    "n_at_least",
    "perturb",
]
