from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Literal, Sequence, Tuple

from src.core.errors import BudgetExceededError, GraphError

Edge = Tuple[int, int]


@dataclass(frozen=True)
class LabelledTree:
    k: int
    edges: Tuple[Edge, ...]
    aut: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise GraphError("a tree needs at least one vertex")
        if len(self.edges) != self.k - 1:
            raise GraphError(f"a tree on {self.k} vertices has {self.k - 1} edges, got {len(self.edges)}")
        adjacency = _adjacency(self.k, self.edges)
        seen = {0}
        stack = [0]
        while stack:
            for nxt in adjacency[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        if len(seen) != self.k:
            raise GraphError("tree edges do not connect all vertices")

    def adjacency(self) -> List[List[int]]:
        return _adjacency(self.k, self.edges)


def _adjacency(k: int, edges: Sequence[Edge]) -> List[List[int]]:
    adjacency: List[List[int]] = [[] for _ in range(k)]
    for u, v in edges:
        if not (0 <= u < k and 0 <= v < k) or u == v:
            raise GraphError(f"invalid tree edge ({u}, {v}) for k={k}")
        adjacency[u].append(v)
        adjacency[v].append(u)
    return adjacency


def _rooted_code(adjacency: List[List[int]], root: int, parent: int) -> str:
    children = sorted(_rooted_code(adjacency, c, root) for c in adjacency[root] if c != parent)
    return "(" + "".join(children) + ")"


def _centers(adjacency: List[List[int]]) -> List[int]:
    k = len(adjacency)
    if k <= 2:
        return list(range(k))
    degree = [len(nbrs) for nbrs in adjacency]
    leaves = [v for v in range(k) if degree[v] <= 1]
    remaining = k
    while remaining > 2:
        remaining -= len(leaves)
        next_leaves = []
        for leaf in leaves:
            for nbr in adjacency[leaf]:
                degree[nbr] -= 1
                if degree[nbr] == 1:
                    next_leaves.append(nbr)
        leaves = next_leaves
    return sorted(leaves)


def canonical_form(k: int, edges: Sequence[Edge]) -> str:
    """Isomorphism-invariant string: smallest rooted code over the tree's centers."""
    adjacency = _adjacency(k, edges)
    return min(_rooted_code(adjacency, c, -1) for c in _centers(adjacency))


def _rooted_aut(adjacency: List[List[int]], root: int, parent: int) -> Tuple[str, int]:
    child_info = [_rooted_aut(adjacency, c, root) for c in adjacency[root] if c != parent]
    count = 1
    for _, aut in child_info:
        count *= aut
    for multiplicity in Counter(code for code, _ in child_info).values():
        count *= math.factorial(multiplicity)
    code = "(" + "".join(sorted(code for code, _ in child_info)) + ")"
    return code, count


def automorphism_count(k: int, edges: Sequence[Edge]) -> int:
    adjacency = _adjacency(k, edges)
    centers = _centers(adjacency)
    if len(centers) == 1:
        return _rooted_aut(adjacency, centers[0], -1)[1]
    left, right = centers
    left_code, left_aut = _rooted_aut(adjacency, left, right)
    right_code, right_aut = _rooted_aut(adjacency, right, left)
    return left_aut * right_aut * (2 if left_code == right_code else 1)


def automorphism_count_bruteforce(k: int, edges: Sequence[Edge]) -> int:
    edge_set = {frozenset(e) for e in edges}
    count = 0
    for perm in itertools.permutations(range(k)):
        if all(frozenset((perm[u], perm[v])) in edge_set for u, v in edges):
            count += 1
    return count


def prufer_decode(sequence: Sequence[int]) -> Tuple[Edge, ...]:
    """Labelled tree on len(sequence) + 2 vertices encoded by a Pruefer sequence."""
    k = len(sequence) + 2
    degree = [1] * k
    for x in sequence:
        degree[x] += 1
    edges: List[Edge] = []
    for x in sequence:
        leaf = next(v for v in range(k) if degree[v] == 1)
        edges.append((min(leaf, x), max(leaf, x)))
        degree[leaf] -= 1
        degree[x] -= 1
    u, v = (w for w in range(k) if degree[w] == 1)
    edges.append((u, v))
    return tuple(edges)


def _by_extension(k: int) -> Dict[str, Tuple[Edge, ...]]:
    classes: Dict[str, Tuple[Edge, ...]] = {canonical_form(1, ()): ()}
    for size in range(2, k + 1):
        grown: Dict[str, Tuple[Edge, ...]] = {}
        for edges in classes.values():
            for attach in range(size - 1):
                candidate = edges + ((attach, size - 1),)
                grown.setdefault(canonical_form(size, candidate), candidate)
        classes = grown
    return classes


def _by_prufer(k: int) -> Dict[str, Tuple[Edge, ...]]:
    if k <= 2:
        return _by_extension(k)
    classes: Dict[str, Tuple[Edge, ...]] = {}
    for seq in itertools.product(range(k), repeat=k - 2):
        edges = prufer_decode(seq)
        classes.setdefault(canonical_form(k, edges), edges)
    return classes


@lru_cache(maxsize=None)
def enumerate_trees(k: int, method: Literal["extend", "prufer"] = "extend", max_k: int = 8) -> Tuple[LabelledTree, ...]:
    """One representative per isomorphism class of trees on k vertices, sorted by canonical form."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > max_k:
        raise BudgetExceededError(f"tree enumeration is limited to k <= {max_k}", size=k, limit=max_k)
    classes = _by_prufer(k) if method == "prufer" else _by_extension(k)
    return tuple(
        LabelledTree(k=k, edges=edges, aut=automorphism_count(k, edges))
        for _, edges in sorted(classes.items())
    )


__all__ = [
    "LabelledTree",
    "automorphism_count",
    "automorphism_count_bruteforce",
    "canonical_form",
    "enumerate_trees",
    "prufer_decode",
]
