from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Literal, Mapping, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy import sparse

from src.config import get_settings
from src.core.branching import FixedPointResult, GWOutcome
from src.core.cutnorm import cutnorm_sets_exact
from src.core.errors import BudgetExceededError, ConvergenceError, DimensionMismatchError, GraphError, KernelError
from src.core.graphgen import SparseGraph
from src.core.kernel import MASS_TOL, Marginal, StepKernel, WeightMatrix
from src.core.rng import RngStream, as_generator

settings = get_settings()

RngLike = RngStream | np.random.Generator | int | None
Variant = Literal["bernoulli", "poisson_multi"]

_SYMMETRY_FULL_CHECK = 1_000_000
_SYMMETRY_SPOT_CHECKS = 256
_ENUMERATE_PATTERN_MAX = 200_000


def _contract(array: np.ndarray, masses: np.ndarray, times: int) -> np.ndarray:
    """Integrate out the last ``times`` coordinates against mu."""
    for _ in range(times):
        array = array @ masses
    return array


@dataclass(frozen=True, eq=False)
class HyperStepKernel:
    """Finite-type hyperkernel: shared masses and one symmetric r-array per arity."""

    masses: np.ndarray
    arrays: Mapping[int, np.ndarray]
    signed: bool = False

    def __post_init__(self) -> None:
        masses = np.array(self.masses, dtype=float).reshape(-1)
        m = masses.size
        if m == 0 or np.any(masses <= 0) or abs(math.fsum(masses.tolist()) - 1.0) > MASS_TOL:
            raise KernelError("hyperkernel masses must be positive and sum to 1")
        arrays: Dict[int, np.ndarray] = {}
        for r, raw in sorted(self.arrays.items()):
            array = np.array(raw, dtype=float)
            if r < 2:
                raise KernelError(f"arity must be >= 2, got {r}")
            if array.shape != (m,) * r:
                raise DimensionMismatchError(f"arity-{r} array must have shape {(m,) * r}", expected=m, got=array.shape[0])
            if not np.all(np.isfinite(array)) or (not self.signed and np.any(array < 0)):
                raise KernelError(f"arity-{r} values must be finite and nonnegative")
            _check_symmetric(array, r)
            array.setflags(write=False)
            arrays[r] = array
        masses.setflags(write=False)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "arrays", arrays)

    @classmethod
    def constant(cls, arities: Mapping[int, float], m: int = 1) -> "HyperStepKernel":
        masses = np.full(m, 1.0 / m)
        return cls(masses=masses, arrays={r: np.full((m,) * r, float(t)) for r, t in arities.items()})

    @property
    def m(self) -> int:
        return int(self.masses.size)

    @property
    def max_arity(self) -> int:
        return max(self.arrays) if self.arrays else 0

    def arity_marginal(self, r: int) -> np.ndarray:
        """lambda_r(i): integral of k_r(i, .) over the other r-1 coordinates."""
        return _contract(self.arrays[r], self.masses, r - 1)

    def integral(self) -> float:
        return float(sum(r * _contract(a, self.masses, r) for r, a in self.arrays.items()))


def _check_symmetric(array: np.ndarray, r: int) -> None:
    if array.size <= _SYMMETRY_FULL_CHECK:
        for perm in itertools.permutations(range(r)):
            if not np.array_equal(array, np.transpose(array, perm)):
                raise KernelError(f"arity-{r} array is not symmetric under axis permutation {perm}")
        return
    gen = np.random.default_rng(0)
    m = array.shape[0]
    for _ in range(_SYMMETRY_SPOT_CHECKS):
        idx = gen.integers(0, m, size=r)
        value = array[tuple(idx)]
        if array[tuple(gen.permutation(idx))] != value:
            raise KernelError(f"arity-{r} array failed a symmetry spot check at {tuple(idx)}")


class SparseHypermatrix:
    """Hypermatrix stored by sorted tuples of distinct indices; absent tuples are zero."""

    def __init__(self, n: int, entries: Mapping[Tuple[int, ...], float]):
        self.n = int(n)
        canonical: Dict[Tuple[int, ...], float] = {}
        for key, value in entries.items():
            tup = tuple(sorted(int(i) for i in key))
            if len(tup) < 2:
                raise GraphError(f"hypermatrix tuples need arity >= 2, got {key}")
            if len(set(tup)) != len(tup):
                raise GraphError(f"hypermatrix tuples must have distinct indices, got {key}")
            if tup[0] < 0 or tup[-1] >= self.n:
                raise GraphError(f"tuple {key} out of range for n={self.n}")
            if value < 0 or not math.isfinite(value):
                raise KernelError(f"hypermatrix values must be finite and nonnegative, got {value}")
            if tup in canonical and canonical[tup] != value:
                raise KernelError(f"conflicting values for tuple {tup}")
            if value > 0:
                canonical[tup] = float(value)
        self.entries = canonical

    @property
    def R(self) -> int:
        return max((len(t) for t in self.entries), default=0)

    def get(self, indices: Sequence[int]) -> float:
        key = tuple(sorted(indices))
        if len(set(key)) != len(key):
            return 0.0
        return self.entries.get(key, 0.0)

    def by_arity(self) -> Dict[int, Tuple[np.ndarray, np.ndarray]]:
        grouped: Dict[int, List[Tuple[Tuple[int, ...], float]]] = {}
        for tup, value in sorted(self.entries.items()):
            grouped.setdefault(len(tup), []).append((tup, value))
        return {
            r: (np.array([t for t, _ in items], dtype=np.int64), np.array([v for _, v in items]))
            for r, items in sorted(grouped.items())
        }

    def to_hyperkernel(self) -> HyperStepKernel:
        """Dense hyperkernel with one type per vertex; diagonal cells stay zero."""
        if self.n == 0:
            raise KernelError("empty hypermatrix has no hyperkernel")
        arrays: Dict[int, np.ndarray] = {}
        for r, (tuples, values) in self.by_arity().items():
            if self.n**r > settings.DENSE_MAX_N**2:
                raise BudgetExceededError("hyperkernel too large to densify", size=self.n, limit=settings.DENSE_MAX_N)
            array = np.zeros((self.n,) * r)
            for perm in itertools.permutations(range(r)):
                array[tuple(tuples[:, list(perm)].T)] = values
            arrays[r] = array
        return HyperStepKernel(masses=np.full(self.n, 1.0 / self.n), arrays=arrays)

    def __repr__(self) -> str:
        return f"SparseHypermatrix(n={self.n}, R={self.R}, stored={len(self.entries)})"


@dataclass(frozen=True, eq=False)
class Hypergraph:
    n: int
    hyperedges: Tuple[Tuple[int, ...], ...]

    def __post_init__(self) -> None:
        edges = []
        for edge in self.hyperedges:
            tup = tuple(sorted(int(v) for v in edge))
            if len(tup) < 2 or len(set(tup)) != len(tup):
                raise GraphError(f"hyperedge {edge} must have at least 2 distinct vertices")
            if tup[0] < 0 or tup[-1] >= self.n:
                raise GraphError(f"hyperedge {edge} out of range for n={self.n}")
            edges.append(tup)
        object.__setattr__(self, "hyperedges", tuple(sorted(edges)))

    @property
    def size(self) -> int:
        return len(self.hyperedges)

    def arity_counts(self) -> Dict[int, int]:
        return dict(sorted(Counter(len(e) for e in self.hyperedges).items()))


def _inclusion_intensity(r: int, values: np.ndarray, n: int) -> np.ndarray:
    return math.factorial(r) * values / float(n) ** (r - 1)


def sample_hypergraph(H: SparseHypermatrix, rng: RngLike, variant: Variant = "bernoulli") -> Hypergraph:
    """Each stored r-tuple present w.p. min(r! h / n^(r-1), 1), or with that Poisson multiplicity."""
    if variant not in ("bernoulli", "poisson_multi"):
        raise ValueError(f"unknown hypergraph variant {variant!r}")
    gen = as_generator(rng)
    edges: List[Tuple[int, ...]] = []
    for r, (tuples, values) in H.by_arity().items():
        intensity = _inclusion_intensity(r, values, H.n)
        if variant == "bernoulli":
            chosen = tuples[gen.random(values.size) < np.minimum(intensity, 1.0)]
        else:
            chosen = np.repeat(tuples, gen.poisson(intensity), axis=0)
        edges.extend(map(tuple, chosen.tolist()))
    return Hypergraph(n=H.n, hyperedges=tuple(edges))


def _pattern_sets(groups: Sequence[Tuple[np.ndarray, int]]) -> np.ndarray:
    """Every vertex set realizing a type pattern, one sorted row each."""
    parts = [list(itertools.combinations(members.tolist(), mult)) for members, mult in groups]
    rows = [sorted(itertools.chain.from_iterable(choice)) for choice in itertools.product(*parts)]
    width = sum(mult for _, mult in groups)
    return np.array(rows, dtype=np.int64).reshape(-1, width)


def _draw_pattern_sets(
    groups: Sequence[Tuple[np.ndarray, int]], count: int, gen: np.random.Generator, distinct: bool
) -> np.ndarray:
    """``count`` uniform vertex sets with the given type pattern (distinct sets when asked)."""
    width = sum(mult for _, mult in groups)
    found = np.empty((0, width), dtype=np.int64)
    while found.shape[0] < count:
        need = count - found.shape[0]
        columns = []
        ok = np.ones(need, dtype=bool)
        for members, mult in groups:
            picks = gen.integers(0, members.size, size=(need, mult))
            if mult > 1:
                ordered = np.sort(picks, axis=1)
                ok &= np.all(np.diff(ordered, axis=1) > 0, axis=1)
            columns.append(members[picks])
        rows = np.sort(np.hstack(columns), axis=1)[ok]
        found = np.vstack([found, rows])
        if distinct and found.size:
            _, first = np.unique(found, axis=0, return_index=True)
            found = found[np.sort(first)]
    return found[:count]


def sample_hypergraph_iid(
    k: HyperStepKernel, n: int, rng: RngLike, variant: Variant = "bernoulli"
) -> Tuple[Hypergraph, np.ndarray]:
    """Random hypergraph on n vertices with iid types drawn from the hyperkernel's masses.

    Works per type pattern without listing all r-sets: the number of present
    hyperedges is drawn first (binomial or Poisson) and the sets are then
    placed uniformly. Returns the hypergraph and the vertex types.
    """

    if n < 1:
        raise ValueError("n must be >= 1")
    if variant not in ("bernoulli", "poisson_multi"):
        raise ValueError(f"unknown hypergraph variant {variant!r}")
    gen = as_generator(rng)
    types = gen.choice(k.m, size=n, p=k.masses)
    members = [np.flatnonzero(types == t) for t in range(k.m)]
    edges: List[np.ndarray] = []
    for r, array in k.arrays.items():
        for pattern in itertools.combinations_with_replacement(range(k.m), r):
            value = float(array[pattern])
            if value <= 0:
                continue
            groups = [(members[t], mult) for t, mult in sorted(Counter(pattern).items())]
            total = math.prod(math.comb(g.size, mult) for g, mult in groups)
            if total == 0:
                continue
            intensity = float(_inclusion_intensity(r, np.array(value), n))
            if total <= _ENUMERATE_PATTERN_MAX:
                sets = _pattern_sets(groups)
                if variant == "bernoulli":
                    edges.append(sets[gen.random(total) < min(intensity, 1.0)])
                else:
                    edges.append(np.repeat(sets, gen.poisson(intensity, size=total), axis=0))
                continue
            if variant == "bernoulli":
                count = int(gen.binomial(total, min(intensity, 1.0)))
            else:
                count = int(gen.poisson(total * intensity))
            edges.append(_draw_pattern_sets(groups, count, gen, distinct=variant == "bernoulli"))
    hyperedges = tuple(tuple(row) for block in edges for row in block.tolist())
    logger.debug("iid hypergraph sampled", n=n, hyperedges=len(hyperedges), variant=variant)
    return Hypergraph(n=n, hyperedges=hyperedges), types


def clique_projection(h: Hypergraph) -> SparseGraph:
    pairs = {pair for edge in h.hyperedges for pair in itertools.combinations(edge, 2)}
    edges = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
    return SparseGraph(n=h.n, edges=edges)


def one_edge_projection(h: Hypergraph, rng: RngLike) -> SparseGraph:
    """Replace every hyperedge by one of its pairs chosen uniformly at random."""
    gen = as_generator(rng)
    edges = np.empty((h.size, 2), dtype=np.int64)
    for idx, edge in enumerate(h.hyperedges):
        r = len(edge)
        a = int(gen.integers(r))
        b = (a + int(gen.integers(1, r))) % r
        edges[idx] = (edge[a], edge[b])
    return SparseGraph(n=h.n, edges=edges, multigraph=True)


def marginal_matrix(H: SparseHypermatrix) -> WeightMatrix:
    """A = sum_r r(r-1) A^(r), each stored tuple spreading r! h / n^(r-2) to its ordered pairs."""
    rows: List[np.ndarray] = []
    cols: List[np.ndarray] = []
    data: List[np.ndarray] = []
    for r, (tuples, values) in H.by_arity().items():
        share = math.factorial(r) * values / float(H.n) ** (r - 2)
        for p, q in itertools.permutations(range(r), 2):
            rows.append(tuples[:, p])
            cols.append(tuples[:, q])
            data.append(share)
    if not rows:
        return WeightMatrix.from_sparse(sparse.csr_matrix((H.n, H.n)), H.n)
    coo = sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(H.n, H.n)
    )
    return WeightMatrix.from_sparse(coo.tocsr(), H.n)


def eliminate_large_hyper_entries(H: SparseHypermatrix, M: float) -> Tuple[SparseHypermatrix, int]:
    """Drop every stored tuple containing a pair whose marginal entry exceeds M."""
    if M <= 0:
        raise KernelError("elimination threshold must be > 0")
    heavy = marginal_matrix(H).csr
    kept: Dict[Tuple[int, ...], float] = {}
    removed = 0
    for tup, value in H.entries.items():
        if any(heavy[i, j] > M for i, j in itertools.combinations(tup, 2)):
            removed += 1
        else:
            kept[tup] = value
    return SparseHypermatrix(H.n, kept), removed


def edge_kernel(k: HyperStepKernel) -> StepKernel:
    """k_e(x, y) = sum_r r(r-1) times the integral of k_r(x, y, .) over the other coordinates."""
    values = np.zeros((k.m, k.m))
    for r, array in k.arrays.items():
        values += r * (r - 1) * _contract(array, k.masses, r - 2)
    values = 0.5 * (values + values.T)
    return StepKernel(masses=k.masses, values=values, signed=k.signed)


def hyper_marginal(k: HyperStepKernel) -> Marginal:
    """Expected number of hyperedges containing a vertex: sum_r r lambda_r."""
    values = np.zeros(k.m)
    for r in k.arrays:
        values += r * k.arity_marginal(r)
    return Marginal(values=values)


@dataclass(frozen=True)
class _OffspringTable:
    arity: int
    rate: np.ndarray
    tuple_law: np.ndarray
    type_counts: np.ndarray


def _offspring_tables(k: HyperStepKernel) -> List[_OffspringTable]:
    tables = []
    for r, array in k.arrays.items():
        others = list(itertools.product(range(k.m), repeat=r - 1))
        weight = np.array([math.prod(k.masses[t] for t in tup) for tup in others])
        raw = array.reshape(k.m, -1) * weight[None, :]
        lam = raw.sum(axis=1)
        law = np.divide(raw, lam[:, None], out=np.zeros_like(raw), where=lam[:, None] > 0)
        counts = np.zeros((len(others), k.m), dtype=np.int64)
        for idx, tup in enumerate(others):
            for t in tup:
                counts[idx, t] += 1
        tables.append(_OffspringTable(arity=r, rate=r * lam, tuple_law=law, type_counts=counts))
    return tables


def simulate_hyper_gw(
    k: HyperStepKernel,
    pop_cap: int | None = None,
    gen_cap: int | None = None,
    rng: RngLike = None,
    root_type: int | None = None,
) -> GWOutcome:
    """Compound Poisson branching process driven by a hyperkernel.

    A type-i particle joins Poisson(r lambda_r(i)) new r-hyperedges for each
    arity r; the other r-1 vertex types follow k_r(i, .) / lambda_r(i), and each
    hyperedge contributes those r-1 children.
    """

    pop_cap = settings.GW_POP_CAP if pop_cap is None else pop_cap
    gen_cap = settings.GW_GEN_CAP if gen_cap is None else gen_cap
    if pop_cap < 1 or gen_cap < 1:
        raise ValueError("caps must be >= 1")
    gen = as_generator(rng)
    tables = _offspring_tables(k)
    generation = np.zeros(k.m, dtype=np.int64)
    generation[int(gen.choice(k.m, p=k.masses)) if root_type is None else int(root_type)] = 1
    total, depth = 1, 0
    while generation.any():
        if total > pop_cap or depth >= gen_cap:
            return GWOutcome(extinct=False, total=total, generations=depth)
        children = np.zeros(k.m, dtype=np.int64)
        for table in tables:
            for i in np.flatnonzero(generation):
                hyperedges = gen.poisson(generation[i] * table.rate[i])
                if hyperedges:
                    children += gen.multinomial(hyperedges, table.tuple_law[i]) @ table.type_counts
        generation = children
        total += int(children.sum())
        depth += 1
    return GWOutcome(extinct=True, total=total, generations=depth)


def hyper_survival_mc(k: HyperStepKernel, reps: int, pop_cap: int | None, rng: RngStream | int) -> Tuple[float, float]:
    """Survival frequency of the hyperkernel branching process and its standard error."""
    root = rng if isinstance(rng, RngStream) else RngStream(int(rng))
    survived = sum(simulate_hyper_gw(k, pop_cap, None, root.derive(r)).cap_reached for r in range(reps))
    p = survived / reps
    return p, math.sqrt(p * (1.0 - p) / reps)


def hyper_survival_fixed_point(k: HyperStepKernel, tol: float | None = None, max_iter: int | None = None) -> FixedPointResult:
    """f = 1 - exp(-sum_r r [lambda_r - int k_r(., y) prod(1 - f(y_j))]) iterated down from f = 1."""
    tol = settings.FIXED_POINT_TOL if tol is None else tol
    max_iter = settings.FIXED_POINT_MAX_ITER if max_iter is None else max_iter
    lambdas = {r: k.arity_marginal(r) for r in k.arrays}
    f = np.ones(k.m)
    residual = math.inf
    for iteration in range(1, max_iter + 1):
        exponent = np.zeros(k.m)
        for r, array in k.arrays.items():
            exponent += r * (lambdas[r] - _contract(array, k.masses * (1.0 - f), r - 1))
        updated = np.minimum(-np.expm1(-exponent), f)
        residual = float(np.max(np.abs(updated - f)))
        f = updated
        if residual < tol:
            return FixedPointResult(rho_by_type=f, rho=float(k.masses @ f), iterations=iteration, residual=residual)
    raise ConvergenceError(
        "hyperkernel survival fixed point did not converge",
        last_iterate=f,
        iterations=max_iter,
        residual=residual,
    )


@dataclass(frozen=True)
class HyperCutNormResult:
    value: float
    sets: Tuple[Tuple[int, ...], ...]
    exact: bool


def _check_hyper_budget(m: int, r: int) -> None:
    if r > settings.HYPER_CUTNORM_MAX_ARITY:
        raise BudgetExceededError(
            f"exact hyperkernel cut norm supports r <= {settings.HYPER_CUTNORM_MAX_ARITY}",
            size=r,
            limit=settings.HYPER_CUTNORM_MAX_ARITY,
        )
    if m > settings.HYPER_CUTNORM_MAX_TYPES:
        raise BudgetExceededError(
            f"exact hyperkernel cut norm supports m <= {settings.HYPER_CUTNORM_MAX_TYPES}",
            size=m,
            limit=settings.HYPER_CUTNORM_MAX_TYPES,
        )


def hyper_cutnorm_sets_exact(values: np.ndarray, masses: np.ndarray) -> HyperCutNormResult:
    """sup over S_1..S_r of |integral of W_r over S_1 x .. x S_r|, for r <= 3.

    S_1 and S_2 are enumerated; the last set is closed per sign.
    """

    values = np.asarray(values, dtype=float)
    masses = np.asarray(masses, dtype=float)
    r = values.ndim
    m = masses.size
    _check_hyper_budget(m, r)
    if r == 2:
        flat = cutnorm_sets_exact(StepKernel.signed_kernel(masses, values))
        return HyperCutNormResult(value=flat.value, sets=flat.witness, exact=True)
    if r != 3:
        raise ValueError("hyperkernel cut norm needs arity 2 or 3")
    weighted = values * masses[:, None, None] * masses[None, :, None] * masses[None, None, :]
    masks = np.arange(1 << m, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(m)[None, :]) & 1).astype(float)
    best = (0.0, 0, 0, 1)
    for s1 in range(1, 1 << m):
        slab = np.tensordot(bits[s1], weighted, axes=(0, 0))
        cols = bits @ slab
        for sign in (1.0, -1.0):
            scores = np.clip(sign * cols, 0.0, None).sum(axis=1)
            s2 = int(np.argmax(scores))
            if scores[s2] > best[0]:
                best = (float(scores[s2]), s1, s2, int(sign))
    value, s1, s2, sign = best
    if value == 0.0:
        return HyperCutNormResult(value=0.0, sets=((), (), ()), exact=True)
    sets = [tuple(i for i in range(m) if (mask >> i) & 1) for mask in (s1, s2)]
    closing = np.tensordot(bits[s2], np.tensordot(bits[s1], weighted, axes=(0, 0)), axes=(0, 0))
    third = tuple(int(j) for j in np.flatnonzero(sign * closing > 0))
    return HyperCutNormResult(value=value, sets=(sets[0], sets[1], third), exact=True)


def hyper_cutnorm(k: HyperStepKernel) -> float:
    """Weighted sum over arities of r times the arity-r set cut norm."""
    return float(sum(r * hyper_cutnorm_sets_exact(array, k.masses).value for r, array in k.arrays.items()))


def r_kernel_marginal(values: np.ndarray, masses: np.ndarray) -> StepKernel:
    """Two-variable marginal of an r-kernel: integrate out every coordinate after the second."""
    values = np.asarray(values, dtype=float)
    collapsed = _contract(values, np.asarray(masses, dtype=float), values.ndim - 2)
    return StepKernel.signed_kernel(masses, 0.5 * (collapsed + collapsed.T))


def scale_hyperkernel(k: HyperStepKernel, c: float) -> HyperStepKernel:
    if c < 0:
        raise KernelError("scale factor must be >= 0")
    return HyperStepKernel(masses=k.masses, arrays={r: a * c for r, a in k.arrays.items()}, signed=k.signed)


__all__ = [
    "HyperCutNormResult",
    "HyperStepKernel",
    "Hypergraph",
    "SparseHypermatrix",
    "clique_projection",
    "edge_kernel",
    "eliminate_large_hyper_entries",
    "hyper_cutnorm",
    "hyper_cutnorm_sets_exact",
    "hyper_marginal",
    "hyper_survival_fixed_point",
    "hyper_survival_mc",
    "marginal_matrix",
    "one_edge_projection",
    "r_kernel_marginal",
    "sample_hypergraph",
    "sample_hypergraph_iid",
    "scale_hyperkernel",
    "simulate_hyper_gw",
]
