from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Literal, Tuple

import numpy as np
from loguru import logger
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from src.config import get_settings
from src.core.errors import (
    BudgetExceededError,
    ConvergenceError,
    DimensionMismatchError,
    KernelError,
)

settings = get_settings()

MASS_TOL = 1e-12

Layout = Literal["dense", "block", "sparse"]


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class StepKernel:
    """Finite-type symmetric kernel: type masses plus an m x m value table.

    ``signed`` relaxes the nonnegativity invariant for differences of kernels,
    which the cut norms operate on.
    """

    masses: np.ndarray
    values: np.ndarray
    signed: bool = False

    def __post_init__(self) -> None:
        masses = np.array(self.masses, dtype=float).reshape(-1)
        values = np.array(self.values, dtype=float)
        m = masses.size
        if m == 0:
            raise KernelError("kernel needs at least one type")
        if values.shape != (m, m):
            raise DimensionMismatchError(
                f"values must be {m}x{m}, got {values.shape}", expected=m, got=values.shape[0] if values.ndim else 0
            )
        if np.any(masses <= 0) or not np.all(np.isfinite(masses)):
            raise KernelError("type masses must be finite and strictly positive")
        total = math.fsum(masses.tolist())
        if abs(total - 1.0) > MASS_TOL:
            raise KernelError(f"type masses must sum to 1 (got {total!r})")
        if not np.all(np.isfinite(values)):
            raise KernelError("kernel values must be finite")
        if not np.array_equal(values, values.T):
            raise KernelError("kernel values must be symmetric")
        if not self.signed and np.any(values < 0):
            raise KernelError("kernel values must be nonnegative (use StepKernel.signed_kernel for differences)")
        object.__setattr__(self, "masses", _frozen(masses))
        object.__setattr__(self, "values", _frozen(values))

    @classmethod
    def constant(cls, c: float, m: int = 1, masses: np.ndarray | None = None) -> "StepKernel":
        if masses is None:
            masses = np.full(m, 1.0 / m)
        size = len(masses)
        return cls(masses=masses, values=np.full((size, size), float(c)))

    @classmethod
    def uniform(cls, values: np.ndarray, signed: bool = False) -> "StepKernel":
        values = np.asarray(values, dtype=float)
        m = values.shape[0]
        return cls(masses=np.full(m, 1.0 / m), values=values, signed=signed)

    @classmethod
    def signed_kernel(cls, masses: np.ndarray, values: np.ndarray) -> "StepKernel":
        return cls(masses=masses, values=values, signed=True)

    @property
    def m(self) -> int:
        return int(self.masses.size)

    @property
    def max_value(self) -> float:
        return float(np.max(self.values))

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)

    def as_dict(self) -> Dict[str, object]:
        return {"masses": self.masses.tolist(), "values": self.values.tolist(), "signed": self.signed}


@dataclass(frozen=True)
class Marginal:
    values: np.ndarray

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class IrreducibleBlock:
    """One block of an irreducible decomposition.

    ``kernel`` lives on the block's types with masses renormalized to 1 and values
    multiplied by the block mass, so its integral operator matches the restriction
    of T to the block.
    """

    types: Tuple[int, ...]
    mass: float
    kernel: StepKernel


@dataclass(frozen=True)
class IrreducibleDecomposition:
    blocks: List[IrreducibleBlock]
    cross_zero: np.ndarray = field(repr=False)

    @property
    def is_irreducible(self) -> bool:
        return len(self.blocks) == 1

    def block_of(self, type_index: int) -> int:
        for idx, block in enumerate(self.blocks):
            if type_index in block.types:
                return idx
        raise KeyError(type_index)


class WeightMatrix:
    """Symmetric nonnegative n x n matrix A_n of scaled edge intensities.

    Three storage layouts share one interface:

    * ``dense``  explicit array (diagonal kept as given),
    * ``block``  per-vertex type labels plus a type table; the diagonal is zero,
    * ``sparse`` scipy CSR with only the stored entries nonzero.
    """

    def __init__(
        self,
        n: int,
        layout: Layout,
        *,
        entries: np.ndarray | None = None,
        types: np.ndarray | None = None,
        table: np.ndarray | None = None,
        matrix: sparse.csr_matrix | None = None,
    ):
        if n < 0:
            raise KernelError("vertex count must be >= 0")
        self.n = int(n)
        self.layout: Layout = layout
        self._entries = entries
        self._types = types
        self._table = table
        self._matrix = matrix

    @classmethod
    def dense(cls, entries: np.ndarray) -> "WeightMatrix":
        entries = np.array(entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise KernelError(f"weight matrix must be square, got shape {entries.shape}")
        if not np.all(np.isfinite(entries)) or np.any(entries < 0):
            raise KernelError("weight matrix entries must be finite and nonnegative")
        if not np.array_equal(entries, entries.T):
            raise KernelError("weight matrix must be symmetric")
        return cls(entries.shape[0], "dense", entries=_frozen(entries))

    @classmethod
    def block(cls, types: np.ndarray, table: np.ndarray) -> "WeightMatrix":
        types = np.array(types, dtype=np.int64).reshape(-1)
        table = np.array(table, dtype=float)
        if table.ndim != 2 or table.shape[0] != table.shape[1]:
            raise KernelError("type table must be square")
        if not np.array_equal(table, table.T) or np.any(table < 0) or not np.all(np.isfinite(table)):
            raise KernelError("type table must be symmetric, finite and nonnegative")
        if types.size and (types.min() < 0 or types.max() >= table.shape[0]):
            raise KernelError("type labels out of range for the type table")
        return cls(types.size, "block", types=_frozen(types), table=_frozen(table))

    @classmethod
    def constant(cls, n: int, c: float) -> "WeightMatrix":
        """The G(n, c/n) matrix: c off the diagonal, zero on it."""
        return cls.block(np.zeros(n, dtype=np.int64), np.array([[float(c)]]))

    @classmethod
    def from_sparse(cls, matrix: sparse.spmatrix, n: int | None = None) -> "WeightMatrix":
        csr = sparse.csr_matrix(matrix, dtype=float)
        csr.eliminate_zeros()
        csr.sort_indices()
        size = n if n is not None else csr.shape[0]
        if csr.shape != (size, size):
            raise KernelError(f"sparse weight matrix must be {size}x{size}, got {csr.shape}")
        if csr.nnz and (np.any(csr.data < 0) or not np.all(np.isfinite(csr.data))):
            raise KernelError("weight matrix entries must be finite and nonnegative")
        if (csr - csr.T).count_nonzero():
            raise KernelError("weight matrix must be symmetric")
        return cls(size, "sparse", matrix=csr)

    @property
    def types(self) -> np.ndarray:
        if self._types is None:
            raise AttributeError("types are only defined for the block layout")
        return self._types

    @property
    def table(self) -> np.ndarray:
        if self._table is None:
            raise AttributeError("type table is only defined for the block layout")
        return self._table

    @property
    def csr(self) -> sparse.csr_matrix:
        if self.layout == "sparse":
            return self._matrix
        return sparse.csr_matrix(self.to_dense())

    def to_dense(self) -> np.ndarray:
        if self.n > settings.DENSE_MAX_N:
            raise BudgetExceededError(
                f"refusing to densify a {self.n}x{self.n} weight matrix",
                size=self.n,
                limit=settings.DENSE_MAX_N,
            )
        if self.layout == "dense":
            return np.array(self._entries)
        if self.layout == "block":
            out = self._table[np.ix_(self._types, self._types)]
            np.fill_diagonal(out, 0.0)
            return out
        return self._matrix.toarray()

    def pair_values(self, i: np.ndarray, j: np.ndarray) -> np.ndarray:
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        if self.layout == "dense":
            return self._entries[i, j]
        if self.layout == "block":
            return np.where(i == j, 0.0, self._table[self._types[i], self._types[j]])
        return np.asarray(self._matrix[i, j]).reshape(-1)

    def max_entry(self) -> float:
        if self.n == 0:
            return 0.0
        if self.layout == "dense":
            return float(self._entries.max())
        if self.layout == "block":
            present = np.unique(self._types)
            if self.n == 1:
                return 0.0
            return float(self._table[np.ix_(present, present)].max())
        return float(self._matrix.data.max()) if self._matrix.nnz else 0.0

    def scaled(self, c: float) -> "WeightMatrix":
        if c < 0:
            raise KernelError("scale factor must be >= 0")
        if self.layout == "dense":
            return WeightMatrix.dense(self._entries * c)
        if self.layout == "block":
            return WeightMatrix.block(self._types, self._table * c)
        return WeightMatrix.from_sparse(self._matrix * c, self.n)

    def permuted(self, perm: np.ndarray) -> "WeightMatrix":
        """Relabel vertices: entry (i, j) of the result is entry (perm[i], perm[j])."""
        perm = np.asarray(perm, dtype=np.int64)
        if self.layout == "block":
            return WeightMatrix.block(self._types[perm], self._table)
        if self.layout == "sparse":
            return WeightMatrix.from_sparse(self._matrix[perm][:, perm], self.n)
        return WeightMatrix.dense(self._entries[np.ix_(perm, perm)])

    def as_kernel(self) -> StepKernel:
        """The piecewise constant kernel with n types of mass 1/n each."""
        if self.n == 0:
            raise KernelError("empty matrix has no kernel")
        return StepKernel(masses=np.full(self.n, 1.0 / self.n), values=self.to_dense())

    def __repr__(self) -> str:
        return f"WeightMatrix(n={self.n}, layout={self.layout!r})"


@dataclass(frozen=True)
class EliminationReport:
    matrix: WeightMatrix
    removed_count: int
    removed_sum: float


def marginal(k: StepKernel) -> Marginal:
    return Marginal(values=_frozen(k.values @ k.masses))


def apply_T(k: StepKernel, f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=float).reshape(-1)
    if f.size != k.m:
        raise DimensionMismatchError(f"vector has length {f.size}, kernel has {k.m} types", expected=k.m, got=f.size)
    return k.values @ (f * k.masses)


def operator_norm(k: StepKernel, tol: float | None = None, max_iter: int | None = None) -> float:
    """Norm of T_k on L^2(mu) by power iteration on D^1/2 K D^1/2.

    The start vector is f = 1 (sqrt(mu) after the similarity transform) and the
    estimate is the norm ratio |Sx| / |x|, which also handles kernels whose
    spectrum is symmetric about zero.
    """

    tol = settings.POWER_TOL if tol is None else tol
    max_iter = settings.POWER_MAX_ITER if max_iter is None else max_iter
    if tol <= 0:
        raise ValueError("tol must be > 0")
    root = np.sqrt(k.masses)
    weighted = root[:, None] * k.values * root[None, :]
    x = root / np.linalg.norm(root)
    estimate = 0.0
    for iteration in range(1, max_iter + 1):
        y = weighted @ x
        norm = float(np.linalg.norm(y))
        if norm == 0.0:
            return 0.0
        x = y / norm
        if iteration > 1 and abs(norm - estimate) < tol * max(norm, 1.0):
            logger.debug("power iteration converged", iterations=iteration, norm=norm, m=k.m)
            return norm
        estimate = norm
    raise ConvergenceError(
        "power iteration did not converge",
        last_iterate=estimate,
        iterations=max_iter,
        residual=float("nan"),
    )


def truncate(k: StepKernel, M: float) -> StepKernel:
    if M < 0:
        raise KernelError("truncation level must be >= 0")
    return StepKernel(masses=k.masses, values=np.minimum(k.values, M), signed=k.signed)


def scale(k: StepKernel, c: float) -> StepKernel:
    if c < 0:
        raise KernelError("scale factor must be >= 0")
    return StepKernel(masses=k.masses, values=k.values * c, signed=k.signed)


def difference(k1: StepKernel, k2: StepKernel) -> StepKernel:
    """Signed kernel k1 - k2 on a common partition."""
    if k1.m != k2.m:
        raise DimensionMismatchError("kernels live on different partitions", expected=k1.m, got=k2.m)
    if not np.allclose(k1.masses, k2.masses, rtol=0.0, atol=MASS_TOL):
        raise KernelError("kernels must share type masses to be subtracted")
    return StepKernel.signed_kernel(k1.masses, k1.values - k2.values)


def kernel_integral(k: StepKernel) -> float:
    return float(k.masses @ k.values @ k.masses)


def l1_norm(k: StepKernel) -> float:
    return float(k.masses @ np.abs(k.values) @ k.masses)


def discretize(fn: Callable[[np.ndarray, np.ndarray], np.ndarray], m: int) -> StepKernel:
    """Midpoint discretization of a symmetric kernel on [0, 1] with m equal cells."""
    if m < 1:
        raise KernelError("grid needs at least one cell")
    mid = (np.arange(m) + 0.5) / m
    values = np.asarray(fn(mid[:, None], mid[None, :]), dtype=float)
    values = np.broadcast_to(values, (m, m)).copy()
    values = 0.5 * (values + values.T)
    return StepKernel(masses=np.full(m, 1.0 / m), values=values)


def decompose_irreducible(k: StepKernel) -> IrreducibleDecomposition:
    support = sparse.csr_matrix(k.values != 0)
    count, labels = connected_components(support, directed=False)
    groups: List[Tuple[int, ...]] = [tuple(np.flatnonzero(labels == c).tolist()) for c in range(count)]
    groups.sort(key=lambda types: (-math.fsum(k.masses[list(types)].tolist()), types[0]))

    blocks: List[IrreducibleBlock] = []
    for types in groups:
        idx = np.array(types, dtype=np.int64)
        mass = math.fsum(k.masses[idx].tolist())
        sub_masses = k.masses[idx] / mass
        sub_masses = sub_masses / math.fsum(sub_masses.tolist())
        sub_values = k.values[np.ix_(idx, idx)] * mass
        blocks.append(IrreducibleBlock(types=types, mass=mass, kernel=StepKernel(sub_masses, sub_values, signed=k.signed)))

    cross_zero = np.ones((count, count), dtype=bool)
    for a, left in enumerate(blocks):
        for b, right in enumerate(blocks):
            if a != b:
                cross_zero[a, b] = not np.any(k.values[np.ix_(left.types, right.types)])
    return IrreducibleDecomposition(blocks=blocks, cross_zero=_frozen(cross_zero))


def is_irreducible(k: StepKernel) -> bool:
    return decompose_irreducible(k).is_irreducible


def eliminate_large_entries(A: WeightMatrix, M: float) -> EliminationReport:
    """Zero the diagonal and every entry above M; report what was removed."""
    if M <= 0:
        raise KernelError("elimination threshold must be > 0")

    if A.layout == "dense":
        entries = np.array(A._entries)
        mask = entries > M
        np.fill_diagonal(mask, True)
        removed_count = int(np.count_nonzero(mask & (entries != 0)))
        removed_sum = float(entries[mask].sum())
        entries[mask] = 0.0
        result = WeightMatrix.dense(entries)
    elif A.layout == "block":
        table = np.array(A.table)
        counts = np.bincount(A.types, minlength=table.shape[0]).astype(float)
        pairs = np.outer(counts, counts) - np.diag(counts)
        mask = table > M
        removed_count = int(pairs[mask & (table != 0)].sum())
        removed_sum = float((table * pairs)[mask].sum())
        table[mask] = 0.0
        result = WeightMatrix.block(A.types, table)
    else:
        coo = A.csr.tocoo()
        kill = (coo.data > M) | (coo.row == coo.col)
        removed_count = int(np.count_nonzero(kill))
        removed_sum = float(coo.data[kill].sum())
        keep = ~kill
        kept = sparse.csr_matrix((coo.data[keep], (coo.row[keep], coo.col[keep])), shape=coo.shape)
        result = WeightMatrix.from_sparse(kept, A.n)

    logger.debug(
        "large entries eliminated",
        threshold=M,
        layout=A.layout,
        removed_count=removed_count,
        removed_sum=removed_sum,
    )
    return EliminationReport(matrix=result, removed_count=removed_count, removed_sum=removed_sum)


__all__ = [
    "EliminationReport",
    "IrreducibleBlock",
    "IrreducibleDecomposition",
    "Marginal",
    "StepKernel",
    "WeightMatrix",
    "apply_T",
    "decompose_irreducible",
    "difference",
    "discretize",
    "eliminate_large_entries",
    "is_irreducible",
    "kernel_integral",
    "l1_norm",
    "marginal",
    "operator_norm",
    "scale",
    "truncate",
]
