from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Dict, List, Literal, Sequence

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator
from scipy import sparse

from src.core.errors import DataFileError
from src.core.graphgen import SparseGraph
from src.core.hypergraph import Hypergraph, HyperStepKernel, SparseHypermatrix
from src.core.kernel import StepKernel, WeightMatrix


class KernelDocument(BaseModel):
    """JSON form of a step kernel: ``{"masses": [...], "values": [[...], ...]}``."""

    model_config = ConfigDict(extra="forbid")

    masses: List[float]
    values: List[List[float]]
    signed: bool = False

    @model_validator(mode="after")
    def _check_shape(self) -> "KernelDocument":
        m = len(self.masses)
        if len(self.values) != m or any(len(row) != m for row in self.values):
            raise ValueError(f"values must be a {m}x{m} array to match masses")
        return self

    def to_kernel(self) -> StepKernel:
        return StepKernel(masses=np.array(self.masses), values=np.array(self.values), signed=self.signed)

    @classmethod
    def from_kernel(cls, k: StepKernel) -> "KernelDocument":
        return cls(masses=k.masses.tolist(), values=k.values.tolist(), signed=k.signed)


class MatrixDocument(BaseModel):
    """JSON form of a weight matrix.

    ``entries`` is either a dense n x n array or a list of ``[i, j, a]`` triples
    with i <= j (symmetric completion implied).
    """

    model_config = ConfigDict(extra="forbid")

    n: int
    entries: List[List[float]]
    layout: Literal["dense", "coo"] | None = None

    @model_validator(mode="after")
    def _resolve_layout(self) -> "MatrixDocument":
        if self.n < 1:
            raise ValueError("n must be >= 1")
        dense_shape = len(self.entries) == self.n and all(len(row) == self.n for row in self.entries)
        if self.layout is None:
            self.layout = "dense" if dense_shape else "coo"
        if self.layout == "dense" and not dense_shape:
            raise ValueError(f"dense entries must be {self.n}x{self.n}")
        if self.layout == "coo":
            for row in self.entries:
                if len(row) != 3:
                    raise ValueError("coordinate entries must be [i, j, a] triples")
                i, j = int(row[0]), int(row[1])
                if i != row[0] or j != row[1] or not 0 <= i <= j < self.n:
                    raise ValueError(f"coordinate entry {row} needs integer 0 <= i <= j < n")
        return self

    def to_matrix(self) -> WeightMatrix:
        if self.layout == "dense":
            return WeightMatrix.dense(np.array(self.entries))
        triples = np.array(self.entries, dtype=float).reshape(-1, 3)
        i = triples[:, 0].astype(np.int64)
        j = triples[:, 1].astype(np.int64)
        a = triples[:, 2]
        off = i != j
        rows = np.concatenate([i, j[off]])
        cols = np.concatenate([j, i[off]])
        data = np.concatenate([a, a[off]])
        return WeightMatrix.from_sparse(sparse.coo_matrix((data, (rows, cols)), shape=(self.n, self.n)).tocsr(), self.n)

    @classmethod
    def from_matrix(cls, A: WeightMatrix) -> "MatrixDocument":
        if A.layout == "sparse":
            upper = sparse.triu(A.csr).tocoo()
            entries = [[int(i), int(j), float(a)] for i, j, a in sorted(zip(upper.row, upper.col, upper.data))]
            return cls(n=A.n, entries=entries, layout="coo")
        return cls(n=A.n, entries=A.to_dense().tolist(), layout="dense")


class HyperKernelDocument(BaseModel):
    """JSON form of a hyperkernel: shared masses plus nested arrays keyed by arity."""

    model_config = ConfigDict(extra="forbid")

    masses: List[float]
    arities: Dict[int, list]

    def to_hyperkernel(self) -> HyperStepKernel:
        return HyperStepKernel(
            masses=np.array(self.masses),
            arrays={int(r): np.array(values, dtype=float) for r, values in self.arities.items()},
        )


def _read_text(path: str | Path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise DataFileError(f"cannot read ({exc.strerror or exc})", path=str(path)) from exc


def _write_text(path: str | Path, text: str) -> Path:
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text)
    except OSError as exc:
        raise DataFileError(f"cannot write ({exc.strerror or exc})", path=str(path)) from exc
    return target


def _parse(model: type[BaseModel], path: str | Path) -> BaseModel:
    try:
        return model.model_validate_json(_read_text(path))
    except ValidationError as exc:
        raise DataFileError(f"invalid {model.__name__}: {exc.errors()[0]['msg']}", path=str(path)) from exc


def load_kernel(path: str | Path) -> StepKernel:
    try:
        return _parse(KernelDocument, path).to_kernel()
    except ValueError as exc:
        raise DataFileError(str(exc), path=str(path)) from exc


def dump_kernel(k: StepKernel, path: str | Path) -> Path:
    return _write_text(path, KernelDocument.from_kernel(k).model_dump_json(indent=2))


def load_matrix(path: str | Path) -> WeightMatrix:
    try:
        return _parse(MatrixDocument, path).to_matrix()
    except ValueError as exc:
        raise DataFileError(str(exc), path=str(path)) from exc


def dump_matrix(A: WeightMatrix, path: str | Path) -> Path:
    return _write_text(path, MatrixDocument.from_matrix(A).model_dump_json(indent=2))


def load_hyperkernel(path: str | Path) -> HyperStepKernel:
    try:
        return _parse(HyperKernelDocument, path).to_hyperkernel()
    except ValueError as exc:
        raise DataFileError(str(exc), path=str(path)) from exc


def format_graph(g: SparseGraph) -> str:
    header = f"{g.n} {g.m}" + (" multi" if g.multigraph else "")
    lines = [header] + [f"{u} {v}" for u, v in g.edges.tolist()]
    return "\n".join(lines) + "\n"


def write_graph(g: SparseGraph, path: str | Path) -> Path:
    target = _write_text(path, format_graph(g))
    logger.debug("graph written", path=str(target), n=g.n, m=g.m)
    return target


def parse_graph(text: str, source: str = "<text>") -> SparseGraph:
    lines = [line.split() for line in text.splitlines() if line.strip() and not line.startswith("#")]
    if not lines:
        raise DataFileError("empty graph file", path=source)
    header = lines[0]
    try:
        n, m = int(header[0]), int(header[1])
        multi = len(header) > 2 and header[2] == "multi"
        edges = np.array([[int(u), int(v)] for u, v in lines[1:]], dtype=np.int64).reshape(-1, 2)
    except (ValueError, IndexError) as exc:
        raise DataFileError(f"malformed graph file ({exc})", path=source) from exc
    if edges.shape[0] != m:
        raise DataFileError(f"header announces {m} edges, found {edges.shape[0]}", path=source)
    try:
        return SparseGraph(n=n, edges=edges, multigraph=multi)
    except ValueError as exc:
        raise DataFileError(str(exc), path=source) from exc


def read_graph(path: str | Path) -> SparseGraph:
    return parse_graph(_read_text(path), source=str(path))


def format_hypermatrix(H: SparseHypermatrix) -> str:
    lines = [f"{H.n} {H.R}"]
    for tup, value in sorted(H.entries.items(), key=lambda item: (len(item[0]), item[0])):
        lines.append(" ".join([str(len(tup)), *map(str, tup), repr(value)]))
    return "\n".join(lines) + "\n"


def parse_hypermatrix(text: str, source: str = "<text>") -> SparseHypermatrix:
    lines = [line.split() for line in text.splitlines() if line.strip() and not line.startswith("#")]
    if not lines:
        raise DataFileError("empty hypermatrix file", path=source)
    try:
        n, R = int(lines[0][0]), int(lines[0][1])
        entries: Dict[tuple, float] = {}
        for fields in lines[1:]:
            r = int(fields[0])
            if len(fields) != r + 2:
                raise ValueError(f"line {' '.join(fields)!r} should carry {r} indices and a value")
            if r > R:
                raise ValueError(f"arity {r} exceeds declared R={R}")
            indices = tuple(int(x) for x in fields[1 : r + 1])
            if list(indices) != sorted(set(indices)):
                raise ValueError(f"indices {indices} must be sorted and distinct")
            entries[indices] = float(fields[-1])
        return SparseHypermatrix(n, entries)
    except (ValueError, IndexError) as exc:
        raise DataFileError(f"malformed hypermatrix file ({exc})", path=source) from exc


def read_hypermatrix(path: str | Path) -> SparseHypermatrix:
    return parse_hypermatrix(_read_text(path), source=str(path))


def write_hypermatrix(H: SparseHypermatrix, path: str | Path) -> Path:
    return _write_text(path, format_hypermatrix(H))


def write_hypergraph(h: Hypergraph, path: str | Path) -> Path:
    lines = [f"{h.n} {h.size}"] + [" ".join(map(str, edge)) for edge in h.hyperedges]
    return _write_text(path, "\n".join(lines) + "\n")


def format_key_values(items: Sequence[tuple[str, object]]) -> str:
    return "\n".join(f"{key}={value}" for key, value in items) + "\n"


def write_csv(path: str | Path, header: Sequence[str], rows: Sequence[Sequence[object]]) -> Path:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return _write_text(path, buffer.getvalue())


__all__ = [
    "HyperKernelDocument",
    "KernelDocument",
    "MatrixDocument",
    "dump_kernel",
    "dump_matrix",
    "format_graph",
    "format_hypermatrix",
    "format_key_values",
    "load_hyperkernel",
    "load_kernel",
    "load_matrix",
    "parse_graph",
    "parse_hypermatrix",
    "read_graph",
    "read_hypermatrix",
    "write_csv",
    "write_graph",
    "write_hypergraph",
    "write_hypermatrix",
]
