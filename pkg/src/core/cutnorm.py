from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Literal, Tuple

import numpy as np
from loguru import logger

from src.config import get_settings
from src.core.errors import BudgetExceededError, DimensionMismatchError
from src.core.kernel import StepKernel, WeightMatrix
from src.core.rng import RngStream, as_generator

settings = get_settings()

_CHUNK = 1 << 15

NormKind = Literal["sets", "pm"]


@dataclass(frozen=True)
class CutNormResult:
    """Cut norm value with the witness that attains it.

    For the set version the witness is a pair of type-index tuples (S, T); for
    the +-1 version it is a pair of sign vectors (f, g).
    """

    value: float
    witness: Tuple[Tuple[int, ...], Tuple[int, ...]]
    exact: bool
    norm: NormKind = "sets"


@dataclass(frozen=True)
class CutDistanceResult:
    value: float
    permutation: Tuple[int, ...]
    exact: bool


def _weighted(k: StepKernel) -> np.ndarray:
    return k.masses[:, None] * k.values * k.masses[None, :]


def _check_budget(m: int) -> None:
    limit = settings.CUTNORM_EXACT_MAX_TYPES
    if m > limit:
        raise BudgetExceededError(
            f"exact cut norm enumerates 2^{m} subsets; limit is m <= {limit}, use cutnorm_heuristic",
            size=m,
            limit=limit,
        )


def _subset_bits(start: int, stop: int, m: int) -> np.ndarray:
    masks = np.arange(start, stop, dtype=np.int64)
    return ((masks[:, None] >> np.arange(m, dtype=np.int64)[None, :]) & 1).astype(float)


def _sets_search(B: np.ndarray) -> Tuple[float, int, int]:
    """Best (value, subset mask, sign) over all row subsets with T closed per sign."""
    m = B.shape[0]
    best_value, best_mask, best_sign = 0.0, 0, 1
    total = 1 << m
    for start in range(0, total, _CHUNK):
        stop = min(total, start + _CHUNK)
        cols = _subset_bits(start, stop, m) @ B
        pos = np.clip(cols, 0.0, None).sum(axis=1)
        neg = np.clip(-cols, 0.0, None).sum(axis=1)
        for sign, scores in ((1, pos), (-1, neg)):
            idx = int(np.argmax(scores))
            if scores[idx] > best_value:
                best_value, best_mask, best_sign = float(scores[idx]), start + idx, sign
    return best_value, best_mask, best_sign


def _mask_to_set(mask: int, m: int) -> Tuple[int, ...]:
    return tuple(i for i in range(m) if (mask >> i) & 1)


def cutnorm_sets_exact(k: StepKernel) -> CutNormResult:
    """Set-version cut norm by enumerating S and closing T in closed form per sign."""
    _check_budget(k.m)
    B = _weighted(k)
    value, mask, sign = _sets_search(B)
    S = _mask_to_set(mask, k.m)
    if not S:
        return CutNormResult(value=0.0, witness=((), ()), exact=True)
    cols = B[list(S)].sum(axis=0)
    T = tuple(int(j) for j in np.flatnonzero(sign * cols > 0))
    return CutNormResult(value=value, witness=(S, T), exact=True)


def cutnorm_pm_exact(k: StepKernel) -> CutNormResult:
    """+-1 version: max over f of sum_j |sum_i f_i B_ij|, with g matched to the column signs."""
    _check_budget(k.m)
    B = _weighted(k)
    m = k.m
    best_value, best_f = -1.0, np.ones(m)
    # f and -f give the same value, so f_0 = +1 is fixed.
    total = 1 << (m - 1)
    for start in range(0, total, _CHUNK):
        stop = min(total, start + _CHUNK)
        bits = _subset_bits(start, stop, m - 1)
        signs = np.hstack([np.ones((stop - start, 1)), 1.0 - 2.0 * bits])
        scores = np.abs(signs @ B).sum(axis=1)
        idx = int(np.argmax(scores))
        if scores[idx] > best_value:
            best_value, best_f = float(scores[idx]), signs[idx].copy()
    cols = best_f @ B
    g = np.where(cols >= 0, 1, -1)
    f_witness = tuple(int(x) for x in best_f)
    return CutNormResult(value=max(best_value, 0.0), witness=(f_witness, tuple(int(x) for x in g)), exact=True, norm="pm")


def _ascent(B: np.ndarray, start: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
    S = start
    value, T = 0.0, np.zeros(B.shape[1], dtype=bool)
    while True:
        cols = B[S].sum(axis=0)
        T_new = cols > 0
        if not T_new.any():
            return value, S, T
        rows = B[:, T_new].sum(axis=1)
        S_new = rows > 0
        new_value = float(B[np.ix_(S_new, T_new)].sum()) if S_new.any() else 0.0
        if new_value <= value:
            return value, S, T
        value, S, T = new_value, S_new, T_new


def cutnorm_heuristic(
    k: StepKernel,
    restarts: int | None = None,
    rng: RngStream | np.random.Generator | int | None = None,
) -> CutNormResult:
    """Lower bound on the set-version cut norm by alternating S/T coordinate ascent."""
    restarts = settings.CUTNORM_RESTARTS if restarts is None else restarts
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    B = _weighted(k)
    m = k.m
    best = (0.0, (), ())
    for child in as_generator(rng).spawn(restarts):
        start = child.random(m) < 0.5
        if not start.any():
            start[child.integers(m)] = True
        for sign in (1.0, -1.0):
            value, S, T = _ascent(sign * B, start)
            if value > best[0]:
                best = (value, tuple(np.flatnonzero(S).tolist()), tuple(np.flatnonzero(T).tolist()))
    return CutNormResult(value=best[0], witness=(best[1], best[2]), exact=False)


def cutnorm(
    k: StepKernel,
    norm: NormKind = "sets",
    exact: bool | None = None,
    restarts: int | None = None,
    rng: RngStream | np.random.Generator | int | None = None,
) -> CutNormResult:
    if exact is None:
        exact = k.m <= settings.CUTNORM_EXACT_MAX_TYPES
    if norm == "pm":
        if not exact:
            raise BudgetExceededError(
                "the +-1 cut norm has no heuristic; reduce the number of types",
                size=k.m,
                limit=settings.CUTNORM_EXACT_MAX_TYPES,
            )
        return cutnorm_pm_exact(k)
    if exact:
        return cutnorm_sets_exact(k)
    return cutnorm_heuristic(k, restarts=restarts, rng=rng)


def _difference_kernel(a: np.ndarray, b: np.ndarray) -> StepKernel:
    n = a.shape[0]
    return StepKernel.signed_kernel(np.full(n, 1.0 / n), a - b)


def cut_distance(
    a: WeightMatrix,
    b: WeightMatrix,
    budget: Literal["exhaustive", "anneal"] = "exhaustive",
    steps: int | None = None,
    rng: RngStream | np.random.Generator | int | None = None,
) -> CutDistanceResult:
    """Upper bound on the cut distance between two equal-size weight matrices.

    Minimizes the cut norm of the relabelled difference over vertex permutations,
    exhaustively for small n and by simulated annealing over transpositions
    otherwise.
    """

    if a.n != b.n:
        raise DimensionMismatchError("cut distance needs equal vertex counts", expected=a.n, got=b.n)
    n = a.n
    A = a.to_dense()
    Bm = b.to_dense()
    exact_norm = n <= settings.CUTNORM_EXACT_MAX_TYPES
    gen = as_generator(rng)

    def objective(perm: np.ndarray, exact: bool = exact_norm) -> float:
        diff = _difference_kernel(A[np.ix_(perm, perm)], Bm)
        if exact:
            return cutnorm_sets_exact(diff).value
        return cutnorm_heuristic(diff, rng=gen).value

    if budget == "exhaustive" and n > settings.EXHAUSTIVE_PERMUTATION_MAX_N:
        logger.warning(
            "exhaustive permutation budget exceeded, falling back to annealing",
            n=n,
            limit=settings.EXHAUSTIVE_PERMUTATION_MAX_N,
        )
        budget = "anneal"

    if budget == "exhaustive":
        best_value, best_perm = math.inf, tuple(range(n))
        for perm in itertools.permutations(range(n)):
            value = objective(np.array(perm, dtype=np.int64))
            if value < best_value:
                best_value, best_perm = value, perm
                if value == 0.0:
                    break
        return CutDistanceResult(value=best_value, permutation=best_perm, exact=exact_norm)

    steps = settings.ANNEAL_STEPS if steps is None else steps
    perm = np.arange(n, dtype=np.int64)
    if n < 2 or steps < 1:
        return CutDistanceResult(value=objective(perm), permutation=tuple(perm.tolist()), exact=False)
    # Steps are scored by the heuristic; only the final alignment gets the exact norm.
    current = objective(perm, exact=False)
    best_value, best_perm = current, perm.copy()
    t_start, t_end = settings.ANNEAL_T_START, settings.ANNEAL_T_END
    cooling = (t_end / t_start) ** (1.0 / max(steps - 1, 1))
    temp = t_start
    accepted = 0
    for _ in range(steps):
        i, j = gen.choice(n, size=2, replace=False)
        perm[i], perm[j] = perm[j], perm[i]
        candidate = objective(perm, exact=False)
        delta = candidate - current
        if delta <= 0 or gen.random() < math.exp(-delta / temp):
            current = candidate
            accepted += 1
            if current < best_value:
                best_value, best_perm = current, perm.copy()
        else:
            perm[i], perm[j] = perm[j], perm[i]
        temp *= cooling
    if exact_norm:
        best_value = objective(best_perm)
    logger.debug("annealing finished", n=n, steps=steps, accepted=accepted, best=best_value)
    return CutDistanceResult(value=best_value, permutation=tuple(best_perm.tolist()), exact=False)


__all__ = [
    "CutDistanceResult",
    "CutNormResult",
    "cut_distance",
    "cutnorm",
    "cutnorm_heuristic",
    "cutnorm_pm_exact",
    "cutnorm_sets_exact",
]
