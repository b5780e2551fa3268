from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
from loguru import logger
from scipy.optimize import brentq

from src.config import get_settings
from src.core.cutnorm import cutnorm_sets_exact
from src.core.errors import BudgetExceededError, ConvergenceError, DimensionMismatchError, NegativeKernelError
from src.core.kernel import StepKernel, apply_T, marginal, operator_norm
from src.core.rng import RngStream, as_generator
from src.core.trees import LabelledTree, enumerate_trees

settings = get_settings()

RngLike = RngStream | np.random.Generator | int | None

_MONOTONE_SLACK = 1e-14


@dataclass(frozen=True)
class FixedPointResult:
    rho_by_type: np.ndarray
    rho: float
    iterations: int
    residual: float
    converged: bool = True


@dataclass(frozen=True)
class GWOutcome:
    extinct: bool
    total: int
    generations: int

    @property
    def cap_reached(self) -> bool:
        return not self.extinct


@dataclass(frozen=True)
class GWBatch:
    extinct: np.ndarray
    total: np.ndarray

    @property
    def survival_frequency(self) -> float:
        return float(np.mean(~self.extinct))

    @property
    def standard_error(self) -> float:
        p = self.survival_frequency
        return math.sqrt(p * (1.0 - p) / self.extinct.size)


@dataclass(frozen=True)
class PopulationLaw:
    """rho_k for k = 1..K_max (index k-1), the remaining mass, and how it was obtained."""

    probabilities: np.ndarray
    tail: float
    method: str
    std_errors: np.ndarray | None = None
    by_type: np.ndarray | None = None

    @property
    def k_max(self) -> int:
        return int(self.probabilities.size)

    def rho_k(self, k: int) -> float:
        return float(self.probabilities[k - 1])


@dataclass(frozen=True)
class ContinuityRow:
    eps: float
    cutnorm: float
    delta_rho: float


def survival_fixed_point(k: StepKernel, tol: float | None = None, max_iter: int | None = None) -> FixedPointResult:
    """Maximal solution of f = 1 - exp(-T_k f), iterated down from f = 1."""
    tol = settings.FIXED_POINT_TOL if tol is None else tol
    max_iter = settings.FIXED_POINT_MAX_ITER if max_iter is None else max_iter
    if tol <= 0:
        raise ValueError("tol must be > 0")
    f = np.ones(k.m)
    residual = math.inf
    for iteration in range(1, max_iter + 1):
        updated = -np.expm1(-apply_T(k, f))
        if np.any(updated > f + _MONOTONE_SLACK):
            raise AssertionError(f"fixed-point iterates increased at iteration {iteration}")
        updated = np.minimum(updated, f)
        residual = float(np.max(np.abs(updated - f)))
        f = updated
        if residual < tol:
            rho = float(k.masses @ f)
            logger.debug("survival fixed point converged", iterations=iteration, rho=rho, residual=residual)
            return FixedPointResult(rho_by_type=f, rho=rho, iterations=iteration, residual=residual)
    raise ConvergenceError(
        "survival fixed point did not converge (near-critical kernel?)",
        last_iterate=f,
        iterations=max_iter,
        residual=residual,
    )


def survival_lower_bound(k: StepKernel, norm: float | None = None) -> float:
    """max(0, (|T_k| - 1) / sup k); ``norm`` reuses an already computed |T_k|."""
    top = k.max_value
    if top <= 0:
        return 0.0
    norm = operator_norm(k) if norm is None else norm
    return max(0.0, (norm - 1.0) / top)


def survival_probability_scalar(c: float) -> float:
    """Positive root of rho = 1 - exp(-c rho), zero for c <= 1."""
    if c <= 1.0:
        return 0.0
    lo = min((c - 1.0) / (c * c), 0.5)
    return float(brentq(lambda r: r - 1.0 + math.exp(-c * r), lo, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps))


def borel_probability(c: float, k: int) -> float:
    """Total progeny law of a Poisson(c) Galton-Watson tree: e^{-ck}(ck)^{k-1}/k!."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if c == 0:
        return 1.0 if k == 1 else 0.0
    return math.exp(-c * k + (k - 1) * math.log(c * k) - math.lgamma(k + 1))


def _offspring_rates(k: StepKernel) -> np.ndarray:
    return k.values * k.masses[None, :]


def simulate_gw(
    k: StepKernel,
    root_type: int | None,
    pop_cap: int | None,
    gen_cap: int | None,
    rng: RngLike,
) -> GWOutcome:
    """One multi-type Poisson Galton-Watson tree, generation by generation.

    A type-i particle has Poisson(k_ij mu_j) children of type j. Survival is
    declared once the total population exceeds ``pop_cap`` or the depth exceeds
    ``gen_cap``.
    """

    pop_cap = settings.GW_POP_CAP if pop_cap is None else pop_cap
    gen_cap = settings.GW_GEN_CAP if gen_cap is None else gen_cap
    if pop_cap < 1 or gen_cap < 1:
        raise ValueError("caps must be >= 1")
    gen = as_generator(rng)
    rates = _offspring_rates(k)
    root = int(gen.choice(k.m, p=k.masses)) if root_type is None else int(root_type)
    if not 0 <= root < k.m:
        raise DimensionMismatchError("root type out of range", expected=k.m, got=root)
    generation = np.zeros(k.m, dtype=np.int64)
    generation[root] = 1
    total = 1
    depth = 0
    while generation.any():
        if total > pop_cap or depth >= gen_cap:
            return GWOutcome(extinct=False, total=total, generations=depth)
        generation = gen.poisson(generation @ rates)
        total += int(generation.sum())
        depth += 1
    return GWOutcome(extinct=True, total=total, generations=depth)


def simulate_gw_batch(
    k: StepKernel,
    reps: int,
    pop_cap: int | None,
    gen_cap: int | None,
    rng: RngLike,
    root_type: int | None = None,
) -> GWBatch:
    """``reps`` independent trees advanced together, one vectorized draw per generation."""
    pop_cap = settings.GW_POP_CAP if pop_cap is None else pop_cap
    gen_cap = settings.GW_GEN_CAP if gen_cap is None else gen_cap
    if reps < 1:
        raise ValueError("reps must be >= 1")
    gen = as_generator(rng)
    rates = _offspring_rates(k)
    roots = gen.choice(k.m, size=reps, p=k.masses) if root_type is None else np.full(reps, int(root_type))
    generation = np.zeros((reps, k.m), dtype=np.int64)
    generation[np.arange(reps), roots] = 1
    total = np.ones(reps, dtype=np.int64)
    alive = np.ones(reps, dtype=bool)
    capped = np.zeros(reps, dtype=bool)
    depth = 0
    while alive.any():
        over = alive & ((total > pop_cap) | (depth >= gen_cap))
        capped |= over
        alive &= ~over
        if not alive.any():
            break
        idx = np.flatnonzero(alive)
        children = gen.poisson(generation[idx] @ rates)
        generation[idx] = children
        total[idx] += children.sum(axis=1)
        alive[idx] = children.any(axis=1)
        depth += 1
    return GWBatch(extinct=~capped, total=total)


def survival_mc(k: StepKernel, reps: int, pop_cap: int | None, rng: RngLike) -> GWBatch:
    return simulate_gw_batch(k, reps, pop_cap, None, rng)


def population_law_mc(k: StepKernel, K_max: int, reps: int, rng: RngLike) -> PopulationLaw:
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if K_max < 1:
        raise ValueError("K_max must be >= 1")
    batch = simulate_gw_batch(k, reps, pop_cap=K_max, gen_cap=K_max + 1, rng=rng)
    finished = batch.total[batch.extinct & (batch.total <= K_max)]
    counts = np.bincount(finished, minlength=K_max + 1)[1 : K_max + 1]
    probabilities = counts / reps
    std_errors = np.sqrt(probabilities * (1.0 - probabilities) / reps)
    return PopulationLaw(
        probabilities=probabilities,
        tail=float(1.0 - probabilities.sum()),
        method="monte_carlo",
        std_errors=std_errors,
    )


def _rooted_profile(tree: LabelledTree, k: StepKernel, root: int, weights: np.ndarray) -> np.ndarray:
    """Per-type value of the tree integral with ``root`` pinned to each type."""
    adjacency = tree.adjacency()

    def message(v: int, parent: int) -> np.ndarray:
        below = weights.copy()
        for child in adjacency[v]:
            if child != parent:
                below *= message(child, v)
        return k.values @ below

    profile = weights.copy()
    for child in adjacency[root]:
        profile *= message(child, root)
    return profile


def _isolation_weights(k: StepKernel) -> np.ndarray:
    return k.masses * np.exp(-marginal(k).values)


def t_isol(tree: LabelledTree, k: StepKernel) -> float:
    """Tree integral with isolation factors, by dynamic programming over the tree."""
    return float(_rooted_profile(tree, k, 0, _isolation_weights(k)).sum())


def population_law_treesum_by_type(k: StepKernel, K_max: int) -> np.ndarray:
    """rho_k(x) for a root of type x; row k-1, column x."""
    _check_treesum_budget(K_max)
    weights = _isolation_weights(k)
    table = np.zeros((K_max, k.m))
    for size in range(1, K_max + 1):
        for tree in enumerate_trees(size, max_k=settings.TREESUM_MAX_K):
            rooted = sum(_rooted_profile(tree, k, v, weights) for v in range(size))
            table[size - 1] += rooted / tree.aut
    return table / k.masses[None, :]


def _check_treesum_budget(K_max: int) -> None:
    if K_max < 1:
        raise ValueError("K_max must be >= 1")
    if K_max > settings.TREESUM_MAX_K:
        raise BudgetExceededError(
            f"tree-sum law needs K_max <= {settings.TREESUM_MAX_K}",
            size=K_max,
            limit=settings.TREESUM_MAX_K,
        )


def population_law_treesum(k: StepKernel, K_max: int) -> PopulationLaw:
    """rho_k = k * sum over tree shapes T of t_isol(T, k) / aut(T)."""
    _check_treesum_budget(K_max)
    probabilities = np.array(
        [
            size * sum(t_isol(tree, k) / tree.aut for tree in enumerate_trees(size, max_k=settings.TREESUM_MAX_K))
            for size in range(1, K_max + 1)
        ]
    )
    return PopulationLaw(
        probabilities=probabilities,
        tail=float(max(0.0, 1.0 - probabilities.sum())),
        method="tree_sum",
        by_type=population_law_treesum_by_type(k, K_max),
    )


def rho_continuity_probe(k: StepKernel, perturbation: StepKernel, scales: Sequence[float]) -> List[ContinuityRow]:
    """For each eps: (cut norm of eps*P, |rho(k + eps*P) - rho(k)|)."""
    if perturbation.m != k.m or not np.allclose(perturbation.masses, k.masses, rtol=0.0, atol=1e-12):
        raise DimensionMismatchError("perturbation must share the kernel's partition", expected=k.m, got=perturbation.m)
    base = survival_fixed_point(k).rho
    rows: List[ContinuityRow] = []
    for eps in scales:
        values = k.values + eps * perturbation.values
        if np.min(values) < 0:
            raise NegativeKernelError(eps, float(np.min(values)))
        moved = StepKernel(masses=k.masses, values=values)
        shift = StepKernel.signed_kernel(k.masses, eps * perturbation.values)
        rows.append(
            ContinuityRow(
                eps=float(eps),
                cutnorm=cutnorm_sets_exact(shift).value,
                delta_rho=abs(survival_fixed_point(moved).rho - base),
            )
        )
    return rows


__all__ = [
    "ContinuityRow",
    "FixedPointResult",
    "GWBatch",
    "GWOutcome",
    "PopulationLaw",
    "borel_probability",
    "population_law_mc",
    "population_law_treesum",
    "population_law_treesum_by_type",
    "rho_continuity_probe",
    "simulate_gw",
    "simulate_gw_batch",
    "survival_fixed_point",
    "survival_lower_bound",
    "survival_mc",
    "survival_probability_scalar",
    "t_isol",
]
