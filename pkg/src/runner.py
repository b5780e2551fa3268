from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np
from loguru import logger

from src.config import get_settings
from src.core.branching import (
    FixedPointResult,
    GWBatch,
    borel_probability,
    population_law_treesum,
    simulate_gw_batch,
    survival_fixed_point,
    survival_lower_bound,
)
from src.core.components import ComponentStats, analyze, perturb
from src.core.errors import ConvergenceError
from src.core.graphgen import SparseGraph, disc_statistic, percolate, polarity_graph, sample, sample_iid_types
from src.core.hypergraph import (
    HyperStepKernel,
    clique_projection,
    edge_kernel,
    hyper_survival_fixed_point,
    hyper_survival_mc,
    sample_hypergraph_iid,
    scale_hyperkernel,
)
from src.core.kernel import StepKernel, WeightMatrix, decompose_irreducible, operator_norm, scale
from src.core.rng import RngStream
from src.models.experiment_run import ExperimentRun
from src.models.run_record import RunRecordRow
from src.services.db import init_db, persistence_enabled, session_scope
from src.services.io import load_hyperkernel, load_kernel, load_matrix
from src.services.reporting import RunRecord
from src.utils.check_trace import CheckTrace
from src.utils.config_validation import ExperimentConfig

settings = get_settings()

# Stream purposes under the experiment stream.
_GRAPHS = 0
_BRANCHING = 1
_PERTURB = 2
_DIAGNOSTICS = 3

# Points with |c ||T|| - 1| below this are treated as critical and never gated.
CRITICAL_BAND = 1e-6

DEFAULT_TOLERANCE: Dict[str, float] = {
    "giant_convergence": 0.01,
    "threshold_sweep": 0.05,
    "percolate_polarity": 0.03,
    "stability": 0.05,
    "rho_crosscheck": 0.015,
    "hyper_threshold": 0.03,
}
SUBCRITICAL_CAP: Dict[str, float] = {
    "giant_convergence": 0.02,
    "threshold_sweep": 0.02,
    "percolate_polarity": 0.03,
    "hyper_threshold": 0.03,
}
BOREL_TOLERANCE = 1e-10
NK_SIGMAS = 4.0
# Cap-bias check: a second GW batch with the population cap divided by this.
LOW_CAP_DIVISOR = 10
# Larger deletions are recorded but not gated.
STABILITY_GATE_MAX_DELTA = 0.05


@dataclass(frozen=True)
class Theory:
    """Branching-process values for one scaled kernel c * kappa."""

    c: float
    rho: float
    rho_by_type: np.ndarray
    converged: bool
    norm: float
    alpha: float

    @property
    def critical(self) -> bool:
        return abs(self.norm - 1.0) < CRITICAL_BAND

    @property
    def supercritical(self) -> bool:
        return self.norm > 1.0 and not self.critical


@dataclass
class ExperimentOutcome:
    records: List[RunRecord]
    trace: CheckTrace
    started_at: datetime
    finished_at: datetime
    run_id: int | None = None
    extras: Dict[str, object] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.trace.passed


def _solve(fn: Callable[[], FixedPointResult], masses: np.ndarray, **context: object) -> FixedPointResult:
    try:
        return fn()
    except ConvergenceError as exc:
        logger.warning("fixed point not converged, keeping last iterate", iterations=exc.iterations, residual=exc.residual, **context)
        f = np.asarray(exc.last_iterate, dtype=float)
        return FixedPointResult(
            rho_by_type=f,
            rho=float(masses @ f),
            iterations=exc.iterations,
            residual=exc.residual,
            converged=False,
        )


def norm_or_last_iterate(k: StepKernel) -> float:
    try:
        return operator_norm(k)
    except ConvergenceError as exc:
        logger.warning("operator norm not converged", iterations=exc.iterations, residual=exc.residual)
        return float(exc.last_iterate)


def theory_for(k: StepKernel, c: float, tol: float | None = None) -> Theory:
    scaled = scale(k, c)
    fp = _solve(lambda: survival_fixed_point(scaled, tol=tol), scaled.masses, c=c)
    norm = norm_or_last_iterate(scaled)
    alpha = survival_lower_bound(scaled, norm=norm)
    return Theory(c=c, rho=fp.rho, rho_by_type=fp.rho_by_type, converged=fp.converged, norm=norm, alpha=alpha)


def hyper_theory_for(hk: HyperStepKernel, t: float) -> Theory:
    """Compound branching process of an already scaled hyperkernel; the norm is that of its edge kernel."""
    norm = norm_or_last_iterate(edge_kernel(hk))
    fp = _solve(lambda: hyper_survival_fixed_point(hk), hk.masses, t=t)
    return Theory(c=t, rho=fp.rho, rho_by_type=fp.rho_by_type, converged=fp.converged, norm=norm, alpha=0.0)


def _tolerance(cfg: ExperimentConfig) -> float:
    return DEFAULT_TOLERANCE[cfg.kind] if cfg.tolerance is None else cfg.tolerance


def _source_kernel(cfg: ExperimentConfig) -> StepKernel | None:
    if cfg.kernel is not None:
        return cfg.kernel.to_kernel()
    if cfg.kernel_file is not None:
        return load_kernel(cfg.kernel_file)
    return None


def _source_matrix(cfg: ExperimentConfig) -> WeightMatrix | None:
    return load_matrix(cfg.matrix_file) if cfg.matrix_file is not None else None


def _source_hyperkernel(cfg: ExperimentConfig) -> HyperStepKernel:
    if cfg.hyperkernel is not None:
        return cfg.hyperkernel.to_hyperkernel()
    return load_hyperkernel(cfg.hyperkernel_file)


def _map_replicas(task: Callable[[int], List[RunRecord]], count: int, threads: int | None = None) -> List[RunRecord]:
    threads = settings.THREADS if threads is None else threads
    if threads > 1 and count > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            batches = list(pool.map(task, range(count)))
    else:
        batches = [task(r) for r in range(count)]
    return [record for batch in batches for record in batch]


class GraphSource:
    """Samples G(c A_n): from a fixed matrix, or from iid types drawn from a kernel."""

    def __init__(self, model: str, kernel: StepKernel | None = None, matrix: WeightMatrix | None = None):
        if (kernel is None) == (matrix is None):
            raise ValueError("GraphSource needs exactly one of kernel, matrix")
        self.model = model
        self.kernel = kernel
        self.matrix = matrix

    @classmethod
    def from_config(cls, cfg: ExperimentConfig) -> "GraphSource":
        return cls(cfg.model, kernel=_source_kernel(cfg), matrix=_source_matrix(cfg))

    @property
    def limit_kernel(self) -> StepKernel:
        return self.kernel if self.kernel is not None else self.matrix.as_kernel()

    def sizes(self, requested: Sequence[int]) -> List[int]:
        return [self.matrix.n] if self.matrix is not None else list(requested)

    def draw(self, n: int, c: float, stream: RngStream) -> SparseGraph:
        gen = stream.generator()
        if self.matrix is not None:
            return sample(self.matrix.scaled(c), self.model, gen)
        return sample(sample_iid_types(scale(self.kernel, c), n, gen), self.model, gen)


def _record(
    cfg: ExperimentConfig,
    *,
    n: int,
    c: float,
    replica: int,
    stream: RngStream,
    stats: ComponentStats | None = None,
    c1_frac: float | None = None,
    c2_frac: float | None = None,
    theory: Theory | None = None,
    started: float | None = None,
    **extra: object,
) -> RunRecord:
    if stats is not None:
        c1_frac = stats.c1 / n
        c2_frac = stats.c2 / n
    return RunRecord(
        experiment=cfg.kind,
        n=n,
        c=float(c),
        replica=replica,
        seed=cfg.resolved_seed,
        stream=stream.stream_id,
        c1_frac=float(c1_frac),
        c2_frac=float(c2_frac),
        nk_digest=stats.digest() if stats is not None else "",
        rho_theory=theory.rho if theory is not None else None,
        alpha_theory=theory.alpha if theory is not None and cfg.kind == "threshold_sweep" else None,
        converged=theory.converged if theory is not None else True,
        wall_time=time.perf_counter() - started if started is not None else 0.0,
        **extra,
    )


def _replica_rows(records: Sequence[RunRecord], n: int, c: float) -> List[RunRecord]:
    return [r for r in records if r.n == n and r.c == c and r.replica >= 0 and not r.label]


def _warn_if_reducible(k: StepKernel, trace: CheckTrace) -> None:
    decomposition = decompose_irreducible(k)
    trace.add_computed("irreducible", decomposition.is_irreducible)
    if not decomposition.is_irreducible:
        logger.warning(
            "kernel is reducible; only the weaker per-block giant guarantee applies",
            blocks=[list(b.types) for b in decomposition.blocks],
        )
        trace.add_note("reducible kernel: giant fraction compared against the full fixed point")


def _sample_grid(
    cfg: ExperimentConfig,
    source: GraphSource,
    root: RngStream,
    theories: Dict[float, Theory],
    threads: int | None = None,
) -> List[RunRecord]:
    records: List[RunRecord] = []
    for ni, n in enumerate(source.sizes(cfg.n)):
        for ci, c in enumerate(cfg.c):
            theory = theories[c]
            cell = root.derive(_GRAPHS, ni, ci)

            def _one(replica: int, n: int = n, c: float = c, cell: RngStream = cell, theory: Theory = theory) -> List[RunRecord]:
                started = time.perf_counter()
                stream = cell.derive(replica)
                stats = analyze(source.draw(n, c, stream))
                return [_record(cfg, n=n, c=c, replica=replica, stream=stream, stats=stats, theory=theory, started=started)]

            batch = _map_replicas(_one, cfg.replicas, threads)
            fractions = [r.c1_frac for r in batch]
            logger.info(
                "replicas analyzed",
                experiment=cfg.kind,
                n=n,
                c=c,
                mean_c1=float(np.mean(fractions)),
                spread=float(np.ptp(fractions)),
                rho=theory.rho,
            )
            records.extend(batch)
    return records


def _gate_giant(
    trace: CheckTrace,
    records: Sequence[RunRecord],
    n: int,
    theory: Theory,
    tolerance: float,
    subcritical_cap: float,
    *,
    lower_bound: bool = False,
) -> None:
    rows = _replica_rows(records, n, theory.c)
    if not rows:
        return
    fractions = np.array([r.c1_frac for r in rows])
    details = {"n": n, "c": theory.c, "mean_c1": float(fractions.mean()), "rho": theory.rho, "norm": theory.norm}
    if theory.critical or not theory.converged:
        trace.add_note(f"c={theory.c}: critical point recorded, not asserted")
        return
    if theory.supercritical:
        if lower_bound:
            floor = theory.alpha - tolerance
            trace.record_gate(f"supercritical_lower_bound[c={theory.c}]", bool(fractions.min() >= floor), {**details, "alpha": theory.alpha, "min_c1": float(fractions.min())})
        else:
            deviation = abs(float(fractions.mean()) - theory.rho)
            trace.record_gate(f"giant_fraction[c={theory.c}]", deviation <= tolerance, {**details, "deviation": deviation})
    else:
        trace.record_gate(f"subcritical[c={theory.c}]", bool(fractions.max() <= subcritical_cap), {**details, "max_c1": float(fractions.max())})


def run_giant_convergence(cfg: ExperimentConfig, trace: CheckTrace | None = None, threads: int | None = None) -> List[RunRecord]:
    """C1/n of G(c A_n) over the n list, next to rho(c kappa)."""
    trace = trace or CheckTrace(experiment=cfg.stem, kind=cfg.kind)
    source = GraphSource.from_config(cfg)
    kernel = source.limit_kernel
    _warn_if_reducible(kernel, trace)
    theories = {c: theory_for(kernel, c) for c in cfg.c}
    trace.add_computed("rho", {c: t.rho for c, t in theories.items()})

    root = RngStream(cfg.resolved_seed).derive(cfg.experiment_index)
    records = _sample_grid(cfg, source, root, theories, threads)

    tolerance = _tolerance(cfg)
    largest = max(source.sizes(cfg.n))
    for c, theory in theories.items():
        _gate_giant(trace, records, largest, theory, tolerance, SUBCRITICAL_CAP[cfg.kind])
        if theory.supercritical and theory.converged:
            worst_c2 = max(r.c2_frac for r in _replica_rows(records, largest, c))
            trace.record_gate(f"second_component[c={c}]", worst_c2 <= tolerance, {"c": c, "max_c2": worst_c2})
    return records


def run_threshold_sweep(cfg: ExperimentConfig, trace: CheckTrace | None = None, threads: int | None = None) -> List[RunRecord]:
    """C1/n against c, with rho(c kappa) and the lower bound alpha(c) attached to every row."""
    trace = trace or CheckTrace(experiment=cfg.stem, kind=cfg.kind)
    source = GraphSource.from_config(cfg)
    kernel = source.limit_kernel
    _warn_if_reducible(kernel, trace)
    base_norm = norm_or_last_iterate(kernel)
    threshold = 1.0 / base_norm if base_norm > 0 else math.inf
    trace.add_computed("operator_norm", base_norm)
    trace.add_computed("threshold_c", threshold)
    if not cfg.c[0] < threshold < cfg.c[-1]:
        logger.warning("c grid does not straddle the threshold", threshold=threshold, c_min=cfg.c[0], c_max=cfg.c[-1])
        trace.add_note("c grid does not straddle 1/||T||")

    theories = {c: theory_for(kernel, c) for c in cfg.c}
    root = RngStream(cfg.resolved_seed).derive(cfg.experiment_index)
    records = _sample_grid(cfg, source, root, theories, threads)

    largest = max(source.sizes(cfg.n))
    tolerance = _tolerance(cfg)
    for theory in theories.values():
        _gate_giant(trace, records, largest, theory, tolerance, SUBCRITICAL_CAP[cfg.kind], lower_bound=True)
    return records


def run_percolate_polarity(cfg: ExperimentConfig, trace: CheckTrace | None = None, threads: int | None = None) -> List[RunRecord]:
    """Keep each polarity-graph edge with probability c/(q+1); the limit is the constant kernel 1."""
    trace = trace or CheckTrace(experiment=cfg.stem, kind=cfg.kind)
    base = polarity_graph(cfg.q)
    n = base.n
    p = (cfg.q + 1) / n
    root = RngStream(cfg.resolved_seed).derive(cfg.experiment_index)
    trace.add_computed("n", n)
    trace.add_computed("disc", disc_statistic(base, p, trials=20, rng=root.derive(_DIAGNOSTICS)))

    unit = StepKernel.constant(1.0)
    theories = {c: theory_for(unit, c) for c in cfg.c}
    records: List[RunRecord] = []
    for ci, c in enumerate(cfg.c):
        keep = min(1.0, c / (cfg.q + 1))
        cell = root.derive(_GRAPHS, 0, ci)

        def _one(replica: int, c: float = c, keep: float = keep, cell: RngStream = cell) -> List[RunRecord]:
            started = time.perf_counter()
            stream = cell.derive(replica)
            stats = analyze(percolate(base, keep, stream))
            return [_record(cfg, n=n, c=c, replica=replica, stream=stream, stats=stats, theory=theories[c], started=started)]

        records.extend(_map_replicas(_one, cfg.replicas, threads))

    tolerance = _tolerance(cfg)
    for theory in theories.values():
        _gate_giant(trace, records, n, theory, tolerance, SUBCRITICAL_CAP[cfg.kind])
    return records


def _perturbation_counts(g: SparseGraph, n: int, delta: float, target: str) -> Tuple[int, int]:
    if target == "vertices":
        return int(round(delta * n)), 0
    return 0, int(round(delta * g.m))


def run_stability(cfg: ExperimentConfig, trace: CheckTrace | None = None, threads: int | None = None) -> List[RunRecord]:
    """Delete a delta fraction of vertices or edges from sampled graphs and track |C1'/n - rho|."""
    trace = trace or CheckTrace(experiment=cfg.stem, kind=cfg.kind)
    source = GraphSource.from_config(cfg)
    kernel = source.limit_kernel
    theories = {c: theory_for(kernel, c) for c in cfg.c}
    for theory in theories.values():
        if not theory.supercritical:
            logger.warning("stability run on a kernel that is not supercritical", c=theory.c, norm=theory.norm)
            trace.add_note(f"c={theory.c}: not supercritical")

    root = RngStream(cfg.resolved_seed).derive(cfg.experiment_index)
    records: List[RunRecord] = []
    for ni, n in enumerate(source.sizes(cfg.n)):
        for ci, c in enumerate(cfg.c):
            theory = theories[c]
            cell = root.derive(_GRAPHS, ni, ci)

            def _one(replica: int, n: int = n, c: float = c, cell: RngStream = cell, theory: Theory = theory) -> List[RunRecord]:
                stream = cell.derive(replica)
                graph = source.draw(n, c, stream)
                rows: List[RunRecord] = []
                for di, delta in enumerate(cfg.deltas):
                    for mi, mode in enumerate(cfg.modes):
                        for ti, target in enumerate(cfg.targets):
                            started = time.perf_counter()
                            del_vertices, del_edges = _perturbation_counts(graph, n, delta, target)
                            moved = perturb(graph, del_vertices, del_edges, 0, mode, stream.derive(_PERTURB, di, mi, ti))
                            stats = analyze(moved)
                            rows.append(
                                _record(
                                    cfg,
                                    n=n,
                                    c=c,
                                    replica=replica,
                                    stream=stream,
                                    stats=stats,
                                    theory=theory,
                                    started=started,
                                    delta=float(delta),
                                    mode=mode,
                                    label=target,
                                    value=abs(stats.c1 / n - theory.rho),
                                )
                            )
                return rows

            records.extend(_map_replicas(_one, cfg.replicas, threads))

    tolerance = _tolerance(cfg)
    for record_group in _group(records, lambda r: (r.n, r.c, r.delta, r.mode, r.label)).items():
        (n, c, delta, mode, target), rows = record_group
        worst = max(r.value for r in rows)
        trace.add_computed(f"max_deviation[n={n},c={c},delta={delta},{mode},{target}]", worst)
        theory = theories[c]
        if mode != "random" or not 0.0 < delta <= STABILITY_GATE_MAX_DELTA or not theory.supercritical or not theory.converged:
            continue
        trace.record_gate(
            f"stability[n={n},c={c},delta={delta},{target}]",
            worst <= tolerance,
            {"max_deviation": worst, "rho": theory.rho},
        )
    return records


def _group(records: Sequence[RunRecord], key: Callable[[RunRecord], tuple]) -> Dict[tuple, List[RunRecord]]:
    grouped: Dict[tuple, List[RunRecord]] = {}
    for record in records:
        grouped.setdefault(key(record), []).append(record)
    return grouped


def _summary_row(
    cfg: ExperimentConfig, n: int, c: float, stream: RngStream, rows: Sequence[RunRecord], theory: Theory | None, label: str, value: float
) -> RunRecord:
    c1 = float(np.mean([r.c1_frac for r in rows])) if rows else 0.0
    c2 = min(float(np.mean([r.c2_frac for r in rows])), c1) if rows else 0.0
    return _record(cfg, n=n, c=c, replica=-1, stream=stream, c1_frac=c1, c2_frac=c2, theory=theory, label=label, value=float(value))


def _is_constant(k: StepKernel) -> bool:
    return bool(np.all(k.values == k.values.flat[0]))


def _gate_cap_bias(trace: CheckTrace, c: float, high: GWBatch, low: GWBatch) -> None:
    """Survival declared at the population cap must not move when the cap shrinks tenfold."""
    gap = abs(high.survival_frequency - low.survival_frequency)
    se = math.hypot(high.standard_error, low.standard_error)
    trace.record_gate(
        f"cap_bias[c={c}]",
        gap <= NK_SIGMAS * se,
        {"c": c, "gap": gap, "se": se, "high": high.survival_frequency, "low": low.survival_frequency},
    )


def run_rho_crosscheck(cfg: ExperimentConfig, trace: CheckTrace | None = None, threads: int | None = None) -> List[RunRecord]:
    """Fixed point, branching-process Monte Carlo and graph Monte Carlo estimates of rho, plus rho_k."""
    trace = trace or CheckTrace(experiment=cfg.stem, kind=cfg.kind)
    source = GraphSource.from_config(cfg)
    kernel = source.limit_kernel
    root = RngStream(cfg.resolved_seed).derive(cfg.experiment_index)
    n = max(cfg.n)
    ni = cfg.n.index(n)
    tolerance = _tolerance(cfg)
    k_max = min(cfg.k_max, settings.TREESUM_MAX_K)
    if k_max < cfg.k_max:
        trace.add_note(f"k_max reduced to {k_max} by TREESUM_MAX_K")

    records: List[RunRecord] = []
    for ci, c in enumerate(cfg.c):
        theory = theory_for(kernel, c)
        scaled = scale(kernel, c)
        cell = root.derive(_GRAPHS, ni, ci)
        stats_by_replica: Dict[int, ComponentStats] = {}

        def _one(replica: int, c: float = c, cell: RngStream = cell, theory: Theory = theory) -> List[RunRecord]:
            started = time.perf_counter()
            stream = cell.derive(replica)
            stats = analyze(source.draw(n, c, stream))
            stats_by_replica[replica] = stats
            return [_record(cfg, n=n, c=c, replica=replica, stream=stream, stats=stats, theory=theory, started=started)]

        graph_rows = _map_replicas(_one, cfg.replicas, threads)
        records.extend(graph_rows)

        branching_stream = root.derive(_BRANCHING, ci)
        batch = simulate_gw_batch(scaled, cfg.gw_reps, cfg.pop_cap, None, branching_stream)
        high_cap = settings.GW_POP_CAP if cfg.pop_cap is None else cfg.pop_cap
        low_cap = max(1, high_cap // LOW_CAP_DIVISOR)
        low_batch = simulate_gw_batch(scaled, cfg.gw_reps, low_cap, None, branching_stream.derive(1))
        records.append(_summary_row(cfg, n, c, branching_stream, graph_rows, theory, "rho_gw_mc_low_cap", low_batch.survival_frequency))
        graph_mean = float(np.mean([r.c1_frac for r in graph_rows]))
        estimates = {
            "rho_fixed_point": theory.rho,
            "rho_gw_mc": batch.survival_frequency,
            "rho_graph_mc": graph_mean,
        }
        for label, value in estimates.items():
            records.append(_summary_row(cfg, n, c, branching_stream, graph_rows, theory, label, value))
        logger.info("rho estimates", c=c, gw_se=batch.standard_error, **estimates)

        if theory.critical or not theory.converged:
            trace.add_note(f"c={c}: critical point recorded, not asserted")
        else:
            names = list(estimates)
            for i, a in enumerate(names):
                for b in names[i + 1 :]:
                    gap = abs(estimates[a] - estimates[b])
                    trace.record_gate(f"agree[{a},{b},c={c}]", gap <= tolerance, {"c": c, "gap": gap})
            _gate_cap_bias(trace, c, batch, low_batch)

        law = population_law_treesum(scaled, k_max)
        for size in range(1, k_max + 1):
            expected = law.rho_k(size)
            observed = [stats_by_replica[r].nk_fraction(size) for r in range(cfg.replicas)]
            observed_mean = float(np.mean(observed))
            records.append(_summary_row(cfg, n, c, branching_stream, graph_rows, theory, f"rho_{size}_treesum", expected))
            records.append(_summary_row(cfg, n, c, branching_stream, graph_rows, theory, f"nk_{size}_graph", observed_mean))
            se = math.sqrt(max(size * expected, 1.0 / n) / (n * cfg.replicas))
            if cfg.replicas > 1:
                se = max(se, float(np.std(observed, ddof=1)) / math.sqrt(cfg.replicas))
            trace.record_gate(
                f"nk[k={size},c={c}]",
                abs(observed_mean - expected) <= NK_SIGMAS * se,
                {"observed": observed_mean, "expected": expected, "se": se},
            )
            if _is_constant(scaled):
                borel = borel_probability(float(scaled.values.flat[0]), size)
                records.append(_summary_row(cfg, n, c, branching_stream, graph_rows, theory, f"rho_{size}_borel", borel))
                trace.record_gate(
                    f"borel[k={size},c={c}]",
                    abs(borel - expected) <= BOREL_TOLERANCE,
                    {"treesum": expected, "borel": borel},
                )
    return records


def run_hyper_threshold(cfg: ExperimentConfig, trace: CheckTrace | None = None, threads: int | None = None) -> List[RunRecord]:
    """Clique-projected giant fraction of the hypergraph model against the compound branching process."""
    trace = trace or CheckTrace(experiment=cfg.stem, kind=cfg.kind)
    base = _source_hyperkernel(cfg)
    decomposition = decompose_irreducible(edge_kernel(base))
    trace.add_computed("edge_kernel_irreducible", decomposition.is_irreducible)
    if not decomposition.is_irreducible:
        logger.warning("edge kernel is reducible", blocks=[list(b.types) for b in decomposition.blocks])

    root = RngStream(cfg.resolved_seed).derive(cfg.experiment_index)
    tolerance = _tolerance(cfg)
    largest = max(cfg.n)
    records: List[RunRecord] = []
    for ci, t in enumerate(cfg.c):
        hk = scale_hyperkernel(base, t)
        theory = hyper_theory_for(hk, t)
        norm = theory.norm
        branching_stream = root.derive(_BRANCHING, ci)
        gw, gw_se = hyper_survival_mc(hk, cfg.gw_reps, cfg.pop_cap, branching_stream)
        trace.add_computed(f"edge_kernel_norm[t={t}]", norm)

        for ni, n in enumerate(cfg.n):
            cell = root.derive(_GRAPHS, ni, ci)

            def _one(replica: int, n: int = n, hk: HyperStepKernel = hk, cell: RngStream = cell, theory: Theory = theory) -> List[RunRecord]:
                started = time.perf_counter()
                stream = cell.derive(replica)
                hypergraph, _ = sample_hypergraph_iid(hk, n, stream.generator(), cfg.hyper_variant)
                stats = analyze(clique_projection(hypergraph))
                return [_record(cfg, n=n, c=t, replica=replica, stream=stream, stats=stats, theory=theory, started=started)]

            rows = _map_replicas(_one, cfg.replicas, threads)
            records.extend(rows)
            records.append(_summary_row(cfg, n, t, branching_stream, rows, theory, "rho_hyper_gw_mc", gw))

        rows = _replica_rows(records, largest, t)
        fractions = np.array([r.c1_frac for r in rows])
        details = {"t": t, "mean_c1": float(fractions.mean()), "gw": gw, "gw_se": gw_se, "fixed_point": theory.rho, "norm": norm}
        if theory.critical or not theory.converged:
            trace.add_note(f"t={t}: critical point recorded, not asserted")
        elif norm > 1.0:
            trace.record_gate(f"hyper_giant[t={t}]", abs(details["mean_c1"] - gw) <= tolerance, details)
        else:
            trace.record_gate(f"hyper_subcritical[t={t}]", bool(fractions.max() <= SUBCRITICAL_CAP[cfg.kind]), details)
    return records


RUNNERS: Dict[str, Callable[..., List[RunRecord]]] = {
    "giant_convergence": run_giant_convergence,
    "threshold_sweep": run_threshold_sweep,
    "percolate_polarity": run_percolate_polarity,
    "stability": run_stability,
    "rho_crosscheck": run_rho_crosscheck,
    "hyper_threshold": run_hyper_threshold,
}


def run_experiment(cfg: ExperimentConfig, threads: int | None = None) -> ExperimentOutcome:
    trace = CheckTrace(experiment=cfg.stem, kind=cfg.kind)
    trace.add_inputs(cfg.model_dump(mode="json", exclude_none=True))
    started_at = datetime.now(timezone.utc)
    clock = time.perf_counter()
    logger.info("experiment start", experiment=cfg.stem, kind=cfg.kind, seed=cfg.resolved_seed)
    records = sorted(RUNNERS[cfg.kind](cfg, trace, threads=threads), key=RunRecord.sort_key)
    finished_at = datetime.now(timezone.utc)
    logger.info(
        "experiment end",
        experiment=cfg.stem,
        rows=len(records),
        duration=round(time.perf_counter() - clock, 3),
        passed=trace.passed,
        first_failure=trace.first_failure,
    )
    outcome = ExperimentOutcome(records=records, trace=trace, started_at=started_at, finished_at=finished_at)
    if persistence_enabled():
        outcome.run_id = persist_records(cfg, outcome)
    return outcome


def persist_records(cfg: ExperimentConfig, outcome: ExperimentOutcome) -> int:
    init_db()
    with session_scope() as session:
        run = ExperimentRun(
            started_at=outcome.started_at,
            finished_at=outcome.finished_at,
            kind=cfg.kind,
            name=cfg.stem,
            seed=cfg.resolved_seed,
            config=cfg.model_dump(mode="json", exclude_none=True),
            checks=outcome.trace.as_dict(),
            passed=outcome.trace.passed,
            notes="\n".join(outcome.trace.notes) or None,
        )
        run.records = [
            RunRecordRow(
                n=r.n,
                c=r.c,
                replica=r.replica,
                seed=r.seed,
                stream=r.stream,
                c1_frac=r.c1_frac,
                c2_frac=r.c2_frac,
                nk_digest=r.nk_digest,
                rho_theory=r.rho_theory,
                alpha_theory=r.alpha_theory,
                converged=r.converged,
                delta=r.delta,
                mode=r.mode,
                label=r.label,
                value=r.value,
                wall_time=r.wall_time,
            )
            for r in outcome.records
        ]
        session.add(run)
        session.flush()
        run_id = run.id
    logger.info("experiment persisted", run_id=run_id, rows=len(outcome.records))
    return run_id


__all__ = [
    "ExperimentOutcome",
    "GraphSource",
    "RUNNERS",
    "Theory",
    "hyper_theory_for",
    "norm_or_last_iterate",
    "persist_records",
    "run_experiment",
    "run_giant_convergence",
    "run_hyper_threshold",
    "run_percolate_polarity",
    "run_rho_crosscheck",
    "run_stability",
    "run_threshold_sweep",
    "theory_for",
]
