"""Command-line entrypoint: ``python -m src.main <subcommand> ...``.

Exit codes: 0 on success, 2 on configuration or input errors, 3 when
``--check`` is passed and an acceptance gate fails.
"""

from __future__ import annotations

import argparse
import platform
import sys
from pathlib import Path
from typing import List, Sequence

import numpy as np
from loguru import logger
from pydantic import ValidationError

from src.config import get_settings
from src.core.branching import population_law_mc, population_law_treesum, simulate_gw_batch, survival_lower_bound
from src.core.components import analyze
from src.core.cutnorm import cut_distance, cutnorm
from src.core.errors import (
    BudgetExceededError,
    DataFileError,
    DimensionMismatchError,
    DomainError,
    GraphError,
    KernelError,
    NegativeKernelError,
    NotPrimeError,
)
from src.core.graphgen import SparseGraph, percolate, polarity_graph, sample, sample_iid_types
from src.core.hypergraph import (
    Hypergraph,
    clique_projection,
    edge_kernel,
    hyper_cutnorm,
    hyper_survival_mc,
    marginal_matrix,
    one_edge_projection,
    sample_hypergraph,
    sample_hypergraph_iid,
    scale_hyperkernel,
)
from src.core.kernel import StepKernel, WeightMatrix, decompose_irreducible, scale
from src.core.rng import RngStream
from src.runner import hyper_theory_for, norm_or_last_iterate, run_experiment, theory_for
from src.services.io import (
    format_graph,
    format_key_values,
    load_hyperkernel,
    load_kernel,
    load_matrix,
    read_graph,
    read_hypermatrix,
    write_csv,
    write_graph,
    write_hypergraph,
)
from src.services.reporting import emit_report
from src.utils import configure_logging
from src.utils.config_validation import ConfigError, load_experiment_config, validate_runtime_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CHECK_FAILED = 3

RHO_METHODS = ("fixedpoint", "mc", "treesum", "lowerbound")

_INPUT_ERRORS = (
    ConfigError,
    ValidationError,
    DataFileError,
    KernelError,
    DimensionMismatchError,
    DomainError,
    GraphError,
    NotPrimeError,
    NegativeKernelError,
    BudgetExceededError,
)


def _parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    settings = get_settings()
    parser = argparse.ArgumentParser(prog="python -m src.main", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--seed", type=int, default=None, help=f"root seed (default {settings.DEFAULT_SEED})")
    parser.add_argument("--threads", type=int, default=None, help=f"replica worker threads (default {settings.THREADS})")
    parser.add_argument("--out-dir", type=Path, default=None, help=f"report directory (default {settings.OUT_DIR})")
    parser.add_argument("--check", action="store_true", help="exit 3 when an acceptance gate fails")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="sample a random graph")
    source = gen.add_mutually_exclusive_group(required=True)
    source.add_argument("--kernel", type=Path, help="step kernel JSON; vertex types drawn iid from its masses")
    source.add_argument("--matrix", type=Path, help="weight matrix JSON")
    source.add_argument("--constant", type=float, help="constant kernel value (G(n, c/n))")
    source.add_argument("--polarity", type=int, metavar="Q", help="polarity graph over GF(Q), optionally percolated")
    gen.add_argument("-n", "--n", dest="n", type=int, default=1000)
    gen.add_argument("-c", "--scale", dest="c", type=float, default=1.0, help="scale factor, or keep factor c/(q+1) for --polarity")
    gen.add_argument("--percolate", type=float, default=None, metavar="P", help="keep each edge independently with probability P")
    gen.add_argument("--model", choices=["bernoulli", "poisson", "multi"], default="bernoulli")
    gen.add_argument("--out", type=Path, default=None, help="graph file (stdout when omitted)")

    comp = sub.add_parser("components", help="component statistics of a graph file")
    comp.add_argument("graph", type=Path)
    comp.add_argument("--k-max", "--kmax", dest="k_max", type=int, default=5)
    comp.add_argument("--csv", type=Path, default=None, help="write k, nk, nk_tree, nk_cyc for k = 1..k-max")

    cut = sub.add_parser("cutnorm", help="cut norm of a kernel, or cut distance between two matrices")
    cut.add_argument("kernel", type=Path)
    cut.add_argument("--norm", choices=["sets", "pm"], default="sets")
    mode = cut.add_mutually_exclusive_group()
    mode.add_argument("--exact", dest="exact", action="store_true", default=None)
    mode.add_argument("--heuristic", dest="exact", action="store_false")
    cut.add_argument("--restarts", type=int, default=None)
    cut.add_argument("--against", type=Path, default=None, help="second weight matrix; prints the cut distance")
    cut.add_argument("--budget", choices=["exhaustive", "anneal"], default="exhaustive")

    rho = sub.add_parser("rho", help="branching-process quantities of c * kernel")
    rho.add_argument("--kernel", type=Path, required=True)
    rho.add_argument("--method", choices=RHO_METHODS, default="fixedpoint")
    rho.add_argument("-c", "--scale", dest="c", type=float, default=1.0)
    rho.add_argument("--tol", type=float, default=None, help=f"fixed-point tolerance (default {settings.FIXED_POINT_TOL})")
    rho.add_argument("--kmax", "--k-max", dest="k_max", type=int, default=5)
    rho.add_argument("--reps", "--gw-reps", dest="reps", type=int, default=1000, help="Galton-Watson replicas for --method mc")
    rho.add_argument("--csv", type=Path, default=None, help="write the per-type survival vector")

    hyper = sub.add_parser("hyper", help="hyperkernel thresholds, or sampling from a hypermatrix")
    hsource = hyper.add_mutually_exclusive_group(required=True)
    hsource.add_argument("--hyperkernel", type=Path)
    hsource.add_argument("--hypermatrix", type=Path)
    hyper.add_argument("-t", type=float, default=1.0, help="scale factor applied to every arity")
    hyper.add_argument("--sample", action="store_true", help="sample a hypergraph")
    hyper.add_argument("-n", "--n", dest="n", type=int, default=1000, help="vertices of a sample drawn from a hyperkernel")
    hyper.add_argument("--gw-reps", type=int, default=0)
    hyper.add_argument("--variant", choices=["bernoulli", "poisson_multi"], default="bernoulli")
    hyper.add_argument("--project", choices=["clique", "one-edge"], default=None, help="component statistics of the projected sample")
    hyper.add_argument("--edge-kernel", action="store_true", help="print the edge kernel values")
    hyper.add_argument("--out", type=Path, default=None, help="hypergraph file for a sampled hypergraph")

    exp = sub.add_parser("experiment", help="run an experiment file and emit its report")
    exp.add_argument("runfile", type=Path)

    return parser.parse_args(argv)


def _emit(items: List[tuple[str, object]]) -> None:
    sys.stdout.write(format_key_values(items))


def _root(args: argparse.Namespace) -> RngStream:
    return RngStream(get_settings().DEFAULT_SEED if args.seed is None else args.seed)


def _cmd_gen(args: argparse.Namespace) -> int:
    gen = _root(args).generator()
    if args.polarity is not None:
        keep = min(1.0, args.c / (args.polarity + 1)) if args.percolate is None else args.percolate
        graph: SparseGraph = percolate(polarity_graph(args.polarity), keep, gen)
    else:
        if args.matrix is not None:
            graph = sample(load_matrix(args.matrix).scaled(args.c), args.model, gen)
        else:
            kernel = StepKernel.constant(args.constant) if args.constant is not None else load_kernel(args.kernel)
            graph = sample(sample_iid_types(scale(kernel, args.c), args.n, gen), args.model, gen)
        if args.percolate is not None:
            graph = percolate(graph, args.percolate, gen)
    if args.out is None:
        sys.stdout.write(format_graph(graph))
    else:
        write_graph(graph, args.out)
        _emit([("n", graph.n), ("m", graph.m), ("path", args.out)])
    return EXIT_OK


def _cmd_components(args: argparse.Namespace) -> int:
    stats = analyze(read_graph(args.graph))
    items: List[tuple[str, object]] = [
        ("n", stats.n),
        ("c1", stats.c1),
        ("c2", stats.c2),
        ("components", stats.components),
        ("c1_frac", stats.c1_fraction()),
        ("c2_frac", stats.c2_fraction()),
    ]
    ks = range(1, args.k_max + 1)
    items += [(f"nk_{k}", stats.nk.get(k, 0)) for k in ks]
    items.append(("nk_digest", stats.digest()))
    if args.csv is not None:
        rows = [(k, stats.nk.get(k, 0), stats.nk_tree.get(k, 0), stats.nk_cyc.get(k, 0)) for k in ks]
        items.append(("csv", write_csv(args.csv, ["k", "nk", "nk_tree", "nk_cyc"], rows)))
    _emit(items)
    return EXIT_OK


def _cmd_cutnorm(args: argparse.Namespace) -> int:
    if args.against is not None:
        a: WeightMatrix = load_matrix(args.kernel)
        b = load_matrix(args.against)
        result = cut_distance(a, b, budget=args.budget, rng=_root(args).generator())
        _emit([("cut_distance", result.value), ("exact", result.exact), ("permutation", list(result.permutation))])
        return EXIT_OK
    k = load_kernel(args.kernel)
    result = cutnorm(k, norm=args.norm, exact=args.exact, restarts=args.restarts, rng=_root(args).generator())
    _emit([("cutnorm", result.value), ("norm", result.norm), ("exact", result.exact), ("witness", result.witness)])
    return EXIT_OK


def _cmd_rho(args: argparse.Namespace) -> int:
    if args.k_max < 1 or args.reps < 1:
        raise DomainError("--kmax and --reps must be >= 1")
    if args.tol is not None and args.tol <= 0:
        raise DomainError("--tol must be > 0")
    kernel = load_kernel(args.kernel)
    scaled = scale(kernel, args.c)
    norm = norm_or_last_iterate(scaled)
    items: List[tuple[str, object]] = [
        ("c", args.c),
        ("method", args.method),
        ("operator_norm", norm),
        ("irreducible", decompose_irreducible(scaled).is_irreducible),
    ]
    by_type: np.ndarray | None = None
    if args.method == "fixedpoint":
        theory = theory_for(kernel, args.c, tol=args.tol)
        by_type = theory.rho_by_type
        items += [("rho", theory.rho), ("rho_by_type", by_type.tolist()), ("converged", theory.converged)]
    elif args.method == "lowerbound":
        items.append(("rho_lower_bound", survival_lower_bound(scaled, norm=norm)))
    elif args.method == "treesum":
        law = population_law_treesum(scaled, args.k_max)
        by_type = 1.0 - law.by_type.sum(axis=0)
        items += [(f"rho_{k}", law.rho_k(k)) for k in range(1, law.k_max + 1)]
        items += [("rho_tail", law.tail), ("rho_tail_by_type", by_type.tolist())]
    else:
        root = _root(args)
        law = population_law_mc(scaled, args.k_max, args.reps, root.derive(0))
        batches = [simulate_gw_batch(scaled, args.reps, None, None, root.derive(1, x), root_type=x) for x in range(scaled.m)]
        by_type = np.array([batch.survival_frequency for batch in batches])
        ses = np.array([batch.standard_error for batch in batches])
        items += [(f"rho_{k}", law.rho_k(k)) for k in range(1, law.k_max + 1)]
        items += [
            ("rho_gw_mc", float(scaled.masses @ by_type)),
            ("rho_gw_se", float(np.linalg.norm(scaled.masses * ses))),
            ("rho_by_type", by_type.tolist()),
        ]
    if args.csv is not None:
        if by_type is None:
            logger.warning("no per-type survival vector for this method", method=args.method)
        else:
            rows = [(x, float(scaled.masses[x]), float(by_type[x])) for x in range(scaled.m)]
            items.append(("csv", write_csv(args.csv, ["type", "mass", "rho"], rows)))
    _emit(items)
    return EXIT_OK


def _projection_items(hypergraph: Hypergraph, how: str | None, rng: RngStream) -> List[tuple[str, object]]:
    if how is None:
        return []
    graph = clique_projection(hypergraph) if how == "clique" else one_edge_projection(hypergraph, rng.generator())
    stats = analyze(graph)
    return [("projection", how), ("projected_edges", graph.m), ("projected_c1_frac", stats.c1_fraction()), ("projected_c2_frac", stats.c2_fraction())]


def _cmd_hyper(args: argparse.Namespace) -> int:
    root = _root(args)
    if args.hypermatrix is not None:
        H = read_hypermatrix(args.hypermatrix)
        A = marginal_matrix(H)
        items: List[tuple[str, object]] = [("n", H.n), ("R", H.R), ("marginal_max_entry", A.max_entry())]
        if args.sample:
            hypergraph = sample_hypergraph(H, root.generator(), args.variant)
            items.append(("hyperedges", hypergraph.size))
            items += _projection_items(hypergraph, args.project, root.derive(2))
            if args.out is not None:
                write_hypergraph(hypergraph, args.out)
        _emit(items)
        return EXIT_OK

    hk = scale_hyperkernel(load_hyperkernel(args.hyperkernel), args.t)
    theory = hyper_theory_for(hk, args.t)
    items = [
        ("t", args.t),
        ("edge_kernel_norm", theory.norm),
        ("rho_hyper", theory.rho),
        ("converged", theory.converged),
    ]
    if args.edge_kernel:
        items.append(("edge_kernel", edge_kernel(hk).values.tolist()))
    try:
        items.append(("hyper_cutnorm", hyper_cutnorm(hk)))
    except BudgetExceededError as exc:
        logger.warning("hyper cut norm skipped", size=exc.size, limit=exc.limit)
    if args.gw_reps:
        p, se = hyper_survival_mc(hk, args.gw_reps, None, root.derive(1))
        items += [("rho_hyper_gw_mc", p), ("rho_hyper_gw_se", se)]
    if args.sample:
        hypergraph, _ = sample_hypergraph_iid(hk, args.n, root.derive(0).generator(), args.variant)
        items.append(("hyperedges", hypergraph.size))
        items += _projection_items(hypergraph, args.project, root.derive(2))
        if args.out is not None:
            write_hypergraph(hypergraph, args.out)
    _emit(items)
    return EXIT_OK


def _cmd_experiment(args: argparse.Namespace) -> int:
    cfg = load_experiment_config(args.runfile)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    outcome = run_experiment(cfg, threads=args.threads)
    formats = [fmt for fmt, wanted in (("csv", cfg.csv), ("svg", cfg.svg)) if wanted]
    out_dir = args.out_dir or Path(get_settings().OUT_DIR)
    paths = emit_report(outcome.records, out_dir, cfg.stem, formats) if formats else []
    _emit(
        [
            ("experiment", cfg.stem),
            ("rows", len(outcome.records)),
            ("passed", outcome.passed),
            ("first_failure", outcome.trace.first_failure or ""),
            ("files", [str(p) for p in paths]),
        ]
    )
    if args.check and not outcome.passed:
        logger.error("acceptance checks failed", **outcome.trace.summary(), failed=outcome.trace.failed_gates())
        return EXIT_CHECK_FAILED
    return EXIT_OK


COMMANDS = {
    "gen": _cmd_gen,
    "components": _cmd_components,
    "cutnorm": _cmd_cutnorm,
    "rho": _cmd_rho,
    "hyper": _cmd_hyper,
    "experiment": _cmd_experiment,
}


def main(argv: Sequence[str] | None = None) -> int:
    configure_logging("cli")
    args = _parse_args(argv)
    try:
        validate_runtime_config(get_settings())
        logger.debug("cli boot", command=args.command, python_version=platform.python_version())
        return COMMANDS[args.command](args)
    except _INPUT_ERRORS as exc:
        logger.error("input rejected", command=args.command, error=str(exc), error_type=type(exc).__name__)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
