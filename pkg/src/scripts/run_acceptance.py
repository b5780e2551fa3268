"""Desk-scale acceptance run.

Runs every experiment file under ``experiments/`` with its gates, then the
property suites that are not graph experiments (cut norms, model
equivalence, continuity of rho). Exit code 3 if anything fails.
"""

from __future__ import annotations

import argparse
import sys
from collections import Counter
from pathlib import Path
from typing import Dict, List

import numpy as np
from loguru import logger

from src.config import get_settings
from src.core.branching import rho_continuity_probe
from src.core.cutnorm import cutnorm_heuristic, cutnorm_pm_exact, cutnorm_sets_exact
from src.core.graphgen import convert_matrix, sample_bernoulli, sample_poisson_simple
from src.core.kernel import StepKernel, WeightMatrix, difference, marginal
from src.core.rng import RngStream
from src.runner import run_experiment
from src.services.reporting import emit_report
from src.utils import configure_logging
from src.utils.config_validation import load_experiment_config, validate_runtime_config

EXPERIMENTS_DIR = Path(__file__).resolve().parents[2] / "experiments"


def _random_signed(gen: np.random.Generator, m: int) -> StepKernel:
    upper = np.triu(gen.uniform(-1.0, 1.0, size=(m, m)))
    masses = gen.dirichlet(np.ones(m))
    return StepKernel.signed_kernel(masses, upper + np.triu(upper, 1).T)


def cutnorm_suite(instances: int, root: RngStream) -> Dict[str, object]:
    gen = root.generator()
    ordering_ok = heuristic_upper_ok = contraction_ok = True
    close = 0
    for idx in range(instances):
        k = _random_signed(gen, 12)
        sets = cutnorm_sets_exact(k).value
        pm = cutnorm_pm_exact(k).value
        heuristic = cutnorm_heuristic(k, rng=root.derive(idx)).value
        ordering_ok &= sets <= pm + 1e-12 and pm <= 4 * sets + 1e-12
        heuristic_upper_ok &= heuristic <= sets + 1e-12
        close += heuristic >= 0.9 * sets

        other = StepKernel.signed_kernel(k.masses, _random_signed(gen, 12).values)
        gap = float(k.masses @ np.abs(marginal(k).values - marginal(other).values))
        contraction_ok &= gap <= cutnorm_pm_exact(difference(k, other)).value + 1e-10
    share = close / instances
    return {
        "ordering": ordering_ok,
        "heuristic_lower_bound": heuristic_upper_ok,
        "heuristic_share": share,
        "heuristic_share_ok": share >= 0.95,
        "marginal_contraction": contraction_ok,
    }


def _graph_key(edges: np.ndarray) -> tuple:
    return tuple(map(tuple, edges.tolist()))


def model_equivalence(samples: int, root: RngStream) -> Dict[str, object]:
    A = WeightMatrix.dense(np.array([[0.0, 1.2, 0.4], [1.2, 0.0, 2.1], [0.4, 2.1, 0.0]]))
    converted = convert_matrix(A)
    gen_a = root.derive(0).generator()
    gen_b = root.derive(1).generator()
    bernoulli = Counter(_graph_key(sample_bernoulli(A, gen_a).edges) for _ in range(samples))
    poisson = Counter(_graph_key(sample_poisson_simple(converted, gen_b).edges) for _ in range(samples))
    keys = set(bernoulli) | set(poisson)
    tv = 0.5 * sum(abs(bernoulli[key] - poisson[key]) for key in keys) / samples
    return {"total_variation": tv, "total_variation_ok": tv <= 0.01, "graphs_seen": len(keys)}


def continuity() -> Dict[str, object]:
    k = StepKernel.constant(2.0)
    scales = [0.2 / 2**i for i in range(5)]
    rows = rho_continuity_probe(k, StepKernel.constant(1.0), scales)
    deltas = [row.delta_rho for row in rows]
    monotone = all(a >= b for a, b in zip(deltas, deltas[1:]))
    return {"delta_rho": deltas, "monotone": monotone, "bounded": deltas[0] <= 0.12}


def main(argv: List[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--samples", type=int, default=1_000_000, help="graphs per model in the equivalence check")
    parser.add_argument("--instances", type=int, default=1000, help="random kernels in the cut-norm suite")
    parser.add_argument("--out-dir", type=Path, default=None)
    parser.add_argument("--skip-experiments", action="store_true")
    args = parser.parse_args(argv)

    configure_logging("accept")
    settings = get_settings()
    validate_runtime_config(settings)
    out_dir = args.out_dir or Path(settings.OUT_DIR)
    root = RngStream(settings.DEFAULT_SEED).derive(1000)
    failures: List[str] = []

    if not args.skip_experiments:
        for path in sorted(EXPERIMENTS_DIR.glob("*.json")):
            cfg = load_experiment_config(path)
            outcome = run_experiment(cfg)
            emit_report(outcome.records, out_dir, cfg.stem, ["csv", "svg"] if cfg.svg else ["csv"])
            logger.info("experiment checked", **outcome.trace.summary(), passed=outcome.passed)
            if not outcome.passed:
                failures.append(f"{cfg.stem}: {outcome.trace.first_failure}")

    suites = {
        "cutnorm": cutnorm_suite(args.instances, root.derive(0)),
        "model_equivalence": model_equivalence(args.samples, root.derive(1)),
        "continuity": continuity(),
    }
    for name, result in suites.items():
        logger.info("suite checked", suite=name, **result)
        failures += [f"{name}: {key}" for key, value in result.items() if value is False]

    if failures:
        logger.error("acceptance failed", failures=failures)
        return 3
    logger.info("acceptance passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
