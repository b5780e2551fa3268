import json

import pytest

from src.config import Settings
from src.utils.config_validation import ConfigError, ExperimentConfig, load_experiment_config, validate_runtime_config


def test_config_validation_passes_for_defaults():
    validate_runtime_config(Settings())


@pytest.mark.parametrize(
    "overrides, message",
    [
        ({"CUTNORM_EXACT_MAX_TYPES": 31}, "CUTNORM_EXACT_MAX_TYPES"),
        ({"EXHAUSTIVE_PERMUTATION_MAX_N": 11}, "EXHAUSTIVE_PERMUTATION_MAX_N"),
        ({"TREESUM_MAX_K": 11}, "TREESUM_MAX_K"),
        ({"HYPER_CUTNORM_MAX_ARITY": 4}, "HYPER_CUTNORM_MAX_ARITY"),
    ],
)
def test_config_validation_rejects_unenumerable_budgets(overrides, message):
    with pytest.raises(RuntimeError, match=message):
        validate_runtime_config(Settings(**overrides))


def test_config_validation_tolerates_small_caps():
    validate_runtime_config(Settings(GW_POP_CAP=10, THREADS=2, RESULTS_DATABASE_URL="sqlite://"))


def _kernel():
    return {"masses": [1.0], "values": [[1.0]]}


def test_experiment_config_defaults():
    cfg = ExperimentConfig(kind="giant_convergence", kernel=_kernel())
    assert cfg.n == [1000]
    assert cfg.model == "bernoulli"
    assert cfg.stem == "giant_convergence"
    assert cfg.resolved_seed == Settings().DEFAULT_SEED
    named = ExperimentConfig(kind="giant_convergence", kernel=_kernel(), name="x", out_stem="y", seed=3)
    assert named.stem == "y"
    assert named.resolved_seed == 3


@pytest.mark.parametrize(
    "fields",
    [
        {"kind": "giant_convergence"},
        {"kind": "giant_convergence", "kernel": _kernel(), "kernel_file": "k.json"},
        {"kind": "rho_crosscheck", "matrix_file": "m.json"},
        {"kind": "percolate_polarity"},
        {"kind": "hyper_threshold"},
        {"kind": "giant_convergence", "kernel": _kernel(), "n": [1]},
        {"kind": "giant_convergence", "kernel": _kernel(), "c": [2.0, 1.0]},
        {"kind": "giant_convergence", "kernel": _kernel(), "c": [-1.0]},
        {"kind": "giant_convergence", "kernel": _kernel(), "replicas": 0},
        {"kind": "giant_convergence", "kernel": _kernel(), "tolerance": -0.1},
        {"kind": "stability", "kernel": _kernel(), "deltas": [1.5]},
        {"kind": "giant_convergence", "kernel": _kernel(), "colour": "red"},
        {"kind": "census"},
    ],
)
def test_experiment_config_rejects(fields):
    with pytest.raises(ValueError):
        ExperimentConfig.model_validate(fields)


def test_experiment_config_keeps_zero_tolerance():
    assert ExperimentConfig(kind="giant_convergence", kernel=_kernel(), tolerance=0.0).tolerance == 0.0
    assert ExperimentConfig(kind="giant_convergence", kernel=_kernel()).tolerance is None


def test_load_experiment_config_resolves_relative_files(tmp_path):
    kernels = tmp_path / "kernels"
    kernels.mkdir()
    (kernels / "k.json").write_text(json.dumps(_kernel()))
    runfile = tmp_path / "run.json"
    runfile.write_text(json.dumps({"kind": "giant_convergence", "kernel_file": "kernels/k.json"}))
    cfg = load_experiment_config(runfile)
    assert cfg.kernel_file == str(kernels / "k.json")


def test_load_experiment_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_experiment_config(tmp_path / "absent.json")
    runfile = tmp_path / "run.json"
    runfile.write_text(json.dumps({"kind": "giant_convergence", "kernel_file": "nowhere.json"}))
    with pytest.raises(ConfigError, match="not found"):
        load_experiment_config(runfile)
    runfile.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid run file"):
        load_experiment_config(runfile)


def test_shipped_experiment_files_load():
    from pathlib import Path

    root = Path(__file__).resolve().parents[1] / "experiments"
    files = sorted(root.glob("*.json"))
    assert files
    for path in files:
        load_experiment_config(path)
