import itertools

import numpy as np
import pytest

from src.core.cutnorm import cut_distance, cutnorm, cutnorm_heuristic, cutnorm_pm_exact, cutnorm_sets_exact
from src.core.errors import BudgetExceededError, DimensionMismatchError
from src.core.kernel import StepKernel, WeightMatrix, difference, kernel_integral, l1_norm, marginal


def _random_signed(gen: np.random.Generator, m: int, masses: np.ndarray | None = None) -> StepKernel:
    upper = np.triu(gen.uniform(-1.0, 1.0, size=(m, m)))
    if masses is None:
        masses = gen.dirichlet(np.ones(m))
    return StepKernel.signed_kernel(masses, upper + np.triu(upper, 1).T)


def _brute_sets(k: StepKernel) -> float:
    B = k.masses[:, None] * k.values * k.masses[None, :]
    m = k.m
    best = 0.0
    for S in itertools.product([0, 1], repeat=m):
        for T in itertools.product([0, 1], repeat=m):
            best = max(best, abs(float(np.array(S) @ B @ np.array(T))))
    return best


def _brute_pm(k: StepKernel) -> float:
    B = k.masses[:, None] * k.values * k.masses[None, :]
    m = k.m
    return max(
        float(np.array(f) @ B @ np.array(g))
        for f in itertools.product([-1, 1], repeat=m)
        for g in itertools.product([-1, 1], repeat=m)
    )


def test_exact_cut_norms_match_brute_force():
    gen = np.random.default_rng(11)
    for m in (1, 2, 3, 5):
        for _ in range(10):
            k = _random_signed(gen, m)
            assert cutnorm_sets_exact(k).value == pytest.approx(_brute_sets(k), abs=1e-12)
            assert cutnorm_pm_exact(k).value == pytest.approx(_brute_pm(k), abs=1e-12)


def test_sets_witness_attains_value():
    gen = np.random.default_rng(3)
    k = _random_signed(gen, 6)
    result = cutnorm_sets_exact(k)
    S, T = result.witness
    B = k.masses[:, None] * k.values * k.masses[None, :]
    assert abs(float(B[np.ix_(list(S), list(T))].sum())) == pytest.approx(result.value, abs=1e-12)


def test_pm_witness_attains_value():
    gen = np.random.default_rng(4)
    k = _random_signed(gen, 6)
    result = cutnorm_pm_exact(k)
    f, g = result.witness
    B = k.masses[:, None] * k.values * k.masses[None, :]
    assert f[0] == 1
    assert float(np.array(f) @ B @ np.array(g)) == pytest.approx(result.value, abs=1e-12)
    assert result.norm == "pm"


def test_norm_ordering_and_heuristic_bounds():
    gen = np.random.default_rng(12)
    close = 0
    trials = 60
    for idx in range(trials):
        k = _random_signed(gen, 10)
        sets = cutnorm_sets_exact(k).value
        pm = cutnorm_pm_exact(k).value
        heuristic = cutnorm_heuristic(k, rng=idx).value
        assert sets <= pm + 1e-12
        assert pm <= 4 * sets + 1e-12
        assert heuristic <= sets + 1e-12
        assert abs(kernel_integral(k)) <= sets + 1e-12
        assert sets <= l1_norm(k) + 1e-12
        close += heuristic >= 0.9 * sets
    assert close >= 0.9 * trials


def test_marginal_contraction():
    gen = np.random.default_rng(5)
    for m in (2, 4, 8):
        masses = gen.dirichlet(np.ones(m))
        a = _random_signed(gen, m, masses)
        b = _random_signed(gen, m, masses)
        gap = float(masses @ np.abs(marginal(a).values - marginal(b).values))
        assert gap <= cutnorm_pm_exact(difference(a, b)).value + 1e-10


def test_zero_kernel_has_zero_norm():
    k = StepKernel.signed_kernel([0.5, 0.5], np.zeros((2, 2)))
    result = cutnorm_sets_exact(k)
    assert result.value == 0.0
    assert result.witness == ((), ())


def test_dispatcher_never_substitutes_norms(monkeypatch: pytest.MonkeyPatch):
    k = _random_signed(np.random.default_rng(8), 4)
    assert cutnorm(k, norm="sets").value == cutnorm_sets_exact(k).value
    assert cutnorm(k, norm="pm").value == cutnorm_pm_exact(k).value
    assert not cutnorm(k, norm="sets", exact=False, rng=1).exact
    with pytest.raises(BudgetExceededError):
        cutnorm(k, norm="pm", exact=False)

    from src.core import cutnorm as cutnorm_module

    monkeypatch.setattr(cutnorm_module.settings, "CUTNORM_EXACT_MAX_TYPES", 3)
    with pytest.raises(BudgetExceededError) as excinfo:
        cutnorm_sets_exact(k)
    assert excinfo.value.size == 4 and excinfo.value.limit == 3
    assert not cutnorm(k).exact


def test_cut_distance_of_relabelled_matrix_is_zero():
    A = WeightMatrix.dense(np.array([[0.0, 1.0, 0.0, 2.0], [1.0, 0.0, 3.0, 0.0], [0.0, 3.0, 0.0, 1.0], [2.0, 0.0, 1.0, 0.0]]))
    perm = np.array([3, 1, 0, 2])
    result = cut_distance(A, A.permuted(perm))
    assert result.value == 0.0
    assert result.exact
    assert cut_distance(A, A).value == 0.0


def test_cut_distance_bounded_by_identity_alignment():
    gen = np.random.default_rng(9)
    a = np.triu(gen.uniform(0, 2, size=(5, 5)), 1)
    b = np.triu(gen.uniform(0, 2, size=(5, 5)), 1)
    A = WeightMatrix.dense(a + a.T)
    B = WeightMatrix.dense(b + b.T)
    identity = cutnorm_sets_exact(StepKernel.signed_kernel(np.full(5, 0.2), A.to_dense() - B.to_dense())).value
    result = cut_distance(A, B)
    assert 0.0 <= result.value <= identity + 1e-12
    assert sorted(result.permutation) == list(range(5))


def test_cut_distance_falls_back_to_annealing(monkeypatch: pytest.MonkeyPatch):
    from src.core import cutnorm as cutnorm_module

    monkeypatch.setattr(cutnorm_module.settings, "EXHAUSTIVE_PERMUTATION_MAX_N", 3)
    A = WeightMatrix.constant(5, 1.0)
    result = cut_distance(A, A, budget="exhaustive", steps=50, rng=0)
    assert not result.exact
    assert result.value == 0.0


def test_cut_distance_requires_equal_sizes():
    with pytest.raises(DimensionMismatchError):
        cut_distance(WeightMatrix.constant(3, 1.0), WeightMatrix.constant(4, 1.0))


def test_cut_norms_invariant_under_type_relabelling():
    gen = np.random.default_rng(21)
    for m in (3, 4, 5):
        k = _random_signed(gen, m)
        perm = gen.permutation(m)
        relabelled = StepKernel.signed_kernel(k.masses[perm], k.values[np.ix_(perm, perm)])
        assert cutnorm_sets_exact(relabelled).value == pytest.approx(cutnorm_sets_exact(k).value, abs=1e-12)
        assert cutnorm_pm_exact(relabelled).value == pytest.approx(cutnorm_pm_exact(k).value, abs=1e-12)


def test_cut_distance_is_symmetric():
    gen = np.random.default_rng(23)
    a = np.triu(gen.uniform(0, 2, size=(5, 5)), 1)
    b = np.triu(gen.uniform(0, 2, size=(5, 5)), 1)
    A = WeightMatrix.dense(a + a.T)
    B = WeightMatrix.dense(b + b.T)
    assert cut_distance(A, B).value == pytest.approx(cut_distance(B, A).value, abs=1e-12)


def test_annealing_scores_only_the_final_alignment_exactly(monkeypatch: pytest.MonkeyPatch):
    from src.core import cutnorm as cutnorm_module

    monkeypatch.setattr(cutnorm_module.settings, "EXHAUSTIVE_PERMUTATION_MAX_N", 3)
    calls = []
    exact = cutnorm_module.cutnorm_sets_exact

    def counting(k):
        calls.append(k.m)
        return exact(k)

    monkeypatch.setattr(cutnorm_module, "cutnorm_sets_exact", counting)
    gen = np.random.default_rng(29)
    a = np.triu(gen.uniform(0, 2, size=(6, 6)), 1)
    b = np.triu(gen.uniform(0, 2, size=(6, 6)), 1)
    A = WeightMatrix.dense(a + a.T)
    B = WeightMatrix.dense(b + b.T)
    result = cut_distance(A, B, budget="anneal", steps=40, rng=3)
    assert calls == [6]
    perm = np.array(result.permutation)
    aligned = A.to_dense()[np.ix_(perm, perm)] - B.to_dense()
    assert result.value == pytest.approx(exact(StepKernel.signed_kernel(np.full(6, 1 / 6), aligned)).value, abs=1e-12)
