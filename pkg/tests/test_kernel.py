import numpy as np
import pytest

from src.core.errors import BudgetExceededError, DimensionMismatchError, KernelError
from src.core.kernel import (
    StepKernel,
    WeightMatrix,
    apply_T,
    decompose_irreducible,
    difference,
    discretize,
    eliminate_large_entries,
    is_irreducible,
    kernel_integral,
    l1_norm,
    marginal,
    operator_norm,
    scale,
    truncate,
)


def _random_kernel(gen: np.random.Generator, m: int) -> StepKernel:
    upper = np.triu(gen.uniform(0.1, 3.0, size=(m, m)))
    return StepKernel(masses=gen.dirichlet(np.ones(m)), values=upper + np.triu(upper, 1).T)


def test_step_kernel_rejects_bad_masses():
    with pytest.raises(KernelError, match="sum to 1"):
        StepKernel(masses=[0.5, 0.4], values=np.ones((2, 2)))
    with pytest.raises(KernelError, match="strictly positive"):
        StepKernel(masses=[1.0, 0.0], values=np.ones((2, 2)))


def test_step_kernel_rejects_asymmetry_and_negativity():
    with pytest.raises(KernelError, match="symmetric"):
        StepKernel.uniform(np.array([[0.0, 1.0], [2.0, 0.0]]))
    with pytest.raises(KernelError, match="nonnegative"):
        StepKernel.uniform(np.array([[0.0, -1.0], [-1.0, 0.0]]))
    signed = StepKernel.uniform(np.array([[0.0, -1.0], [-1.0, 0.0]]), signed=True)
    assert signed.signed


def test_step_kernel_shape_mismatch():
    with pytest.raises(DimensionMismatchError):
        StepKernel(masses=[0.5, 0.5], values=np.ones((3, 3)))


def test_step_kernel_arrays_are_read_only():
    k = StepKernel.constant(2.0, m=2)
    with pytest.raises(ValueError):
        k.values[0, 0] = 5.0


def test_marginal_and_apply_t():
    k = StepKernel(masses=[0.25, 0.75], values=[[1.0, 2.0], [2.0, 4.0]])
    assert marginal(k).values.tolist() == pytest.approx([1.75, 3.5])
    assert apply_T(k, np.ones(2)).tolist() == pytest.approx([1.75, 3.5])
    with pytest.raises(DimensionMismatchError):
        apply_T(k, np.ones(3))


def test_operator_norm_constant_and_bipartite():
    assert operator_norm(StepKernel.constant(2.5)) == pytest.approx(2.5, abs=1e-12)
    bipartite = StepKernel.uniform(np.array([[0.0, 4.0], [4.0, 0.0]]))
    assert operator_norm(bipartite) == pytest.approx(2.0, abs=1e-9)
    assert operator_norm(StepKernel.constant(0.0, m=3)) == 0.0


def test_operator_norm_matches_dense_eigensolve():
    gen = np.random.default_rng(7)
    for m in (1, 2, 5, 17, 50):
        k = _random_kernel(gen, m)
        root = np.sqrt(k.masses)
        symmetric = root[:, None] * k.values * root[None, :]
        expected = float(np.max(np.abs(np.linalg.eigvalsh(symmetric))))
        assert operator_norm(k) == pytest.approx(expected, abs=1e-8)


def test_truncate_scale_and_difference():
    k = StepKernel.uniform(np.array([[1.0, 5.0], [5.0, 3.0]]))
    assert truncate(k, 2.0).values.tolist() == [[1.0, 2.0], [2.0, 2.0]]
    assert scale(k, 2.0).values.tolist() == [[2.0, 10.0], [10.0, 6.0]]
    diff = difference(k, StepKernel.constant(2.0, m=2))
    assert diff.signed
    assert diff.values.tolist() == [[-1.0, 3.0], [3.0, 1.0]]
    with pytest.raises(KernelError):
        scale(k, -1.0)


def test_integral_bounded_by_l1_norm():
    k = StepKernel.signed_kernel([0.5, 0.5], np.array([[1.0, -2.0], [-2.0, 1.0]]))
    assert kernel_integral(k) == pytest.approx(-0.5)
    assert l1_norm(k) == pytest.approx(1.5)
    assert abs(kernel_integral(k)) <= l1_norm(k)


def test_discretize_midpoint_rule():
    k = discretize(lambda x, y: x + y, 4)
    mids = (np.arange(4) + 0.5) / 4
    assert k.values == pytest.approx(mids[:, None] + mids[None, :])
    assert k.masses.tolist() == [0.25] * 4


def test_decompose_irreducible_reducible_blocks():
    k = StepKernel(masses=[0.2, 0.5, 0.3], values=[[0.0, 0.0, 1.0], [0.0, 2.0, 0.0], [1.0, 0.0, 0.0]])
    decomposition = decompose_irreducible(k)
    assert not decomposition.is_irreducible
    assert [block.types for block in decomposition.blocks] == [(0, 2), (1,)]
    first = decomposition.blocks[0]
    assert first.mass == pytest.approx(0.5)
    assert first.kernel.masses.tolist() == pytest.approx([0.4, 0.6])
    assert first.kernel.values.tolist() == pytest.approx([[0.0, 0.5], [0.5, 0.0]])
    assert decomposition.block_of(2) == 0
    assert bool(decomposition.cross_zero[0, 1])


def test_is_irreducible_for_connected_support():
    assert is_irreducible(StepKernel.uniform(np.array([[0.0, 4.0], [4.0, 0.0]])))
    assert not is_irreducible(StepKernel.uniform(np.array([[3.0, 0.0], [0.0, 0.5]])))


def test_weight_matrix_layouts_agree():
    types = np.array([0, 1, 1, 0])
    table = np.array([[1.0, 2.0], [2.0, 3.0]])
    block = WeightMatrix.block(types, table)
    dense = block.to_dense()
    assert np.all(np.diag(dense) == 0)
    assert dense[0, 1] == 2.0 and dense[1, 2] == 3.0 and dense[0, 3] == 1.0
    from_sparse = WeightMatrix.from_sparse(block.csr, 4)
    assert np.array_equal(from_sparse.to_dense(), dense)
    assert block.max_entry() == 3.0
    assert block.pair_values(np.array([0, 1]), np.array([0, 2])).tolist() == [0.0, 3.0]
    assert np.array_equal(block.scaled(2.0).to_dense(), 2 * dense)


def test_weight_matrix_constant_has_zero_diagonal():
    A = WeightMatrix.constant(3, 1.5)
    assert A.to_dense().tolist() == [[0.0, 1.5, 1.5], [1.5, 0.0, 1.5], [1.5, 1.5, 0.0]]


def test_weight_matrix_refuses_to_densify_large(monkeypatch: pytest.MonkeyPatch):
    from src.core import kernel as kernel_module

    monkeypatch.setattr(kernel_module.settings, "DENSE_MAX_N", 10)
    with pytest.raises(BudgetExceededError):
        WeightMatrix.constant(11, 1.0).to_dense()


def test_weight_matrix_rejects_asymmetric_dense():
    with pytest.raises(KernelError):
        WeightMatrix.dense(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_permuted_relabels_vertices():
    A = WeightMatrix.dense(np.array([[0.0, 1.0, 2.0], [1.0, 0.0, 3.0], [2.0, 3.0, 0.0]]))
    perm = np.array([2, 0, 1])
    assert A.permuted(perm).to_dense()[0, 1] == A.to_dense()[2, 0]


def test_as_kernel_uses_uniform_masses():
    k = WeightMatrix.constant(4, 2.0).as_kernel()
    assert k.masses.tolist() == [0.25] * 4
    assert k.values[0, 0] == 0.0 and k.values[0, 1] == 2.0


def test_eliminate_large_entries_all_layouts():
    dense = WeightMatrix.dense(np.array([[1.0, 5.0, 0.5], [5.0, 0.0, 0.2], [0.5, 0.2, 0.0]]))
    report = eliminate_large_entries(dense, 2.0)
    assert report.removed_count == 3
    assert report.removed_sum == pytest.approx(11.0)
    assert report.matrix.to_dense().tolist() == [[0.0, 0.0, 0.5], [0.0, 0.0, 0.2], [0.5, 0.2, 0.0]]

    sparse_report = eliminate_large_entries(WeightMatrix.from_sparse(dense.csr, 3), 2.0)
    assert np.array_equal(sparse_report.matrix.to_dense(), report.matrix.to_dense())
    assert sparse_report.removed_count == report.removed_count

    block = WeightMatrix.block(np.array([0, 0, 1]), np.array([[4.0, 1.0], [1.0, 0.0]]))
    block_report = eliminate_large_entries(block, 2.0)
    assert block_report.removed_count == 2
    assert block_report.removed_sum == pytest.approx(8.0)
    assert block_report.matrix.max_entry() == 1.0
