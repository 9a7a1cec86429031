import numpy as np
import pytest

from clusterpca.errors import ValidationError
from clusterpca.matrix import (
    DataMatrix,
    center_columns,
    correlation_abs,
    eigenvalues,
    fix_signs,
    pca,
    random_orthonormal,
)


def _panel(seed: int = 3, n: int = 40, p: int = 6) -> DataMatrix:
    rng = np.random.default_rng(seed)
    Xc, _ = center_columns(DataMatrix.from_array(rng.standard_normal((n, p))))
    return Xc


def test_data_matrix_generates_column_ids() -> None:
    X = DataMatrix.from_array(np.zeros((3, 2)))
    assert X.column_ids == ("x1", "x2")
    assert (X.n, X.p) == (3, 2)


def test_data_matrix_rejects_single_row_and_non_finite() -> None:
    with pytest.raises(ValidationError):
        DataMatrix.from_array(np.zeros((1, 4)))
    values = np.ones((4, 3))
    values[2, 1] = np.nan
    with pytest.raises(ValidationError, match="row 2, column b"):
        DataMatrix.from_array(values, ["a", "b", "c"])
    with pytest.raises(ValidationError, match="2 column ids for 3 columns"):
        DataMatrix.from_array(values, ["a", "b"])


def test_center_columns_zero_means() -> None:
    rng = np.random.default_rng(0)
    X = DataMatrix.from_array(rng.normal(5.0, 2.0, (30, 4)))
    Xc, means = center_columns(X)
    assert np.allclose(Xc.values.mean(axis=0), 0.0, atol=1e-12)
    assert np.allclose(Xc.values + means, X.values)


def test_pca_matches_brute_force_eigensolve_on_3x3() -> None:
    X = np.array([[2.0, 0.0, 1.0], [-1.0, 1.0, 0.0], [-1.0, -1.0, -1.0]])
    fac = pca(X, 3)
    eigvals, eigvecs = np.linalg.eigh(X.T @ X / 3)
    order = np.argsort(eigvals)[::-1]
    assert np.allclose(fac.eigenvalues, eigvals[order], atol=1e-10)
    assert np.allclose(fac.loadings, fix_signs(eigvecs[:, order]), atol=1e-8)


def test_pca_loadings_orthonormal_and_full_rank_reconstructs() -> None:
    Xc = _panel()
    fac = pca(Xc, 4)
    assert np.allclose(fac.loadings.T @ fac.loadings, np.eye(4), atol=1e-8)
    assert np.allclose(fac.scores, Xc.values @ fac.loadings)
    assert fac.eigenvalues.size == 6
    assert np.allclose(pca(Xc, 6).reconstruct(), Xc.values, atol=1e-10)


def test_pca_ignores_row_order() -> None:
    X = _panel(seed=8)
    order = np.random.default_rng(1).permutation(X.n)
    fac, shuffled = pca(X, 3), pca(X.rows(order), 3)
    assert np.allclose(fac.loadings, shuffled.loadings, atol=1e-10)
    assert np.allclose(fac.eigenvalues, shuffled.eigenvalues)
    assert np.allclose(fac.scores[order], shuffled.scores, atol=1e-10)


def test_pca_residual_is_orthogonal_to_loadings() -> None:
    X = _panel(seed=9, n=30, p=8)
    fac = pca(X, 3)
    residual = X.values - fac.reconstruct()
    assert np.allclose(residual @ fac.loadings, 0.0, atol=1e-10)


def test_pca_rejects_out_of_range_rank() -> None:
    Xc = _panel(n=5, p=8)
    with pytest.raises(ValidationError):
        pca(Xc, 0)
    with pytest.raises(ValidationError):
        pca(Xc, 6)


def test_eigenvalues_are_sorted_and_sum_to_total_variance() -> None:
    Xc = _panel(seed=9)
    eigs = eigenvalues(Xc)
    assert np.all(np.diff(eigs) <= 1e-12)
    assert np.isclose(eigs.sum(), np.sum(Xc.values ** 2) / Xc.n)


def test_fix_signs_makes_largest_entry_positive() -> None:
    L = np.array([[0.1, -0.9], [-0.8, 0.2], [0.3, 0.1]])
    fixed = fix_signs(L)
    assert fixed[1, 0] == 0.8
    assert fixed[0, 1] == 0.9


def test_correlation_abs_names_constant_column() -> None:
    values = np.column_stack([np.arange(5.0), np.full(5, 2.0), np.arange(5.0) ** 2])
    X = DataMatrix.from_array(values, ["a", "flat", "c"])
    with pytest.raises(ValidationError, match="flat"):
        correlation_abs(X)
    corr = correlation_abs(X, allow_degenerate=True)
    assert corr[1, 0] == 0.0 and corr[0, 1] == 0.0
    assert np.allclose(np.diag(corr), 1.0)


def test_random_orthonormal_is_orthonormal_and_seeded() -> None:
    Q = random_orthonormal(20, 5, 42)
    assert np.allclose(Q.T @ Q, np.eye(5), atol=1e-10)
    assert np.array_equal(Q, random_orthonormal(20, 5, 42))
    with pytest.raises(ValidationError):
        random_orthonormal(3, 4, 0)
