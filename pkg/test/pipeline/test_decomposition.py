from math import factorial

import numpy as np
import pytest

from kpclr.pipeline import DataValidationError, NumericalFailure
from kpclr.pipeline.decomposition import (
    KpcBasis, eigendecompose, project_new, project_training, select_rank)
from kpclr.pipeline.kernels import (
    CenteredKernel, build_kernel_matrix, center_kernel_matrix, center_new_rows, kernel_rows)
from kpclr.pipeline.schemas import KernelSpec

from .test_kernels import random_kernels


def decomposed(X, spec):
    ck = center_kernel_matrix(build_kernel_matrix(X, spec))
    return ck, eigendecompose(ck)


def test_spectral_reconstruction():
    for X, spec in random_kernels():
        ck, basis = decomposed(X, spec)
        top = basis.eigenvalues[0]
        assert np.all(np.diff(basis.eigenvalues) <= 0)
        assert np.all(basis.eigenvalues >= 0)
        rebuilt = (basis.eigenvectors * basis.eigenvalues) @ basis.eigenvectors.T
        assert np.abs(rebuilt - ck.values).max() <= 1e-8 * top


def test_orientation_rule():
    for X, spec in random_kernels(count=20, seed=13):
        _, basis = decomposed(X, spec)
        for k in range(basis.positive_count):
            column = basis.eigenvectors[:, k]
            assert column[np.argmax(np.abs(column))] > 0


def test_projection_gram_is_diagonal():
    for X, spec in random_kernels(seed=14):
        ck, basis = decomposed(X, spec)
        r = select_rank(basis, 0.95)
        scores = project_training(ck, basis, r).scores
        top = basis.eigenvalues[0]
        np.testing.assert_allclose(
            scores.T @ scores, np.diag(basis.eigenvalues[:r]), rtol=1e-6, atol=1e-6 * top)
        np.testing.assert_allclose(scores.mean(axis=0), 0, atol=1e-8 * np.sqrt(top))


def test_new_case_projection_matches_training():
    for X, spec in random_kernels(count=100, seed=15):
        ck, basis = decomposed(X, spec)
        r = select_rank(basis, 0.95)
        training = project_training(ck, basis, r).scores
        rows = center_new_rows(kernel_rows(X, X, spec), ck.statistics())
        assert np.abs(project_new(rows, basis, r) - training).max() <= 1e-8 * max(1.0, np.sqrt(basis.eigenvalues[0]))


def anova_features(X, gamma, terms=30):
    """Explicit feature map of the degree-one ANOVA kernel, truncated"""
    columns = []
    for j in range(X.shape[1]):
        x = X[:, j]
        for n in range(terms):
            columns.append(np.exp(-gamma * x ** 2) * np.sqrt((2 * gamma) ** n / factorial(n)) * x ** n)
    return np.column_stack(columns)


def test_matches_explicit_feature_space():
    rng = np.random.default_rng(16)
    X = rng.uniform(-2, 2, size=(40, 2))
    spec = KernelSpec(family='anova', gamma=0.1, degree=1)
    ck, basis = decomposed(X, spec)
    phi = anova_features(X, 0.1)
    phi -= phi.mean(axis=0)
    _, singular, vt = np.linalg.svd(phi, full_matrices=False)
    np.testing.assert_allclose(basis.eigenvalues[:3], singular[:3] ** 2, rtol=1e-8)
    scores = project_training(ck, basis, 3).scores
    explicit = phi @ vt[:3].T
    for k in range(3):
        sign = np.sign(explicit[:, k] @ scores[:, k])
        np.testing.assert_allclose(scores[:, k], sign * explicit[:, k], atol=1e-7 * singular[0])


def fixed_basis(eigenvalues):
    eigenvalues = np.asarray(eigenvalues, dtype=np.float64)
    return KpcBasis(eigenvalues, np.eye(len(eigenvalues)))


def test_select_rank():
    basis = fixed_basis([5, 3, 2, 0])
    assert select_rank(basis, 0.5) == 1
    assert select_rank(basis, 0.51) == 2
    assert select_rank(basis, 0.8) == 2
    assert select_rank(basis, 0.81) == 3
    assert select_rank(basis, 1.0) == 3, "never beyond the positive eigenvalues"


def test_select_rank_validates_rho():
    basis = fixed_basis([2, 1])
    for rho in (0, -0.1, 1.2):
        with pytest.raises(DataValidationError):
            select_rank(basis, rho)
    with pytest.raises(NumericalFailure):
        select_rank(fixed_basis([0, 0]), 0.5)


def test_rank_beyond_positive_eigenvalues_rejected():
    X = np.array([[0.0], [0.0], [1.0]])
    ck, basis = decomposed(X, KernelSpec(family='radial', gamma=1))
    assert basis.positive_count == 1
    with pytest.raises(DataValidationError):
        project_training(ck, basis, 2)


def test_indefinite_kernel_rejected():
    values = np.array([[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(NumericalFailure):
        eigendecompose(CenteredKernel(values, np.zeros(2), 0.0))


def test_spectrum_export(tmp_path, toy_X):
    _, basis = decomposed(toy_X, KernelSpec(family='radial', gamma=0.01))
    frame = basis.spectrum()
    assert list(frame.columns) == ['k', 'eigenvalue', 'share', 'cumulative']
    assert frame.cumulative.iloc[-1] == pytest.approx(1.0)
    basis.export_spectrum(tmp_path / "spectrum.csv")
    assert (tmp_path / "spectrum.csv").exists()


def test_truncate_keeps_leading_columns(toy_X):
    _, basis = decomposed(toy_X, KernelSpec(family='anova', gamma=0.01, degree=2))
    truncated = basis.truncate(1)
    assert truncated.eigenvectors.shape == (3, 1)
    np.testing.assert_array_equal(truncated.eigenvectors[:, 0], basis.eigenvectors[:, 0])
