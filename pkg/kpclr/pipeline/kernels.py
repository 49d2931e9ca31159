"""Radial and ANOVA kernels, kernel matrices and their double centering"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union
import logging

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist, pdist, squareform

from . import DataValidationError, NumericalFailure, Matrix, Vector, as_matrix, as_vector
from .schemas import KernelSpec

log = logging.getLogger("kpclr.pipeline.kernels")

SYMMETRY_TOLERANCE = 1e-10


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    values: Matrix
    spec: KernelSpec
    X: Matrix

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class CenteredKernel:
    """The double-centered kernel and the training statistics used to center new rows.

    A saved forecaster keeps only the statistics, with ``values`` left unset.
    """
    values: Optional[Matrix]
    column_means: Vector
    grand_mean: float

    @property
    def n(self) -> int:
        return len(self.column_means)

    def statistics(self) -> CenteredKernel:
        return CenteredKernel(None, self.column_means, self.grand_mean)


def kernel_value(x, x_prime, spec: KernelSpec) -> float:
    """Evaluate the kernel between two cases.

    radial: exp(-gamma ||x - x'||^2)
    anova: (sum_j exp(-gamma (x_j - x'_j)^2))^d
    """
    x = as_vector(x, "x")
    x_prime = as_vector(x_prime, "x'")
    if x.shape != x_prime.shape or not len(x):
        raise DataValidationError(f"Cannot compare vectors of length {len(x)} and {len(x_prime)}")
    sq = (x - x_prime) ** 2
    if spec.family == 'radial':
        return float(np.exp(-spec.gamma * np.sum(sq)))
    # np.sum is pairwise, which keeps the inner sum accurate for large p
    return float(np.sum(np.exp(-spec.gamma * sq)) ** spec.degree)


def _anova_sum(distance, XA: Matrix, XB: Matrix, gamma: float):
    total = None
    for j in range(XA.shape[1]):
        term = np.exp(-gamma * distance(XA[:, [j]], XB[:, [j]]))
        total = term if total is None else total + term
    return total


def build_kernel_matrix(X, spec: KernelSpec) -> KernelMatrix:
    """Assemble the N×N kernel matrix from the i<j pairs, mirrored"""
    X = as_matrix(X)
    n, p = X.shape
    if n < 2:
        raise DataValidationError("A kernel matrix needs at least two cases")
    if spec.family == 'radial':
        values = squareform(np.exp(-spec.gamma * pdist(X, 'sqeuclidean')))
        np.fill_diagonal(values, 1.0)
    else:
        values = squareform(_anova_sum(lambda a, b: pdist(a, 'sqeuclidean'), X, X, spec.gamma))
        np.fill_diagonal(values, float(p))
        values = values ** spec.degree
    return KernelMatrix(values, spec, X)


def kernel_rows(X_new, X_train, spec: KernelSpec) -> Matrix:
    """Raw kernel values between each new case (rows) and each training case (columns)"""
    X_new = as_matrix(X_new, "new cases") if np.size(X_new) else np.empty((0, np.shape(X_train)[1]))
    X_train = as_matrix(X_train, "training cases")
    if X_new.shape[1] != X_train.shape[1]:
        raise DataValidationError(
            f"New cases have {X_new.shape[1]} columns, training data has {X_train.shape[1]}")
    if spec.family == 'radial':
        return np.exp(-spec.gamma * cdist(X_new, X_train, 'sqeuclidean'))
    if not len(X_new):
        return np.empty((0, X_train.shape[0]))
    return _anova_sum(lambda a, b: cdist(a, b, 'sqeuclidean'), X_new, X_train, spec.gamma) ** spec.degree


def center_kernel_matrix(K: Union[KernelMatrix, Matrix]) -> CenteredKernel:
    """K~ = K - (1/N)JK - (1/N)KJ + (1/N²)JKJ, with J the all-ones matrix"""
    values = K.values if isinstance(K, KernelMatrix) else as_matrix(K, "K")
    if values.shape[0] != values.shape[1]:
        raise DataValidationError(f"Kernel matrix must be square, got {values.shape}")
    scale = max(1.0, float(np.abs(values).max()))
    if np.abs(values - values.T).max() > SYMMETRY_TOLERANCE * scale:
        raise NumericalFailure("Kernel matrix is not symmetric")
    column_means = values.mean(axis=0)
    grand_mean = float(column_means.mean())
    centered = values - column_means[np.newaxis, :] - column_means[:, np.newaxis] + grand_mean
    # Exact symmetry, whatever the rounding of the two mean terms
    centered = (centered + centered.T) / 2
    return CenteredKernel(centered, column_means, grand_mean)


def center_new_rows(k_new, stats: CenteredKernel) -> Matrix:
    """Center raw kernel rows of new cases consistently with the training centering.

    k~* = k* - mean(k*) - (column means of K) + (grand mean of K), so that a
    training case pushed through this path reproduces its row of K~.
    """
    k_new = np.atleast_2d(np.asarray(k_new, dtype=np.float64))
    if k_new.shape[1] != stats.n:
        raise DataValidationError(f"Kernel rows have {k_new.shape[1]} entries, training data has {stats.n}")
    return k_new - k_new.mean(axis=1, keepdims=True) - stats.column_means[np.newaxis, :] + stats.grand_mean


def new_point_kernel_row(x_new, X_train, spec: KernelSpec, stats: CenteredKernel) -> Vector:
    """The centered 1×N kernel row of a standardized new case"""
    x_new = as_vector(x_new, "x*")
    return center_new_rows(kernel_rows(x_new[np.newaxis, :], X_train, spec), stats)[0]


def export_kernel_csv(values: Matrix, path: Union[str, Path]) -> None:
    """Write a kernel matrix at full precision"""
    pd.DataFrame(values).to_csv(path, index=False, header=False, float_format='%.17g')
