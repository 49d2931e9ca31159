"""Eigendecomposition of the centered kernel and projection onto its leading components

Component scores are scaled so column k of the training scores equals
sqrt(lambda_k) u_k; new cases use the same scaling, k~* U Lambda^(-1/2).
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union
import logging

import numpy as np
import pandas as pd
from scipy import linalg

from . import DataValidationError, NumericalFailure, Matrix, Vector
from .kernels import CenteredKernel

log = logging.getLogger("kpclr.pipeline.decomposition")

NEGATIVE_TOLERANCE = 1e-8
SHARE_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class KpcBasis:
    """Eigenpairs sorted by descending eigenvalue, eigenvectors column-wise"""
    eigenvalues: Vector
    eigenvectors: Matrix

    @property
    def positive_count(self) -> int:
        return int(np.count_nonzero(self.eigenvalues > 0))

    @property
    def shares(self) -> Vector:
        total = self.eigenvalues.sum()
        if total <= 0:
            return np.zeros_like(self.eigenvalues)
        return self.eigenvalues / total

    @property
    def cumulative_shares(self) -> Vector:
        return np.cumsum(self.shares)

    def truncate(self, r: int) -> KpcBasis:
        check_rank(self, r)
        return KpcBasis(self.eigenvalues[:r].copy(), self.eigenvectors[:, :r].copy())

    def spectrum(self) -> pd.DataFrame:
        return pd.DataFrame(dict(
            k=np.arange(1, len(self.eigenvalues) + 1),
            eigenvalue=self.eigenvalues,
            share=self.shares,
            cumulative=self.cumulative_shares))

    def export_spectrum(self, path: Union[str, Path]) -> None:
        self.spectrum().to_csv(path, index=False, float_format='%.17g')


@dataclass(frozen=True, eq=False)
class PcRegressors:
    scores: Matrix
    basis: KpcBasis

    @property
    def rank(self) -> int:
        return self.scores.shape[1]


def _orient(vectors: Matrix) -> Matrix:
    """Flip each column so its largest-magnitude entry (lowest index on ties) is positive"""
    vectors = vectors.copy()
    for k in range(vectors.shape[1]):
        magnitude = np.abs(vectors[:, k])
        first = np.flatnonzero(magnitude >= magnitude.max() * (1 - 1e-9))[0]
        if vectors[first, k] < 0:
            vectors[:, k] *= -1
    return vectors


def eigendecompose(ck: CenteredKernel) -> KpcBasis:
    """Full symmetric eigendecomposition of K~.

    Eigenvalues below -1e-8·lambda_1 mean the kernel is not positive
    semidefinite and are rejected. Smaller negatives, and positives below the
    numerical rank tolerance 10·N·eps·lambda_1, are set to zero.
    """
    values = ck.values
    n = values.shape[0]
    eigenvalues, eigenvectors = linalg.eigh(values)
    order = np.argsort(eigenvalues, kind='stable')[::-1]
    eigenvalues = eigenvalues[order]
    eigenvectors = eigenvectors[:, order]
    top = max(float(eigenvalues[0]), 0.0)
    floor = 10 * n * np.finfo(np.float64).eps * max(top, float(np.abs(values).max()))
    if eigenvalues[-1] < -(NEGATIVE_TOLERANCE * top + floor):
        raise NumericalFailure(
            f"Centered kernel has eigenvalue {eigenvalues[-1]:.3g} against a largest of {top:.3g}; "
            "the kernel is not positive semidefinite")
    eigenvalues = np.where(eigenvalues > floor, eigenvalues, 0.0)
    log.debug("Kernel of size %d has %d positive eigenvalues", n, np.count_nonzero(eigenvalues))
    return KpcBasis(eigenvalues, _orient(eigenvectors))


def select_rank(basis: KpcBasis, rho: float) -> int:
    """Smallest number of leading components whose cumulative share reaches rho"""
    if not 0 < rho <= 1:
        raise DataValidationError(f"rho must be in (0, 1], got {rho}")
    positive = basis.positive_count
    if not positive:
        raise NumericalFailure("Every eigenvalue is zero; there are no components to retain")
    cumulative = basis.cumulative_shares[:positive]
    r = int(np.searchsorted(cumulative, rho - SHARE_TOLERANCE, side='left')) + 1
    return min(r, positive)


def check_rank(basis: KpcBasis, r: int) -> None:
    if not 1 <= r <= basis.positive_count:
        raise DataValidationError(
            f"Rank {r} must be between 1 and the {basis.positive_count} positive eigenvalues")


def project_training(ck: CenteredKernel, basis: KpcBasis, r: int) -> PcRegressors:
    """X' = K~ U_r Lambda_r^(-1/2), whose column k has squared norm lambda_k"""
    check_rank(basis, r)
    scores = ck.values @ basis.eigenvectors[:, :r] / np.sqrt(basis.eigenvalues[:r])
    return PcRegressors(scores, basis)


def project_new(k_centered, basis: KpcBasis, r: int) -> Matrix:
    """Scores of new cases from their centered kernel rows, one row per case"""
    check_rank(basis, r)
    k_centered = np.atleast_2d(np.asarray(k_centered, dtype=np.float64))
    if k_centered.shape[1] != basis.eigenvectors.shape[0]:
        raise DataValidationError(
            f"Kernel rows have {k_centered.shape[1]} entries, the basis has {basis.eigenvectors.shape[0]}")
    return k_centered @ basis.eigenvectors[:, :r] / np.sqrt(basis.eigenvalues[:r])
