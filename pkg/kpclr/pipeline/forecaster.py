"""A fitted kernel forecaster: everything needed to score a new case

Scoring needs the standardized training matrix as well as the coefficients:
a new case is compared to every training case through the kernel, centered
with the training statistics, projected onto the retained components, and
only then passed to the regression.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from hashlib import sha256
from typing import Any, Dict, Optional, Tuple
import logging

import numpy as np

from . import DataValidationError, Matrix, Vector, as_matrix
from .data import standardize_matrix
from .decomposition import KpcBasis, project_new
from .glm import predict_values
from .kernels import CenteredKernel, center_new_rows, kernel_rows
from .schemas import CostPair, ForecasterPayload, GlmFit, KernelSpec, StandardizationParams

log = logging.getLogger("kpclr.pipeline.forecaster")

FORMAT_VERSION = 1


def matrix_fingerprint(X: Matrix) -> str:
    X = np.ascontiguousarray(X, dtype=np.float64)
    return sha256(repr(X.shape).encode() + X.tobytes()).hexdigest()


@dataclass(frozen=True, eq=False)
class FittedForecaster:
    kernel: KernelSpec
    train_matrix: Matrix
    centering: CenteredKernel
    basis: KpcBasis
    fit: GlmFit
    costs: CostPair
    threshold: float
    standardization: Optional[StandardizationParams] = None
    rho: Optional[float] = None
    provenance: Dict[str, Any] = field(default_factory=dict)
    version: int = FORMAT_VERSION

    def __post_init__(self) -> None:
        r = self.basis.eigenvectors.shape[1]
        if self.fit.rank != r:
            raise DataValidationError(f"Fit has {self.fit.rank} slopes for a basis of rank {r}")
        if self.basis.eigenvectors.shape[0] != self.train_matrix.shape[0]:
            raise DataValidationError("Basis and training matrix disagree on the number of cases")
        if self.centering.values is not None:
            object.__setattr__(self, 'centering', self.centering.statistics())

    @property
    def rank(self) -> int:
        return self.basis.eigenvectors.shape[1]

    @property
    def feature_names(self) -> Tuple[str, ...]:
        if self.standardization is None:
            return ()
        return self.standardization.input_names

    def is_training_data(self, X_standardized: Matrix) -> bool:
        return matrix_fingerprint(X_standardized) == matrix_fingerprint(self.train_matrix)

    def scores(self, X_standardized) -> Matrix:
        """Component scores of standardized cases, one row per case"""
        rows = kernel_rows(X_standardized, self.train_matrix, self.kernel)
        return project_new(center_new_rows(rows, self.centering), self.basis, self.rank)

    def predict_standardized(self, X_standardized) -> Tuple[Vector, Optional[np.ndarray]]:
        """Fitted values and, for a logistic fit, forecast classes"""
        values = np.atleast_1d(predict_values(self.fit, self.scores(X_standardized)))
        if self.fit.link != 'logit':
            return values, None
        return values, (values > self.threshold).astype(np.int64)

    def predict(self, X_raw) -> Tuple[Vector, Optional[np.ndarray]]:
        """Standardize raw encoded cases with the stored parameters, then predict"""
        if self.standardization is None:
            raise DataValidationError("This forecaster has no standardization parameters")
        X_raw = np.asarray(X_raw, dtype=np.float64)
        if not X_raw.size:
            return np.empty(0), (np.empty(0, dtype=np.int64) if self.fit.link == 'logit' else None)
        return self.predict_standardized(standardize_matrix(X_raw, self.standardization))

    def to_payload(self) -> ForecasterPayload:
        return ForecasterPayload(
            standardization=self.standardization, kernel=self.kernel, train_matrix=self.train_matrix,
            column_means=self.centering.column_means, grand_mean=self.centering.grand_mean,
            eigenvalues=self.basis.eigenvalues, eigenvectors=self.basis.eigenvectors,
            fit=self.fit, costs=self.costs, threshold=self.threshold, rho=self.rho,
            provenance=self.provenance)

    @classmethod
    def from_payload(cls, payload: ForecasterPayload, version: int = FORMAT_VERSION) -> FittedForecaster:
        n = payload.train_matrix.shape[0]
        eigenvectors = payload.eigenvectors.reshape(n, -1)
        return cls(
            kernel=payload.kernel, train_matrix=as_matrix(payload.train_matrix.reshape(n, -1)),
            centering=CenteredKernel(None, payload.column_means, payload.grand_mean),
            basis=KpcBasis(payload.eigenvalues, eigenvectors), fit=payload.fit, costs=payload.costs,
            threshold=payload.threshold, standardization=payload.standardization, rho=payload.rho,
            provenance=payload.provenance, version=version)
