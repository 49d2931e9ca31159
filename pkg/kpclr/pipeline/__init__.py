"""Kernel principal-components regression pipeline: shared types and errors"""
from typing import Dict, Optional

import numpy as np
from numpy.typing import NDArray

Vector = NDArray[np.float64]
Matrix = NDArray[np.float64]
IndexArray = NDArray[np.int64]

# Exit codes of the command-line surface
EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_NO_CANDIDATE = 3


class KpcError(Exception):
    exit_code = EXIT_VALIDATION


class DataValidationError(KpcError, ValueError):
    """Inputs do not satisfy a documented precondition"""
    exit_code = EXIT_VALIDATION


class ModelFileError(DataValidationError):
    """A saved model is corrupt, tampered with, or of an unsupported version"""


class NumericalFailure(KpcError, ArithmeticError):
    exit_code = EXIT_NUMERICAL


class SelectionFailure(KpcError):
    """No candidate passed the cost-ratio cut"""
    exit_code = EXIT_NO_CANDIDATE

    def __init__(self, message: str, nearest: Optional[Dict[str, float]] = None) -> None:
        super().__init__(message)
        self.nearest = nearest or {}


def as_matrix(val, name: str = "X") -> Matrix:
    arr = np.asarray(val, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    if arr.ndim != 2:
        raise DataValidationError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataValidationError(f"{name} contains non-finite values")
    return arr


def as_vector(val, name: str = "y") -> Vector:
    arr = np.asarray(val, dtype=np.float64)
    if arr.ndim != 1:
        arr = arr.ravel()
    if not np.all(np.isfinite(arr)):
        raise DataValidationError(f"{name} contains non-finite values")
    return arr
