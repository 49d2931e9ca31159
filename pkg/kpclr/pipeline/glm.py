"""Case-weighted logistic regression and least squares on component scores

Costs enter a fit in one of two ways. The kernel forecaster gives each case a
weight from the cost of misclassifying it and classifies the weighted fit at
0.5. The conventional logistic baseline is fit unweighted and classified at a
threshold derived from the costs.
"""
from __future__ import annotations

from typing import Optional, Sequence, Tuple, Union
import logging

import numpy as np
from scipy import linalg
from scipy.special import expit, log_expit, logit

from . import DataValidationError, NumericalFailure, Matrix, Vector, as_matrix, as_vector
from .schemas import CostPair, ConfusionReport, FittedValueSummary, GlmFit

log = logging.getLogger("kpclr.pipeline.glm")

WEIGHTED_FIT_THRESHOLD = 0.5
MAX_ITERATIONS = 100
DEVIANCE_TOLERANCE = 1e-10
GRADIENT_TOLERANCE = 1e-10
SEPARATION_COEFFICIENT = 30.0
SEPARATION_PROBABILITY = 1e-10
MAX_HALVINGS = 30


def cost_weights(y, costs: CostPair) -> Vector:
    """cost_fp for actual negatives, cost_fn for actual positives, rescaled to mean 1"""
    y = as_vector(y)
    if len(np.unique(y)) < 2:
        raise DataValidationError("Cost weights need both response classes")
    raw = np.where(y == 1, costs.cost_fn, costs.cost_fp)
    return raw / raw.mean()


def threshold_from_costs(costs: CostPair) -> float:
    """Fitted-probability threshold above which a case is forecast positive"""
    return costs.cost_fp / (costs.cost_fp + costs.cost_fn)


def _design(X: Matrix) -> Matrix:
    return np.column_stack([np.ones(X.shape[0]), X])


def _check_problem(X, y, name: str = "design") -> Tuple[Matrix, Vector]:
    X = as_matrix(X, name) if np.size(X) else np.empty((len(y), 0))
    y = as_vector(y)
    if X.shape[0] != len(y):
        raise DataValidationError(f"{X.shape[0]} rows in the {name} but {len(y)} responses")
    if X.shape[1] >= X.shape[0]:
        raise NumericalFailure(f"{X.shape[1]} regressors for {X.shape[0]} cases is ill-posed")
    return X, y


def _deviance(eta: Vector, y: Vector, w: Vector) -> float:
    return float(-2 * np.sum(w * (y * log_expit(eta) + (1 - y) * log_expit(-eta))))


def fit_weighted_logistic(
        X, y, w=None, max_iter: int = MAX_ITERATIONS, tol: float = DEVIANCE_TOLERANCE) -> GlmFit:
    """Minimize sum_i w_i [-y_i log p_i - (1 - y_i) log(1 - p_i)] by IRLS.

    Each iteration solves the weighted least-squares problem of the working
    response, halving the step if the deviance goes up. The fit has converged
    when the relative deviance change is below ``tol`` and the weighted score
    equations hold. Separation is flagged, not fatal.
    """
    X, y = _check_problem(X, y)
    n, r = X.shape
    if not np.all((y == 0) | (y == 1)):
        raise DataValidationError("Logistic responses must be 0 or 1")
    w = np.ones(n) if w is None else as_vector(w, "weights")
    if len(w) != n or np.any(w <= 0):
        raise DataValidationError("Weights must be positive, one per case")
    design = _design(X)
    beta = np.zeros(r + 1)
    beta[0] = logit(np.clip(np.average(y, weights=w), 1e-6, 1 - 1e-6))
    eta = design @ beta
    dev = _deviance(eta, y, w)
    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        p = expit(eta)
        working = w * p * (1 - p)
        hessian = design.T @ (working[:, np.newaxis] * design)
        score = design.T @ (w * (y - p))
        try:
            step = linalg.solve(hessian, score, assume_a='pos')
        except (linalg.LinAlgError, ValueError):
            step = linalg.lstsq(hessian, score)[0]
        for _ in range(MAX_HALVINGS):
            new_eta = design @ (beta + step)
            new_dev = _deviance(new_eta, y, w)
            if np.isfinite(new_dev) and new_dev <= dev * (1 + 1e-12) + 1e-12:
                break
            step = step / 2
        else:
            # no halving lowers the deviance: keep the current coefficients
            log.debug("Step halving exhausted at iteration %d, deviance %.6g", iteration, dev)
            converged = float(np.linalg.norm(score)) <= GRADIENT_TOLERANCE * n
            break
        beta = beta + step
        eta = new_eta
        change = abs(dev - new_dev) / (abs(new_dev) + 0.1)
        dev = new_dev
        gradient_norm = float(np.linalg.norm(design.T @ (w * (y - expit(eta)))))
        if change < tol and gradient_norm <= GRADIENT_TOLERANCE * n:
            converged = True
            break
    p = expit(eta)
    gradient_norm = float(np.linalg.norm(design.T @ (w * (y - p))))
    spread = X.std(axis=0) if r else np.zeros(0)
    separated = bool(
        np.any(np.abs(beta[1:] * spread) > SEPARATION_COEFFICIENT)
        or np.any(np.minimum(p, 1 - p) < SEPARATION_PROBABILITY))
    if not converged:
        log.warning("Logistic fit did not converge after %d iterations (score norm %.3g)", iteration, gradient_norm)
    if separated:
        log.warning("Logistic fit with %d regressors shows separation", r)
    if not np.all(np.isfinite(beta)):
        raise NumericalFailure("Logistic fit produced non-finite coefficients")
    return GlmFit(
        link='logit', coefficients=beta, iterations=iteration, gradient_norm=gradient_norm,
        converged=converged, separated=separated, deviance=dev, log_likelihood=-dev / 2, weights=w)


def fit_linear(X, y) -> GlmFit:
    """Ordinary least squares with an intercept"""
    X, y = _check_problem(X, y)
    n, r = X.shape
    design = _design(X)
    beta, _, rank, _ = linalg.lstsq(design, y)
    if rank < r + 1:
        raise NumericalFailure(f"Least-squares design has rank {rank} < {r + 1}")
    rss = float(np.sum((y - design @ beta) ** 2))
    log_likelihood = -n / 2 * (np.log(2 * np.pi * rss / n) + 1) if rss > 0 else np.inf
    return GlmFit(
        link='identity', coefficients=beta, iterations=1, deviance=rss, log_likelihood=float(log_likelihood))


def linear_predictor(fit: GlmFit, scores) -> Union[float, Vector]:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape[-1] != fit.rank:
        raise DataValidationError(f"Scores have {scores.shape[-1]} columns, the fit has {fit.rank}")
    return fit.intercept + scores @ fit.slopes


def predict_values(fit: GlmFit, scores) -> Union[float, Vector]:
    """Fitted probabilities (logit link) or fitted means (identity link)"""
    eta = linear_predictor(fit, scores)
    return expit(eta) if fit.link == 'logit' else eta


def predict_and_classify(fit: GlmFit, scores, threshold: float):
    """Probability and class; the class is positive only if the probability exceeds the threshold"""
    probability = predict_values(fit, scores)
    forecast = (np.asarray(probability) > threshold).astype(np.int64)
    if np.ndim(probability) == 0:
        return float(probability), int(forecast)
    return probability, forecast


def confusion_report(
        predicted: Sequence[int], actual: Sequence[int], costs: CostPair,
        label: str = 'unlabeled', fitted_values: Optional[Sequence[float]] = None) -> ConfusionReport:
    predicted = np.asarray(predicted).ravel()
    actual = np.asarray(actual).ravel()
    for what, values in (("Forecasts", predicted), ("Outcomes", actual)):
        if not np.all(np.isin(values, (0, 1))):
            raise DataValidationError(f"{what} must be 0 or 1")
    predicted = predicted.astype(np.int64)
    actual = actual.astype(np.int64)
    if len(predicted) != len(actual):
        raise DataValidationError(f"{len(predicted)} forecasts for {len(actual)} outcomes")
    return ConfusionReport(
        tn=int(np.sum((actual == 0) & (predicted == 0))),
        fp=int(np.sum((actual == 0) & (predicted == 1))),
        fn=int(np.sum((actual == 1) & (predicted == 0))),
        tp=int(np.sum((actual == 1) & (predicted == 1))),
        costs=costs, label=label,
        fitted=None if fitted_values is None else FittedValueSummary.from_values(fitted_values))
