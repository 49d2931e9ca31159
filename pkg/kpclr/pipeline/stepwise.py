"""Backward elimination by AIC for an unweighted logistic regression

The baseline picks predictors on the training split, re-estimates on the
validation split and classifies the test split at the cost-derived threshold.
"""
from __future__ import annotations

from typing import List, Sequence, Tuple
import logging

import numpy as np

from . import DataValidationError, NumericalFailure
from .data import Dataset
from .glm import (
    confusion_report, fit_weighted_logistic, predict_and_classify, threshold_from_costs)
from .schemas import BaselineModel, ConfusionReport, CostPair, GlmFit, StepwisePath, StepwiseStep

log = logging.getLogger("kpclr.pipeline.stepwise")


def logistic_aic(X, y, columns: Sequence[int]) -> Tuple[float, GlmFit]:
    """AIC = -2 loglik + 2 (predictors + 1) of the unweighted fit on ``columns``"""
    fit = fit_weighted_logistic(X[:, list(columns)], y)
    return -2 * fit.log_likelihood + 2 * (len(columns) + 1), fit


def _drop_separating(ds: Dataset, columns: List[int], fit: GlmFit) -> Tuple[List[int], List[str]]:
    """Remove the columns with the largest standardized coefficients until the fit is clean"""
    dropped: List[str] = []
    while (fit.separated or not fit.converged) and columns:
        spread = ds.X[:, columns].std(axis=0)
        worst = columns[int(np.argmax(np.abs(fit.slopes * spread)))]
        columns = [c for c in columns if c != worst]
        dropped.append(ds.feature_names[worst])
        log.warning("Dropped %s before stepwise selection: the full fit separates", ds.feature_names[worst])
        fit = fit_weighted_logistic(ds.X[:, columns], ds.y)
    return columns, dropped


def backward_eliminate_aic(train: Dataset) -> StepwisePath:
    """Greedy backward elimination.

    Starting from every predictor, remove at each step the one whose removal
    gives the lowest AIC, as long as that improves on the current AIC. Ties go
    to the lowest column index.
    """
    if train.mode != 'classification':
        raise DataValidationError("The stepwise baseline needs a binary response")
    train.check_both_classes("training data")
    if train.n <= train.p + 1:
        raise NumericalFailure(f"{train.p} predictors need more than {train.p + 1} training cases")
    columns = list(range(train.p))
    _, fit = logistic_aic(train.X, train.y, columns)
    columns, dropped = _drop_separating(train, columns, fit)
    current, _ = logistic_aic(train.X, train.y, columns)
    initial = current
    steps: List[StepwiseStep] = []
    while columns:
        best_aic, best_column = np.inf, None
        for column in columns:
            aic, _ = logistic_aic(train.X, train.y, [c for c in columns if c != column])
            if aic < best_aic:
                best_aic, best_column = aic, column
        if not best_aic < current:
            break
        columns.remove(best_column)
        current = best_aic
        steps.append(StepwiseStep(
            step=len(steps) + 1, removed=train.feature_names[best_column], column=best_column, aic=best_aic))
        log.debug("Removed %s, AIC %.4f", train.feature_names[best_column], best_aic)
    log.info("Stepwise selection kept %d of %d predictors, AIC %.3f -> %.3f",
             len(columns), train.p, initial, current)
    return StepwisePath(
        feature_names=train.feature_names, initial_aic=initial, steps=steps,
        final_columns=tuple(columns), final_aic=current, dropped_for_separation=tuple(dropped))


def fit_baseline(path: StepwisePath, validation: Dataset, costs: CostPair) -> BaselineModel:
    """Re-estimate the selected predictors on the validation split"""
    if validation.feature_names != path.feature_names:
        raise DataValidationError("Validation columns do not match the stepwise path")
    columns = []
    for column in path.final_columns:
        if np.ptp(validation.X[:, column]) > 0:
            columns.append(column)
        else:
            log.warning("Predictor %s is constant in the validation split and was dropped",
                        path.feature_names[column])
    fit = fit_weighted_logistic(validation.X[:, columns], validation.y)
    return BaselineModel(
        feature_names=tuple(path.feature_names[c] for c in columns), columns=tuple(columns),
        coefficients=fit.coefficients, threshold=threshold_from_costs(costs), costs=costs)


def baseline_forecasts(model: BaselineModel, ds: Dataset) -> Tuple[np.ndarray, np.ndarray]:
    """Fitted probabilities and forecast classes of the baseline"""
    fit = GlmFit(link='logit', coefficients=model.coefficients)
    return predict_and_classify(fit, ds.X[:, list(model.columns)], model.threshold)


def fit_and_evaluate_baseline(
        path: StepwisePath, validation: Dataset, test: Dataset,
        costs: CostPair) -> Tuple[BaselineModel, ConfusionReport]:
    model = fit_baseline(path, validation, costs)
    if test.feature_names != path.feature_names:
        raise DataValidationError("Test columns do not match the stepwise path")
    probabilities, forecasts = baseline_forecasts(model, test)
    report = confusion_report(forecasts, test.y, costs, label='test', fitted_values=probabilities)
    return model, report
