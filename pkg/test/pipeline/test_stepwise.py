from itertools import combinations
import logging

import numpy as np
import pytest
from scipy.special import expit

from kpclr.pipeline import DataValidationError
from kpclr.pipeline.data import Dataset
from kpclr.pipeline.schemas import CostPair
from kpclr.pipeline.stepwise import (
    backward_eliminate_aic, baseline_forecasts, fit_and_evaluate_baseline, fit_baseline, logistic_aic)

COSTS = CostPair(cost_fp=2, cost_fn=1)


def logistic_dataset(rng, n, p, active=2, scale=1.0, intercept=0.0):
    X = rng.standard_normal((n, p))
    beta = np.zeros(p)
    beta[:active] = scale
    y = (rng.random(n) < expit(intercept + X @ beta)).astype(np.float64)
    return Dataset(X, y, tuple(f"v{j}" for j in range(p)))


def test_greedy_path_against_exhaustive_search():
    rng = np.random.default_rng(31)
    for _ in range(50):
        p = int(rng.integers(2, 9))
        ds = logistic_dataset(rng, 120, p, active=int(rng.integers(0, 3)))
        path = backward_eliminate_aic(ds)
        if path.dropped_for_separation:
            continue
        aics = [path.initial_aic] + [step.aic for step in path.steps]
        assert all(b < a for a, b in zip(aics, aics[1:]))
        assert path.final_aic == aics[-1]
        best = min(logistic_aic(ds.X, ds.y, subset)[0]
                   for k in range(p + 1) for subset in combinations(range(p), k))
        assert path.final_aic >= best - 1e-9
        assert len(path.final_columns) == p - len(path.steps)


def test_noise_predictors_are_removed():
    rng = np.random.default_rng(32)
    ds = logistic_dataset(rng, 1500, 8, active=0)
    path = backward_eliminate_aic(ds)
    assert len(path.final_columns) < 8
    assert path.final_aic <= path.initial_aic


def test_signal_predictors_are_kept():
    rng = np.random.default_rng(33)
    ds = logistic_dataset(rng, 800, 5, active=2, scale=1.5)
    path = backward_eliminate_aic(ds)
    assert {'v0', 'v1'} <= set(path.final_features)


def test_deterministic():
    rng = np.random.default_rng(34)
    ds = logistic_dataset(rng, 200, 5)
    assert backward_eliminate_aic(ds) == backward_eliminate_aic(ds)


def test_preconditions():
    rng = np.random.default_rng(35)
    with pytest.raises(DataValidationError):
        backward_eliminate_aic(Dataset(rng.standard_normal((20, 2)), np.zeros(20), ('a', 'b'), strict=False))
    with pytest.raises(DataValidationError):
        backward_eliminate_aic(Dataset(rng.standard_normal((20, 2)), rng.standard_normal(20), ('a', 'b'),
                                       mode='regression'))


def test_baseline_threshold_and_coefficients():
    rng = np.random.default_rng(36)
    train, validation, test = (logistic_dataset(rng, 300, 4) for _ in range(3))
    path = backward_eliminate_aic(train)
    model, report = fit_and_evaluate_baseline(path, validation, test, COSTS)
    assert model.threshold == pytest.approx(2 / 3)
    assert len(model.coefficients) == len(model.columns) + 1
    assert report.n == test.n
    assert report.label == 'test'
    assert report.fitted.n == test.n


def test_refit_uses_validation_rows_only():
    rng = np.random.default_rng(37)
    train, validation = logistic_dataset(rng, 300, 4), logistic_dataset(rng, 300, 4)
    path = backward_eliminate_aic(train)
    model = fit_baseline(path, validation, COSTS)
    order = rng.permutation(validation.n)
    shuffled = fit_baseline(path, validation.take(order), COSTS)
    np.testing.assert_allclose(shuffled.coefficients, model.coefficients, atol=1e-8)


def test_constant_validation_predictor_dropped(caplog):
    rng = np.random.default_rng(38)
    train = logistic_dataset(rng, 300, 3, active=3, scale=2.0)
    validation = logistic_dataset(rng, 300, 3, active=3, scale=2.0)
    X = validation.X.copy()
    X[:, 0] = 1.0
    validation = validation.replace(X, validation.feature_names)
    path = backward_eliminate_aic(train)
    assert 0 in path.final_columns
    with caplog.at_level(logging.WARNING, logger="kpclr.pipeline.stepwise"):
        model = fit_baseline(path, validation, COSTS)
    assert 'v0' not in model.feature_names
    assert "constant" in caplog.text


def test_weak_signal_collapses_to_negative_forecasts():
    rng = np.random.default_rng(39)
    train, validation, test = (logistic_dataset(rng, 300, 3, active=0, intercept=np.log(0.2 / 0.8))
                               for _ in range(3))
    path = backward_eliminate_aic(train)
    model, report = fit_and_evaluate_baseline(path, validation, test, COSTS)
    probabilities, forecasts = baseline_forecasts(model, test)
    assert probabilities.max() < model.threshold
    assert report.fp == 0 and report.tp == 0
    assert report.fn_error == 1.0
