import numpy as np
import pytest
from scipy.optimize import linprog, minimize
from scipy.special import expit, log_expit

from kpclr.pipeline import DataValidationError, NumericalFailure
from kpclr.pipeline import glm
from kpclr.pipeline.decomposition import eigendecompose, project_training
from kpclr.pipeline.glm import (
    confusion_report, cost_weights, fit_linear, fit_weighted_logistic, predict_and_classify,
    threshold_from_costs)
from kpclr.pipeline.kernels import build_kernel_matrix, center_kernel_matrix
from kpclr.pipeline.schemas import ConfusionReport, CostPair, GlmFit, KernelSpec


def costs(fp, fn):
    return CostPair(cost_fp=fp, cost_fn=fn)


def random_problems(count=100, seed=21):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n, r = int(rng.integers(30, 51)), int(rng.integers(1, 4))
        X = rng.standard_normal((n, r))
        beta = rng.normal(0, 0.8, size=r + 1)
        y = (rng.random(n) < expit(beta[0] + X @ beta[1:])).astype(np.float64)
        w = rng.uniform(0.2, 3.0, size=n)
        yield X, y, w / w.mean()


def weighted_nll_oracle(X, y, w):
    design = np.column_stack([np.ones(len(y)), X])

    def nll(beta):
        eta = design @ beta
        return -np.sum(w * (y * log_expit(eta) + (1 - y) * log_expit(-eta)))

    def grad(beta):
        return -design.T @ (w * (y - expit(design @ beta)))

    def hess(beta):
        p = expit(design @ beta)
        return design.T @ ((w * p * (1 - p))[:, None] * design)

    result = minimize(nll, np.zeros(design.shape[1]), jac=grad, hess=hess, method='trust-exact',
                      options=dict(gtol=1e-12))
    return result.x


def test_cost_weights():
    np.testing.assert_allclose(cost_weights([0, 0, 1, 1], costs(2, 1)), [4 / 3, 4 / 3, 2 / 3, 2 / 3])
    np.testing.assert_array_equal(cost_weights([0, 1, 1, 0, 1], costs(1, 1)), 1.0)
    rng = np.random.default_rng(0)
    y = (rng.random(57) < 0.3).astype(float)
    assert cost_weights(y, costs(7, 3)).mean() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(DataValidationError):
        cost_weights([1, 1, 1], costs(2, 1))


def test_thresholds():
    assert threshold_from_costs(costs(2, 1)) == pytest.approx(0.667, abs=5e-4)
    assert threshold_from_costs(costs(1, 2)) == pytest.approx(0.333, abs=5e-4)
    assert threshold_from_costs(costs(1, 1)) == 0.5
    # FN:FP of 1 to 3, that is a false positive three times as costly
    assert threshold_from_costs(costs(3, 1)) == 0.75
    assert threshold_from_costs(costs(1, 3)) == 0.25
    assert threshold_from_costs(costs(2.5, 1)) == threshold_from_costs(costs(5, 2))


def test_intercept_only_fits():
    y = np.array([0, 0, 0, 1] * 5, dtype=float)
    fit = fit_weighted_logistic(np.empty((20, 0)), y)
    assert fit.intercept == pytest.approx(np.log(0.25 / 0.75), abs=1e-10)
    fit = fit_weighted_logistic(np.empty((4, 0)), [0, 0, 1, 1], [4 / 3, 4 / 3, 2 / 3, 2 / 3])
    assert fit.intercept == pytest.approx(np.log(0.5), abs=1e-10)


def test_irls_matches_direct_minimization():
    checked = 0
    for X, y, w in random_problems():
        fit = fit_weighted_logistic(X, y, w)
        if fit.separated or len(np.unique(y)) < 2:
            continue
        checked += 1
        assert fit.converged
        np.testing.assert_allclose(fit.coefficients, weighted_nll_oracle(X, y, w), atol=1e-6)
        design = np.column_stack([np.ones(len(y)), X])
        score = design.T @ (w * (y - expit(design @ fit.coefficients)))
        assert np.abs(score).max() <= 1e-8
    assert checked >= 80


def test_duplication_doubles_weights():
    X, y, w = next(random_problems(count=1, seed=22))
    doubled = fit_weighted_logistic(X, y, 2 * w)
    duplicated = fit_weighted_logistic(np.vstack([X, X]), np.concatenate([y, y]), np.concatenate([w, w]))
    np.testing.assert_allclose(duplicated.coefficients, doubled.coefficients, atol=1e-8)


def test_exhausted_halving_keeps_coefficients(monkeypatch):
    X, y, w = next(random_problems(count=1, seed=23))
    start = fit_weighted_logistic(np.empty((len(y), 0)), y, w)
    monkeypatch.setattr(glm, 'MAX_HALVINGS', 0)
    fit = fit_weighted_logistic(X, y, w)
    assert fit.iterations == 1
    assert not fit.converged
    assert fit.deviance == pytest.approx(start.deviance, rel=1e-10)
    np.testing.assert_array_equal(fit.coefficients[1:], 0.0)


def test_deviance_never_rises():
    for X, y, w in random_problems(count=20, seed=24):
        best = fit_weighted_logistic(X, y, w)
        if best.separated:
            continue
        for max_iter in range(1, best.iterations):
            partial = fit_weighted_logistic(X, y, w, max_iter=max_iter)
            assert best.deviance <= partial.deviance * (1 + 1e-9) + 1e-9


def test_separation_flagged():
    X = np.linspace(-1, 1, 20)[:, None]
    fit = fit_weighted_logistic(X, (X[:, 0] > 0).astype(float))
    assert fit.separated
    assert np.all(np.isfinite(fit.coefficients))


def strictly_separable(X, y):
    """Whether some hyperplane puts every case on its own side with a margin"""
    signs = np.where(y == 1, 1.0, -1.0)
    design = np.column_stack([np.ones(len(y)), X])
    result = linprog(np.zeros(design.shape[1]), A_ub=-(signs[:, None] * design), b_ub=-np.ones(len(y)),
                     bounds=[(None, None)] * design.shape[1], method='highs')
    return result.status == 0


def test_separation_matches_linear_program():
    rng = np.random.default_rng(25)
    checked = 0
    for _ in range(60):
        X = rng.standard_normal((12, 2))
        y = (X @ rng.standard_normal(2) + 0.3 * rng.standard_normal(12) > 0).astype(float)
        if len(np.unique(y)) < 2 or not strictly_separable(X, y):
            continue
        checked += 1
        assert fit_weighted_logistic(X, y).separated
    assert checked >= 10


def test_ill_posed_fits_rejected():
    with pytest.raises(NumericalFailure):
        fit_weighted_logistic(np.eye(3), [0, 1, 0])
    with pytest.raises(DataValidationError):
        fit_weighted_logistic(np.ones((4, 1)), [0, 1, 2, 0])
    with pytest.raises(DataValidationError):
        fit_weighted_logistic(np.arange(4.0)[:, None], [0, 1, 1, 0], [1, 1, -1, 1])


def test_linear_fit_exact():
    rng = np.random.default_rng(23)
    X = rng.standard_normal((25, 3))
    y = 1.5 + X @ np.array([2.0, -1.0, 0.5])
    fit = fit_linear(X, y)
    np.testing.assert_allclose(fit.coefficients, [1.5, 2.0, -1.0, 0.5], atol=1e-10)
    assert fit.link == 'identity'


def test_linear_fit_on_orthogonal_components(regression_splits):
    train = regression_splits[0]
    ck = center_kernel_matrix(build_kernel_matrix(train.X, KernelSpec(family='anova', gamma=3, degree=1)))
    basis = eigendecompose(ck)
    scores = project_training(ck, basis, 5).scores
    fit = fit_linear(scores, train.y)
    centered = train.y - train.y.mean()
    np.testing.assert_allclose(fit.slopes, scores.T @ centered / basis.eigenvalues[:5], rtol=1e-8)
    residuals = train.y - fit.intercept - scores @ fit.slopes
    assert np.abs(scores.T @ residuals).max() <= 1e-8 * len(residuals)


def test_predict_and_classify():
    fit = GlmFit(link='logit', coefficients=[0.0, 0.0])
    assert predict_and_classify(fit, [0.0], 0.5) == (0.5, 0), "the boundary classifies negative"
    fit = GlmFit(link='logit', coefficients=[np.log(1 / 3), 0.0, 0.0])
    probability, forecast = predict_and_classify(fit, [1.0, -2.0], 0.2)
    assert probability == pytest.approx(0.25)
    assert forecast == 1
    fit = GlmFit(link='logit', coefficients=[np.log(0.7 / 0.3), 0.0])
    assert predict_and_classify(fit, [3.0], 0.667)[1] == 1
    probabilities, forecasts = predict_and_classify(fit, np.zeros((4, 1)), 0.8)
    assert forecasts.tolist() == [0, 0, 0, 0]
    with pytest.raises(DataValidationError):
        predict_and_classify(fit, [1.0, 2.0], 0.5)


def report_from_counts(tn, fp, fn, tp, cost_pair):
    actual = [0] * (tn + fp) + [1] * (fn + tp)
    predicted = [0] * tn + [1] * fp + [0] * fn + [1] * tp
    return confusion_report(predicted, actual, cost_pair)


def test_failure_to_appear_table():
    report = report_from_counts(239, 57, 141, 67, costs(2, 1))
    assert (report.tn, report.fp, report.fn, report.tp) == (239, 57, 141, 67)
    assert report.n == 504
    assert round(report.fp_error, 2) == 0.19
    # 141/208 rounds to 0.68
    assert round(report.fn_error, 2) == 0.68
    assert round(report.fn_fp_ratio, 2) == 2.47
    assert report.cost_weighted_error == 255
    text = report.render()
    assert "0.19" in text and "2.47" in text


def test_stepwise_table():
    report = report_from_counts(300, 2, 192, 6, costs(2, 1))
    assert round(report.fp_error, 2) == 0.01
    assert round(report.fn_error, 2) == 0.97


def test_forecast_conditional_errors():
    report = ConfusionReport(tn=239, fp=57, fn=141, tp=67, costs=costs(2, 1))
    assert report.forecast_negative_error == pytest.approx(141 / 380)
    assert report.forecast_positive_error == pytest.approx(57 / 124)


def test_confusion_order_invariant():
    rng = np.random.default_rng(24)
    predicted, actual = rng.integers(0, 2, 50), rng.integers(0, 2, 50)
    order = rng.permutation(50)
    a = confusion_report(predicted, actual, costs(2, 1))
    b = confusion_report(predicted[order], actual[order], costs(2, 1))
    assert a == b


def test_undefined_rates():
    report = confusion_report([0, 0, 1], [0, 0, 0], costs(2, 1))
    assert report.fn_error is None
    assert report.fn_fp_ratio == 0.0
    assert "undefined" in report.render()
    with pytest.raises(DataValidationError):
        confusion_report([0, 1], [0, 1, 1], costs(1, 1))


def test_labels_outside_zero_one_rejected():
    with pytest.raises(DataValidationError, match="Outcomes"):
        confusion_report([0, 1, 1], [0, 2, 1], costs(2, 1))
    with pytest.raises(DataValidationError, match="Forecasts"):
        confusion_report([0, 0.5, 1], [0, 1, 1], costs(2, 1))
    with pytest.raises(DataValidationError):
        confusion_report([0, -1], [0, 1], costs(2, 1))


def test_report_json():
    report = report_from_counts(10, 2, 3, 5, costs(2, 1))
    data = report.model_dump(mode='json')
    assert data['cost_weighted_error'] == 7
    assert ConfusionReport.model_validate(
        {k: data[k] for k in ('tn', 'fp', 'fn', 'tp', 'costs', 'label', 'fitted')}) == report
