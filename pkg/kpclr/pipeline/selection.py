"""Grid search over kernels and variance shares, and the two-cut selection rule

Every candidate is fit on the training split and scored on the validation
split. Selection keeps the candidates whose validation FN/FP ratio is close to
the cost ratio, then those near the lowest cost-weighted error, and finally
prefers the fewest components.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union
import logging

import numpy as np
import pandas as pd
from scipy import linalg

from . import DataValidationError, KpcError, SelectionFailure
from .data import Dataset
from .decomposition import KpcBasis, eigendecompose, project_new, project_training, select_rank
from .forecaster import FittedForecaster
from .glm import (
    WEIGHTED_FIT_THRESHOLD, confusion_report, cost_weights, fit_linear, fit_weighted_logistic,
    predict_and_classify, predict_values)
from .kernels import CenteredKernel, build_kernel_matrix, center_kernel_matrix, center_new_rows, kernel_rows
from .schemas import (
    AuditEntry, ConfusionReport, CostPair, DiagnosticPoint, DiagnosticSeries, KernelSpec,
    SearchGrid, StandardizationParams)

log = logging.getLogger("kpclr.pipeline.selection")

NEAREST_REPORTED = 5


@dataclass(frozen=True, eq=False)
class CandidateResult:
    kernel: KernelSpec
    rho: float
    rank: Optional[int] = None
    report: Optional[ConfusionReport] = None
    validation_mse: Optional[float] = None
    forecaster: Optional[FittedForecaster] = field(default=None, repr=False)
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    @property
    def fn_fp_ratio(self) -> Optional[float]:
        return None if self.report is None else self.report.fn_fp_ratio

    @property
    def cost_weighted_error(self) -> Optional[float]:
        return None if self.report is None else self.report.cost_weighted_error

    @property
    def label(self) -> str:
        return f"{self.kernel.label} rho={self.rho:g}"

    def tie_key(self) -> Tuple[int, float, int, float]:
        return (self.rank, self.kernel.gamma, self.kernel.degree, self.rho)

    def to_record(self) -> Dict:
        return dict(
            family=self.kernel.family, gamma=self.kernel.gamma, degree=self.kernel.degree,
            rho=self.rho, rank=self.rank, fn_fp_ratio=self.fn_fp_ratio,
            cost_weighted_error=self.cost_weighted_error, validation_mse=self.validation_mse,
            fp=None if self.report is None else self.report.fp,
            fn=None if self.report is None else self.report.fn,
            error=self.error)


@dataclass(frozen=True, eq=False)
class SelectedModel:
    candidate: CandidateResult
    forecaster: FittedForecaster
    audit: List[AuditEntry]
    target_ratio: Optional[float] = None

    def audit_counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for entry in self.audit:
            counts[entry.status] = counts.get(entry.status, 0) + 1
        return counts


class KernelStage:
    """The decomposition of one kernel on the training split, shared by every rho"""

    def __init__(
            self, train: Dataset, kernel: KernelSpec, costs: CostPair,
            standardization: Optional[StandardizationParams] = None,
            provenance: Optional[Dict] = None) -> None:
        self.train = train
        self.kernel = kernel
        self.costs = costs
        self.standardization = standardization
        self.provenance = provenance or {}
        self.centered: CenteredKernel = center_kernel_matrix(build_kernel_matrix(train.X, kernel))
        self.basis: KpcBasis = eigendecompose(self.centered)
        self._fits: Dict[int, FittedForecaster] = {}

    def forecaster(self, rho: float) -> FittedForecaster:
        r = select_rank(self.basis, rho)
        if r not in self._fits:
            scores = project_training(self.centered, self.basis, r).scores
            if self.train.mode == 'classification':
                fit = fit_weighted_logistic(scores, self.train.y, cost_weights(self.train.y, self.costs))
            else:
                fit = fit_linear(scores, self.train.y)
            self._fits[r] = FittedForecaster(
                kernel=self.kernel, train_matrix=self.train.X, centering=self.centered,
                basis=self.basis.truncate(r), fit=fit, costs=self.costs,
                threshold=WEIGHTED_FIT_THRESHOLD, standardization=self.standardization,
                rho=rho, provenance=dict(self.provenance, rank=r))
            log.debug("%s: fit with %d components", self.kernel.label, r)
        return replace(self._fits[r], rho=rho)


def fit_forecaster(
        train: Dataset, kernel: KernelSpec, rho: float, costs: CostPair,
        standardization: Optional[StandardizationParams] = None,
        provenance: Optional[Dict] = None) -> FittedForecaster:
    """Fit a single kernel and rho on standardized training data"""
    if train.mode == 'classification':
        train.check_both_classes("training data")
    return KernelStage(train, kernel, costs, standardization, provenance).forecaster(rho)


def _score_candidates(
        train: Dataset, validation: Dataset, kernel: KernelSpec, grid: SearchGrid,
        standardization: Optional[StandardizationParams]) -> List[CandidateResult]:
    provenance = dict(seed=grid.seed, costs=str(grid.costs), kernel=kernel.label)
    try:
        stage = KernelStage(train, kernel, grid.costs, standardization, provenance)
        validation_rows = center_new_rows(kernel_rows(validation.X, train.X, kernel), stage.centered)
    except (KpcError, linalg.LinAlgError) as e:
        log.warning("%s failed: %s", kernel.label, e)
        return [CandidateResult(kernel, rho, error=str(e)) for rho in grid.rhos]
    results: List[CandidateResult] = []
    for rho in grid.rhos:
        try:
            forecaster = stage.forecaster(rho)
            scores = project_new(validation_rows, stage.basis, forecaster.rank)
            if train.mode == 'classification':
                probabilities, forecasts = predict_and_classify(forecaster.fit, scores, forecaster.threshold)
                report = confusion_report(
                    forecasts, validation.y, grid.costs, label='validation', fitted_values=probabilities)
                results.append(CandidateResult(kernel, rho, forecaster.rank, report=report, forecaster=forecaster))
            else:
                mse = float(np.mean((validation.y - predict_values(forecaster.fit, scores)) ** 2))
                results.append(CandidateResult(kernel, rho, forecaster.rank, validation_mse=mse, forecaster=forecaster))
        except (KpcError, linalg.LinAlgError) as e:
            log.warning("%s at rho=%g failed: %s", kernel.label, rho, e)
            results.append(CandidateResult(kernel, rho, error=str(e)))
    log.info("%s: %d of %d candidates fit", kernel.label,
             sum(not r.failed for r in results), len(results))
    return results


def run_grid(
        train: Dataset, validation: Dataset, grid: SearchGrid,
        standardization: Optional[StandardizationParams] = None, n_jobs: int = 1) -> List[CandidateResult]:
    """Fit every (kernel, rho) candidate on training data and score it on validation data.

    Kernels are processed concurrently when ``n_jobs`` > 1; results always come
    back in grid order, kernel-major.
    """
    if train.feature_names != validation.feature_names:
        raise DataValidationError("Training and validation columns differ")
    if train.mode != validation.mode:
        raise DataValidationError("Training and validation responses are of different kinds")
    if train.mode == 'classification':
        train.check_both_classes("training data")
        validation.check_both_classes("validation data")

    def score(kernel: KernelSpec) -> List[CandidateResult]:
        return _score_candidates(train, validation, kernel, grid, standardization)

    if n_jobs > 1 and len(grid.kernels) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            per_kernel = list(pool.map(score, grid.kernels))
    else:
        per_kernel = [score(kernel) for kernel in grid.kernels]
    return [result for results in per_kernel for result in results]


def _nearest_ratios(results: Sequence[CandidateResult], target: float) -> Dict[str, float]:
    defined = [r for r in results if r.fn_fp_ratio is not None]
    defined.sort(key=lambda r: abs(r.fn_fp_ratio - target))
    return {r.label: r.fn_fp_ratio for r in defined[:NEAREST_REPORTED]}


def select_best(
        results: Sequence[CandidateResult], target_ratio: float,
        ratio_tolerance: float = 0.25, error_slack: float = 0.05) -> SelectedModel:
    """Apply the two cuts, then pick the fewest components.

    Cut 1 keeps candidates with |FN/FP - target| / target <= ratio_tolerance.
    Cut 2 keeps those within ``error_slack`` of the lowest cost-weighted
    validation error among cut-1 survivors. The winner has the smallest rank,
    then the smallest gamma, then the smallest degree.
    """
    if not results:
        raise DataValidationError("No candidates to select from")
    if target_ratio <= 0:
        raise DataValidationError(f"Target ratio must be positive, got {target_ratio}")
    status: Dict[int, str] = {}
    cut1 = []
    for i, result in enumerate(results):
        if result.failed:
            status[i] = 'errored'
        elif result.report is None:
            raise DataValidationError("Cost-ratio selection needs classification candidates")
        elif (result.fn_fp_ratio is not None
              and abs(result.fn_fp_ratio - target_ratio) / target_ratio <= ratio_tolerance + 1e-12):
            cut1.append(i)
        else:
            status[i] = 'failed_cut1'
    if not cut1:
        nearest = _nearest_ratios(results, target_ratio)
        raise SelectionFailure(
            f"No candidate has an FN/FP ratio within {ratio_tolerance:.0%} of {target_ratio:g}; "
            "widen the tolerance or the grid", nearest)
    best_error = min(results[i].cost_weighted_error for i in cut1)
    cut2 = []
    for i in cut1:
        if results[i].cost_weighted_error <= best_error * (1 + error_slack) + 1e-12:
            cut2.append(i)
        else:
            status[i] = 'failed_cut2'
    winner = min(cut2, key=lambda i: results[i].tie_key())
    for i in cut2:
        status[i] = 'selected' if i == winner else 'passed'
    chosen = results[winner]
    log.info("Selected %s with %d components: validation FN/FP %.2f, cost-weighted error %g",
             chosen.label, chosen.rank, chosen.fn_fp_ratio, chosen.cost_weighted_error)
    return SelectedModel(chosen, chosen.forecaster, _audit(results, status), target_ratio)


def select_lowest_error(results: Sequence[CandidateResult]) -> SelectedModel:
    """Pick the regression candidate with the lowest validation mean squared error"""
    usable = [i for i, r in enumerate(results) if not r.failed]
    if not usable:
        raise SelectionFailure("Every candidate failed")
    if any(results[i].validation_mse is None for i in usable):
        raise DataValidationError("Error-based selection needs regression candidates")
    winner = min(usable, key=lambda i: (results[i].validation_mse,) + results[i].tie_key())
    status = {i: ('errored' if r.failed else 'passed') for i, r in enumerate(results)}
    status[winner] = 'selected'
    chosen = results[winner]
    log.info("Selected %s with %d components: validation MSE %.4g", chosen.label, chosen.rank, chosen.validation_mse)
    return SelectedModel(chosen, chosen.forecaster, _audit(results, status))


def _audit(results: Sequence[CandidateResult], status: Dict[int, str]) -> List[AuditEntry]:
    return [AuditEntry(kernel=r.kernel, rho=r.rho, rank=r.rank, status=status[i], detail=r.error)
            for i, r in enumerate(results)]


def diagnostics_series(
        results: Sequence[CandidateResult], selected: Optional[SelectedModel] = None) -> List[DiagnosticSeries]:
    """One series of (rho, ratio, cost-weighted error) per kernel, in grid order"""
    series: Dict[KernelSpec, List[DiagnosticPoint]] = {}
    for result in results:
        is_selected = (selected is not None and result.kernel == selected.candidate.kernel
                       and result.rho == selected.candidate.rho)
        series.setdefault(result.kernel, []).append(DiagnosticPoint(
            rho=result.rho, rank=result.rank, fn_fp_ratio=result.fn_fp_ratio,
            cost_weighted_error=result.cost_weighted_error, validation_mse=result.validation_mse,
            failed=result.failed, selected=is_selected))
    return [DiagnosticSeries(kernel=kernel, points=sorted(points, key=lambda p: p.rho))
            for kernel, points in series.items()]


def evaluate_on_test(
        selected: Union[SelectedModel, FittedForecaster], test: Dataset, label: str = 'test') -> ConfusionReport:
    """Forecast every test case through the full prediction path.

    Data identical to the training matrix is labeled in-sample.
    """
    forecaster = selected.forecaster if isinstance(selected, SelectedModel) else selected
    if forecaster.fit.link != 'logit':
        raise DataValidationError("Confusion reports need a logistic forecaster; use out_of_sample_mse")
    if forecaster.standardization is not None and test.feature_names != forecaster.standardization.feature_names:
        raise DataValidationError("Test columns do not match the model's columns")
    if forecaster.is_training_data(test.X):
        log.warning("Evaluating on the training data; the report is in-sample")
        label = 'in-sample'
    probabilities, forecasts = forecaster.predict_standardized(test.X)
    if test.mode == 'classification' and len(np.unique(test.y)) < 2:
        log.warning("Only one class in the evaluation data; some error rates are undefined")
    return confusion_report(forecasts, test.y, forecaster.costs, label=label, fitted_values=probabilities)


def out_of_sample_mse(forecaster: FittedForecaster, test: Dataset) -> float:
    """Out-of-sample mean squared error of a regression forecaster"""
    fitted, _ = forecaster.predict_standardized(test.X)
    return float(np.mean((test.y - fitted) ** 2))


def candidates_frame(results: Sequence[CandidateResult]) -> pd.DataFrame:
    return pd.DataFrame([r.to_record() for r in results])


def diagnostics_frame(series: Sequence[DiagnosticSeries]) -> pd.DataFrame:
    return pd.DataFrame([
        dict(kernel=s.label, **point.model_dump()) for s in series for point in s.points])


def audit_frame(selected: SelectedModel) -> pd.DataFrame:
    return pd.DataFrame([
        dict(kernel=e.kernel.label, rho=e.rho, rank=e.rank, status=e.status, detail=e.detail)
        for e in selected.audit])


def export_selection(
        output: Union[str, Path], results: Sequence[CandidateResult],
        selected: Optional[SelectedModel] = None) -> None:
    """Write candidates, per-kernel series and the audit trail as CSV"""
    output = Path(output)
    output.mkdir(parents=True, exist_ok=True)
    candidates_frame(results).to_csv(output / 'candidates.csv', index=False)
    diagnostics_frame(diagnostics_series(results, selected)).to_csv(output / 'diagnostics.csv', index=False)
    if selected is not None:
        audit_frame(selected).to_csv(output / 'audit.csv', index=False)
