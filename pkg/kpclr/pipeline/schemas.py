"""The pydantic schemas for configuration files, reports and saved models"""

from __future__ import annotations

from json import load
from pathlib import Path
from typing import Annotated, Optional, Any, List, Dict, Literal, Tuple, Union

import numpy as np
from yaml import safe_load
from pydantic import (
    BaseModel, Field, field_validator, ConfigDict, model_validator, computed_field)

from . import DataValidationError
from .pydantic_adapters import PydanticNdarray

PositiveFinite = Annotated[float, Field(gt=0, allow_inf_nan=False)]
Fraction = Annotated[float, Field(gt=0, le=1)]

DEFAULT_RHOS = tuple(round(0.30 + 0.05 * k, 2) for k in range(14))


def read_struct(fname: Union[str, Path]) -> Any:
    """Read a YAML or JSON file according to its suffix"""
    fname = Path(fname)
    suffix = fname.suffix.lower().lstrip('.')
    with open(fname) as f:
        if suffix in ('json', 'jsonld'):
            return load(f)
        if suffix in ('yml', 'yaml'):
            return safe_load(f)
    raise DataValidationError(f"Unknown configuration file type: {fname}")


class KernelSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    family: Literal['radial', 'anova'] = 'anova'
    gamma: PositiveFinite
    degree: Annotated[int, Field(ge=1)] = 1

    @model_validator(mode='before')
    @classmethod
    def degree_ignored_for_radial(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get('family') == 'radial':
            data = dict(data, degree=1)
        return data

    @property
    def label(self) -> str:
        if self.family == 'radial':
            return f"radial(gamma={self.gamma:g})"
        return f"anova(gamma={self.gamma:g}, d={self.degree})"

    @classmethod
    def parse(cls, text: str) -> KernelSpec:
        """Parse ``anova:GAMMA:DEGREE`` or ``radial:GAMMA``"""
        family, *params = text.strip().split(':')
        try:
            if family == 'radial' and len(params) == 1:
                return cls(family='radial', gamma=float(params[0]))
            if family == 'anova' and len(params) == 2:
                return cls(family='anova', gamma=float(params[0]), degree=int(params[1]))
        except ValueError as e:
            raise DataValidationError(f"Invalid kernel {text}: {e}")
        raise DataValidationError(f"Invalid kernel {text}, expected anova:GAMMA:DEGREE or radial:GAMMA")


class CostPair(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    cost_fp: PositiveFinite
    cost_fn: PositiveFinite

    @property
    def target_ratio(self) -> float:
        """Wanted number of false negatives per false positive"""
        return self.cost_fp / self.cost_fn

    @classmethod
    def parse(cls, text: str) -> CostPair:
        """Parse ``FP:FN``, e.g. ``2:1``"""
        try:
            fp, fn = text.split(':')
            return cls(cost_fp=float(fp), cost_fn=float(fn))
        except ValueError as e:
            raise DataValidationError(f"Invalid costs {text}, expected FP:FN: {e}")

    def __str__(self) -> str:
        return f"{self.cost_fp:g}:{self.cost_fn:g}"


class ColumnSchema(BaseModel):
    """Declared column types of an input CSV"""
    model_config = ConfigDict(extra='forbid')

    categorical: List[str] = []
    numeric: List[str] = []

    @model_validator(mode='after')
    def disjoint(self) -> ColumnSchema:
        if overlap := set(self.categorical) & set(self.numeric):
            raise ValueError(f"Columns declared both categorical and numeric: {sorted(overlap)}")
        return self


class StandardizationParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    input_names: Tuple[str, ...]
    feature_names: Tuple[str, ...]
    means: PydanticNdarray
    stds: PydanticNdarray
    dropped: Tuple[str, ...] = ()
    # categorical column -> the level encoded by all-zero indicators
    reference_levels: Dict[str, str] = {}

    @model_validator(mode='after')
    def consistent(self) -> StandardizationParams:
        p = len(self.feature_names)
        if self.means.shape != (p,) or self.stds.shape != (p,):
            raise ValueError("means and stds must have one entry per retained column")
        if not np.all(self.stds > 0):
            raise ValueError("standard deviations must be positive")
        if set(self.feature_names) | set(self.dropped) != set(self.input_names):
            raise ValueError("retained and dropped columns must cover the input columns")
        return self


class SplitAssignment(BaseModel):
    model_config = ConfigDict(frozen=True)

    seed: int
    proportions: Tuple[Fraction, Fraction, Fraction]
    stratified: bool = False
    train: Tuple[int, ...]
    validation: Tuple[int, ...]
    test: Tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.train) + len(self.validation) + len(self.test)

    def indices(self, split: str) -> np.ndarray:
        return np.asarray(getattr(self, split), dtype=np.int64)

    def to_records(self) -> List[Dict[str, Any]]:
        rows = [dict(index=i, split=name)
                for name in ('train', 'validation', 'test')
                for i in getattr(self, name)]
        return sorted(rows, key=lambda r: r['index'])


class GlmFit(BaseModel):
    """Coefficients (intercept first) and diagnostics of a fitted GLM"""
    model_config = ConfigDict(frozen=True)

    link: Literal['logit', 'identity']
    coefficients: PydanticNdarray
    iterations: int = 0
    gradient_norm: float = 0.0
    converged: bool = True
    separated: bool = False
    deviance: float = 0.0
    log_likelihood: float = 0.0
    weights: Optional[PydanticNdarray] = None

    @property
    def intercept(self) -> float:
        return float(self.coefficients[0])

    @property
    def slopes(self) -> np.ndarray:
        return self.coefficients[1:]

    @property
    def rank(self) -> int:
        return len(self.coefficients) - 1


class FittedValueSummary(BaseModel):
    """Quartiles and histogram of fitted values"""
    n: int
    mean: Optional[float] = None
    q1: Optional[float] = None
    median: Optional[float] = None
    q3: Optional[float] = None
    bin_edges: List[float] = []
    counts: List[int] = []

    @computed_field
    @property
    def iqr(self) -> Optional[float]:
        if self.q1 is None:
            return None
        return self.q3 - self.q1

    @classmethod
    def from_values(cls, values, bins: int = 20) -> FittedValueSummary:
        values = np.asarray(values, dtype=np.float64)
        if not len(values):
            return cls(n=0)
        q1, median, q3 = np.quantile(values, [0.25, 0.5, 0.75])
        counts, edges = np.histogram(values, bins=bins, range=(0.0, 1.0))
        return cls(
            n=len(values), mean=float(values.mean()), q1=float(q1), median=float(median),
            q3=float(q3), bin_edges=edges.tolist(), counts=counts.tolist())


def _rate(num: int, den: int) -> Optional[float]:
    return num / den if den else None


class ConfusionReport(BaseModel):
    """Cross-tabulation of actual by forecast class.

    Rows are actual classes, columns forecast classes. The per-class model
    error is computed row-wise, as in the usual forecasting confusion table.
    """
    tn: Annotated[int, Field(ge=0)]
    fp: Annotated[int, Field(ge=0)]
    fn: Annotated[int, Field(ge=0)]
    tp: Annotated[int, Field(ge=0)]
    costs: CostPair
    label: Literal['validation', 'test', 'in-sample', 'unlabeled'] = 'unlabeled'
    fitted: Optional[FittedValueSummary] = None

    @computed_field
    @property
    def n(self) -> int:
        return self.tn + self.fp + self.fn + self.tp

    @computed_field
    @property
    def fp_error(self) -> Optional[float]:
        """Share of actual negatives forecast positive"""
        return _rate(self.fp, self.tn + self.fp)

    @computed_field
    @property
    def fn_error(self) -> Optional[float]:
        """Share of actual positives forecast negative"""
        return _rate(self.fn, self.fn + self.tp)

    @computed_field
    @property
    def fn_fp_ratio(self) -> Optional[float]:
        return _rate(self.fn, self.fp)

    @computed_field
    @property
    def cost_weighted_error(self) -> float:
        return self.costs.cost_fp * self.fp + self.costs.cost_fn * self.fn

    @computed_field
    @property
    def forecast_negative_error(self) -> Optional[float]:
        """Share of cases forecast negative that turned out positive"""
        return _rate(self.fn, self.fn + self.tn)

    @computed_field
    @property
    def forecast_positive_error(self) -> Optional[float]:
        return _rate(self.fp, self.fp + self.tp)

    def render(self, negative: str = "Negative", positive: str = "Positive") -> str:
        def fmt(v: Optional[float]) -> str:
            return "undefined" if v is None else f"{v:.2f}"
        header = ["", f"Predict {negative}", f"Predict {positive}", "Model Error"]
        rows = [
            [f"Actual {negative}", str(self.tn), str(self.fp), fmt(self.fp_error)],
            [f"Actual {positive}", str(self.fn), str(self.tp), fmt(self.fn_error)],
            ["Forecast Error", fmt(self.forecast_negative_error), fmt(self.forecast_positive_error), ""],
        ]
        widths = [max(len(r[i]) for r in [header] + rows) for i in range(4)]
        lines = [f"Confusion table ({self.label}, N={self.n}, costs FP:FN={self.costs})"]
        for row in [header] + rows:
            lines.append(" | ".join(cell.rjust(w) if i else cell.ljust(w) for i, (cell, w) in enumerate(zip(row, widths))))
        ratio = "undefined" if self.fn_fp_ratio is None else f"{self.fn_fp_ratio:.2f}"
        lines.append(f"FN/FP ratio: {ratio} (target {self.costs.target_ratio:g})")
        lines.append(f"Cost-weighted error: {self.cost_weighted_error:g}")
        return "\n".join(lines)


class SearchGrid(BaseModel):
    model_config = ConfigDict(extra='forbid')

    kernels: List[KernelSpec] = Field(default_factory=lambda: [
        KernelSpec(family='anova', gamma=g, degree=d) for d in (2, 3) for g in (0.1, 3.0)])
    rhos: List[Fraction] = list(DEFAULT_RHOS)
    costs: CostPair = CostPair(cost_fp=2, cost_fn=1)
    seed: int = 0
    ratio_tolerance: Annotated[float, Field(gt=0)] = 0.25
    error_slack: Annotated[float, Field(ge=0)] = 0.05

    @field_validator('kernels')
    @classmethod
    def at_least_one_kernel(cls, kernels: List[KernelSpec]) -> List[KernelSpec]:
        if not kernels:
            raise ValueError("The grid needs at least one kernel")
        return kernels

    @field_validator('rhos')
    @classmethod
    def strictly_increasing(cls, rhos: List[float]) -> List[float]:
        if not rhos:
            raise ValueError("The grid needs at least one rho value")
        if any(b <= a for a, b in zip(rhos, rhos[1:])):
            raise ValueError("rho values must be strictly increasing")
        return rhos

    @classmethod
    def from_file(cls, fname: Union[str, Path]) -> SearchGrid:
        return cls.model_validate(read_struct(fname))


class DiagnosticPoint(BaseModel):
    rho: float
    rank: Optional[int] = None
    fn_fp_ratio: Optional[float] = None
    cost_weighted_error: Optional[float] = None
    validation_mse: Optional[float] = None
    failed: bool = False
    selected: bool = False


class DiagnosticSeries(BaseModel):
    kernel: KernelSpec
    points: List[DiagnosticPoint]

    @property
    def label(self) -> str:
        return self.kernel.label


AuditStatus = Literal['selected', 'passed', 'failed_cut1', 'failed_cut2', 'errored']


class AuditEntry(BaseModel):
    kernel: KernelSpec
    rho: float
    rank: Optional[int] = None
    status: AuditStatus
    detail: Optional[str] = None


class StepwiseStep(BaseModel):
    step: int
    removed: str
    column: int
    aic: float


class StepwisePath(BaseModel):
    feature_names: Tuple[str, ...]
    initial_aic: float
    steps: List[StepwiseStep] = []
    final_columns: Tuple[int, ...]
    final_aic: float
    dropped_for_separation: Tuple[str, ...] = ()

    @property
    def final_features(self) -> Tuple[str, ...]:
        return tuple(self.feature_names[i] for i in self.final_columns)


class BaselineModel(BaseModel):
    feature_names: Tuple[str, ...]
    columns: Tuple[int, ...]
    coefficients: PydanticNdarray
    threshold: float
    costs: CostPair

    @model_validator(mode='after')
    def one_coefficient_per_predictor(self) -> BaselineModel:
        if len(self.coefficients) != len(self.columns) + 1:
            raise ValueError("coefficient count must be predictors + intercept")
        return self


class ForecasterPayload(BaseModel):
    """Everything needed to score a new case, as stored in a model file"""
    model_config = ConfigDict(extra='forbid')

    standardization: StandardizationParams
    kernel: KernelSpec
    train_matrix: PydanticNdarray
    column_means: PydanticNdarray
    grand_mean: float
    eigenvalues: PydanticNdarray
    eigenvectors: PydanticNdarray
    fit: GlmFit
    costs: CostPair
    threshold: float
    rho: Optional[float] = None
    provenance: Dict[str, Any] = {}


class ModelFile(BaseModel):
    format: Literal['kpclr-model']
    version: int
    checksum: str
    payload: Dict[str, Any]


class RunConfig(BaseModel):
    """A command run, from a YAML/JSON file, overridden by command-line flags"""
    model_config = ConfigDict(extra='forbid', populate_by_name=True)

    mode: Literal['kpclr', 'baseline', 'compare', 'simulate'] = 'kpclr'
    response_kind: Literal['classification', 'regression'] = 'classification'
    input: Optional[Path] = None
    cases: Optional[Path] = None
    model: Optional[Path] = None
    response: Optional[str] = None
    column_schema: Optional[Path] = Field(default=None, alias='schema')
    costs: Optional[CostPair] = None
    alternative_costs: List[CostPair] = []
    grid: SearchGrid = Field(default_factory=SearchGrid)
    seed: Optional[int] = None
    proportions: Tuple[Fraction, Fraction, Fraction] = (1 / 3, 1 / 3, 1 / 3)
    stratify: bool = False
    output: Path = Path('out')
    n_jobs: Annotated[int, Field(ge=1)] = 1
    kind: Literal['regression1d', 'nonlinear_binary'] = 'nonlinear_binary'
    n: Annotated[int, Field(ge=20)] = 1500
    noise_scale: Optional[Annotated[float, Field(ge=0)]] = None
    extra_predictors: Annotated[int, Field(ge=0)] = 0

    @field_validator('proportions')
    @classmethod
    def sum_to_one(cls, proportions):
        if abs(sum(proportions) - 1.0) > 1e-9:
            raise ValueError("split proportions must sum to 1")
        return proportions

    @model_validator(mode='after')
    def share_costs_and_seed(self) -> RunConfig:
        if self.costs is None:
            self.costs = self.grid.costs
        if self.seed is None:
            self.seed = self.grid.seed
        self.grid = self.grid.model_copy(update=dict(costs=self.costs, seed=self.seed))
        return self

    @classmethod
    def from_file(cls, fname: Union[str, Path], **overrides) -> RunConfig:
        data = read_struct(fname) or {}
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.model_validate(data)


class SelectionSummary(BaseModel):
    """What a selection run writes: the winner, its reports and the per-kernel series"""
    kernel: KernelSpec
    rho: float
    rank: int
    costs: Optional[CostPair] = None
    target_ratio: Optional[float] = None
    validation: Optional[ConfusionReport] = None
    test: Optional[ConfusionReport] = None
    validation_mse: Optional[float] = None
    test_mse: Optional[float] = None
    series: List[DiagnosticSeries] = []
    audit: List[AuditEntry] = []

    @classmethod
    def from_file(cls, fname: Union[str, Path]) -> SelectionSummary:
        return cls.model_validate(read_struct(fname))


class ComparisonSummary(BaseModel):
    """Side-by-side test performance of the kernel forecaster and the stepwise baseline"""
    costs: CostPair
    seed: int
    kpclr: SelectionSummary
    baseline_path: StepwisePath
    baseline_features: Tuple[str, ...]
    baseline_test: ConfusionReport
    alternatives: List[SelectionSummary] = []

    @classmethod
    def from_file(cls, fname: Union[str, Path]) -> ComparisonSummary:
        return cls.model_validate(read_struct(fname))
