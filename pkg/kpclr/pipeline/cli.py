"""The ``kpclr`` command: simulate, fit, select, evaluate, predict, baseline, compare, report

Settings come from a run configuration file (``--config``), then from
command-line flags, then from ``config.ini``.
"""
from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence
import argparse
import logging
import sys

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError
from yaml import YAMLError

from .. import config_get, config_getfloat, config_getint
from . import EXIT_OK, EXIT_VALIDATION, DataValidationError, KpcError, SelectionFailure
from .data import (
    Dataset, apply_standardization, encode_labeled_cases, generate_synthetic, load_and_encode,
    read_table, split_three_way, standardized_splits)
from .kernels import build_kernel_matrix, export_kernel_csv
from .persistence import forecast_new_cases, load_model, save_model, write_atomically
from .schemas import (
    ComparisonSummary, CostPair, KernelSpec, RunConfig, SearchGrid,
    SelectionSummary, read_struct)
from .selection import (
    KernelStage, SelectedModel, diagnostics_series, evaluate_on_test, export_selection,
    out_of_sample_mse, run_grid, select_best, select_lowest_error)
from .stepwise import backward_eliminate_aic, fit_and_evaluate_baseline

log = logging.getLogger("kpclr.pipeline.cli")


def _floats(text: str, what: str) -> List[float]:
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise DataValidationError(f"Invalid {what}: {text}")


def run_config(args: argparse.Namespace, mode: str = 'kpclr') -> RunConfig:
    """Merge the configuration file, the flags and the config.ini defaults"""
    data: Dict[str, Any] = dict(read_struct(args.config) or {}) if args.config else {}
    grid = dict(read_struct(args.grid) or {}) if args.grid else dict(data.get('grid') or {})
    if args.rho_list:
        grid['rhos'] = _floats(args.rho_list, "rho list")
    if args.ratio_tolerance is not None:
        grid['ratio_tolerance'] = args.ratio_tolerance
    if args.kernel:
        grid['kernels'] = [KernelSpec.parse(k) for k in args.kernel]
    overrides = dict(
        mode=mode, input=args.input, response=args.response, schema=args.schema, seed=args.seed,
        output=args.out, n_jobs=args.n_jobs, stratify=args.stratify,
        costs=CostPair.parse(args.costs) if args.costs else None,
        proportions=_floats(args.proportions, "proportions") if args.proportions else None,
        response_kind='regression' if args.regression else None)
    for key in ('kind', 'n', 'noise_scale', 'extra_predictors'):
        overrides[key] = getattr(args, key, None)
    if not args.config:
        grid.setdefault('ratio_tolerance', config_getfloat('ratio_tolerance', 0.25))
        grid.setdefault('error_slack', config_getfloat('error_slack', 0.05))
        for key, default in (('seed', config_getint('seed', 0)), ('n_jobs', config_getint('n_jobs', 1))):
            if overrides[key] is None:
                overrides[key] = default
        if overrides['costs'] is None and (costs := config_get('costs', None)):
            overrides['costs'] = CostPair.parse(costs)
    data['grid'] = grid
    data.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.model_validate(data)


def _write_json(path: Path, model: BaseModel) -> None:
    write_atomically(path, model.model_dump_json(indent=1))


def _write_csv(path: Path, frame: pd.DataFrame) -> None:
    write_atomically(path, frame.to_csv(index=False))


def _load_dataset(cfg: RunConfig) -> Dataset:
    if cfg.input is None or cfg.response is None:
        raise DataValidationError("--input and --response are required")
    return load_and_encode(read_table(cfg.input, cfg.response, cfg.column_schema), cfg.response_kind)


def _prepare(cfg: RunConfig):
    ds = _load_dataset(cfg)
    split = split_three_way(ds, cfg.seed, cfg.proportions, cfg.stratify)
    train, validation, test, params = standardized_splits(ds, split)
    output = Path(cfg.output)
    output.mkdir(parents=True, exist_ok=True)
    _write_csv(output / 'split.csv', pd.DataFrame(split.to_records()))
    log.info("Split %d cases into %d/%d/%d with seed %d",
             ds.n, train.n, validation.n, test.n, cfg.seed)
    return train, validation, test, params, output


def _select(cfg: RunConfig, grid: SearchGrid, train, validation, test, params, output: Optional[Path]) -> SelectionSummary:
    results = run_grid(train, validation, grid, params, cfg.n_jobs)
    try:
        if train.mode == 'classification':
            selected = select_best(results, grid.costs.target_ratio, grid.ratio_tolerance, grid.error_slack)
        else:
            selected = select_lowest_error(results)
    except SelectionFailure:
        if output is not None:
            export_selection(output, results)
        raise
    if output is not None:
        export_selection(output, results, selected)
        save_model(selected.forecaster, output / 'model.json')
    return _summary(selected, results, grid, test)


def _summary(selected: SelectedModel, results, grid: SearchGrid, test: Dataset) -> SelectionSummary:
    candidate = selected.candidate
    summary = SelectionSummary(
        kernel=candidate.kernel, rho=candidate.rho, rank=candidate.rank,
        series=diagnostics_series(results, selected), audit=selected.audit)
    if candidate.report is not None:
        return summary.model_copy(update=dict(
            costs=grid.costs, target_ratio=selected.target_ratio, validation=candidate.report,
            test=evaluate_on_test(selected, test)))
    return summary.model_copy(update=dict(
        validation_mse=candidate.validation_mse, test_mse=out_of_sample_mse(selected.forecaster, test)))


def _print_selection(summary: SelectionSummary) -> None:
    print(f"Selected {summary.kernel.label}, rho={summary.rho:g}, {summary.rank} components")
    if summary.test is not None:
        print(summary.validation.render())
        print(summary.test.render())
    else:
        print(f"Validation MSE {summary.validation_mse:.4g}, test MSE {summary.test_mse:.4g}")


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = run_config(args, 'simulate')
    ds = generate_synthetic(cfg.kind, cfg.n, cfg.seed, cfg.noise_scale, cfg.extra_predictors)
    output = Path(cfg.output)
    output.mkdir(parents=True, exist_ok=True)
    path = output / f"{cfg.kind}.csv"
    _write_csv(path, ds.to_frame(cfg.response or 'y'))
    print(path)
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    """Fit one kernel at one rho on the training split, without selection"""
    cfg = run_config(args)
    train, validation, test, params, output = _prepare(cfg)
    kernel = cfg.grid.kernels[0]
    rho = args.rho if args.rho is not None else cfg.grid.rhos[-1]
    stage = KernelStage(train, kernel, cfg.costs, params, dict(seed=cfg.seed, costs=str(cfg.costs)))
    stage.basis.export_spectrum(output / 'spectrum.csv')
    if args.export_kernel:
        export_kernel_csv(build_kernel_matrix(train.X, kernel).values, output / 'kernel.csv')
    forecaster = stage.forecaster(rho)
    save_model(forecaster, output / 'model.json')
    print(f"Fit {kernel.label}, rho={rho:g}, {forecaster.rank} components")
    if train.mode == 'classification':
        report = evaluate_on_test(forecaster, validation, label='validation')
        _write_json(output / 'validation.json', report)
        print(report.render())
    else:
        print(f"Validation MSE {out_of_sample_mse(forecaster, validation):.4g}")
    return EXIT_OK


def cmd_select(args: argparse.Namespace) -> int:
    cfg = run_config(args)
    train, validation, test, params, output = _prepare(cfg)
    summary = _select(cfg, cfg.grid, train, validation, test, params, output)
    _write_json(output / 'selection.json', summary)
    _print_selection(summary)
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    """Score a labeled CSV with a saved model"""
    cfg = run_config(args)
    if cfg.model is None and args.model is None:
        raise DataValidationError("--model is required")
    forecaster = load_model(args.model or cfg.model)
    if cfg.input is None or cfg.response is None:
        raise DataValidationError("--input and --response are required")
    table = read_table(cfg.input, cfg.response, cfg.column_schema)
    ds = encode_labeled_cases(
        table, forecaster.feature_names, cfg.response_kind, forecaster.standardization.reference_levels)
    standardized = apply_standardization(ds, forecaster.standardization)
    output = Path(cfg.output)
    output.mkdir(parents=True, exist_ok=True)
    if forecaster.fit.link != 'logit':
        print(f"MSE {out_of_sample_mse(forecaster, standardized):.4g}")
        return EXIT_OK
    report = evaluate_on_test(forecaster, standardized)
    _write_json(output / 'evaluation.json', report)
    print(report.render())
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    if args.model is None or args.cases is None:
        raise DataValidationError("--model and --cases are required")
    forecasts = forecast_new_cases(args.model, args.cases, args.id_column)
    output = Path(args.out or config_get('output', 'out'))
    output.mkdir(parents=True, exist_ok=True)
    _write_csv(output / 'forecasts.csv', forecasts)
    print(f"Wrote {len(forecasts)} forecasts to {output / 'forecasts.csv'}")
    return EXIT_OK


def cmd_baseline(args: argparse.Namespace) -> int:
    cfg = run_config(args, 'baseline')
    train, validation, test, _, output = _prepare(cfg)
    path = backward_eliminate_aic(train)
    model, report = fit_and_evaluate_baseline(path, validation, test, cfg.costs)
    _write_csv(output / 'stepwise.csv', pd.DataFrame([s.model_dump() for s in path.steps],
                                                     columns=['step', 'removed', 'column', 'aic']))
    _write_json(output / 'baseline.json', model)
    _write_json(output / 'baseline_test.json', report)
    print(f"Stepwise kept {len(model.feature_names)} of {train.p} predictors: {', '.join(model.feature_names)}")
    print(report.render())
    return EXIT_OK


def comparison_frame(summary: ComparisonSummary) -> pd.DataFrame:
    rows = [('kpclr', summary.kpclr.test), ('baseline', summary.baseline_test)]
    rows += [(f"kpclr {alt.costs}", alt.test) for alt in summary.alternatives]
    return pd.DataFrame([
        dict(method=name, costs=str(report.costs), fp=report.fp, fn=report.fn, fp_error=report.fp_error,
             fn_error=report.fn_error, fn_fp_ratio=report.fn_fp_ratio,
             cost_weighted_error=report.cost_weighted_error,
             fitted_iqr=None if report.fitted is None else report.fitted.iqr)
        for name, report in rows])


def cmd_compare(args: argparse.Namespace) -> int:
    """Kernel forecaster and stepwise baseline on the very same splits and costs"""
    cfg = run_config(args, 'compare')
    if cfg.response_kind != 'classification':
        raise DataValidationError("compare needs a binary response")
    train, validation, test, params, output = _prepare(cfg)
    kpclr = _select(cfg, cfg.grid, train, validation, test, params, output)
    path = backward_eliminate_aic(train)
    model, baseline_test = fit_and_evaluate_baseline(path, validation, test, cfg.costs)
    alternatives = []
    for costs in cfg.alternative_costs:
        grid = cfg.grid.model_copy(update=dict(costs=costs))
        try:
            alternatives.append(_select(cfg, grid, train, validation, test, params, None))
        except SelectionFailure as e:
            log.warning("No admissible candidate at costs %s: %s", costs, e)
    summary = ComparisonSummary(
        costs=cfg.costs, seed=cfg.seed, kpclr=kpclr, baseline_path=path,
        baseline_features=model.feature_names, baseline_test=baseline_test, alternatives=alternatives)
    _write_json(output / 'comparison.json', summary)
    frame = comparison_frame(summary)
    _write_csv(output / 'comparison.csv', frame)
    print(frame.to_string(index=False))
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    """Render the images of a finished run directory"""
    from .plots import plot_diagnostics, plot_fitted_histograms, plot_regression_curves
    output = Path(args.out or 'out')
    if (output / 'comparison.json').exists():
        comparison = ComparisonSummary.from_file(output / 'comparison.json')
        summary = comparison.kpclr
        plot_fitted_histograms(
            dict(kpclr=summary.test.fitted, baseline=comparison.baseline_test.fitted),
            output / 'fitted_histograms.png')
    elif (output / 'selection.json').exists():
        summary = SelectionSummary.from_file(output / 'selection.json')
        if summary.test is not None and summary.test.fitted is not None:
            plot_fitted_histograms(dict(kpclr=summary.test.fitted), output / 'fitted_histograms.png')
    else:
        summary = None
    if summary is not None:
        plot_diagnostics(summary.series, output / 'diagnostics.png', summary.target_ratio)
    if args.model:
        cfg = run_config(args)
        ds = _load_dataset(cfg)
        if ds.p != 1:
            raise DataValidationError("Fitted curves need a single predictor")
        x = ds.X[:, 0]
        grid_x = np.linspace(x.min(), x.max(), 400)
        curves = {}
        for path in args.model:
            forecaster = load_model(path)
            curves[f"{forecaster.kernel.label} r={forecaster.rank}"] = forecaster.predict(grid_x[:, np.newaxis])[0]
        plot_regression_curves(x, ds.y, curves, grid_x, output / 'fitted_curves.png')
    elif summary is None:
        raise DataValidationError(f"No selection or comparison results in {output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('-c', '--config', type=Path, help='run configuration file (YAML or JSON)')
    common.add_argument('-i', '--input', type=Path, help='input CSV with a header row')
    common.add_argument('-r', '--response', help='response column')
    common.add_argument('--schema', type=Path, help='YAML file declaring categorical and numeric columns')
    common.add_argument('--costs', help='misclassification costs as FP:FN, e.g. 2:1')
    common.add_argument('--grid', type=Path, help='search grid file (YAML or JSON)')
    common.add_argument('--seed', type=int, help='split and simulation seed')
    common.add_argument('-o', '--out', type=Path, help='output directory')
    common.add_argument('--rho-list', help='comma-separated variance shares, increasing')
    common.add_argument('--ratio-tolerance', type=float, help='relative tolerance on the FN/FP ratio')
    common.add_argument('-k', '--kernel', action='append',
                        help='kernel as anova:GAMMA:DEGREE or radial:GAMMA (repeatable)')
    common.add_argument('--proportions', help='train,validation,test shares')
    common.add_argument('--stratify', action='store_true', default=None, help='split within each class')
    common.add_argument('--regression', action='store_true', help='numeric response (kernel PC regression)')
    common.add_argument('-j', '--n-jobs', type=int, help='kernels fit concurrently')
    common.add_argument('--log-level', help='logging level')

    parser = argparse.ArgumentParser('kpclr', description='Kernel principal components forecasting')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('simulate', parents=[common], help='write a synthetic dataset')
    p.add_argument('--kind', choices=['regression1d', 'nonlinear_binary'])
    p.add_argument('-n', type=int, help='number of cases')
    p.add_argument('--noise', dest='noise_scale', type=float, help='noise sd or label flip probability')
    p.add_argument('--extra-predictors', type=int, help='pure-noise columns to add')
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser('fit', parents=[common], help='fit one kernel at one rho')
    p.add_argument('--rho', type=float, help='variance share (default: largest in the grid)')
    p.add_argument('--export-kernel', action='store_true', help='also write the training kernel matrix')
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser('select', parents=[common], help='grid search and selection')
    p.set_defaults(func=cmd_select)

    p = sub.add_parser('evaluate', parents=[common], help='score a labeled CSV with a saved model')
    p.add_argument('-m', '--model', type=Path, help='model file')
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser('predict', parents=[common], help='forecast new cases with a saved model')
    p.add_argument('-m', '--model', type=Path, help='model file')
    p.add_argument('--cases', type=Path, help='CSV of cases to forecast')
    p.add_argument('--id-column', help='column holding case ids')
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser('baseline', parents=[common], help='stepwise logistic regression baseline')
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser('compare', parents=[common], help='kernel forecaster against the baseline')
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser('report', parents=[common], help='render images of a run directory')
    p.add_argument('-m', '--model', type=Path, action='append', help='regression models to draw (repeatable)')
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=(args.log_level or config_get('log_level', 'INFO')).upper())
    try:
        return args.func(args)
    except SelectionFailure as e:
        log.error("%s", e)
        for label, ratio in e.nearest.items():
            print(f"  {label}: FN/FP {ratio:.2f}", file=sys.stderr)
        return e.exit_code
    except KpcError as e:
        log.error("%s", e)
        return e.exit_code
    except ValidationError as e:
        log.error("Invalid configuration: %s", e)
        return EXIT_VALIDATION
    except (OSError, YAMLError) as e:
        log.error("%s", e)
        return EXIT_VALIDATION


if __name__ == '__main__':
    sys.exit(main())
