"""Render diagnostic series, fitted-value histograms and fitted curves as images"""
from __future__ import annotations

from pathlib import Path
from typing import Dict, Optional, Sequence, Union
import logging

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np

from .data import regression1d_target
from .schemas import DiagnosticSeries, FittedValueSummary

log = logging.getLogger("kpclr.pipeline.plots")


def plot_diagnostics(
        series: Sequence[DiagnosticSeries], path: Union[str, Path],
        target_ratio: Optional[float] = None) -> None:
    """One panel per kernel: FN/FP ratio (left axis) and cost-weighted error (right axis) against rho"""
    fig, axes = plt.subplots(1, len(series), figsize=(4 * len(series), 4), squeeze=False)
    for ax, s in zip(axes[0], series):
        rhos = [p.rho for p in s.points]
        # None becomes nan, leaving gaps at failed candidates
        ratios = np.array([np.nan if p.fn_fp_ratio is None else p.fn_fp_ratio for p in s.points])
        errors = np.array([np.nan if p.cost_weighted_error is None else p.cost_weighted_error for p in s.points])
        ax.set_xlabel('rho')
        ax.set_title(s.label, fontsize=9)
        if all(p.validation_mse is not None or p.failed for p in s.points):
            mse = np.array([np.nan if p.validation_mse is None else p.validation_mse for p in s.points])
            ax.plot(rhos, mse, 'ko-', markersize=3)
            ax.set_ylabel('validation MSE')
        else:
            ax.plot(rhos, ratios, 'ko-', markersize=3)
            ax.set_ylabel('FN/FP ratio')
            if target_ratio is not None:
                ax.axhline(target_ratio, color='grey', linestyle=':')
            twin = ax.twinx()
            twin.plot(rhos, errors, 'r^--', markersize=3)
            twin.set_ylabel('cost-weighted error', color='r')
        for p in s.points:
            if p.selected:
                ax.axvline(p.rho, color='b')
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    log.info("Wrote %s", path)


def plot_fitted_histograms(summaries: Dict[str, FittedValueSummary], path: Union[str, Path]) -> None:
    fig, axes = plt.subplots(1, len(summaries), figsize=(4 * len(summaries), 3.5), squeeze=False)
    for ax, (name, summary) in zip(axes[0], summaries.items()):
        if summary.n:
            edges = np.asarray(summary.bin_edges)
            ax.bar(edges[:-1], summary.counts, width=np.diff(edges), align='edge', edgecolor='k')
            ax.set_title(f"{name} (IQR {summary.iqr:.3f})", fontsize=9)
        else:
            ax.set_title(f"{name} (no cases)", fontsize=9)
        ax.set_xlim(0, 1)
        ax.set_xlabel('fitted probability')
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    log.info("Wrote %s", path)


def plot_regression_curves(
        x, y, curves: Dict[str, np.ndarray], grid_x, path: Union[str, Path]) -> None:
    """Data, the true mean function and one fitted curve per kernel"""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.scatter(x, y, s=6, alpha=0.4, color='grey')
    ax.plot(grid_x, regression1d_target(np.asarray(grid_x)), 'k--', label='true mean')
    for name, fitted in curves.items():
        ax.plot(grid_x, fitted, label=name)
    ax.set_xlabel('x')
    ax.set_ylabel('y')
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    log.info("Wrote %s", path)
