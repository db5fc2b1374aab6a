"""fsstgnn: correlation-filtered sparse graphs driving a spatial-temporal
GNN forecaster for multivariate sales series.

The package estimates (inverse) correlation matrices from look-back
windows, filters them by shrinkage, graphical lasso or a greedy clique
forest, turns the results into weighted graphs, and trains an
LSTM + GNN + MLP forecaster on top of a small reverse-mode autodiff
engine. A CLI exposes data synthesis, filter inspection, training,
evaluation and sweep reporting.
"""

from . import errors
from .data import SalesDataset, ingest_csv, synthesize_dataset
from .filtering import (
    ALPHA_GRID,
    LAMBDA_GRID,
    CliqueForest,
    FilterConfig,
    FilterResult,
    apply_filter,
    empirical,
    glasso,
    has_perfect_elimination_ordering,
    mfcf,
    select_alpha_cv,
    select_lambda_cv,
    shrink,
    sparsity,
)
from .graphs import FilteredGraph, benchmark_graph, from_filter_result
from .linalg import (
    CorrelationMatrix,
    PrecisionMatrix,
    TimeSeriesPanel,
    compute_correlation,
    correlation_from_rows,
    invert_spd,
    is_positive_definite,
    read_matrix,
    symmetrize,
    write_matrix,
)
from .pipeline import (
    ExperimentConfig,
    Metrics,
    MetricsReport,
    compute_metrics,
    evaluate_experiment,
    format_table,
    run_experiment,
    sweep,
)

__version__ = "0.1.0"

__all__ = [
    "ALPHA_GRID",
    "LAMBDA_GRID",
    "CliqueForest",
    "CorrelationMatrix",
    "ExperimentConfig",
    "FilterConfig",
    "FilterResult",
    "FilteredGraph",
    "Metrics",
    "MetricsReport",
    "PrecisionMatrix",
    "SalesDataset",
    "TimeSeriesPanel",
    "apply_filter",
    "benchmark_graph",
    "compute_correlation",
    "compute_metrics",
    "correlation_from_rows",
    "empirical",
    "errors",
    "evaluate_experiment",
    "format_table",
    "from_filter_result",
    "glasso",
    "has_perfect_elimination_ordering",
    "ingest_csv",
    "invert_spd",
    "is_positive_definite",
    "mfcf",
    "read_matrix",
    "run_experiment",
    "select_alpha_cv",
    "select_lambda_cv",
    "shrink",
    "sparsity",
    "sweep",
    "symmetrize",
    "synthesize_dataset",
    "write_matrix",
]
