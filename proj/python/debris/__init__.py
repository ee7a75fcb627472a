"""Python bindings for the debris classification pipeline."""

from ._core import (
    DebrisError,
    Model,
    Standardizer,
    compute_metrics,
    embed,
    families,
    fit,
    format_fixed,
    load_model,
    parity_error,
    render_percent_row,
    render_results_table,
    run_cli,
    split_counts,
    stratified_kfold,
)

__all__ = [
    "DebrisError",
    "Model",
    "Standardizer",
    "compute_metrics",
    "embed",
    "families",
    "fit",
    "format_fixed",
    "load_model",
    "parity_error",
    "render_percent_row",
    "render_results_table",
    "run_cli",
    "split_counts",
    "stratified_kfold",
]
