"""Publication-style figures from estimator CSV outputs.

Strictly read-only over the CSVs: nothing is recomputed, only stored
columns are drawn.
"""

from .plots import (SchemaError, main_snapshots, main_traces,
                    plot_error_traces, plot_snapshots, read_table)

__all__ = [
    "SchemaError",
    "read_table",
    "plot_snapshots",
    "plot_error_traces",
    "main_snapshots",
    "main_traces",
]
