"""Snapshot panels and error-trace curves from estimator CSVs.

Two figure styles:

* snapshot panels: the parameter estimate (left) and the state estimate
  (right) over x at each stored time, against the exact curves;
* error traces: the stored squared errors ``e_Q2 + r_X2`` against time,
  one curve per input CSV (e.g. one per noise level) on shared axes.

The CSVs are the single source of truth: the module never recomputes a
norm, it only draws stored columns.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

EXIT_OK = 0
EXIT_SCHEMA = 2

SNAPSHOT_COLUMNS = ("t", "x", "q_hat", "u_hat", "q_star", "u_star")
TRACE_COLUMNS = ("t", "e_Q2", "r_X2")


class SchemaError(ValueError):
    """The CSV is missing required columns (or has none at all)."""


def read_table(path, required) -> dict[str, np.ndarray]:
    """Read a headered CSV into named float columns.

    Raises SchemaError naming the missing columns when ``required`` is not
    a subset of the header.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty CSV, no header row") from None
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(
                f"{path}: missing column(s) {', '.join(missing)}")
        rows = [row for row in reader if row]
    data = np.asarray(rows, dtype=float) if rows else \
        np.empty((0, len(header)))
    return {name: data[:, j] for j, name in enumerate(header)}


def _save(fig, out_path) -> None:
    fig.savefig(out_path)
    plt.close(fig)


def plot_snapshots(csv_path, out_path=None):
    """1x2 snapshot panels: parameter estimate | state estimate.

    One marked curve per stored time; the exact parameter and states are
    plain lines. Returns the figure (also written to ``out_path`` if
    given).
    """
    table = read_table(csv_path, SNAPSHOT_COLUMNS)
    times = np.unique(table["t"])
    fig, (ax_q, ax_u) = plt.subplots(1, 2, figsize=(10, 4))

    for ts in times:
        sel = table["t"] == ts
        x = table["x"][sel]
        ax_q.plot(x, table["q_hat"][sel], marker=".", markevery=10,
                  linewidth=1.0, label=f"estimate t={ts:g}")
        ax_u.plot(x, table["u_hat"][sel], marker=".", markevery=10,
                  linewidth=1.0, label=f"estimate t={ts:g}")
        ax_u.plot(x, table["u_star"][sel], color="black", linewidth=0.8,
                  alpha=0.6)
    # the exact parameter does not depend on time: draw it once
    first = table["t"] == times[0]
    ax_q.plot(table["x"][first], table["q_star"][first], color="black",
              linewidth=1.2, label="exact")
    ax_q.set_xlabel("x")
    ax_q.set_ylabel("parameter")
    ax_u.set_xlabel("x")
    ax_u.set_ylabel("state")
    ax_q.legend(fontsize=7)
    fig.tight_layout()
    if out_path is not None:
        _save(fig, out_path)
    return fig


def plot_error_traces(csv_paths, out_path=None, labels=None):
    """Squared-error curves ``e_Q2 + r_X2`` vs time on shared axes.

    One curve per CSV. Returns the figure (also written to ``out_path``
    if given).
    """
    paths = list(csv_paths)
    if labels is None:
        labels = [os.path.basename(p) for p in paths]
    if len(labels) != len(paths):
        raise ValueError("one label per CSV required")
    fig, ax = plt.subplots(figsize=(6, 4))
    for path, label in zip(paths, labels):
        table = read_table(path, TRACE_COLUMNS)
        ax.plot(table["t"], table["e_Q2"] + table["r_X2"], marker=".",
                markevery=5, linewidth=1.0, label=label)
    ax.set_xlabel("t")
    ax.set_ylabel("squared parameter + observed-state error")
    ax.legend(fontsize=8)
    fig.tight_layout()
    if out_path is not None:
        _save(fig, out_path)
    return fig


def main_snapshots(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot-snapshots",
        description="snapshot panels from a snapshots.csv")
    parser.add_argument("csv", help="snapshots CSV path")
    parser.add_argument("--out", required=True,
                        help="output image path (vector format, e.g. .svg)")
    args = parser.parse_args(argv)
    try:
        plot_snapshots(args.csv, args.out)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    print(f"wrote {args.out}")
    return EXIT_OK


def main_traces(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot-traces",
        description="error-trace curves from one or more trace.csv files")
    parser.add_argument("csv", nargs="+", help="trace CSV paths")
    parser.add_argument("--out", required=True,
                        help="output image path (vector format, e.g. .svg)")
    parser.add_argument("--label", action="append", default=None,
                        help="curve label, one per CSV (default: file name)")
    args = parser.parse_args(argv)
    try:
        plot_error_traces(args.csv, args.out, labels=args.label)
    except (SchemaError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    print(f"wrote {args.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main_snapshots())
