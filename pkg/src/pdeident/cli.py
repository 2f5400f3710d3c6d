"""Command-line entry points: reproducible experiment runs and file I/O.

Subcommands
    forward   solve the forward problem with the true parameter, write
              truth snapshots
    run       run the online estimator, write trace.csv / snapshots.csv /
              audit.txt
    tune      grid-search the gain constants, write scores.csv and the
              best config
    probe-pe  windowed-excitation probe along the truth trajectory
    audit     re-run from config and print/write the bound audits

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import itertools
import math
import os
import sys

import numpy as np

from . import config as cfgmod
from . import diagnostics, estimator, fem, gains
from .config import ConfigError, RunConfig
from .fem import SolverError
from .observation import NoiseModel, ObservationWindow

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _fmt(v) -> str:
    return f"{float(v):.17g}"


def write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, (int, float,
                                                        np.floating))
                              else str(v) for v in row) + "\n")


def _ensure_outdir(out, force):
    if os.path.exists(out) and os.listdir(out) and not force:
        raise ConfigError(
            f"output directory {out!r} is not empty (use --force)")
    os.makedirs(out, exist_ok=True)


# ---------------------------------------------------------------------------
# assembling run ingredients from a config


def _constants_for(cfg: RunConfig, truth) -> gains.Constants:
    u0_X = fem.norm(truth.u_star(0.0), "X")
    return gains.estimate_constants(
        truth.q_star, u0_X, nu_floor=cfg.nu_floor, sigma=cfg.sigma,
        c1=cfg.c1, c1_tilde=cfg.c1_tilde)


def build_run(cfg: RunConfig):
    """Mesh, window, truth, schedule, and noise model for a config."""
    mesh = fem.Mesh1D(cfg.n_nodes)
    window = ObservationWindow(mesh, cfg.omega_a, cfg.omega_b)
    truth = estimator.truth_analytic(mesh)
    constants = _constants_for(cfg, truth)
    schedule = gains.GainSchedule(
        mode=cfg.gain_mode, constants=constants, mu_bar=cfg.mu_bar,
        nu_bar=cfg.nu_bar, eps_norm=cfg.eps_norm,
        nu_override=cfg.nu_override if cfg.nu_override > 0 else None)
    noise = NoiseModel(level=cfg.delta, seed=cfg.seed,
                       smoothing_window=cfg.smoothing_window,
                       sigma=cfg.sigma, alpha=cfg.alpha)
    u_hat0 = None
    if cfg.initial_state == "zero":
        u_hat0 = fem.HermiteField.zero(mesh, "dirichlet-zero")
    return mesh, window, truth, schedule, noise, u_hat0


def run_from_config(cfg: RunConfig):
    mesh, window, truth, schedule, noise, u_hat0 = build_run(cfg)
    return estimator.run(mesh, window, truth, schedule, cfg.h_t, cfg.T,
                         regime=cfg.regime, noise=noise, u_hat0=u_hat0,
                         snapshot_times=cfg.snapshot_times), window, truth


def _write_trace(trace, out):
    header = ["t"] + estimator.TRACE_COLUMNS[1:]
    rows = zip(trace.times, *[trace.col(c)
                              for c in estimator.TRACE_COLUMNS[1:]])
    write_csv(os.path.join(out, "trace.csv"), estimator.TRACE_COLUMNS, rows)


def _write_snapshots(trace, out):
    header = ["t", "x", "q_hat", "u_hat", "q_star", "u_star"]
    rows = []
    for ts, snap in sorted(trace.snapshots.items()):
        for j in range(len(snap["x"])):
            rows.append((ts, snap["x"][j], snap["q_hat"][j],
                         snap["u_hat"][j], snap["q_star"][j],
                         snap["u_star"][j]))
    write_csv(os.path.join(out, "snapshots.csv"), header, rows)


# ---------------------------------------------------------------------------
# subcommands


def cmd_forward(cfg: RunConfig, out: str, force: bool) -> int:
    _ensure_outdir(out, force)
    mesh = fem.Mesh1D(cfg.n_nodes)
    truth = estimator.truth_analytic(mesh)
    xs = np.linspace(0.0, 1.0, 201)
    header = ["t", "x", "u_star", "q_star"]
    rows = []
    for t in cfg.snapshot_times:
        if t > cfg.T:
            continue
        u = truth.u_star(t)(xs)
        q = truth.q_star(xs)
        rows.extend((t, x, uv, qv) for x, uv, qv in zip(xs, u, q))
    write_csv(os.path.join(out, "snapshots.csv"), header, rows)
    print(f"wrote {os.path.join(out, 'snapshots.csv')}")
    return EXIT_OK


def cmd_run(cfg: RunConfig, out: str, force: bool) -> int:
    _ensure_outdir(out, force)
    trace, window, truth = run_from_config(cfg)
    _write_trace(trace, out)
    _write_snapshots(trace, out)
    constants = _constants_for(cfg, truth)
    report = diagnostics.audit_propositions(trace, constants,
                                            regime=cfg.regime)
    err = trace.error_series()
    t_min, e_min, flag = diagnostics.detect_semiconvergence(trace.times, err)
    with open(os.path.join(out, "audit.txt"), "w", encoding="utf-8") as fh:
        fh.write(report.to_text() + "\n")
        fh.write(f"semiconvergence: t_min={_fmt(t_min)} "
                 f"min={_fmt(e_min)} growth_flag={flag}\n")
    cfgmod.dump(cfg, os.path.join(out, "config.txt"))
    if not trace.completed:
        print(f"run failed: {trace.failure}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"wrote trace.csv, snapshots.csv, audit.txt in {out}")
    return EXIT_OK


def _score_config(cfg: RunConfig) -> float:
    trace, _, _ = run_from_config(cfg)
    if not trace.completed:
        raise SolverError(trace.failure or "run did not complete")
    return float(np.trapezoid(trace.col("r_X2"), trace.times))


def cmd_tune(cfg: RunConfig, out: str, force: bool) -> int:
    _ensure_outdir(out, force)
    grid = gains.decimal_grid(cfg.grid_lo, cfg.grid_hi)
    import dataclasses

    if cfg.gain_mode == "heuristic":
        # joint search over the two constant weights
        pairs = list(itertools.product(grid, grid))

        def objective(pair):
            mu_bar, nu_bar = pair
            return _score_config(dataclasses.replace(
                cfg, mu_bar=mu_bar, nu_bar=nu_bar))

        best, table = gains.tune_heuristic(objective, pairs)
        header = ["mu_bar", "nu_bar", "score", "status"]
        rows = [(v[0], v[1], s, st) for v, s, st in table]
        best_cfg = dataclasses.replace(cfg, mu_bar=best[0], nu_bar=best[1])
    else:
        key = "c1_tilde" if cfg.gain_mode == "oracle-noisy" else "c1"

        def objective(value):
            return _score_config(dataclasses.replace(cfg, **{key: value}))

        best, table = gains.tune_heuristic(objective, grid)
        header = [key, "score", "status"]
        rows = [(v, s, st) for v, s, st in table]
        best_cfg = dataclasses.replace(cfg, **{key: best})

    write_csv(os.path.join(out, "scores.csv"), header, rows)
    cfgmod.dump(best_cfg, os.path.join(out, "best_config.txt"))
    print(f"best: {best} -> {os.path.join(out, 'best_config.txt')}")
    return EXIT_OK


def cmd_probe_pe(cfg: RunConfig, out: str, force: bool) -> int:
    _ensure_outdir(out, force)
    mesh = fem.Mesh1D(cfg.n_nodes)
    window = ObservationWindow(mesh, cfg.omega_a, cfg.omega_b)
    truth = estimator.truth_analytic(mesh)
    times = np.arange(0.0, cfg.T + 0.5 * cfg.h_t, cfg.h_t)
    w_dofs = np.array([truth.u_star(t).dof for t in times])
    directions = diagnostics.canonical_directions(mesh, seed=cfg.seed)
    gamma0 = 5.0 * cfg.h_t
    T0 = min(cfg.T / 2.0, 30.0)
    report = diagnostics.probe_pe(times, w_dofs, mesh, window, directions,
                                  gamma0, T0, t_a_values=[0.0])
    write_csv(os.path.join(out, "pe_probe.csv"),
              ["t_a", "direction", "best_t_b", "value"],
              [(ta, lab, tb, val) for ta, lab, tb, val in report.table])
    with open(os.path.join(out, "pe_summary.txt"), "w",
              encoding="utf-8") as fh:
        fh.write(f"gamma0={_fmt(gamma0)} T0={_fmt(T0)} "
                 f"epsilon0={_fmt(report.epsilon0)}\n")
    print(f"epsilon0 = {report.epsilon0}")
    return EXIT_OK


def cmd_audit(cfg: RunConfig, out: str, force: bool) -> int:
    _ensure_outdir(out, force)
    trace, window, truth = run_from_config(cfg)
    constants = _constants_for(cfg, truth)
    report = diagnostics.audit_propositions(trace, constants,
                                            regime=cfg.regime)
    text = report.to_text()
    with open(os.path.join(out, "audit.txt"), "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    print(text)
    if not trace.completed:
        return EXIT_NUMERICAL
    return EXIT_OK


COMMANDS = {
    "forward": cmd_forward,
    "run": cmd_run,
    "tune": cmd_tune,
    "probe-pe": cmd_probe_pe,
    "audit": cmd_audit,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pdeident",
        description="online parameter identification experiments")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="path to a key=value config file")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--force", action="store_true",
                        help="allow writing into a non-empty directory")
    args = parser.parse_args(argv)

    try:
        cfg = cfgmod.load(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        cfg.validate()
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        return COMMANDS[args.command](cfg, args.out, args.force)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
