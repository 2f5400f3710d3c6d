"""Excitation probing, link-constant estimation, semiconvergence detection
and the bound audits."""

import math

import numpy as np
import pytest

from pdeident import diagnostics, estimator, fem, gains
from pdeident.diagnostics import (audit_propositions, canonical_directions,
                                  detect_semiconvergence,
                                  estimate_link_constants, lyapunov_increments,
                                  probe_pe)
from pdeident.estimator import RunTrace
from pdeident.fem import Mesh1D
from pdeident.observation import NoiseModel, ObservationWindow


# ----------------------------------------------------------------------
# excitation probe
# ----------------------------------------------------------------------

def unit_sine_direction(mesh):
    xi = fem.interpolate(mesh, lambda x: np.sin(np.pi * x),
                         lambda x: np.pi * np.cos(np.pi * x))
    return [("sine", xi.dof / fem.norm(xi, "Q"))]


def test_probe_zero_trajectory_gives_no_excitation(mesh, window):
    times = 0.6 * np.arange(21)
    w = np.zeros((21, mesh.n_dof))
    report = probe_pe(times, w, mesh, window, unit_sine_direction(mesh),
                      gamma0=3.0, T0=6.0)
    assert report.epsilon0 == 0.0
    assert all(val == 0.0 for _, _, _, val in report.table)


def test_probe_constant_trajectory_full_window(mesh, full_window):
    # w = 1: the window integral is gamma0 * ||xi||_X
    times = 0.6 * np.arange(21)
    one = np.zeros(mesh.n_dof)
    one[0::2] = 1.0
    w = np.tile(one, (21, 1))
    (label, xi), = unit_sine_direction(mesh)
    report = probe_pe(times, w, mesh, full_window, [(label, xi)],
                      gamma0=3.0, T0=6.0)
    expected = 3.0 * fem.norm(xi, "X", mesh=mesh)
    assert report.epsilon0 == pytest.approx(expected, abs=1e-12)


def test_probe_monotone_in_window_length(mesh, window, truth):
    # nonnegative integrand (u* >= 0, xi >= 0): longer windows never lose
    times = 0.6 * np.arange(51)
    w = np.array([truth.u_star(t).dof for t in times])
    pos = np.zeros(mesh.n_dof)
    pos[0::2] = 1.0
    pos = pos / fem.norm(pos, "Q", mesh=mesh)
    vals = []
    for gamma0 in (1.2, 3.0, 6.0):
        rep = probe_pe(times, w, mesh, window, [("one", pos)],
                       gamma0=gamma0, T0=12.0)
        vals.append(rep.epsilon0)
    assert vals[0] <= vals[1] <= vals[2]
    assert vals[0] > 0.0


def test_probe_contract_errors(mesh, window):
    times = 0.6 * np.arange(11)
    w = np.zeros((11, mesh.n_dof))
    with pytest.raises(ValueError):
        probe_pe(times, w, mesh, window, unit_sine_direction(mesh),
                 gamma0=0.3, T0=6.0)  # gamma0 < h_t
    bad = [("raw", np.ones(mesh.n_dof))]  # not unit Q-norm
    with pytest.raises(ValueError):
        probe_pe(times, w, mesh, window, bad, gamma0=3.0, T0=6.0)
    with pytest.raises(ValueError):
        probe_pe(times, w, mesh, window, unit_sine_direction(mesh),
                 gamma0=3.0, T0=6.0, t_a_values=[-1.0])


def test_canonical_directions_are_unit(mesh):
    dirs = canonical_directions(mesh, n_random=8, seed=0)
    assert len(dirs) == mesh.n_dof + 8
    for _, dof in dirs:
        assert fem.norm(dof, "Q", mesh=mesh) == pytest.approx(1.0,
                                                              abs=1e-10)


def test_probe_benchmark_trajectory(mesh, window, truth):
    # basis directions supported outside omega receive no excitation, so the
    # minimum over the full canonical set is exactly zero; directions seen by
    # the window are all excited
    times = 0.6 * np.arange(51)
    w = np.array([truth.u_star(t).dof for t in times])
    dirs = canonical_directions(mesh, seed=0)
    report = probe_pe(times, w, mesh, window, dirs, gamma0=3.0, T0=15.0)
    assert report.epsilon0 == 0.0
    by_label = {lab: val for _, lab, _, val in report.table}
    assert by_label["basis_value_0"] == 0.0       # supported in [0, 2h]
    assert by_label["basis_value_15"] > 1e-3      # node at x = 0.5
    assert all(by_label[f"random_{k}"] > 1e-4 for k in range(8))


# ----------------------------------------------------------------------
# link constants
# ----------------------------------------------------------------------

def synthetic_series(n=50, power=1.0):
    r = np.exp(-0.1 * np.arange(n))
    return {
        "times": 0.6 * np.arange(n),
        "r_X": r,
        "r_Vtil": 2.0 * r,
        "r_VXtil": np.sqrt(2.0) * r,
        "p_Vhat": r**power,
        "mu": np.ones(n),
    }


def test_link_constants_identity_power_law():
    rep = estimate_link_constants(gamma0=3.0, **synthetic_series(power=1.0))
    assert rep.rho == pytest.approx(1.0, abs=1e-9)
    assert rep.C_rho == pytest.approx(1.0, abs=1e-9)


def test_link_constants_quadratic_power_law():
    rep = estimate_link_constants(gamma0=3.0, **synthetic_series(power=2.0))
    assert rep.rho == pytest.approx(2.0, abs=1e-6)


def test_link_constants_interpolation_bracket():
    # r_VXtil^2 / (r_Vtil r_X) = 2 r^2 / (2 r^2) = 1 for the synthetic trace
    rep = estimate_link_constants(gamma0=3.0, **synthetic_series())
    assert rep.c_int == pytest.approx(1.0, abs=1e-12)
    assert rep.C_int == pytest.approx(1.0, abs=1e-12)
    assert rep.c_int <= rep.C_int


def test_link_constants_too_few_pairs():
    s = synthetic_series(n=2)
    rep = estimate_link_constants(gamma0=0.6, **s)
    assert math.isnan(rep.rho)


def test_link_constants_sup_branch():
    # lambda = kappa = 1 uses the windowed sup of numer/theta;
    # theta = mu r_VXtil^2 / r_Vtil = r here, so sup p_Vhat/theta = sup 1 = 1
    rep = estimate_link_constants(gamma0=3.0, lam=1.0, kappa=1.0,
                                  **synthetic_series())
    assert rep.lam == 1.0 and rep.kappa == 1.0
    assert rep.C_lambda == pytest.approx(1.0, abs=1e-12)


def test_link_constants_default_exponents():
    rep = estimate_link_constants(gamma0=3.0, **synthetic_series(power=2.0))
    # kappa = max{1 + 1/rho, 2} = 2, lambda = kappa/((kappa-1) rho) >= 1
    assert rep.kappa == pytest.approx(2.0, abs=1e-5)
    assert rep.lam >= 1.0


# ----------------------------------------------------------------------
# semiconvergence detection
# ----------------------------------------------------------------------

def test_semiconvergence_monotone_series():
    times = np.arange(30.0)
    errors = np.exp(-0.2 * times)
    t_min, e_min, flag = detect_semiconvergence(times, errors)
    assert t_min == times[-1]
    assert not flag


def test_semiconvergence_v_shape():
    times = np.arange(41.0)
    errors = np.abs(times - 15.0) + 1.0
    t_min, e_min, flag = detect_semiconvergence(times, errors)
    assert abs(t_min - 15.0) <= 2.0  # smoothing may shift the vertex a step
    assert flag


def test_semiconvergence_needs_three_samples():
    with pytest.raises(ValueError):
        detect_semiconvergence(np.arange(2.0), np.arange(2.0))


def test_semiconvergence_flat_series_not_flagged():
    times = np.arange(20.0)
    t_min, e_min, flag = detect_semiconvergence(times, np.ones(20))
    assert not flag
    assert e_min == 1.0


# ----------------------------------------------------------------------
# audits
# ----------------------------------------------------------------------

def zero_trace(n=10):
    tr = RunTrace()
    for k in range(n):
        tr.record(t=0.6 * k)
    return tr


def test_audit_zero_trace_trivially_passes(constants):
    for regime in ("exact", "noisy", "smooth"):
        report = audit_propositions(zero_trace(), constants, regime=regime)
        assert report.all_passed()


def test_audit_is_pure(mesh, full_window, truth, constants):
    sched = gains.GainSchedule(mode="oracle-exact", constants=constants)
    tr = estimator.run(mesh, full_window, truth, sched, 0.6, 30.0)
    a = audit_propositions(tr, constants, regime="exact")
    b = audit_propositions(tr, constants, regime="exact")
    assert a.to_text() == b.to_text()


def test_audit_unknown_regime(constants):
    with pytest.raises(ValueError):
        audit_propositions(zero_trace(), constants, regime="bayesian")


def test_audit_exact_run_passes(mesh, full_window, truth, constants):
    sched = gains.GainSchedule(mode="oracle-exact", constants=constants)
    tr = estimator.run(mesh, full_window, truth, sched, 0.6, 60.0,
                       u_hat0=fem.HermiteField.zero(mesh, "dirichlet-zero"))
    report = audit_propositions(tr, constants, regime="exact")
    assert len(report.lines) == 3
    assert report.all_passed()
    assert math.isinf(report.Tstar)


def test_audit_noisy_restricted_to_pre_breakdown(mesh, window, truth,
                                                 constants):
    sched = gains.GainSchedule(mode="oracle-noisy", constants=constants,
                               nu_override=0.5)
    tr = estimator.run(mesh, window, truth, sched, 0.6, 30.0, regime="noisy",
                       noise=NoiseModel(level=0.10, seed=1))
    report = audit_propositions(tr, constants, regime="noisy")
    flags = tr.col("tstar_flag")
    if flags.any():
        first = tr.times[int(np.argmax(flags > 0))]
        assert report.Tstar == first
        # the coupling-integral line only applies when Tstar is infinite
        assert all("coupling" not in line.name for line in report.lines)
    else:
        assert math.isinf(report.Tstar)


def test_audit_report_formatting(constants):
    report = audit_propositions(zero_trace(), constants, regime="exact")
    text = report.to_text()
    assert "Tstar" in text
    assert text.count("PASS") == 3


def test_lyapunov_increments_shape(mesh, full_window, truth, constants):
    sched = gains.GainSchedule(mode="oracle-exact", constants=constants)
    tr = estimator.run(mesh, full_window, truth, sched, 0.6, 6.0)
    inc = lyapunov_increments(tr)
    assert len(inc) == len(tr.times) - 1
