"""Gain formulas, constant estimation and the exhaustive tuner."""

import math

import pytest

from pdeident import gains
from pdeident.gains import (Constants, ErrorNorms, GainSchedule, decimal_grid,
                            mu_exact, mu_noisy, mu_smooth, nu_exact, nu_noisy,
                            nu_smooth, tune_heuristic)

SQRT6 = math.sqrt(6.0)


def ones_constants(**kw):
    base = dict(c1=1.0, c1_tilde=1.0, nu_floor=0.1, L_C=1.0, c_M=1.0,
                C_M=1.0, c_N=1.0, C_N=1.0, C_A=1.0,
                C_embed_Vhat_VXhat=1.0, C_embed_VXhat_X=1.0, sigma=0.0)
    base.update(kw)
    return Constants(**base)


# ----------------------------------------------------------------------
# observed-part gain mu
# ----------------------------------------------------------------------

def test_mu_exact_zero_observed_error():
    assert mu_exact(ErrorNorms(), ones_constants()) == 0.0


def test_mu_exact_without_unobserved_error():
    # p = 0, c1 = 1: the max reduces to the second branch,
    # mu = ||r||_X^2 ||r||_Vtil / ||r||_VXtil^2
    n = ErrorNorms(r_X=2.0, r_Vtil=3.0, r_VXtil=SQRT6)
    assert mu_exact(n, ones_constants()) == pytest.approx(4.0 * 3.0 / 6.0)


def test_mu_exact_crafted_hand_value():
    # max{2*1*1, 1*2} * 2*3/6 = 2
    n = ErrorNorms(r_X=2.0, r_Vtil=3.0, r_VXtil=SQRT6, p_Vhat=1.0)
    assert mu_exact(n, ones_constants()) == pytest.approx(2.0)


def test_mu_exact_scales_with_c1():
    n = ErrorNorms(r_X=2.0, r_Vtil=3.0, r_VXtil=SQRT6)
    assert mu_exact(n, ones_constants(c1=10.0)) == \
        pytest.approx(10.0 * mu_exact(n, ones_constants()))


# ----------------------------------------------------------------------
# unobserved-part gain nu
# ----------------------------------------------------------------------

def test_nu_exact_floor_when_no_unobserved_error():
    assert nu_exact(ErrorNorms(), ones_constants()) == 0.1


def test_nu_exact_floor_dominates_small_errors():
    n = ErrorNorms(p_X=1e-3, p_Vhat=1e-3, p_VXhat=1.0)
    assert nu_exact(n, ones_constants()) == 0.1


def test_nu_exact_crafted_hand_value():
    # all constants 1, e=0, p-norms 1: 4 * (1 + 1*(0 + 0.5)) * 1 = 6
    n = ErrorNorms(e_Q=0.0, p_X=1.0, p_Vhat=1.0, p_VXhat=1.0)
    assert nu_exact(n, ones_constants()) == pytest.approx(6.0)


def test_nu_exact_grows_with_parameter_error():
    n0 = ErrorNorms(p_X=1.0, p_Vhat=1.0, p_VXhat=1.0)
    n1 = ErrorNorms(e_Q=2.0, p_X=1.0, p_Vhat=1.0, p_VXhat=1.0)
    assert nu_exact(n1, ones_constants()) > nu_exact(n0, ones_constants())


# ----------------------------------------------------------------------
# noisy and smoothed variants
# ----------------------------------------------------------------------

def defect_free(r_X=1.0, r_Vtil=1.0, r_VXtil=1.0, p_Vhat=10.0):
    # d = 0 makes the regularized observed error coincide with r
    return ErrorNorms(r_X=r_X, r_Vtil=r_Vtil, r_VXtil=r_VXtil,
                      p_Vhat=p_Vhat, ralpha_X=r_X, ralpha_Vtil=r_Vtil,
                      ralpha_VXtil=r_VXtil)


def test_mu_noisy_defect_free_doubles_exact():
    # with d = 0 and the unobserved-error branch dominating, the noisy bound
    # is the exact one with coefficient 4 L_C in place of 2 L_C
    n = defect_free()
    assert mu_noisy(n, ones_constants()) == \
        pytest.approx(2.0 * mu_exact(n, ones_constants()))


def test_mu_noisy_zero_observed_error():
    assert mu_noisy(ErrorNorms(), ones_constants()) == 0.0


def test_mu_noisy_crafted_hand_value():
    # constants 1, r = ralpha = (1,1,1), d = (1,1), p_Vhat = 1, e_Q = 1:
    # first branch = 4*(1+1)*1 + 4*(1+1+1)*1*1 = 20; times ralpha_Vtil / 1
    n = ErrorNorms(r_X=1.0, r_Vtil=1.0, r_VXtil=1.0, p_Vhat=1.0, e_Q=1.0,
                   d_X=1.0, d_Vtil=1.0, ralpha_X=1.0, ralpha_Vtil=1.0,
                   ralpha_VXtil=1.0)
    assert mu_noisy(n, ones_constants()) == pytest.approx(20.0)


def test_mu_noisy_sigma_branch():
    # huge sigma: branch 2 sigma / c_M * r_X^2 dominates
    n = defect_free(p_Vhat=0.0)
    c = ones_constants(sigma=100.0)
    assert mu_noisy(n, c) == pytest.approx(200.0)


def test_mu_smooth_defect_free_reduces_to_exact():
    n = defect_free(p_Vhat=10.0)
    assert mu_smooth(n, ones_constants()) == \
        pytest.approx(mu_exact(n, ones_constants()))


def test_mu_smooth_crafted_hand_value():
    # first = 2*(1*(1+1) + 1) = 6 dominates c1*ralpha_X = 1;
    # mu = 6 * 1 * 1 / 1 = 6
    n = ErrorNorms(d_Vtil=1.0, p_Vhat=1.0, dtil_X=1.0, ralpha_X=1.0,
                   ralpha_Vtil=1.0, ralpha_VXtil=1.0)
    assert mu_smooth(n, ones_constants()) == pytest.approx(6.0)


def test_nu_noisy_crafted_hand_value():
    # 4*(1+1*1)*(1+1) + 2*1 = 18, times p_X / p_VXhat^2 = 1
    n = ErrorNorms(e_Q=1.0, p_X=1.0, p_Vhat=1.0, p_VXhat=1.0, d_Vtil=1.0)
    assert nu_noisy(n, ones_constants()) == pytest.approx(18.0)


def test_nu_noisy_floor():
    assert nu_noisy(ErrorNorms(), ones_constants()) == 0.1


def test_nu_smooth_equals_nu_noisy():
    n = ErrorNorms(e_Q=0.5, p_X=1.5, p_Vhat=2.0, p_VXhat=1.0, d_Vtil=0.3)
    assert nu_smooth(n, ones_constants()) == nu_noisy(n, ones_constants())


# ----------------------------------------------------------------------
# schedule
# ----------------------------------------------------------------------

def test_schedule_rejects_unknown_mode():
    with pytest.raises(ValueError):
        GainSchedule(mode="adaptive")


def test_schedule_rejects_nonpositive_override():
    with pytest.raises(ValueError):
        GainSchedule(nu_override=0.0)


def test_schedule_heuristic_returns_bars():
    s = GainSchedule(mode="heuristic", mu_bar=7.0, nu_bar=0.25)
    n = ErrorNorms(r_X=1.0, p_X=1.0)
    assert s.mu(n) == 7.0
    assert s.nu(n) == 0.25


def test_schedule_nu_override_pins_nu_only():
    n = ErrorNorms(e_Q=0.0, r_X=2.0, r_Vtil=3.0, r_VXtil=SQRT6,
                   p_X=1.0, p_Vhat=1.0, p_VXhat=1.0)
    s = GainSchedule(mode="oracle-exact", constants=ones_constants(),
                     nu_override=0.4)
    assert s.nu(n) == 0.4
    assert s.mu(n) == pytest.approx(2.0)  # mu still scheduled


def test_schedule_dispatches_modes():
    n = defect_free()
    c = ones_constants()
    assert GainSchedule(mode="oracle-exact", constants=c).mu(n) == \
        mu_exact(n, c)
    assert GainSchedule(mode="oracle-noisy", constants=c).mu(n) == \
        mu_noisy(n, c)
    assert GainSchedule(mode="oracle-smooth", constants=c).mu(n) == \
        mu_smooth(n, c)
    assert GainSchedule(mode="oracle-noisy", constants=c).nu(n) == \
        nu_noisy(n, c)


# ----------------------------------------------------------------------
# constant estimation
# ----------------------------------------------------------------------

def test_estimate_constants_benchmark_values():
    q = lambda x: 0.025 * x**2 - 0.025 * x
    c = gains.estimate_constants(q, math.sqrt(0.5), sigma=0.3, c1=5.0)
    # ||q*||_inf = 0.00625 at the vertex x = 0.5, below the 1 floor
    assert c.L_C == 1.0
    assert c.C_A == 1.0          # sup_t ||u*||_X = sqrt(1/2) < 1
    assert c.c_M == c.C_M == c.c_N == c.C_N == 1.0
    assert c.sigma == 0.3
    assert c.c1 == 5.0


def test_estimate_constants_large_parameter():
    c = gains.estimate_constants(lambda x: 3.0 * x, 2.0)
    assert c.L_C == pytest.approx(3.0)
    assert c.C_A == pytest.approx(2.0)


# ----------------------------------------------------------------------
# tuner
# ----------------------------------------------------------------------

def test_tuner_single_point_grid():
    best, table = tune_heuristic(lambda c: c**2, [4.0])
    assert best == 4.0
    assert table == [(4.0, 16.0, "ok")]


def test_tuner_convex_objective():
    best, _ = tune_heuristic(lambda c: (c - 3.0) ** 2, [1.0, 2.0, 3.0, 4.0])
    assert best == 3.0


def test_tuner_scores_failures_and_continues():
    def objective(c):
        if c == 2.0:
            raise RuntimeError("diverged")
        return c
    best, table = tune_heuristic(objective, [1.0, 2.0, 3.0])
    assert best == 1.0
    statuses = {v: s for v, _, s in table}
    assert statuses[2.0].startswith("failed")
    assert [v for v, s, _ in table if math.isinf(s)] == [2.0]


def test_tuner_nonfinite_scores_marked():
    _, table = tune_heuristic(lambda c: float("nan"), [1.0])
    assert table[0][2] == "non-finite"


def test_tuner_tie_breaks_toward_smaller():
    best, _ = tune_heuristic(lambda c: 1.0, [3.0, 1.0, 2.0])
    assert best == 1.0


def test_tuner_empty_grid():
    with pytest.raises(ValueError):
        tune_heuristic(lambda c: c, [])


def test_tuner_deterministic():
    grid = decimal_grid(0.1, 100.0)
    a = tune_heuristic(lambda c: (c - 7.0) ** 2, grid)
    b = tune_heuristic(lambda c: (c - 7.0) ** 2, grid)
    assert a == b


def test_decimal_grid_structure():
    g = decimal_grid(0.1, 1000.0)
    assert g[0] == 0.1 and g[-1] == 1000.0
    for v in (0.5, 1.0, 7.0, 10.0, 90.0, 100.0, 600.0):
        assert v in g
    assert all(b > a for a, b in zip(g, g[1:]))
    assert len(g) == 37
