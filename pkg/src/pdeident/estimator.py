"""Coupled evolution of the parameter and state estimates.

One backward-Euler step solves a linear 2-block system in (q_hat, u_hat):
the multiplication-operator weight, the stabilization normalization and the
gains are frozen at the old time level, the (q_hat, u_hat) coupling and the
stabilization operators are implicit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from . import fem
from .fem import HermiteField, Mesh1D, SolverError, interpolate
from .gains import Constants, ErrorNorms, GainSchedule, estimate_constants
from .observation import ObservationStream, ObservationWindow, NoiseModel


# ----------------------------------------------------------------------
# Ground truth
# ----------------------------------------------------------------------

@dataclass
class TruthModel:
    """Exact parameter/state pair with forcing, analytic or simulated."""

    mesh: Mesh1D
    q_star: HermiteField
    u_star: Callable[[float], HermiteField]
    f: Callable[[float, np.ndarray], np.ndarray]
    D: float = 1.0
    provenance: str = "analytic"


def truth_analytic(mesh: Mesh1D, D: float = 1.0) -> TruthModel:
    """The degenerate-diffusion benchmark: u* = sin(pi x)/(1+t),
    q* = 0.025 x^2 - 0.025 x, forcing chosen so the pair solves the PDE."""

    q_star = interpolate(mesh, lambda x: 0.025 * x**2 - 0.025 * x,
                         lambda x: 0.05 * x - 0.025)

    def u_star(t: float) -> HermiteField:
        c = 1.0 / (1.0 + t)
        dof = np.empty(mesh.n_dof)
        dof[0::2] = c * np.sin(np.pi * mesh.nodes)
        dof[1::2] = c * np.pi * np.cos(np.pi * mesh.nodes)
        return HermiteField(mesh, dof, "dirichlet-zero")

    def f(t: float, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        c = 1.0 / (1.0 + t)
        return c * (D * np.pi**2 - c + (0.025 * x**2 - 0.025 * x)) * np.sin(np.pi * x)

    return TruthModel(mesh=mesh, q_star=q_star, u_star=u_star, f=f, D=D,
                      provenance="analytic")


def _dirichlet_rows(mesh: Mesh1D) -> list[int]:
    return [0, 2 * (mesh.n_nodes - 1)]


def _apply_dirichlet(A: np.ndarray, b: np.ndarray, rows: list[int]) -> None:
    for i in rows:
        A[i, :] = 0.0
        A[i, i] = 1.0
        b[i] = 0.0


def forward_solve(mesh: Mesh1D, q: HermiteField, u0: HermiteField,
                  f: Callable, D: float, h_t: float, T: float):
    """Backward-Euler trajectory of u_t - (D u')' + q u = f with g = 0.

    Returns (times, dofs) with dofs of shape (n_steps+1, n_dof).
    """
    if h_t <= 0:
        raise ValueError("h_t must be positive")
    grid = mesh.full_grid
    M = fem.assemble_mass(mesh)
    K = fem.assemble_stiffness(mesh, D)
    W = fem.assemble_weighted_mass(mesh, q)
    A = M + h_t * (K + W)
    bc = _dirichlet_rows(mesh)
    _apply_dirichlet(A, np.zeros(mesh.n_dof), bc)
    lu, piv = scipy.linalg.lu_factor(A)

    n_steps = int(round(T / h_t))
    times = h_t * np.arange(n_steps + 1)
    dofs = np.empty((n_steps + 1, mesh.n_dof))
    dofs[0] = HermiteField(mesh, u0.dof, "dirichlet-zero").dof
    for n in range(n_steps):
        t1 = times[n + 1]
        rhs = M @ dofs[n] + h_t * grid.load_vector(f(t1, grid.x))
        for i in bc:
            rhs[i] = 0.0
        x = scipy.linalg.lu_solve((lu, piv), rhs)
        if not np.all(np.isfinite(x)):
            raise SolverError(f"forward solve diverged at t={t1:g}")
        dofs[n + 1] = x
    return times, dofs


# ----------------------------------------------------------------------
# Run configuration and trace
# ----------------------------------------------------------------------

TRACE_COLUMNS = [
    "t", "e_Q2", "r_X2", "p_X2", "ralpha_X2", "mu", "nu", "tstar_flag",
    "e_Q", "r_X", "r_Vtil", "r_VXtil", "p_X", "p_Vhat", "p_VXhat",
    "ralpha_X", "ralpha_Vtil", "ralpha_VXtil",
    "d_X", "d_Vtil", "dtil_X", "Pustar_Vhat", "z_Z", "noise_Z", "qhat_Q",
]


@dataclass
class RunTrace:
    """Per-step scalar records plus the dof trajectories and snapshots."""

    columns: dict[str, list] = field(default_factory=lambda: {c: [] for c in TRACE_COLUMNS})
    snapshots: dict[float, dict[str, np.ndarray]] = field(default_factory=dict)
    q_hat_traj: list = field(default_factory=list)
    u_hat_traj: list = field(default_factory=list)
    u_star_traj: list = field(default_factory=list)
    completed: bool = False
    failure: str | None = None

    def record(self, **kw):
        for c in TRACE_COLUMNS:
            self.columns[c].append(float(kw.get(c, 0.0)))

    def col(self, name: str) -> np.ndarray:
        return np.asarray(self.columns[name], dtype=float)

    @property
    def times(self) -> np.ndarray:
        return self.col("t")

    def error_series(self) -> np.ndarray:
        """The Lyapunov quantity ||e||_Q^2 + ||r||_X^2 per step."""
        return self.col("e_Q2") + self.col("r_X2")


# ----------------------------------------------------------------------
# Estimator
# ----------------------------------------------------------------------

@dataclass
class EstimatorState:
    t: float
    q_hat: np.ndarray
    u_hat: np.ndarray
    regime: str = "exact"


class Estimator:
    """Shared machinery for the exact / noisy / smoothed regimes.

    All three regimes run the same arithmetic; they differ only in the data
    dofs fed into the step, so the regime reductions are bitwise.
    """

    def __init__(self, mesh: Mesh1D, window: ObservationWindow,
                 truth: TruthModel, schedule: GainSchedule):
        self.mesh = mesh
        self.window = window
        self.truth = truth
        self.schedule = schedule
        self.bc = _dirichlet_rows(mesh)
        n = mesh.n_dof
        self.n = n
        go, gc, gfull = window.grid_omega, window.grid_comp, mesh.full_grid
        self.go, self.gc, self.gfull = go, gc, gfull
        D = truth.D
        self.M = fem.assemble_mass(mesh)
        self.K1 = fem.assemble_stiffness(mesh, 1.0)
        self.MQ = self.M + self.K1  # H^1 surrogate Gram matrix for Q
        self.K_omega_D = go.assemble(fem._coeff_on_grid(go, D), order=1)
        self.K_comp_D = gc.assemble(fem._coeff_on_grid(gc, D), order=1)
        # stabilization operators: their quadratic forms are the VX-norms
        absD_o = np.abs(fem._coeff_on_grid(go, D))
        absD_c = np.abs(fem._coeff_on_grid(gc, D))
        self.S_mu = go.assemble(absD_o, order=1) + go.assemble(1.0, order=0)
        self.S_nu = gc.assemble(absD_c, order=1) + gc.assemble(1.0, order=0)
        # node-interleaved permutation (q_v, q_d, u_v, u_d per node) keeps the
        # coupled system banded for the direct solver
        perm = np.empty(2 * n, dtype=int)
        for j in range(mesh.n_nodes):
            perm[4 * j:4 * j + 2] = (2 * j, 2 * j + 1)
            perm[4 * j + 2:4 * j + 4] = (n + 2 * j, n + 2 * j + 1)
        self.perm = perm
        self.iperm = np.argsort(perm)

    # -- norms ----------------------------------------------------------

    def _windowed_sq(self, grid, dof, weighted_absD=False) -> float:
        if grid.npoints == 0:
            return 0.0
        if weighted_absD:
            vals = np.abs(fem._coeff_on_grid(grid, self.truth.D)) * grid.derivs(dof) ** 2
        else:
            vals = grid.values(dof) ** 2
        return grid.integrate(vals)

    def _div_grad_sq(self, grid, dof) -> float:
        if grid.npoints == 0:
            return 0.0
        return grid.integrate(fem._div_D_grad(grid, dof, self.truth.D) ** 2)

    def norms_at(self, state: EstimatorState, obs=None) -> ErrorNorms:
        """Oracle error norms at the state's time (uses the true solution)."""
        u_star = self.truth.u_star(state.t).dof
        e = state.q_hat - self.truth.q_star.dof
        diff = state.u_hat - u_star
        go, gc = self.go, self.gc
        r_X2 = self._windowed_sq(go, diff)
        p_X2 = self._windowed_sq(gc, diff)
        n = ErrorNorms(
            e_Q=math.sqrt(max(e @ (self.MQ @ e), 0.0)),
            r_X=math.sqrt(max(r_X2, 0.0)),
            r_Vtil=math.sqrt(self._div_grad_sq(go, diff)) + math.sqrt(max(r_X2, 0.0)),
            r_VXtil=math.sqrt(max(self._windowed_sq(go, diff, True) + r_X2, 0.0)),
            p_X=math.sqrt(max(p_X2, 0.0)),
            p_Vhat=math.sqrt(self._div_grad_sq(gc, diff)) + math.sqrt(max(p_X2, 0.0)),
            p_VXhat=math.sqrt(max(self._windowed_sq(gc, diff, True) + p_X2, 0.0)),
        )
        if obs is not None:
            d = obs.d_dof
            da = state.u_hat - obs.u_alpha_dof  # r_alpha on omega
            d_X2 = self._windowed_sq(go, d)
            ra_X2 = self._windowed_sq(go, da)
            n.d_X = math.sqrt(max(d_X2, 0.0))
            n.d_Vtil = math.sqrt(self._div_grad_sq(go, d)) + math.sqrt(max(d_X2, 0.0))
            n.ralpha_X = math.sqrt(max(ra_X2, 0.0))
            n.ralpha_Vtil = (math.sqrt(self._div_grad_sq(go, da))
                             + math.sqrt(max(ra_X2, 0.0)))
            n.ralpha_VXtil = math.sqrt(max(self._windowed_sq(go, da, True) + ra_X2, 0.0))
            if obs.dtil_dof is not None:
                n.dtil_X = math.sqrt(max(self._windowed_sq(go, obs.dtil_dof), 0.0))
        else:
            n.ralpha_X = n.r_X
            n.ralpha_Vtil = n.r_Vtil
            n.ralpha_VXtil = n.r_VXtil
        return n

    # -- stepping --------------------------------------------------------

    def step(self, state: EstimatorState, data_old: np.ndarray,
             data_new: np.ndarray, norms: ErrorNorms, mu: float, nu: float,
             h_t: float, sigma: float = 0.0) -> EstimatorState:
        """One semi-implicit backward-Euler step.

        data_old/data_new are the observed-part dofs (interpolated exact data
        in the exact regime, the regularized lift otherwise) at the old and
        new time level.
        """
        n = self.n
        go, gc, gfull = self.go, self.gc, self.gfull
        # frozen multiplication weight: data inside omega, u_hat outside
        W_omega = go.assemble(go.values(data_old), order=0)
        W_comp = gc.assemble(gc.values(state.u_hat), order=0)
        W_full = W_omega + W_comp

        denom = norms.ralpha_Vtil
        theta_mu = mu / denom if denom > self.schedule.eps_norm else 0.0

        t_new = state.t + h_t
        f_vec = gfull.load_vector(self.truth.f(t_new, gfull.x))

        A = np.zeros((2 * n, 2 * n))
        b = np.zeros(2 * n)
        A[:n, :n] = (1.0 + sigma * h_t) * self.MQ
        A[:n, n:] = -h_t * W_omega
        A[n:, :n] = h_t * W_full
        A[n:, n:] = (self.M + h_t * (self.K_comp_D + theta_mu * self.S_mu
                                     + nu * self.S_nu))
        b[:n] = self.MQ @ state.q_hat - h_t * (W_omega @ data_new)
        b[n:] = (self.M @ state.u_hat
                 + h_t * (f_vec - self.K_omega_D @ data_new
                          + theta_mu * (self.S_mu @ data_new)))
        rows = [n + i for i in self.bc]
        _apply_dirichlet(A, b, rows)
        Ap = A[np.ix_(self.perm, self.perm)]
        try:
            x = fem.solve_linear(Ap, b[self.perm])[self.iperm]
        except SolverError as exc:
            raise SolverError(f"estimator step failed at t={t_new:g}: {exc}",
                              cond=exc.cond) from exc
        return EstimatorState(t=t_new, q_hat=x[:n], u_hat=x[n:],
                              regime=state.regime)


# ----------------------------------------------------------------------
# Orchestration
# ----------------------------------------------------------------------

DEFAULT_SNAPSHOT_TIMES = (0.0, 6.0, 15.0, 30.0, 45.0, 60.0)


def run(mesh: Mesh1D, window: ObservationWindow, truth: TruthModel,
        schedule: GainSchedule, h_t: float, T: float,
        regime: str = "exact", noise: NoiseModel | None = None,
        q_hat0: HermiteField | None = None, u_hat0: HermiteField | None = None,
        snapshot_times=DEFAULT_SNAPSHOT_TIMES,
        sample_points: int = 201) -> RunTrace:
    """Run the estimator over [0, T] and collect the full diagnostic trace."""
    if regime not in ("exact", "noisy", "smooth"):
        raise ValueError(f"unknown regime {regime!r}")
    noise = noise or NoiseModel()
    est = Estimator(mesh, window, truth, schedule)
    # the damping term -sigma*q_hat belongs to the noisy regime only
    sigma = noise.sigma if regime == "noisy" else 0.0

    q0 = q_hat0.dof.copy() if q_hat0 is not None else np.zeros(mesh.n_dof)
    if u_hat0 is not None:
        u0 = HermiteField(mesh, u_hat0.dof, "dirichlet-zero").dof.copy()
    else:
        u0 = truth.u_star(0.0).dof.copy()
    state = EstimatorState(t=0.0, q_hat=q0, u_hat=u0, regime=regime)

    stream = None
    if regime != "exact":
        stream = ObservationStream(window, noise, smoothed=(regime == "smooth"))

    n_steps = int(round(T / h_t))
    times = h_t * np.arange(n_steps + 1)
    snap_idx = {}
    for ts in snapshot_times:
        k = int(round(ts / h_t))
        if 0 <= k <= n_steps and abs(times[k] - ts) < 1e-9 + 1e-9 * abs(ts):
            snap_idx[k] = ts
    xs = np.linspace(0.0, 1.0, sample_points)

    trace = RunTrace()
    c = schedule.constants

    def data_at(k: int):
        """Observed-part dofs and the observation record at step k."""
        z = truth.u_star(times[k]).dof
        if stream is None:
            return z, None
        obs = stream.observe(times[k], z)
        return obs.u_alpha_dof, obs

    def snapshot(ts: float, st: EstimatorState):
        qh = HermiteField(mesh, st.q_hat)
        uh = HermiteField(mesh, st.u_hat)
        us = truth.u_star(ts)
        trace.snapshots[ts] = {
            "x": xs, "q_hat": qh(xs), "u_hat": uh(xs),
            "q_star": truth.q_star(xs), "u_star": us(xs),
        }

    def record(st: EstimatorState, nrm: ErrorNorms, obs, mu, nu):
        z_Z = noise_Z = 0.0
        if obs is not None:
            z_Z = fem.norm(obs.z_dof, "Z", window=window, mesh=mesh)
            noise_Z = fem.norm(obs.z_delta_dof - obs.z_dof, "Z",
                               window=window, mesh=mesh)
        pu = truth.u_star(st.t).dof
        pustar_vhat = (math.sqrt(est._div_grad_sq(est.gc, pu))
                       + math.sqrt(est._windowed_sq(est.gc, pu)))
        qhat_Q = math.sqrt(max(st.q_hat @ (est.MQ @ st.q_hat), 0.0))
        if nrm.r_X == 0.0:
            violated = nrm.d_Vtil > 0.0
        else:
            violated = nrm.d_Vtil > (c.c_M / (2 * c.C_M)) * nrm.r_VXtil**2 / nrm.r_X
        trace.record(
            t=st.t, e_Q2=nrm.e_Q**2, r_X2=nrm.r_X**2, p_X2=nrm.p_X**2,
            ralpha_X2=nrm.ralpha_X**2, mu=mu, nu=nu,
            tstar_flag=1.0 if violated else 0.0,
            e_Q=nrm.e_Q, r_X=nrm.r_X, r_Vtil=nrm.r_Vtil, r_VXtil=nrm.r_VXtil,
            p_X=nrm.p_X, p_Vhat=nrm.p_Vhat, p_VXhat=nrm.p_VXhat,
            ralpha_X=nrm.ralpha_X, ralpha_Vtil=nrm.ralpha_Vtil,
            ralpha_VXtil=nrm.ralpha_VXtil,
            d_X=nrm.d_X, d_Vtil=nrm.d_Vtil, dtil_X=nrm.dtil_X,
            Pustar_Vhat=pustar_vhat, z_Z=z_Z, noise_Z=noise_Z, qhat_Q=qhat_Q,
        )
        trace.q_hat_traj.append(st.q_hat.copy())
        trace.u_hat_traj.append(st.u_hat.copy())
        trace.u_star_traj.append(pu.copy())

    data_old, obs_old = data_at(0)
    nrm = est.norms_at(state, obs_old)
    mu, nu = schedule.mu(nrm), schedule.nu(nrm)
    record(state, nrm, obs_old, mu, nu)
    if 0 in snap_idx:
        snapshot(snap_idx[0], state)

    for k in range(n_steps):
        data_new, obs_new = data_at(k + 1)
        try:
            state = est.step(state, data_old, data_new, nrm, mu, nu, h_t,
                             sigma=sigma)
        except SolverError as exc:
            trace.failure = str(exc)
            return trace
        # snap to the time grid: accumulated t drifts in the last bits, which
        # would make the oracle norms disagree with the observed data times
        state.t = float(times[k + 1])
        data_old, obs_old = data_new, obs_new
        nrm = est.norms_at(state, obs_old)
        mu, nu = schedule.mu(nrm), schedule.nu(nrm)
        record(state, nrm, obs_old, mu, nu)
        if k + 1 in snap_idx:
            snapshot(snap_idx[k + 1], state)

    trace.completed = True
    return trace
