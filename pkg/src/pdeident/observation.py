"""Observation operator on a subinterval: projections, regularized lift,
noise synthesis, time smoothing and detection of the breakdown time T*.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .fem import HermiteField, Mesh1D, QuadGrid


class ObservationWindow:
    """Subinterval omega = (a, b) of (0, 1) with element classification.

    Elements fully inside omega are 'observed', fully outside 'unobserved',
    straddling a or b 'partial'. Quadrature splits partial elements at the
    window endpoints so the indicator projections stay exact.
    """

    def __init__(self, mesh: Mesh1D, a: float, b: float):
        if not (0.0 <= a < b <= 1.0):
            raise ValueError(f"invalid window ({a}, {b})")
        self.mesh = mesh
        self.a = a
        self.b = b
        self.element_class = []
        pieces_in, pieces_out = [], []
        for e in range(mesh.n_elements):
            lo, hi = mesh.nodes[e], mesh.nodes[e + 1]
            ilo, ihi = max(lo, a), min(hi, b)
            if ilo <= lo and ihi >= hi:
                self.element_class.append("observed")
                pieces_in.append((e, lo, hi))
            elif ihi <= ilo:
                self.element_class.append("unobserved")
                pieces_out.append((e, lo, hi))
            else:
                self.element_class.append("partial")
                pieces_in.append((e, ilo, ihi))
                if ilo > lo:
                    pieces_out.append((e, lo, ilo))
                if ihi < hi:
                    pieces_out.append((e, ihi, hi))
        self.grid_omega = QuadGrid(mesh, pieces_in)
        self.grid_comp = QuadGrid(mesh, pieces_out)

    def chi(self, x):
        """Indicator of omega (half-open convention irrelevant under quadrature)."""
        x = np.asarray(x, dtype=float)
        return ((x >= self.a) & (x <= self.b)).astype(float)

    def is_full(self) -> bool:
        return self.grid_comp.npoints == 0

    def __repr__(self):
        return f"ObservationWindow(a={self.a}, b={self.b})"


def project_R(field: HermiteField, window: ObservationWindow):
    """Restriction to omega, extended by zero: pointwise chi_omega * field."""
    return lambda x: window.chi(x) * field(x)


def project_P(field: HermiteField, window: ObservationWindow):
    """Complement part: field - R field."""
    return lambda x: (1.0 - window.chi(x)) * field(x)


def regularized_lift(z_dof: np.ndarray, window: ObservationWindow,
                     alpha: float) -> np.ndarray:
    """Tikhonov-Philips lift of a trace on omega into the state space.

    For the restriction operator the normal equations act pointwise, so the
    lift is extension by zero scaled by 1/(1+alpha); alpha=0 recovers the
    Moore-Penrose lift (the observation operator has closed range here).
    The returned dofs are meaningful on omega; consumers pair them with
    chi_omega at quadrature points.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    if alpha == 0.0:
        return np.asarray(z_dof, dtype=float)
    return np.asarray(z_dof, dtype=float) / (1.0 + alpha)


@dataclass
class NoiseModel:
    """Gaussian observation noise, calibrated to an exact relative Z-norm level."""

    level: float = 0.0
    seed: int = 0
    smoothing_window: int = 0
    sigma: float = 0.0
    alpha: float = 0.0

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("noise level must be >= 0")
        if self.smoothing_window < 0:
            raise ValueError("smoothing window must be >= 0")
        if self.sigma < 0 or self.alpha < 0:
            raise ValueError("sigma and alpha must be >= 0")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def make_noisy(z_dof: np.ndarray, window: ObservationWindow,
               model: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    """z + eta with i.i.d. Gaussian eta on the nodal dofs, rescaled so that
    ||eta||_Z = level * ||z||_Z exactly at this step.

    The rng stream is advanced even for level=0 only when noise is drawn, so
    level=0 returns z bitwise unchanged.
    """
    z_dof = np.asarray(z_dof, dtype=float)
    if model.level == 0.0:
        return z_dof
    from .fem import norm as _norm
    eta = rng.standard_normal(z_dof.shape)
    eta_Z = _norm(eta, "Z", window=window, mesh=window.mesh)
    z_Z = _norm(z_dof, "Z", window=window, mesh=window.mesh)
    target = model.level * z_Z
    if z_Z == 0.0:
        warnings.warn("zero trace with positive noise level; "
                      "falling back to absolute scale delta*1")
        target = model.level
    if eta_Z == 0.0:
        return z_dof
    return z_dof + (target / eta_Z) * eta


def smooth(history, W: int) -> np.ndarray:
    """Arithmetic mean of the last min(W, len(history)) traces."""
    if W < 1:
        raise ValueError("smoothing window must be >= 1")
    hist = list(history)
    if not hist:
        raise ValueError("empty trace history")
    recent = hist[-min(W, len(hist)):]
    return np.mean(np.asarray(recent, dtype=float), axis=0)


@dataclass
class ObservedData:
    """Per-step observation record at time t.

    z_dof       exact trace (Hermite dofs of u* on omega)
    z_delta_dof noisy trace
    u_alpha_dof regularized lift into the state space
    d_dof       defect u_alpha - R u*  (supported in omega)
    dtil_dof    time derivative of the smoothed defect (smoothed regime only)
    """

    t: float
    z_dof: np.ndarray
    z_delta_dof: np.ndarray
    u_alpha_dof: np.ndarray
    d_dof: np.ndarray
    dtil_dof: np.ndarray | None = None


class ObservationStream:
    """Generates per-step ObservedData for a truth trajectory.

    Deterministic given the NoiseModel seed; the smoothed regime averages the
    last ``smoothing_window`` noisy traces before lifting.
    """

    def __init__(self, window: ObservationWindow, model: NoiseModel,
                 smoothed: bool = False):
        self.window = window
        self.model = model
        self.smoothed = smoothed and model.smoothing_window > 1
        self._rng = model.rng()
        self._history: deque = deque(maxlen=max(model.smoothing_window, 1))
        self._prev_d: np.ndarray | None = None
        self._h_t: float | None = None
        self._prev_t: float | None = None

    def observe(self, t: float, z_dof: np.ndarray) -> ObservedData:
        z_dof = np.asarray(z_dof, dtype=float)
        z_delta = make_noisy(z_dof, self.window, self.model, self._rng)
        if self.smoothed:
            # Average the noise component only: smoothing the raw trace would
            # pick up the signal drift over the window, which dominates the
            # noise reduction for a decaying state.
            self._history.append(z_delta - z_dof)
            z_used = z_dof + smooth(self._history, self.model.smoothing_window)
        else:
            z_used = z_delta
        u_alpha = regularized_lift(z_used, self.window, self.model.alpha)
        d = u_alpha - z_dof
        dtil = None
        if self.smoothed:
            if self._prev_d is None or self._prev_t is None or t == self._prev_t:
                dtil = np.zeros_like(d)
            else:
                dtil = (d - self._prev_d) / (t - self._prev_t)
            self._prev_d = d
            self._prev_t = t
        return ObservedData(t=t, z_dof=z_dof, z_delta_dof=z_delta,
                            u_alpha_dof=u_alpha, d_dof=d, dtil_dof=dtil)


def detect_Tstar(d_Vtil: np.ndarray, r_VXtil: np.ndarray, r_X: np.ndarray,
                 times: np.ndarray, c_M: float = 1.0, C_M: float = 1.0) -> float:
    """First time the defect-smallness condition is violated; inf if never.

    The condition requires ||d||_Vtil <= (c_M / 2 C_M) ||r||^2_VXtil / ||r||_X
    (strict violation only). At r = 0 the step counts as violated iff the
    defect norm is positive (limit convention).
    """
    d_Vtil = np.asarray(d_Vtil, dtype=float)
    r_VXtil = np.asarray(r_VXtil, dtype=float)
    r_X = np.asarray(r_X, dtype=float)
    for k in range(len(times)):
        if r_X[k] == 0.0:
            if d_Vtil[k] > 0.0:
                return float(times[k])
            continue
        threshold = (c_M / (2.0 * C_M)) * r_VXtil[k] ** 2 / r_X[k]
        if d_Vtil[k] > threshold:
            return float(times[k])
    return float("inf")
