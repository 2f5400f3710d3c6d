"""Post-run analysis over stored traces.

Excitation probing (does the trajectory move enough to identify the
parameter), link-constant estimation (empirical versions of the constants
tying the stabilization weight to the error norms), semiconvergence
detection for noisy runs, and audits of the theoretical error bounds.
All operations are pure functions of the stored run data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fem
from .gains import Constants
from .observation import ObservationWindow, detect_Tstar


# ---------------------------------------------------------------------------
# excitation probing


@dataclass
class PEProbeReport:
    """Windowed-excitation values per probe direction and start time.

    ``table`` rows are (t_a, label, best_t_b, value) where value is the
    largest ||int_{t_b}^{t_b+gamma0} chi_omega (w xi) dtau||_X over the
    scanned t_b; epsilon0 is the minimum of those maxima.
    """

    gamma0: float
    T0: float
    t_a_values: list
    table: list = field(default_factory=list)
    epsilon0: float = 0.0

    def to_rows(self):
        return [(ta, lab, tb, val) for ta, lab, tb, val in self.table]


def canonical_directions(mesh: fem.Mesh1D, n_random: int = 8, seed: int = 0):
    """Unit-Q-norm probe fields: every nodal basis function plus seeded
    random fields. Returns (label, dof) pairs."""
    rng = np.random.default_rng(seed)
    out = []
    n_dof = 2 * mesh.n_nodes
    for j in range(n_dof):
        dof = np.zeros(n_dof)
        dof[j] = 1.0
        kind = "value" if j % 2 == 0 else "deriv"
        out.append((f"basis_{kind}_{j // 2}", _q_normalize(mesh, dof)))
    for k in range(n_random):
        dof = rng.standard_normal(n_dof)
        out.append((f"random_{k}", _q_normalize(mesh, dof)))
    return out


def _q_normalize(mesh, dof):
    nrm = fem.norm(dof, "Q", mesh=mesh)
    if nrm == 0.0:
        raise ValueError("cannot normalize a zero probe direction")
    return dof / nrm


def probe_pe(times, w_dofs, mesh: fem.Mesh1D, window: ObservationWindow,
             directions, gamma0: float, T0: float,
             t_a_values=None) -> PEProbeReport:
    """Scan excitation windows along a stored trajectory w = u* + p.

    For each start time t_a and unit direction xi, searches
    t_b in [t_a, t_a + T0] for the largest
    ||int_{t_b}^{t_b+gamma0} chi_omega w(tau) xi dtau||_X
    (time integral by the trapezoid rule on the stored steps).
    """
    times = np.asarray(times, dtype=float)
    w_dofs = np.asarray(w_dofs, dtype=float)
    if len(times) < 2:
        raise ValueError("need at least two stored steps")
    h_t = times[1] - times[0]
    if gamma0 < h_t:
        raise ValueError(f"gamma0={gamma0} shorter than the step {h_t}")
    for label, dof in directions:
        nrm = fem.norm(dof, "Q", mesh=mesh)
        if abs(nrm - 1.0) > 1e-10:
            raise ValueError(f"direction {label!r} not unit Q-norm ({nrm})")
    if t_a_values is None:
        t_a_values = [times[0]]

    grid = window.grid_omega
    # w at the observed quadrature points, per step
    w_vals = np.array([grid.values(dof) for dof in w_dofs])
    n_gamma = int(round(gamma0 / h_t))
    n_T0 = int(round(T0 / h_t))

    report = PEProbeReport(gamma0=gamma0, T0=T0,
                           t_a_values=list(t_a_values))
    minima = []
    for label, dof in directions:
        xi_vals = grid.values(dof)
        integrand = w_vals * xi_vals            # steps x quad points
        # cumulative trapezoid along time
        cum = np.zeros_like(integrand)
        cum[1:] = np.cumsum(0.5 * h_t * (integrand[1:] + integrand[:-1]),
                            axis=0)
        for t_a in t_a_values:
            ka = int(round((t_a - times[0]) / h_t))
            if ka < 0 or ka >= len(times):
                raise ValueError(f"t_a={t_a} outside the stored trajectory")
            best_val, best_tb = -1.0, times[ka]
            for kb in range(ka, min(ka + n_T0, len(times) - n_gamma) + 1):
                kc = kb + n_gamma
                if kc >= len(times):
                    break
                accum = cum[kc] - cum[kb]
                val = math.sqrt(float(np.sum(grid.w * accum**2)))
                if val > best_val:
                    best_val, best_tb = val, times[kb]
            if best_val < 0.0:
                continue
            report.table.append((float(t_a), label, float(best_tb),
                                 best_val))
            minima.append(best_val)
    report.epsilon0 = float(min(minima)) if minima else 0.0
    return report


# ---------------------------------------------------------------------------
# link constants


@dataclass
class LinkConstantsReport:
    rho: float
    C_rho: float
    c_int: float
    C_int: float
    lam: float
    kappa: float
    C_lambda: float
    C_kappa: float
    n_pairs: int


def estimate_link_constants(times, r_X, r_Vtil, r_VXtil, p_Vhat, mu,
                            gamma0: float, lam: float | None = None,
                            kappa: float | None = None,
                            eps_norm: float = 1e-12) -> LinkConstantsReport:
    """Empirical constants linking the error norms along a stored run.

    rho, C_rho from a log-log least-squares fit of ||p||_Vhat against
    ||r||_X; c_int, C_int bracket ||r||^2_VXtil / (||r||_Vtil ||r||_X);
    C_lambda, C_kappa are the per-window maxima of the corresponding
    integrals with theta = mu ||r||^2_VXtil / ||r||_Vtil.
    """
    times = np.asarray(times, dtype=float)
    r_X = np.asarray(r_X, dtype=float)
    r_Vtil = np.asarray(r_Vtil, dtype=float)
    r_VXtil = np.asarray(r_VXtil, dtype=float)
    p_Vhat = np.asarray(p_Vhat, dtype=float)
    mu = np.asarray(mu, dtype=float)

    usable = (r_X > eps_norm) & (p_Vhat > eps_norm)
    if np.count_nonzero(usable) >= 3:
        slope, intercept = np.polyfit(np.log(r_X[usable]),
                                      np.log(p_Vhat[usable]), 1)
        rho, C_rho = float(slope), float(math.exp(intercept))
    else:
        rho, C_rho = float("nan"), float("nan")

    denom = r_Vtil * r_X
    ok = denom > eps_norm
    if np.any(ok):
        ratios = r_VXtil[ok] ** 2 / denom[ok]
        c_int, C_int = float(ratios.min()), float(ratios.max())
    else:
        c_int, C_int = float("nan"), float("nan")

    if kappa is None:
        kappa = max(1.0 + 1.0 / rho, 2.0) if math.isfinite(rho) and rho > 0 \
            else 2.0
    if lam is None:
        lam = kappa / ((kappa - 1.0) * rho) if math.isfinite(rho) and rho > 0 \
            else 2.0
        lam = max(lam, 1.0)

    theta = np.where(r_Vtil > eps_norm, mu * r_VXtil**2 /
                     np.maximum(r_Vtil, eps_norm), 0.0)
    h_t = times[1] - times[0] if len(times) > 1 else 0.0
    n_gamma = max(int(round(gamma0 / h_t)), 1) if h_t > 0 else 1

    C_lambda = _window_constant(p_Vhat, theta, lam, n_gamma, h_t, eps_norm)
    C_kappa = _window_constant(mu, theta, kappa, n_gamma, h_t, eps_norm)
    return LinkConstantsReport(rho=rho, C_rho=C_rho, c_int=c_int,
                               C_int=C_int, lam=float(lam),
                               kappa=float(kappa), C_lambda=C_lambda,
                               C_kappa=C_kappa,
                               n_pairs=int(np.count_nonzero(usable)))


def _window_constant(numer, theta, power, n_gamma, h_t, eps):
    """max over gamma0-windows of the Assumption-style integral
    (integral (numer^power / theta)^{1/(power-1)})^{(power-1)/power},
    or the sup of numer/theta when power == 1."""
    n = len(numer)
    if n < n_gamma + 1:
        return float("nan")
    worst = 0.0
    for k in range(n - n_gamma):
        num = numer[k:k + n_gamma + 1]
        th = theta[k:k + n_gamma + 1]
        if np.any((th <= eps) & (num > eps)):
            return float("inf")
        ratio = np.where(th > eps, num / np.maximum(th, eps), 0.0)
        if power == 1.0:
            val = float(ratio.max())
        else:
            integrand = np.where(
                th > eps,
                (num**power / np.maximum(th, eps)) ** (1.0 / (power - 1.0)),
                0.0)
            integral = float(np.trapezoid(integrand, dx=h_t))
            val = integral ** ((power - 1.0) / power)
        worst = max(worst, val)
    return worst


# ---------------------------------------------------------------------------
# semiconvergence


def detect_semiconvergence(times, errors, smooth_window: int = 5,
                           growth_factor: float = 1.1):
    """Locate the turning point of an error series under noise.

    Returns (t_min, minimum value, growth flag). The series is smoothed
    with a centered moving average (window ``smooth_window``) so isolated
    noise dips do not masquerade as the minimum; the growth flag is set
    when the mean of the last ``smooth_window`` smoothed values exceeds
    ``growth_factor`` times the minimum.
    """
    times = np.asarray(times, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if len(errors) < 3:
        raise ValueError("need at least 3 samples")
    half = smooth_window // 2
    smoothed = np.array([errors[max(0, i - half):i + half + 1].mean()
                         for i in range(len(errors))])
    k = int(np.argmin(smoothed))
    tail = float(smoothed[-smooth_window:].mean())
    # growth requires the minimum to sit strictly before the tail window;
    # otherwise a steeply decaying series would flag against its own past
    interior = k < len(errors) - smooth_window
    flag = interior and tail > growth_factor * float(smoothed[k])
    return float(times[k]), float(smoothed[k]), bool(flag)


# ---------------------------------------------------------------------------
# bound audits


@dataclass
class AuditLine:
    name: str
    lhs: float
    rhs: float
    passed: bool | None      # None = not computable
    note: str = ""

    def status(self) -> str:
        if self.passed is None:
            return "NOT-COMPUTABLE"
        return "PASS" if self.passed else "FAIL"


@dataclass
class AuditReport:
    lines: list = field(default_factory=list)
    Tstar: float = float("inf")

    def all_passed(self) -> bool:
        return all(l.passed for l in self.lines if l.passed is not None)

    def to_text(self) -> str:
        out = [f"Tstar = {self.Tstar}"]
        for l in self.lines:
            out.append(f"[{l.status():>14}] {l.name}: lhs={l.lhs:.6e} "
                       f"rhs={l.rhs:.6e}{(' # ' + l.note) if l.note else ''}")
        return "\n".join(out)


SLACK = 1.1   # 10% discretization slack on every bound


def _check(name, lhs, rhs, note=""):
    if not (math.isfinite(lhs) and math.isfinite(rhs)):
        return AuditLine(name, lhs, rhs, None, note)
    return AuditLine(name, lhs, rhs, lhs <= SLACK * rhs + 1e-14, note)


def audit_propositions(trace, constants: Constants,
                       regime: str = "exact") -> AuditReport:
    """Evaluate the well-definedness error bounds along a stored run.

    ``trace`` is an estimator RunTrace from an oracle-gain run; ``regime``
    selects which set of bounds applies (exact / noisy / smooth). Noisy
    bounds are evaluated on [0, T*) only, matching their statement.
    """
    t = trace.times
    c = constants
    e_Q = trace.col("e_Q")
    r_X = trace.col("r_X")
    p_X = trace.col("p_X")
    p_Vhat = trace.col("p_Vhat")
    ra_X = trace.col("ralpha_X")
    pu_Vhat = trace.col("Pustar_Vhat")
    report = AuditReport()

    if regime == "noisy":
        report.Tstar = detect_Tstar(trace.col("d_Vtil"),
                                    trace.col("r_VXtil"), r_X, t,
                                    c_M=c.c_M, C_M=c.C_M)
        mask = t < report.Tstar
    else:
        mask = np.ones_like(t, dtype=bool)
    if not np.any(mask):
        report.lines.append(AuditLine("window", 0.0, 0.0, None,
                                      "Tstar at the first step"))
        return report

    E0 = float(e_Q[0]**2 + r_X[0]**2)
    sup_pu = float(pu_Vhat.max())

    if regime == "exact":
        lyap = e_Q**2 + r_X**2
        report.lines.append(_check(
            "exact.1 energy non-expansive", float(lyap.max()), E0))
        rhs2 = max(float(p_X[0]),
                   c.C_A**2 / (c.c_N * c.C_embed_VXhat_X**2 * c.nu_floor)
                   * E0 + c.C_N**2 / c.c_N**2 * sup_pu**2)
        report.lines.append(_check(
            "exact.2 unobserved error bounded", float(p_X.max()), rhs2))
        integral = float(np.trapezoid(p_Vhat * r_X, t))
        report.lines.append(_check(
            "exact.3 coupling integral", integral, E0 / c.L_C))
    elif regime == "noisy":
        lyap = (e_Q**2 + r_X**2)[mask]
        if c.sigma > 0:
            # the bound admits decay of q-hat toward zero
            q_star_Q = float(e_Q[0])   # e(0) = -q* when q-hat starts at 0
            rhs1 = max(q_star_Q**2, E0)
            note = "sigma > 0 branch"
        else:
            rhs1, note = E0, "sigma = 0 branch"
        report.lines.append(_check(
            "noisy.1 energy bounded on [0,Tstar)", float(lyap.max()),
            rhs1, note))
        rhs2 = 2.0 * max(
            c.C_N**2 * c.C_embed_VXhat_X**4 / c.c_N**2 * sup_pu**2
            + c.C_A * c.C_embed_VXhat_X**2 / (c.c_N * c.nu_floor) * E0,
            float(p_X[0]**2))
        report.lines.append(_check(
            "noisy.2 unobserved error bounded", float((p_X[mask]**2).max()),
            rhs2))
        if math.isinf(report.Tstar) and c.sigma == 0.0:
            integral = float(np.trapezoid(p_Vhat * r_X, t))
            report.lines.append(_check(
                "noisy.3 coupling integral", integral, E0 / (2.0 * c.L_C)))
    elif regime == "smooth":
        E0a = float(e_Q[0]**2 + ra_X[0]**2)
        lyap = e_Q**2 + ra_X**2
        report.lines.append(_check(
            "smooth.1 energy non-expansive", float(lyap.max()), E0a))
        rhs2 = max(float(p_X[0]**2),
                   c.C_N**2 * c.C_embed_VXhat_X**4 / c.c_N**2 * sup_pu**2
                   + c.C_A * c.C_embed_VXhat_X**2 / (c.nu_floor * c.c_N**2)
                   * E0a)
        report.lines.append(_check(
            "smooth.2 unobserved error bounded", float((p_X**2).max()),
            rhs2))
        integral = float(np.trapezoid(p_Vhat * ra_X, t))
        report.lines.append(_check(
            "smooth.3 coupling integral", integral, E0a / (2.0 * c.L_C)))
    else:
        raise ValueError(f"unknown regime {regime!r}")
    return report


def lyapunov_increments(trace):
    """Step-to-step increments of ||e||_Q^2 + ||r||_X^2 (negative = decay)."""
    lyap = trace.col("e_Q2") + trace.col("r_X2")
    return np.diff(lyap)
