"""1D cubic-Hermite finite elements on the unit interval.

Uniform mesh, value/derivative degrees of freedom per node, Gauss-Legendre
quadrature, matrix assembly and the norms used by the estimator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.linalg


class SolverError(RuntimeError):
    """Linear solve failed; carries a condition-number estimate when known."""

    def __init__(self, message: str, cond: float | None = None):
        super().__init__(message)
        self.cond = cond


# ----------------------------------------------------------------------
# Mesh and quadrature
# ----------------------------------------------------------------------

class Mesh1D:
    """Uniform mesh on (0, 1) with ``n_nodes`` equally spaced nodes."""

    def __init__(self, n_nodes: int):
        if n_nodes < 3:
            raise ValueError(f"need at least 3 nodes, got {n_nodes}")
        self.n_nodes = n_nodes
        self.h = 1.0 / (n_nodes - 1)
        self.nodes = np.linspace(0.0, 1.0, n_nodes)
        self.n_elements = n_nodes - 1
        self.n_dof = 2 * n_nodes

    def element_of(self, x):
        """Index of the element containing x (right-closed at x=1)."""
        e = np.minimum((np.asarray(x) / self.h).astype(int), self.n_elements - 1)
        return e

    @cached_property
    def full_grid(self) -> "QuadGrid":
        return QuadGrid(self, [(e, self.nodes[e], self.nodes[e + 1])
                               for e in range(self.n_elements)])

    def __repr__(self):
        return f"Mesh1D(n_nodes={self.n_nodes})"


def gauss_rule(order: int = 5):
    """Gauss-Legendre points/weights on [0, 1]; 5 points are exact to degree 9."""
    p, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (p + 1.0), 0.5 * w


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    order: int

    @classmethod
    def gauss(cls, npoints: int = 5) -> "QuadratureRule":
        p, w = gauss_rule(npoints)
        return cls(points=p, weights=w, order=2 * npoints - 1)


def _local_shapes(s: np.ndarray, h: float):
    """Cubic Hermite shape functions on an element, s in [0, 1].

    Columns: value-left, deriv-left, value-right, deriv-right.
    Returns (values, d/dx, d2/dx2).
    """
    s = np.asarray(s, dtype=float)
    B0 = np.stack([
        1.0 - 3.0 * s**2 + 2.0 * s**3,
        h * (s - 2.0 * s**2 + s**3),
        3.0 * s**2 - 2.0 * s**3,
        h * (s**3 - s**2),
    ], axis=-1)
    B1 = np.stack([
        (-6.0 * s + 6.0 * s**2) / h,
        1.0 - 4.0 * s + 3.0 * s**2,
        (6.0 * s - 6.0 * s**2) / h,
        3.0 * s**2 - 2.0 * s,
    ], axis=-1)
    B2 = np.stack([
        (-6.0 + 12.0 * s) / h**2,
        (6.0 * s - 4.0) / h,
        (6.0 - 12.0 * s) / h**2,
        (6.0 * s - 2.0) / h,
    ], axis=-1)
    return B0, B1, B2


class QuadGrid:
    """Flattened quadrature points over a list of (element, lo, hi) pieces.

    Caches shape-function values so repeated assembly in the time loop is a
    handful of einsums.
    """

    def __init__(self, mesh: Mesh1D, pieces: Sequence[tuple[int, float, float]],
                 rule: QuadratureRule | None = None):
        rule = rule or QuadratureRule.gauss(5)
        xs, ws, es = [], [], []
        for e, lo, hi in pieces:
            if hi <= lo:
                continue
            xs.append(lo + (hi - lo) * rule.points)
            ws.append((hi - lo) * rule.weights)
            es.append(np.full(rule.points.shape, e, dtype=int))
        if xs:
            self.x = np.concatenate(xs)
            self.w = np.concatenate(ws)
            self.elem = np.concatenate(es)
        else:
            self.x = np.empty(0)
            self.w = np.empty(0)
            self.elem = np.empty(0, dtype=int)
        self.mesh = mesh
        s = (self.x - mesh.nodes[self.elem]) / mesh.h if len(self.x) else np.empty(0)
        self.B0, self.B1, self.B2 = _local_shapes(s, mesh.h)
        # global dof indices (value, deriv) at left and right node of each element
        self.dofs = np.stack([2 * self.elem, 2 * self.elem + 1,
                              2 * self.elem + 2, 2 * self.elem + 3], axis=-1)

    @property
    def npoints(self) -> int:
        return len(self.x)

    def values(self, dof: np.ndarray) -> np.ndarray:
        return np.einsum("pk,pk->p", self.B0, dof[self.dofs])

    def derivs(self, dof: np.ndarray) -> np.ndarray:
        return np.einsum("pk,pk->p", self.B1, dof[self.dofs])

    def second_derivs(self, dof: np.ndarray) -> np.ndarray:
        return np.einsum("pk,pk->p", self.B2, dof[self.dofs])

    def integrate(self, vals: np.ndarray) -> float:
        return float(np.dot(self.w, vals))

    def assemble(self, coeff, order: int = 0) -> np.ndarray:
        """Matrix with entries ``sum_p w_p c_p B_i(x_p) B_j(x_p)``.

        order=0 pairs values, order=1 pairs first derivatives.
        """
        n = self.mesh.n_dof
        A = np.zeros((n, n))
        if self.npoints == 0:
            return A
        c = np.broadcast_to(np.asarray(coeff, dtype=float), self.x.shape)
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite coefficient in assembly")
        B = self.B0 if order == 0 else self.B1
        local = np.einsum("p,pi,pj->pij", self.w * c, B, B)
        ii = np.repeat(self.dofs[:, :, None], 4, axis=2)
        jj = np.repeat(self.dofs[:, None, :], 4, axis=1)
        np.add.at(A, (ii.ravel(), jj.ravel()), local.ravel())
        return A

    def load_vector(self, vals: np.ndarray) -> np.ndarray:
        """Vector with entries ``sum_p w_p f(x_p) B_i(x_p)``."""
        b = np.zeros(self.mesh.n_dof)
        if self.npoints:
            local = np.einsum("p,pi->pi", self.w * vals, self.B0)
            np.add.at(b, self.dofs.ravel(), local.ravel())
        return b


# ----------------------------------------------------------------------
# Fields
# ----------------------------------------------------------------------

@dataclass
class HermiteField:
    """Scalar field as cubic-Hermite coefficients: (value, derivative) per node."""

    mesh: Mesh1D
    dof: np.ndarray
    boundary_kind: str = "free"  # "free" | "dirichlet-zero"

    def __post_init__(self):
        self.dof = np.asarray(self.dof, dtype=float)
        if self.dof.shape != (self.mesh.n_dof,):
            raise ValueError(f"dof length {self.dof.shape} != {self.mesh.n_dof}")
        if self.boundary_kind == "dirichlet-zero":
            self.dof = self.dof.copy()
            self.dof[0] = 0.0
            self.dof[2 * (self.mesh.n_nodes - 1)] = 0.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        e = self.mesh.element_of(x)
        s = (x - self.mesh.nodes[e]) / self.mesh.h
        B0, _, _ = _local_shapes(s, self.mesh.h)
        d = np.stack([self.dof[2 * e], self.dof[2 * e + 1],
                      self.dof[2 * e + 2], self.dof[2 * e + 3]], axis=-1)
        out = np.einsum("...k,...k->...", B0, d)
        return float(out) if out.ndim == 0 else out

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        e = self.mesh.element_of(x)
        s = (x - self.mesh.nodes[e]) / self.mesh.h
        _, B1, _ = _local_shapes(s, self.mesh.h)
        d = np.stack([self.dof[2 * e], self.dof[2 * e + 1],
                      self.dof[2 * e + 2], self.dof[2 * e + 3]], axis=-1)
        out = np.einsum("...k,...k->...", B1, d)
        return float(out) if out.ndim == 0 else out

    @classmethod
    def zero(cls, mesh: Mesh1D, boundary_kind: str = "free") -> "HermiteField":
        return cls(mesh, np.zeros(mesh.n_dof), boundary_kind)


def eval_basis(mesh: Mesh1D, j: int, kind: str, x, derivative: int = 0):
    """Evaluate the nodal basis function phi_j (kind='phi') or psi_j (kind='psi')."""
    if not 0 <= j < mesh.n_nodes:
        raise IndexError(f"node index {j} out of range [0, {mesh.n_nodes})")
    dof = np.zeros(mesh.n_dof)
    dof[2 * j + (0 if kind == "phi" else 1)] = 1.0
    f = HermiteField(mesh, dof)
    return f(x) if derivative == 0 else f.deriv(x)


def interpolate(mesh: Mesh1D, f: Callable, fprime: Callable | None = None,
                boundary_kind: str = "free") -> HermiteField:
    """Hermite interpolant of f; exact for cubic polynomials.

    If fprime is not given the derivative dofs come from a 5-point stencil.
    """
    x = mesh.nodes
    vals = np.asarray([f(xi) for xi in x], dtype=float)
    if fprime is not None:
        ders = np.asarray([fprime(xi) for xi in x], dtype=float)
    else:
        eps = 1e-5
        ders = np.asarray([
            (-f(xi + 2 * eps) + 8 * f(xi + eps)
             - 8 * f(xi - eps) + f(xi - 2 * eps)) / (12 * eps)
            for xi in x], dtype=float)
    if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(ders))):
        raise ValueError("non-finite samples in interpolation")
    dof = np.empty(mesh.n_dof)
    dof[0::2] = vals
    dof[1::2] = ders
    return HermiteField(mesh, dof, boundary_kind)


# ----------------------------------------------------------------------
# Assembly
# ----------------------------------------------------------------------

def _coeff_on_grid(grid: QuadGrid, c) -> np.ndarray:
    if isinstance(c, HermiteField):
        return grid.values(c.dof)
    if callable(c):
        return np.asarray(c(grid.x), dtype=float)
    return np.broadcast_to(float(c), grid.x.shape)


def assemble_mass(mesh: Mesh1D, grid: QuadGrid | None = None) -> np.ndarray:
    """L2 mass matrix; its quadratic form is the squared X-norm."""
    grid = grid or mesh.full_grid
    return grid.assemble(1.0, order=0)


def assemble_stiffness(mesh: Mesh1D, D=1.0, grid: QuadGrid | None = None) -> np.ndarray:
    """Stiffness matrix for the diffusion coefficient D (constant or field)."""
    grid = grid or mesh.full_grid
    return grid.assemble(_coeff_on_grid(grid, D), order=1)


def assemble_weighted_mass(mesh: Mesh1D, w, grid: QuadGrid | None = None) -> np.ndarray:
    """Weighted mass matrix, entries ``int w phi_i phi_j``."""
    grid = grid or mesh.full_grid
    return grid.assemble(_coeff_on_grid(grid, w), order=0)


# ----------------------------------------------------------------------
# Norms
# ----------------------------------------------------------------------

NORM_KINDS = ("X", "Q", "Z", "Vtil", "Vhat", "VXtil", "VXhat")


def _Dvals(grid: QuadGrid, D):
    return _coeff_on_grid(grid, D)


def _div_D_grad(grid: QuadGrid, dof: np.ndarray, D) -> np.ndarray:
    """(D v')' at quadrature points; product rule if D is a field."""
    if isinstance(D, HermiteField):
        return grid.values(D.dof) * grid.second_derivs(dof) + \
            grid.derivs(D.dof) * grid.derivs(dof)
    return _Dvals(grid, D) * grid.second_derivs(dof)


def norm(field_or_dof, kind: str, window=None, D=1.0, mesh: Mesh1D | None = None) -> float:
    """Norm of a Hermite field in one of the spaces X, Q, Z, Vtil, Vhat, VXtil, VXhat.

    Windowed kinds (Z, Vtil, Vhat, VXtil, VXhat) require an ObservationWindow.
    """
    if isinstance(field_or_dof, HermiteField):
        mesh = field_or_dof.mesh
        dof = field_or_dof.dof
    else:
        if mesh is None:
            raise ValueError("mesh required when passing a raw dof vector")
        dof = np.asarray(field_or_dof, dtype=float)
    if kind not in NORM_KINDS:
        raise ValueError(f"unknown norm kind {kind!r}")
    full = mesh.full_grid
    if kind == "X":
        return float(np.sqrt(full.integrate(full.values(dof) ** 2)))
    if kind == "Q":
        # H^1 surrogate for the fractional parameter space
        return float(np.sqrt(full.integrate(full.values(dof) ** 2)
                             + full.integrate(full.derivs(dof) ** 2)))
    if window is None:
        raise ValueError(f"norm kind {kind!r} requires an observation window")
    go, gc = window.grid_omega, window.grid_comp
    if kind == "Z":
        return float(np.sqrt(go.integrate(go.values(dof) ** 2)))
    if kind == "VXtil":
        return float(np.sqrt(go.integrate(np.abs(_Dvals(go, D)) * go.derivs(dof) ** 2)
                             + full.integrate(full.values(dof) ** 2)))
    if kind == "VXhat":
        return float(np.sqrt(gc.integrate(np.abs(_Dvals(gc, D)) * gc.derivs(dof) ** 2)
                             + full.integrate(full.values(dof) ** 2)))
    if kind == "Vtil":
        return float(np.sqrt(go.integrate(_div_D_grad(go, dof, D) ** 2))
                     + np.sqrt(full.integrate(full.values(dof) ** 2)))
    # Vhat
    return float(np.sqrt(gc.integrate(_div_D_grad(gc, dof, D) ** 2))
                 + np.sqrt(full.integrate(full.values(dof) ** 2)))


# ----------------------------------------------------------------------
# Linear solves
# ----------------------------------------------------------------------

def _bandwidth(A: np.ndarray) -> tuple[int, int]:
    n = A.shape[0]
    i, j = np.nonzero(A)
    if len(i) == 0:
        return 0, 0
    return int(np.max(i - j)), int(np.max(j - i))


def solve_linear(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Direct banded solve of A x = b with a residual check.

    Raises SolverError (with a condition estimate) on singular or badly
    conditioned systems.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    kl, ku = _bandwidth(A)
    try:
        if kl + ku < n // 2:
            # solve_banded layout: ab[ku + i - j, j] = A[i, j]
            ab = np.zeros((kl + ku + 1, n))
            ii, jj = np.nonzero(A)
            ab[ku + ii - jj, jj] = A[ii, jj]
            x = scipy.linalg.solve_banded((kl, ku), ab, b)
        else:
            x = scipy.linalg.solve(A, b)
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"linear solve failed: {exc}",
                          cond=float(np.linalg.cond(A))) from exc
    res = np.linalg.norm(A @ x - b)
    scale = max(np.linalg.norm(b), 1e-300)
    if not np.all(np.isfinite(x)) or res > 1e-8 * scale:
        raise SolverError(
            f"ill-conditioned system: relative residual {res / scale:.3e}",
            cond=float(np.linalg.cond(A)))
    return x
