"""Matern covariances and SPDE precision-matrix assembly.

A Gaussian field with Matern covariance solves a diffusion-reaction SPDE;
discretizing that SPDE with piecewise-linear elements turns the field into a
Gaussian Markov random field whose precision matrix is sparse. This module
evaluates the covariance itself (used only as a shape oracle) and assembles
the stationary and nonstationary precision matrices from the mass matrix C
and stiffness matrix G.

Smoothness is fixed at nu = 1 throughout the inference path, which keeps the
discretized field Markov; `matern_cov` accepts general nu for checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps
from scipy.special import gamma, kv

from .errors import AssemblyError, DimensionError
from .mesh import Mesh, SparseSymmetric

__all__ = [
    "StationaryParams",
    "BasisSet",
    "NonstatParams",
    "matern_cov",
    "make_polynomial_basis",
    "eval_log_fields",
    "assemble_Q_stationary",
    "assemble_Q_nonstationary",
]


@dataclass(frozen=True)
class StationaryParams:
    """Stationary field hyperparameters on log scale; smoothness fixed at 1."""

    log_tau: float = 0.0
    log_kappa: float = 0.0
    nu: float = 1.0

    def __post_init__(self):
        if self.nu != 1.0:
            raise ValueError("the precision assembly requires nu = 1")

    @property
    def tau(self) -> float:
        return float(np.exp(self.log_tau))

    @property
    def kappa(self) -> float:
        return float(np.exp(self.log_kappa))


def matern_cov(distance, tau=1.0, kappa=1.0, nu=1.0):
    """Matern covariance (1 / (tau 2^(nu-1) Gamma(nu))) (kappa d)^nu K_nu(kappa d).

    Vectorized over `distance`; the d = 0 limit is 1/tau. `nu` is accepted
    generally so closed-form special cases (nu = 1/2) can serve as oracles.
    """
    if tau <= 0 or kappa <= 0 or nu <= 0:
        raise ValueError("tau, kappa and nu must be positive")
    d = np.asarray(distance, dtype=float)
    if np.any(d < 0):
        raise ValueError("distances must be nonnegative")
    x = kappa * d
    norm = 1.0 / (tau * 2.0 ** (nu - 1.0) * gamma(nu))
    with np.errstate(invalid="ignore"):
        val = norm * np.power(x, nu) * kv(nu, x)
    val = np.where(d == 0.0, 1.0 / tau, val)
    return val if val.ndim else float(val)


@dataclass(frozen=True)
class BasisSet:
    """Basis functions for log-field expansions, evaluated at mesh vertices.

    Row 0 is the constant offset function b0; rows 1..p are the varying basis
    functions. The same set serves both the log-tau and log-kappa expansions.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 2:
            raise DimensionError("basis values must be a (p+1, n_vertices) array")
        if not np.all(np.isfinite(v)):
            raise ValueError("basis values must be finite")
        if v.shape[0] < 1 or np.ptp(v[0]) != 0.0:
            raise ValueError("row 0 must be the constant offset function")

    @property
    def p(self) -> int:
        return self.values.shape[0] - 1

    @property
    def n_vertices(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class NonstatParams:
    """Coefficients of the log-field basis expansions.

    `theta_tau` and `theta_kappa` multiply basis rows 1..p. The optional
    scalar offsets shift the field levels and default to zero, in which case
    only the basis offset row b0 sets the level.
    """

    theta_tau: np.ndarray
    theta_kappa: np.ndarray
    offset_tau: float = 0.0
    offset_kappa: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta_tau", np.asarray(self.theta_tau, dtype=float).ravel())
        object.__setattr__(self, "theta_kappa", np.asarray(self.theta_kappa, dtype=float).ravel())
        if self.theta_tau.shape != self.theta_kappa.shape:
            raise DimensionError("theta_tau and theta_kappa must have the same length")


def make_polynomial_basis(mesh_or_points, order: int = 1, offset: float = 0.0) -> BasisSet:
    """Low-order polynomial basis over a mesh (or raw points).

    order 1 gives p = 2 (x, y); order 2 gives p = 5 (x, y, x^2, y^2, xy).
    Coordinates are centered and scaled to [-1, 1] over the vertex bounding
    box so that coefficients are comparable across meshes.
    """
    pts = mesh_or_points.vertices if isinstance(mesh_or_points, Mesh) else np.asarray(mesh_or_points, float)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    x = 2.0 * (pts[:, 0] - lo[0]) / span[0] - 1.0
    y = 2.0 * (pts[:, 1] - lo[1]) / span[1] - 1.0
    rows = [np.full(pts.shape[0], float(offset)), x, y]
    if order == 2:
        rows += [x * x, y * y, x * y]
    elif order != 1:
        raise ValueError("order must be 1 or 2")
    return BasisSet(np.vstack(rows))


def eval_log_fields(basis: BasisSet, params: NonstatParams):
    """Evaluate the positive tau(s) and kappa(s) fields at every vertex.

    log tau(s) = b0(s) + offset_tau + sum_k b_k(s) theta_tau[k], and the same
    for kappa. Returns the exponentiated (positive) fields.
    """
    if params.theta_tau.size != basis.p:
        raise DimensionError(
            f"basis has p = {basis.p} but parameters have length {params.theta_tau.size}"
        )
    b0 = basis.values[0]
    rest = basis.values[1:]
    log_tau = b0 + params.offset_tau + rest.T @ params.theta_tau
    log_kappa = b0 + params.offset_kappa + rest.T @ params.theta_kappa
    return np.exp(log_tau), np.exp(log_kappa)


def _check_mass(C: SparseSymmetric) -> np.ndarray:
    c = C.diagonal()
    if C.nnz != np.count_nonzero(c):
        raise AssemblyError("mass matrix must be diagonal")
    if np.any(c <= 0.0):
        raise AssemblyError("mass matrix has a nonpositive diagonal entry")
    return c


def assemble_Q_stationary(C: SparseSymmetric, G: SparseSymmetric, tau: float, kappa: float) -> SparseSymmetric:
    """Stationary precision Q = tau^2 (kappa^4 C + 2 kappa^2 G + G C^-1 G).

    Equals the product (kappa^2 C + G) C^-1 (kappa^2 C + G) scaled by tau^2;
    symmetric positive definite for positive tau, kappa.
    """
    if tau <= 0 or kappa <= 0:
        raise ValueError("tau and kappa must be positive")
    if C.n != G.n:
        raise DimensionError("C and G must share the mesh dimension")
    c = _check_mass(C)
    Gs = G.to_scipy()
    GCG = (Gs @ sps.diags(1.0 / c) @ Gs).tocsc()
    k2 = kappa * kappa
    Q = sps.diags(k2 * k2 * c) + 2.0 * k2 * Gs + GCG
    return SparseSymmetric.from_scipy((tau * tau) * Q)


def assemble_Q_nonstationary(
    C: SparseSymmetric, G: SparseSymmetric, tau_field, kappa_field
) -> SparseSymmetric:
    """Nonstationary precision from vertexwise tau(s) and kappa(s) fields.

    With T = diag(tau), K2 = diag(kappa^2):
        Q = T (K2 C K2 + K2 G + G K2 + G C^-1 G) T,
    the elementwise expansion of T (K2 C + G) C^-1 (K2 C + G) T. Constant
    fields reproduce the stationary assembly entry for entry.
    """
    tau_field = np.asarray(tau_field, dtype=float).ravel()
    kappa_field = np.asarray(kappa_field, dtype=float).ravel()
    if tau_field.shape != (C.n,) or kappa_field.shape != (C.n,):
        raise DimensionError("field lengths must match the vertex count")
    if np.any(tau_field <= 0.0) or np.any(kappa_field <= 0.0):
        raise AssemblyError("tau and kappa fields must be strictly positive")
    if C.n != G.n:
        raise DimensionError("C and G must share the mesh dimension")
    c = _check_mass(C)
    Gs = G.to_scipy()
    GCG = (Gs @ sps.diags(1.0 / c) @ Gs).tocsc()
    k2 = kappa_field * kappa_field
    M = sps.diags(k2) @ Gs
    S = sps.diags(k2 * c * k2) + M + M.T + GCG
    T = sps.diags(tau_field)
    return SparseSymmetric.from_scipy(T @ S @ T)
