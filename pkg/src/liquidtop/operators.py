"""Reduced (Galerkin) form of the perturbation equations.

State layout is ``u = (c, omega, z)`` with ``c`` the ``N`` velocity
coefficients.  The equations read

    M du/dt + (K + G) u = n(u)

with ``M`` the coupled inertia, ``K`` the viscous/identity block, ``G`` the
gyroscopic and gravity block and ``n`` the quadratic terms, all in test
coordinates (row = test equation, column = unknown).  The liquid moment
``a = -I^{-1} S c`` is eliminated, so ``I (omega - a) = I omega + S c``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .basis import SolenoidalBasis
from .errors import DimensionMismatch, InertiaNotPD
from .model import BodyParams
from .polynomial import as_fraction

E3 = np.array([0.0, 0.0, 1.0])


def cross_matrix(v) -> np.ndarray:
    """Matrix ``[v x]`` with ``[v x] w = v x w``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


E3X = cross_matrix(E3)


@dataclass(frozen=True, eq=False)
class ReducedSystem:
    """Assembled matrices and quadratic data; immutable after :func:`assemble`."""

    params: BodyParams
    N: int
    inertia: np.ndarray
    stiffness_block: np.ndarray
    gyro_block: np.ndarray
    gram: np.ndarray
    stiffness: np.ndarray
    moment: np.ndarray
    coriolis: np.ndarray
    convective: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_total(self) -> int:
        return self.N + 6

    @property
    def linear_matrix(self) -> np.ndarray:
        """``K + G``, the generator before the inertia solve."""
        if "L" not in self._cache:
            self._cache["L"] = self.stiffness_block + self.gyro_block
        return self._cache["L"]

    @property
    def cho(self):
        if "cho" not in self._cache:
            self._cache["cho"] = _factor(self.inertia)
        return self._cache["cho"]

    def solve_inertia(self, rhs: np.ndarray) -> np.ndarray:
        return sla.cho_solve(self.cho, rhs, check_finite=False)

    @property
    def I_diag(self) -> np.ndarray:
        p = self.params
        return np.array([p.A, p.B, p.C])

    def split(self, u: np.ndarray):
        u = np.asarray(u)
        if u.shape[-1] != self.n_total:
            raise DimensionMismatch(f"state has length {u.shape[-1]}, expected {self.n_total}")
        N = self.N
        return u[..., :N], u[..., N:N + 3], u[..., N + 3:N + 6]

    def kernel_vectors(self) -> np.ndarray:
        """The two analytic kernel vectors ``(0, e3, 0)`` and ``(0, 0, e3)`` as columns."""
        k = np.zeros((self.n_total, 2))
        k[self.N + 2, 0] = 1.0
        k[self.N + 5, 1] = 1.0
        return k

    def liquid_moment(self, c: np.ndarray) -> np.ndarray:
        """``a = -I^{-1} S c``."""
        return -(self.moment @ c) / self.I_diag


def _factor(M: np.ndarray):
    try:
        return sla.cho_factor(M, lower=True)
    except np.linalg.LinAlgError as exc:
        raise InertiaNotPD("coupled inertia matrix is not positive definite") from exc


def _check_schur(gram: np.ndarray, S: np.ndarray, I: np.ndarray) -> None:
    schur = I - S @ np.linalg.solve(gram, S.T)
    w = np.linalg.eigvalsh(0.5 * (schur + schur.T))
    if w.min() <= 0:
        raise InertiaNotPD(
            f"diag(A,B,C) - S gram^-1 S^T has eigenvalue {w.min():.3e}; parameters inconsistent with cavity"
        )


def _check_compatible(basis: SolenoidalBasis, p: BodyParams) -> None:
    for name, a, b in (("rho", basis.rho, p.rho), ("nu", basis.nu, p.nu), ("h", basis.h, p.cavity_scale)):
        if as_fraction(b) != a:
            raise ValueError(f"basis {name}={float(a)} differs from params {name}={b}")


def inertia_exact(basis: SolenoidalBasis, p: BodyParams) -> np.ndarray:
    """The coupled inertia matrix as exact Fractions (params read by decimal repr)."""
    N = basis.N
    out = np.empty((N + 6, N + 6), dtype=object)
    out.fill(Fraction(0))
    out[:N, :N] = basis.gram
    out[:N, N:N + 3] = basis.moment.T
    out[N:N + 3, :N] = basis.moment
    for i, v in enumerate((p.A, p.B, p.C)):
        out[N + i, N + i] = as_fraction(v)
        out[N + 3 + i, N + 3 + i] = Fraction(1)
    return out


def assemble(basis: SolenoidalBasis, p: BodyParams) -> ReducedSystem:
    """Build inertia, stiffness and gyroscopic blocks.

    Raises
    ------
    InertiaNotPD
        If ``diag(A,B,C) - S gram^-1 S^T`` is not positive definite.
    """
    _check_compatible(basis, p)
    N = basis.N
    n = N + 6
    gram = basis.as_float("gram")
    stiff = basis.as_float("stiffness")
    S = basis.as_float("moment")
    R = basis.as_float("coriolis")
    T = basis.as_float("convective")
    I = np.diag([p.A, p.B, p.C])
    lam, b2 = p.lam, p.beta2
    v, w, zz = slice(0, N), slice(N, N + 3), slice(N + 3, N + 6)

    _check_schur(gram, S, I)

    M = np.zeros((n, n))
    M[v, v] = gram
    M[v, w] = S.T
    M[w, v] = S
    M[w, w] = I
    M[zz, zz] = np.eye(3)

    K = np.zeros((n, n))
    K[v, v] = stiff
    K[w, w] = np.eye(3)
    K[zz, zz] = np.eye(3)

    G = np.zeros((n, n))
    G[v, v] = -2.0 * lam * R[2]
    G[w, v] = -lam * E3X @ S
    G[w, w] = -lam * E3X @ I + lam * p.C * E3X - np.eye(3)
    G[w, zz] = -b2 * E3X
    G[zz, w] = E3X
    G[zz, zz] = -lam * E3X - np.eye(3)

    sys = ReducedSystem(params=p, N=N, inertia=M, stiffness_block=K, gyro_block=G, gram=gram,
                        stiffness=stiff, moment=S, coriolis=R, convective=T)
    sys.cho  # factor now so InertiaNotPD surfaces at assembly
    return sys


def _cross(a, b) -> np.ndarray:
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


def nonlinear_rhs(sys: ReducedSystem, u) -> np.ndarray:
    """Quadratic terms in test coordinates.

    velocity rows: ``-2 sum_i omega_i R_i c - T[:, k, l] c_k c_l``;
    spin rows: ``-omega x (I omega + S c)``; gravity rows: ``-omega x z``.
    """
    u = _as_vector(u)
    c, om, z = sys.split(u)
    N = sys.N
    if "flat" not in sys._cache:
        sys._cache["flat"] = (sys.coriolis.reshape(3, N * N), sys.convective.reshape(N, N * N))
    Rf, Tf = sys._cache["flat"]
    out = np.empty(sys.n_total)
    out[:N] = -2.0 * ((om @ Rf).reshape(N, N) @ c) - Tf @ np.outer(c, c).ravel()
    out[N:N + 3] = -_cross(om, sys.I_diag * om + sys.moment @ c)
    out[N + 3:] = -_cross(om, z)
    return out


def generator(sys: ReducedSystem) -> np.ndarray:
    """``M^{-1} (K + G)`` via the cached Cholesky factor."""
    if "gen" not in sys._cache:
        sys._cache["gen"] = sys.solve_inertia(sys.linear_matrix)
    return sys._cache["gen"]


def reduced_nonlinearity(sys: ReducedSystem, u) -> np.ndarray:
    """``M^{-1} n(u)``, the nonlinear term of ``du/dt + L u = N(u)``."""
    return sys.solve_inertia(nonlinear_rhs(sys, u))


def _as_vector(u) -> np.ndarray:
    if hasattr(u, "to_vector"):
        return u.to_vector()
    return np.asarray(u, dtype=float)


def dump_matrices(sys: ReducedSystem, directory) -> list[Path]:
    """Write inertia, stiffness, gyro and generator as row-major CSV with 17
    significant digits."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, mat in (("inertia", sys.inertia), ("stiffness_block", sys.stiffness_block),
                      ("gyro_block", sys.gyro_block), ("generator", generator(sys))):
        path = directory / f"{name}.csv"
        np.savetxt(path, mat, delimiter=",", fmt="%.17g")
        written.append(path)
    return written
