"""Eigenstructure of the reduced generator ``L = M^{-1}(K + G)``.

Zero is always an eigenvalue: ``(0, e3, 0)`` and ``(0, 0, e3)`` (steady
spin change, steady tilt of gravity along the axis) are exact kernel
vectors.  The rest of the spectrum is obtained by deflating those two
directions exactly, so an eigenvalue that is merely small (near the
stability threshold it crosses zero) is never mistaken for a kernel one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .errors import AlphaOutOfRange, DefectiveZeroEigenvalue, EigensolverFailure
from .operators import ReducedSystem, generator, reduced_nonlinearity


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    kernel_dim: int
    kernel_basis: np.ndarray
    min_re_sigma1: float
    gamma_gap: Optional[float]
    hypothesis_flags: dict
    rank: int
    norm: float
    tol: float
    nonzero_eigenvalues: np.ndarray = field(repr=False, default=None)
    nonzero_eigenvectors: np.ndarray = field(repr=False, default=None)

    def to_json(self) -> dict:
        return {
            "eigenvalues": [[float(s.real), float(s.imag)] for s in self.eigenvalues],
            "kernel_dim": int(self.kernel_dim),
            "min_re_sigma1": float(self.min_re_sigma1),
            "flags": {k: bool(v) for k, v in self.hypothesis_flags.items()},
        }


@dataclass(frozen=True)
class Projections:
    Q: np.ndarray
    P: np.ndarray
    right: np.ndarray
    left: np.ndarray

    @property
    def rank(self) -> int:
        return self.right.shape[1]


def _sort(vals, vecs=None):
    order = np.lexsort((vals.imag, vals.real))
    return (vals[order], None if vecs is None else vecs[:, order])


def _deflation_basis(anchors: np.ndarray) -> np.ndarray:
    """Orthonormal complement of ``span(anchors)``."""
    q, _ = np.linalg.qr(anchors, mode="complete")
    return q[:, anchors.shape[1]:]


def spectrum(L: np.ndarray, tol: float = 1e-9, anchors: np.ndarray | None = None) -> SpectrumReport:
    """Dense nonsymmetric eigen-analysis of ``L``.

    Parameters
    ----------
    L : square generator matrix.
    tol : relative threshold; ``|sigma| < tol * ||L||_2`` counts as zero.
    anchors : columns known to lie in the kernel.  When they do (residual
        below the threshold), the nonzero spectrum is computed on their
        orthogonal complement, where ``L`` is block triangular.
    """
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    if L.shape != (n, n):
        raise ValueError("L must be square")
    try:
        vals = np.linalg.eigvals(L)
        sv_u, sv, sv_vt = np.linalg.svd(L)
    except np.linalg.LinAlgError as exc:
        raise EigensolverFailure(str(exc)) from exc
    if not np.all(np.isfinite(vals)):
        raise EigensolverFailure("non-finite eigenvalues")
    norm = float(sv[0]) if n else 0.0
    thresh = tol * max(norm, np.finfo(float).tiny)
    vals = _sort(vals)[0]
    zero = np.abs(vals) < thresh
    kernel_dim = int(zero.sum())
    rank = int((sv > thresh).sum())
    null_right = sv_vt[rank:].T

    deflated = False
    if anchors is not None and anchors.shape[1]:
        resid = np.linalg.norm(L @ anchors, axis=0) / np.linalg.norm(anchors, axis=0)
        if np.all(resid <= thresh):
            U = _deflation_basis(anchors)
            Lr = U.T @ L @ U
            try:
                nz, nzv = np.linalg.eig(Lr)
            except np.linalg.LinAlgError as exc:
                raise EigensolverFailure(str(exc)) from exc
            nz, nzv = _sort(nz, U @ nzv)
            deflated = True
            # kernel basis anchored on the analytic vectors when the numerical
            # null space is no larger than the anchors
            if null_right.shape[1] <= anchors.shape[1]:
                null_right = anchors / np.linalg.norm(anchors, axis=0)
    if not deflated:
        full, fullv = np.linalg.eig(L)
        keep = np.abs(full) >= thresh
        nz, nzv = _sort(full[keep], fullv[:, keep])

    min_re = float(nz.real.min()) if nz.size else np.inf
    geom = n - rank
    flags = {
        "H1": kernel_dim == 2 and geom == 2,
        "H2": kernel_dim == geom and kernel_dim >= 1,
        "H3": not bool(np.any((np.abs(nz.real) < thresh) & (np.abs(nz.imag) >= thresh))),
    }
    return SpectrumReport(
        eigenvalues=vals, kernel_dim=kernel_dim, kernel_basis=null_right, min_re_sigma1=min_re,
        gamma_gap=min_re if min_re > 0 else None, hypothesis_flags=flags, rank=rank, norm=norm,
        tol=tol, nonzero_eigenvalues=nz, nonzero_eigenvectors=nzv,
    )


def analyze(sys: ReducedSystem, tol: float = 1e-9) -> SpectrumReport:
    """Spectrum of the system's generator, anchored on its analytic kernel."""
    key = ("spectrum", tol)
    if key not in sys._cache:
        sys._cache[key] = spectrum(generator(sys), tol=tol, anchors=sys.kernel_vectors())
    return sys._cache[key]


def projections(report: SpectrumReport, L: np.ndarray) -> Projections:
    """Spectral projections onto the kernel (``Q``) and the range (``P``).

    ``Q = R (Y^T R)^{-1} Y^T`` with right kernel ``R`` and left kernel ``Y``.
    """
    if report.kernel_dim < 1:
        raise DefectiveZeroEigenvalue("zero is not an eigenvalue")
    if not report.hypothesis_flags["H2"]:
        raise DefectiveZeroEigenvalue(
            f"algebraic multiplicity {report.kernel_dim} exceeds geometric {L.shape[0] - report.rank}"
        )
    R = report.kernel_basis
    m = R.shape[1]
    u, s, vt = np.linalg.svd(L)
    Y = u[:, L.shape[0] - m:]
    G = Y.T @ R
    if np.linalg.cond(G) > 1.0 / (report.tol * 1e-3):
        raise DefectiveZeroEigenvalue("left and right kernels are (nearly) orthogonal")
    Q = R @ np.linalg.solve(G, Y.T)
    return Projections(Q=Q, P=np.eye(L.shape[0]) - Q, right=R, left=Y)


def system_projections(sys: ReducedSystem, tol: float = 1e-9) -> Projections:
    if "proj" not in sys._cache:
        sys._cache["proj"] = projections(analyze(sys, tol), generator(sys))
    return sys._cache["proj"]


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def stokes_eigenpairs(sys: ReducedSystem):
    """Generalized eigenpairs of ``stiffness psi = sigma gram psi`` with
    gram-orthonormal ``psi`` (columns)."""
    if "stokes" not in sys._cache:
        w, V = sla.eigh(sys.stiffness, sys.gram)
        sys._cache["stokes"] = (w, V)
    return sys._cache["stokes"]


def state_norm(sys: ReducedSystem, u) -> float:
    """``sqrt(rho int |v|^2 + omega . I omega + |z|^2)``."""
    return fractional_norm(sys, u, 0.0)


def fractional_norm(sys: ReducedSystem, u, alpha: float) -> float:
    """``||u||_alpha`` with the Stokes power acting on the velocity part.

    The spin and gravity parts enter with the plain state norm (the viscous
    operator is the identity on them).  Accepts a batch of states along the
    last axis.
    """
    if not 0.0 <= alpha <= 1.0:
        raise AlphaOutOfRange(f"alpha={alpha} outside [0, 1]")
    u = np.asarray(u.to_vector() if hasattr(u, "to_vector") else u, dtype=float)
    c, om, z = sys.split(u)
    w, V = stokes_eigenpairs(sys)
    coef = c @ (sys.gram @ V)
    vel = np.sum(np.abs(w) ** (2 * alpha) * coef ** 2, axis=-1)
    rigid = np.sum(sys.I_diag * om ** 2, axis=-1) + np.sum(z ** 2, axis=-1)
    return np.sqrt(vel + rigid)


# ---------------------------------------------------------------------------
# hypothesis checks
# ---------------------------------------------------------------------------

@dataclass
class HypothesisReport:
    flags: dict
    residuals: dict

    @property
    def passed(self) -> bool:
        return all(self.flags.values())


def verify_hypotheses(sys: ReducedSystem, report: SpectrumReport | None = None) -> HypothesisReport:
    """Kernel dimension (H1), semi-simplicity (H2), no nonzero eigenvalue on
    the imaginary axis (H3), with the measured quantities behind each flag."""
    if report is None:
        report = analyze(sys)
    L = generator(sys)
    k = sys.kernel_vectors()
    thresh = report.tol * report.norm
    nz = report.nonzero_eigenvalues
    off_axis = nz[np.abs(nz.imag) >= thresh]
    residuals = {
        "kernel_residual": float(np.max(np.linalg.norm(L @ k, axis=0))),
        "kernel_dim": report.kernel_dim,
        "rank": report.rank,
        "n": L.shape[0],
        "min_abs_re_off_axis": float(np.min(np.abs(off_axis.real))) if off_axis.size else float("inf"),
        "threshold": thresh,
    }
    return HypothesisReport(flags=dict(report.hypothesis_flags), residuals=residuals)


def _loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def h4_exponent(sys: ReducedSystem, rng: np.random.Generator, alpha: float = 0.8,
                scales=(1e-1, 1e-2, 1e-3, 1e-4), samples: int = 5) -> float:
    """Log-log slope of ``||N(u)||`` against ``||u||_alpha`` over shrinking
    random states; the quadratic bound predicts 2."""
    xs, ys = [], []
    for _ in range(samples):
        d = rng.standard_normal(sys.n_total)
        d /= fractional_norm(sys, d, alpha)
        for s in scales:
            u = s * d
            xs.append(fractional_norm(sys, u, alpha))
            ys.append(state_norm(sys, reduced_nonlinearity(sys, u)))
    return _loglog_slope(xs, ys)


def h5_slope(sys: ReducedSystem, rng: np.random.Generator, alpha: float = 0.8,
             scales=(1e-1, 1e-2, 1e-3, 1e-4), samples: int = 5) -> float:
    """Log-log slope of ``||N(u0 + u1)|| / ||u1||_alpha`` against the size of
    ``(u0, u1)``, with ``u0`` in the kernel and ``u1`` in the range.

    The ratio must vanish with the size; a slope near 1 means it does so
    linearly.
    """
    proj = system_projections(sys)
    xs, ys = [], []
    for _ in range(samples):
        g = rng.standard_normal(sys.n_total)
        u0 = proj.Q @ g
        u1 = proj.P @ rng.standard_normal(sys.n_total)
        size = state_norm(sys, u0) + fractional_norm(sys, u1, alpha)
        u0, u1 = u0 / size, u1 / size
        for s in scales:
            a, b = s * u0, s * u1
            ratio = state_norm(sys, reduced_nonlinearity(sys, a + b)) / fractional_norm(sys, b, alpha)
            xs.append(s)
            ys.append(ratio)
    return _loglog_slope(xs, ys)
