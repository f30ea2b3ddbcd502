"""Physical parameters of the liquid-filled top and closed-form regime map.

The rigid body plus liquid spins about the vertical principal axis ``e3``
with rate ``lam``; its centre of mass sits above the fixed point.  Whether
that upright rotation is stable depends only on ``(A, B, C, beta2, lam)``:
with ``M = max(A, B)`` it is stable iff ``C > M`` and
``lam**2 > beta2 / (C - M)``.
"""

from __future__ import annotations

import enum
import math
from fractions import Fraction
from functools import lru_cache
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .errors import FluidInertiaExceedsTotal, NonPositiveParameter
from .polynomial import Polynomial3, as_fraction, integrate_cube

PARAM_FIELDS = ("A", "B", "C", "beta2", "rho", "nu", "lam", "cavity_scale")


def fluid_inertia(rho, h) -> np.ndarray:
    """Exact inertia tensor ``rho int (|x|^2 delta_ij - x_i x_j) dV`` of the
    liquid filling ``[-h, h]^3``, as a 3x3 object array of Fractions."""
    return _fluid_inertia(as_fraction(rho), as_fraction(h)).copy()


@lru_cache(maxsize=256)
def _fluid_inertia(rho: Fraction, h: Fraction) -> np.ndarray:
    x = [Polynomial3.coordinate(i) for i in range(3)]
    r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2]
    out = np.empty((3, 3), dtype=object)
    for i in range(3):
        for j in range(3):
            p = (r2 if i == j else Polynomial3()) - x[i] * x[j]
            out[i, j] = rho * integrate_cube(p, h)
    return out


@dataclass(frozen=True)
class BodyParams:
    """Principal moments ``A, B, C`` of the coupled system about the fixed
    point, ``beta2 = M l g``, liquid density ``rho`` and kinematic viscosity
    ``nu``, spin rate ``lam`` and cube half-width ``cavity_scale``."""

    A: float
    B: float
    C: float
    beta2: float
    rho: float
    nu: float
    lam: float
    cavity_scale: float

    @property
    def M(self) -> float:
        return max(self.A, self.B)

    @property
    def inertia(self) -> np.ndarray:
        return np.diag([self.A, self.B, self.C])

    @property
    def delta(self) -> float:
        return delta_coefficient(self)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in PARAM_FIELDS}

    def replace(self, **changes) -> "BodyParams":
        d = self.as_dict()
        d.update(changes)
        return make_params(d)


def make_params(raw: Mapping[str, float] | None = None, **kw) -> BodyParams:
    """Validate a named set of scalars and build :class:`BodyParams`.

    Raises
    ------
    NonPositiveParameter
        If any of A, B, C, beta2, rho, nu, cavity_scale is not strictly
        positive, or lam is zero.
    FluidInertiaExceedsTotal
        If a principal moment does not exceed the matching diagonal entry of
        the liquid's own inertia tensor.
    """
    values = dict(raw or {})
    values.update(kw)
    missing = [k for k in PARAM_FIELDS if k not in values]
    if missing:
        raise KeyError(f"missing parameters: {', '.join(missing)}")
    unknown = sorted(set(values) - set(PARAM_FIELDS))
    if unknown:
        raise KeyError(f"unknown parameters: {', '.join(unknown)}")
    vals = {k: float(values[k]) for k in PARAM_FIELDS}
    for k, v in vals.items():
        if not math.isfinite(v):
            raise NonPositiveParameter(f"{k} must be finite, got {v}")
    for k in ("A", "B", "C", "beta2", "rho", "nu", "cavity_scale"):
        if vals[k] <= 0:
            raise NonPositiveParameter(f"{k} must be positive, got {vals[k]}")
    if vals["lam"] == 0:
        raise NonPositiveParameter("lam must be non-zero")
    fluid = fluid_inertia(vals["rho"], vals["cavity_scale"])
    for i, k in enumerate("ABC"):
        if as_fraction(vals[k]) <= fluid[i, i]:
            raise FluidInertiaExceedsTotal(
                f"{k}={vals[k]} does not exceed the liquid moment {float(fluid[i, i]):.6g}"
            )
    return BodyParams(**vals)


def kernel_coefficients(p: BodyParams) -> tuple[float, float]:
    """``K_A = lam^2 (C - A) / beta2`` and ``K_B = lam^2 (C - B) / beta2``."""
    lam2 = p.lam ** 2
    return lam2 * (p.C - p.A) / p.beta2, lam2 * (p.C - p.B) / p.beta2


def delta_coefficient(p: BodyParams) -> float:
    return p.lam ** 2 * p.C - p.beta2


def threshold_lambda2(p: BodyParams) -> Optional[float]:
    """Critical squared spin ``beta2 / (C - M)``; None unless ``C > M``."""
    if p.C > p.M:
        return p.beta2 / (p.C - p.M)
    return None


class Regime(str, enum.Enum):
    STABLE = "Stable"
    UNSTABLE_SUBCRITICAL = "UnstableSubcritical"
    UNSTABLE_FLAT_TOP = "UnstableFlatTop"
    BOUNDARY = "Boundary"
    DEGENERATE = "Degenerate"


@dataclass(frozen=True)
class RegimeVerdict:
    kind: Regime
    threshold_lambda2: Optional[float]
    K_A: float
    K_B: float

    @property
    def unstable(self) -> bool:
        return self.kind in (Regime.UNSTABLE_SUBCRITICAL, Regime.UNSTABLE_FLAT_TOP)


def classify_regime(p: BodyParams, tol: float = 1e-9) -> RegimeVerdict:
    """Closed-form stability verdict.

    ``tol`` is relative: near-ties are judged against ``tol * max(|a|, |b|)``.
    A kernel coefficient equal to one overrides everything else, since then
    the kernel of the linearization is larger than two-dimensional.
    """
    KA, KB = kernel_coefficients(p)
    thr = threshold_lambda2(p)

    def close(a, b):
        return abs(a - b) <= tol * max(abs(a), abs(b), 1e-300)

    if close(KA, 1.0) or close(KB, 1.0):
        kind = Regime.DEGENERATE
    elif close(p.C, p.M):
        kind = Regime.BOUNDARY
    elif p.C < p.M:
        kind = Regime.UNSTABLE_FLAT_TOP
    else:
        # compare lam^2 (C - M) with beta2, same scaling on both sides
        lhs, rhs = p.lam ** 2 * (p.C - p.M), p.beta2
        if close(lhs, rhs):
            kind = Regime.BOUNDARY
        elif lhs > rhs:
            kind = Regime.STABLE
        else:
            kind = Regime.UNSTABLE_SUBCRITICAL
    return RegimeVerdict(kind=kind, threshold_lambda2=thr, K_A=KA, K_B=KB)

