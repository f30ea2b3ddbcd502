"""Solenoidal, no-slip polynomial velocity basis on the cube cavity.

Candidate fields are ``b = grad(phi^2 m) x e`` with
``phi = (h^2 - x^2)(h^2 - y^2)(h^2 - z^2)``, ``m`` a monomial of total degree
at most ``degree`` and ``e`` a coordinate axis.  Since
``grad(phi^2 m) x e = curl(phi^2 m e)`` every candidate is exactly
divergence free, and both factors of ``grad(phi^2 m) = phi (2 m grad phi +
phi grad m)`` vanish on the boundary.

All integral tables are exact rationals.  ``phi^2 m`` is a product
``X(x) Y(y) Z(z)``, so every field component is one separable term and the
integrals of products of fields reduce to products of 1-D integrals, which
are cached.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import gmpy2
import numpy as np

from .errors import EmptyBasis
from .polynomial import (
    Polynomial3,
    UPoly,
    as_fraction,
    upoly_diff,
    upoly_eval,
    upoly_integral,
    upoly_mul,
)

# one separable term: coeff * X(x) Y(y) Z(z)
SepTerm = Tuple[int | Fraction, Tuple[UPoly, UPoly, UPoly]]

_LEVI = {(0, 1, 2): 1, (1, 2, 0): 1, (2, 0, 1): 1, (0, 2, 1): -1, (2, 1, 0): -1, (1, 0, 2): -1}


def levi_civita(i: int, j: int, k: int) -> int:
    return _LEVI.get((i, j, k), 0)


def _sep_diff(term: SepTerm, axis: int) -> SepTerm | None:
    coeff, factors = term
    d = upoly_diff(factors[axis])
    if not d:
        return None
    new = list(factors)
    new[axis] = d
    return coeff, tuple(new)


@dataclass(frozen=True, eq=False)
class VectorField:
    """Polynomial velocity field stored as one separable term per component.

    ``label`` is ``(monomial exponent, axis)`` of the generating potential.
    A component equal to zero is stored as ``None``.
    """

    label: Tuple[Tuple[int, int, int], int]
    terms: Tuple[SepTerm | None, SepTerm | None, SepTerm | None]
    _cache: Dict = field(default_factory=dict, repr=False, compare=False)

    def derivative_terms(self, component: int, axis: int) -> SepTerm | None:
        key = ("d", component, axis)
        if key not in self._cache:
            t = self.terms[component]
            self._cache[key] = None if t is None else _sep_diff(t, axis)
        return self._cache[key]

    @property
    def components(self) -> Tuple[Polynomial3, Polynomial3, Polynomial3]:
        if "poly" not in self._cache:
            self._cache["poly"] = tuple(
                Polynomial3() if t is None else Polynomial3.from_separable(*t) for t in self.terms
            )
        return self._cache["poly"]

    def divergence(self) -> Polynomial3:
        u, v, w = self.components
        return u.diff(0) + v.diff(1) + w.diff(2)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Float values at ``points`` of shape (n, 3); returns (n, 3)."""
        points = np.asarray(points, dtype=float)
        out = np.zeros((len(points), 3))
        for n, t in enumerate(self.terms):
            if t is not None:
                coeff, factors = t
                vals = float(coeff) * np.ones(len(points))
                for axis, f in enumerate(factors):
                    vals = vals * upoly_eval(f, points[:, axis])
                out[:, n] = vals
        return out


def candidate_field(h, exponent: Tuple[int, int, int], axis: int) -> VectorField:
    """``grad(phi^2 x^a y^b z^c) x e_axis`` on ``[-h, h]^3``."""
    h = as_fraction(h)
    bump = (h ** 4, Fraction(0), -2 * h ** 2, Fraction(0), Fraction(1))  # (h^2 - t^2)^2
    factors = []
    for n in exponent:
        mono = tuple([Fraction(0)] * n + [Fraction(1)])
        factors.append(upoly_mul(bump, mono))
    grad = []
    for p in range(3):
        f = list(factors)
        f[p] = upoly_diff(f[p])
        grad.append((1, tuple(f)))
    # (grad psi x e)_n = eps_{n p axis} (grad psi)_p
    terms: List[SepTerm | None] = []
    for n in range(3):
        t = None
        for p in range(3):
            s = levi_civita(n, p, axis)
            if s:
                coeff, f = grad[p]
                t = (s * coeff, f)
        terms.append(t)
    return VectorField(label=(tuple(exponent), axis), terms=tuple(terms))


def monomials_up_to(degree: int) -> List[Tuple[int, int, int]]:
    out = [(a, b, c) for a, b, c in itertools.product(range(degree + 1), repeat=3) if a + b + c <= degree]
    return sorted(out, key=lambda e: (sum(e), tuple(-k for k in e)))


# ---------------------------------------------------------------------------
# exact integration of products of separable terms
# ---------------------------------------------------------------------------

class _CubeIntegrator:
    """Integrals over ``[-h,h]^3`` of products of separable terms, with a cache
    of 1-D integrals keyed by the participating univariate factors.

    Accumulates in ``gmpy2.mpq``; callers convert results with :func:`_frac`.
    """

    def __init__(self, h: Fraction):
        self.h = h
        self._ids: Dict[UPoly, int] = {}
        self._by_obj: Dict[int, Tuple[UPoly, int]] = {}
        self._polys: List[UPoly] = []
        self._cache: Dict[Tuple[int, ...], Fraction] = {}

    def _id(self, p: UPoly) -> int:
        # identity lookup first; the stored reference keeps ``p`` alive so its
        # id() cannot be reused
        hit = self._by_obj.get(id(p))
        if hit is not None and hit[0] is p:
            return hit[1]
        i = self._ids.get(p)
        if i is None:
            i = len(self._polys)
            self._ids[p] = i
            self._polys.append(p)
        self._by_obj[id(p)] = (p, i)
        return i

    def _line(self, polys: Sequence[UPoly]) -> Fraction:
        key = tuple(sorted(self._id(p) for p in polys))
        val = self._cache.get(key)
        if val is None:
            prod: UPoly = (Fraction(1),)
            for i in key:
                prod = upoly_mul(prod, self._polys[i])
            val = gmpy2.mpq(upoly_integral(prod, self.h))
            self._cache[key] = val
        return val

    def product(self, *terms: SepTerm | None):
        coeff = 1
        for t in terms:
            if t is None:
                return _ZERO
            coeff *= t[0]
        out = gmpy2.mpq(coeff)
        for axis in range(3):
            line = self._line([t[1][axis] for t in terms])
            if not line:
                return _ZERO
            out *= line
        return out


_ZERO = gmpy2.mpq(0)


def _frac(q) -> Fraction:
    q = gmpy2.mpq(q)
    return Fraction(int(q.numerator), int(q.denominator))


@lru_cache(maxsize=16)
def _integrator(h: Fraction) -> _CubeIntegrator:
    return _CubeIntegrator(h)


_X = (Fraction(0), Fraction(1))


def _times_coordinate(term: SepTerm | None, axis: int) -> SepTerm | None:
    if term is None:
        return None
    coeff, f = term
    new = list(f)
    new[axis] = upoly_mul(f[axis], _X)
    return coeff, tuple(new)


def gram_entry(bj: VectorField, bk: VectorField, h, rho=1) -> Fraction:
    """``rho int b_j . b_k``."""
    I = _integrator(as_fraction(h))
    return as_fraction(rho) * _frac(sum((I.product(bj.terms[n], bk.terms[n]) for n in range(3)), _ZERO))


def stiffness_entry(bj: VectorField, bk: VectorField, h, rho=1, nu=1) -> Fraction:
    """``rho nu int grad b_j : grad b_k``."""
    I = _integrator(as_fraction(h))
    total = _ZERO
    for n in range(3):
        for m in range(3):
            total += I.product(bj.derivative_terms(n, m), bk.derivative_terms(n, m))
    return as_fraction(rho) * as_fraction(nu) * _frac(total)


def moment_entry(bk: VectorField, i: int, h, rho=1) -> Fraction:
    """``rho int (x x b_k) . e_i``."""
    I = _integrator(as_fraction(h))
    total = _ZERO
    for m in range(3):
        for n in range(3):
            s = levi_civita(i, m, n)
            if s:
                total += s * I.product(_times_coordinate(bk.terms[n], m))
    return as_fraction(rho) * _frac(total)


def coriolis_entry(bj: VectorField, bk: VectorField, i: int, h, rho=1) -> Fraction:
    """``rho int b_j . (e_i x b_k)``."""
    I = _integrator(as_fraction(h))
    total = _ZERO
    for n in range(3):
        for q in range(3):
            s = levi_civita(n, i, q)
            if s:
                total += s * I.product(bj.terms[n], bk.terms[q])
    return as_fraction(rho) * _frac(total)


def convective_entry(bj: VectorField, bk: VectorField, bl: VectorField, h, rho=1) -> Fraction:
    """``rho int b_j . (b_k . grad) b_l``."""
    I = _integrator(as_fraction(h))
    total = _ZERO
    for n in range(3):
        if bj.terms[n] is None:
            continue
        for m in range(3):
            total += I.product(bj.terms[n], bk.terms[m], bl.derivative_terms(n, m))
    return as_fraction(rho) * _frac(total)


# ---------------------------------------------------------------------------
# the basis
# ---------------------------------------------------------------------------

def _obj(shape) -> np.ndarray:
    a = np.empty(shape, dtype=object)
    a.fill(Fraction(0))
    return a


@dataclass(frozen=True, eq=False)
class SolenoidalBasis:
    """Exact Galerkin data for the cavity velocity.

    Tables are numpy object arrays of Fractions; ``*_float`` accessors give
    double copies.
    """

    h: Fraction
    degree: int
    rho: Fraction
    nu: Fraction
    fields: Tuple[VectorField, ...]
    gram: np.ndarray
    stiffness: np.ndarray
    moment: np.ndarray
    coriolis: np.ndarray
    convective: np.ndarray
    n_candidates: int = 0

    @property
    def N(self) -> int:
        return len(self.fields)

    def as_float(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name), dtype=float)

    @property
    def gram_condition(self) -> float:
        return float(np.linalg.cond(self.as_float("gram")))

    def to_json(self) -> dict:
        def enc(a):
            if isinstance(a, np.ndarray):
                return [enc(x) for x in a]
            a = Fraction(a)
            return f"{a.numerator}/{a.denominator}"

        return {
            "h": enc(self.h),
            "degree": self.degree,
            "rho": enc(self.rho),
            "nu": enc(self.nu),
            "N": self.N,
            "labels": [[list(f.label[0]), f.label[1]] for f in self.fields],
            "gram": enc(self.gram),
            "stiffness": enc(self.stiffness),
            "moment": enc(self.moment),
            "coriolis": enc(self.coriolis),
            "convective": enc(self.convective),
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))


def select_independent(gram: np.ndarray) -> List[int]:
    """Indices of a maximal independent subset by exact pivoted elimination.

    Pivots on the largest remaining Schur-complement diagonal; ties go to the
    lower index.  Returned in increasing order.
    """
    n = gram.shape[0]
    S = [[Fraction(gram[i, j]) for j in range(n)] for i in range(n)]
    remaining = list(range(n))
    chosen = []
    while remaining:
        p = max(remaining, key=lambda i: (S[i][i], -i))
        piv = S[p][p]
        if piv <= 0:
            break
        chosen.append(p)
        remaining.remove(p)
        row = {j: S[p][j] for j in remaining}
        for i in remaining:
            f = S[i][p] / piv
            if f:
                Si = S[i]
                for j in remaining:
                    Si[j] -= f * row[j]
    return sorted(chosen)


def _tables(fields: Sequence[VectorField], h: Fraction, rho: Fraction, nu: Fraction):
    N = len(fields)
    gram, stiff = _obj((N, N)), _obj((N, N))
    moment = _obj((3, N))
    cor = _obj((3, N, N))
    conv = _obj((N, N, N))
    for j, bj in enumerate(fields):
        for i in range(3):
            moment[i, j] = moment_entry(bj, i, h, rho)
        for k, bk in enumerate(fields):
            gram[j, k] = gram_entry(bj, bk, h, rho)
            stiff[j, k] = stiffness_entry(bj, bk, h, rho, nu)
            for i in range(3):
                cor[i, j, k] = coriolis_entry(bj, bk, i, h, rho)
            for l, bl in enumerate(fields):
                conv[j, k, l] = convective_entry(bj, bk, bl, h, rho)
    return gram, stiff, moment, cor, conv


def build_cube_basis(h, degree: int, rho=1, nu=1) -> SolenoidalBasis:
    """Build the curl-form basis of the given polynomial degree on ``[-h,h]^3``.

    Parameters
    ----------
    h : half-width of the cube (floats are read by their decimal repr).
    degree : maximal total degree of the monomial multiplying ``phi^2``.
    rho, nu : density and kinematic viscosity folded into the tables.
    """
    if degree < 0:
        raise ValueError("degree must be non-negative")
    h, rho, nu = as_fraction(h), as_fraction(rho), as_fraction(nu)
    if h <= 0:
        raise ValueError("h must be positive")
    candidates = [candidate_field(h, m, axis) for m in monomials_up_to(degree) for axis in range(3)]
    n = len(candidates)
    G = _obj((n, n))
    for j in range(n):
        for k in range(j, n):
            G[j, k] = G[k, j] = gram_entry(candidates[j], candidates[k], h, rho)
    chosen = select_independent(G)
    if not chosen:
        raise EmptyBasis(f"degree {degree} produced no independent field")
    fields = tuple(candidates[i] for i in chosen)
    gram, stiff, moment, cor, conv = _tables(fields, h, rho, nu)
    return SolenoidalBasis(h=h, degree=degree, rho=rho, nu=nu, fields=fields, gram=gram,
                           stiffness=stiff, moment=moment, coriolis=cor, convective=conv,
                           n_candidates=n)


def with_material(basis: SolenoidalBasis, rho, nu) -> SolenoidalBasis:
    """Same fields with the tables rescaled exactly to new ``rho`` and ``nu``.

    Every table is linear in ``rho``; the stiffness is linear in ``rho nu``.
    """
    rho, nu = as_fraction(rho), as_fraction(nu)
    if rho == basis.rho and nu == basis.nu:
        return basis
    if rho <= 0 or nu <= 0:
        raise ValueError("rho and nu must be positive")
    s = rho / basis.rho
    t = s * nu / basis.nu
    return replace(basis, rho=rho, nu=nu, gram=basis.gram * s, stiffness=basis.stiffness * t,
                   moment=basis.moment * s, coriolis=basis.coriolis * s, convective=basis.convective * s)


def load_basis(path) -> SolenoidalBasis:
    """Read tables written by :meth:`SolenoidalBasis.save`; fields are rebuilt
    from their labels, tables are taken from the file."""
    data = json.loads(Path(path).read_text())

    def arr(a, shape):
        out = _obj(shape)
        flat = np.array(a, dtype=object).reshape(-1)
        for idx, val in zip(np.ndindex(*shape), flat):
            out[idx] = Fraction(val)
        return out

    h = Fraction(data["h"])
    N = data["N"]
    fields = tuple(candidate_field(h, tuple(e), axis) for e, axis in data["labels"])
    if len(fields) != N:
        raise ValueError("label count does not match N")
    return SolenoidalBasis(
        h=h, degree=data["degree"], rho=Fraction(data["rho"]), nu=Fraction(data["nu"]), fields=fields,
        gram=arr(data["gram"], (N, N)), stiffness=arr(data["stiffness"], (N, N)),
        moment=arr(data["moment"], (3, N)), coriolis=arr(data["coriolis"], (3, N, N)),
        convective=arr(data["convective"], (N, N, N)),
    )


# ---------------------------------------------------------------------------
# floating-point oracle
# ---------------------------------------------------------------------------

def quadrature_tables(basis: SolenoidalBasis, order: int | None = None) -> Dict[str, np.ndarray]:
    """Re-evaluate every table by tensor-product Gauss-Legendre quadrature.

    Works from the expanded :class:`Polynomial3` components, independently
    of the separable exact path.  The default order integrates the cubic
    products of the convective table exactly.
    """
    h = float(basis.h)
    rho, nu = float(basis.rho), float(basis.nu)
    if order is None:
        per_axis = 4 + basis.degree  # degree of one factor of phi^2 m per variable
        order = (3 * per_axis) // 2 + 2
    t, w = np.polynomial.legendre.leggauss(order)
    t, w = h * t, h * w
    X, Y, Z = np.meshgrid(t, t, t, indexing="ij")
    W = (w[:, None, None] * w[None, :, None] * w[None, None, :]).ravel()
    pts = (X.ravel(), Y.ravel(), Z.ravel())

    def ev(p: Polynomial3):
        return p(*pts) if not p.is_zero() else np.zeros_like(W)

    N = basis.N
    vals = np.array([[ev(c) for c in f.components] for f in basis.fields])  # (N, 3, q)
    grads = np.array([[[ev(c.diff(m)) for m in range(3)] for c in f.components] for f in basis.fields])
    xs = np.stack(pts)
    gram = rho * np.einsum("jnq,knq,q->jk", vals, vals, W)
    stiff = rho * nu * np.einsum("jnmq,knmq,q->jk", grads, grads, W)
    xcross = np.cross(xs.T[None, :, :], np.transpose(vals, (0, 2, 1)))  # (N, q, 3)
    moment = rho * np.einsum("kqi,q->ik", xcross, W)
    cor = np.zeros((3, N, N))
    for i in range(3):
        e = np.zeros(3)
        e[i] = 1.0
        ecross = np.cross(e[None, None, :], np.transpose(vals, (0, 2, 1)))  # (N, q, 3)
        cor[i] = rho * np.einsum("jnq,kqn,q->jk", vals, ecross, W)
    adv = np.einsum("kmq,lnmq->klnq", vals, grads)  # (b_k . grad) b_l, component n
    conv = rho * np.einsum("jnq,klnq,q->jkl", vals, adv, W)
    return {"gram": gram, "stiffness": stiff, "moment": moment, "coriolis": cor, "convective": conv}
