"""Exact rational polynomials on the cube ``[-h, h]^3``.

Two representations live here:

* :class:`Polynomial3`, a sparse map ``(i, j, k) -> Fraction`` used for
  symbolic checks (divergence, boundary values) and as the reference
  integrator.
* univariate coefficient tuples, the building blocks of the separable
  products that the basis tables are assembled from.  Every basis field
  component is a single product ``X(x) Y(y) Z(z)``, so cube integrals of
  products of fields factor into products of 1-D integrals.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Dict, Iterable, Tuple

import numpy as np

Exponent = Tuple[int, int, int]
UPoly = Tuple[Fraction, ...]


def as_fraction(value) -> Fraction:
    """Convert ``value`` to a Fraction, reading floats by their decimal repr.

    ``0.5`` becomes ``1/2`` and ``0.1`` becomes ``1/10`` (not the binary
    expansion), which is what a user typing a parameter means.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    return Fraction(repr(float(value)))


def monomial_integral(n: int, h: Fraction) -> Fraction:
    """``int_{-h}^{h} x^n dx``."""
    if n % 2:
        return Fraction(0)
    return 2 * h ** (n + 1) / (n + 1)


# ---------------------------------------------------------------------------
# univariate helpers
# ---------------------------------------------------------------------------

def upoly_trim(coeffs: Iterable[Fraction]) -> UPoly:
    c = list(coeffs)
    while c and c[-1] == 0:
        c.pop()
    return tuple(c)


def upoly_mul(p: UPoly, q: UPoly) -> UPoly:
    if not p or not q:
        return ()
    out = [Fraction(0)] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        if a == 0:
            continue
        for j, b in enumerate(q):
            out[i + j] += a * b
    return upoly_trim(out)


def upoly_diff(p: UPoly) -> UPoly:
    return upoly_trim(i * p[i] for i in range(1, len(p)))


def upoly_integral(p: UPoly, h: Fraction) -> Fraction:
    return sum((a * monomial_integral(n, h) for n, a in enumerate(p) if a), Fraction(0))


def upoly_eval(p: UPoly, x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(np.asarray(x, dtype=float))
    for a in reversed(p):
        out = out * x + float(a)
    return out


# ---------------------------------------------------------------------------
# Polynomial3
# ---------------------------------------------------------------------------

class Polynomial3:
    """Sparse trivariate polynomial with rational coefficients.

    Stored in canonical form: zero coefficients are never kept.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: Dict[Exponent, Fraction] | None = None):
        self.terms: Dict[Exponent, Fraction] = {}
        if terms:
            for e, c in terms.items():
                if any(k < 0 for k in e):
                    raise ValueError(f"negative exponent {e}")
                c = as_fraction(c)
                if c != 0:
                    self.terms[tuple(e)] = c

    @classmethod
    def constant(cls, c) -> "Polynomial3":
        return cls({(0, 0, 0): c})

    @classmethod
    def monomial(cls, exponent: Exponent, coeff=1) -> "Polynomial3":
        return cls({tuple(exponent): coeff})

    @classmethod
    def coordinate(cls, axis: int) -> "Polynomial3":
        e = [0, 0, 0]
        e[axis] = 1
        return cls({tuple(e): 1})

    @classmethod
    def from_separable(cls, coeff: Fraction, factors: Tuple[UPoly, UPoly, UPoly]) -> "Polynomial3":
        """Expand ``coeff * X(x) Y(y) Z(z)``."""
        px, py, pz = factors
        terms: Dict[Exponent, Fraction] = {}
        for i, a in enumerate(px):
            if not a:
                continue
            for j, b in enumerate(py):
                if not b:
                    continue
                ab = coeff * a * b
                for k, c in enumerate(pz):
                    if c:
                        terms[(i, j, k)] = terms.get((i, j, k), 0) + ab * c
        return cls(terms)

    def is_zero(self) -> bool:
        return not self.terms

    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=-1)

    def __add__(self, other: "Polynomial3") -> "Polynomial3":
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0) + c
        return Polynomial3(out)

    def __neg__(self) -> "Polynomial3":
        return Polynomial3({e: -c for e, c in self.terms.items()})

    def __sub__(self, other: "Polynomial3") -> "Polynomial3":
        return self + (-other)

    def __mul__(self, other) -> "Polynomial3":
        if not isinstance(other, Polynomial3):
            s = as_fraction(other)
            return Polynomial3({e: s * c for e, c in self.terms.items()})
        out: Dict[Exponent, Fraction] = {}
        for (a, b, c), u in self.terms.items():
            for (d, e, f), w in other.terms.items():
                key = (a + d, b + e, c + f)
                out[key] = out.get(key, 0) + u * w
        return Polynomial3(out)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        return isinstance(other, Polynomial3) and self.terms == other.terms

    def __repr__(self) -> str:
        if not self.terms:
            return "Polynomial3(0)"
        parts = []
        for (i, j, k), c in sorted(self.terms.items()):
            parts.append(f"{c}*x^{i}*y^{j}*z^{k}")
        return "Polynomial3(" + " + ".join(parts) + ")"

    def diff(self, axis: int) -> "Polynomial3":
        out = {}
        for e, c in self.terms.items():
            n = e[axis]
            if n:
                new = list(e)
                new[axis] -= 1
                out[tuple(new)] = c * n
        return Polynomial3(out)

    def __call__(self, x, y, z):
        """Evaluate at exact scalars (returns Fraction) or float arrays."""
        if all(isinstance(v, (int, Fraction)) for v in (x, y, z)):
            return sum((c * Fraction(x) ** i * Fraction(y) ** j * Fraction(z) ** k
                        for (i, j, k), c in self.terms.items()), Fraction(0))
        x, y, z = (np.asarray(v, dtype=float) for v in (x, y, z))
        out = np.zeros(np.broadcast(x, y, z).shape)
        for (i, j, k), c in self.terms.items():
            out = out + float(c) * x ** i * y ** j * z ** k
        return out


def integrate_cube(p: Polynomial3, h) -> Fraction:
    """Exact ``int_{[-h,h]^3} p dV``."""
    h = as_fraction(h)
    total = Fraction(0)
    for (i, j, k), c in p.terms.items():
        if i % 2 or j % 2 or k % 2:
            continue
        total += c * monomial_integral(i, h) * monomial_integral(j, h) * monomial_integral(k, h)
    return total
