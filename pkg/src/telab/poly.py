"""Sparse bivariate polynomials with exact rational coefficients."""
from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Mapping

import numpy as np

Monomial = tuple[int, int]


class Poly2:
    """A polynomial sum c_ij y1^i y2^j stored as ``{(i, j): Fraction}``.

    Arithmetic stays exact; evaluation converts to floats once and is
    vectorized over arrays of points with trailing dimension 2.
    """

    __slots__ = ("terms", "_exps", "_coef")

    def __init__(self, terms: Mapping[Monomial, Fraction | int] | None = None):
        clean = {}
        for key, c in (terms or {}).items():
            c = Fraction(c)
            if c != 0:
                clean[(int(key[0]), int(key[1]))] = c
        self.terms: dict[Monomial, Fraction] = clean
        self._exps = None
        self._coef = None

    # -- constructors ------------------------------------------------------
    @classmethod
    def const(cls, c) -> "Poly2":
        return cls({(0, 0): Fraction(c)})

    @classmethod
    def monomial(cls, i: int, j: int, c=1) -> "Poly2":
        return cls({(i, j): Fraction(c)})

    @classmethod
    def radial_sq(cls) -> "Poly2":
        """|y|^2."""
        return cls({(2, 0): 1, (0, 2): 1})

    # -- algebra -----------------------------------------------------------
    def __add__(self, other) -> "Poly2":
        other = _coerce(other)
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, Fraction(0)) + c
        return Poly2(out)

    __radd__ = __add__

    def __neg__(self) -> "Poly2":
        return Poly2({k: -c for k, c in self.terms.items()})

    def __sub__(self, other) -> "Poly2":
        return self + (-_coerce(other))

    def __rsub__(self, other) -> "Poly2":
        return _coerce(other) - self

    def __mul__(self, other) -> "Poly2":
        other = _coerce(other)
        out: dict[Monomial, Fraction] = {}
        for (i1, j1), c1 in self.terms.items():
            for (i2, j2), c2 in other.terms.items():
                key = (i1 + i2, j1 + j2)
                out[key] = out.get(key, Fraction(0)) + c1 * c2
        return Poly2(out)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "Poly2":
        out = Poly2.const(1)
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, other) -> bool:
        return isinstance(other, Poly2) and self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __repr__(self) -> str:
        if not self.terms:
            return "Poly2(0)"
        parts = [f"{c}*y1^{i}*y2^{j}" for (i, j), c in sorted(self.terms.items())]
        return "Poly2(" + " + ".join(parts) + ")"

    def deriv(self, axis: int, order: int = 1) -> "Poly2":
        p = self
        for _ in range(order):
            out = {}
            for (i, j), c in p.terms.items():
                e = (i, j)[axis]
                if e == 0:
                    continue
                key = (i - 1, j) if axis == 0 else (i, j - 1)
                out[key] = c * e
            p = Poly2(out)
        return p

    def swap(self) -> "Poly2":
        """The polynomial with y1 and y2 exchanged."""
        return Poly2({(j, i): c for (i, j), c in self.terms.items()})

    def is_symmetric(self) -> bool:
        return self == self.swap()

    @property
    def degree(self) -> int:
        return max((i + j for i, j in self.terms), default=0)

    # -- evaluation ----------------------------------------------------------
    def _compile(self):
        if self._exps is None:
            keys = sorted(self.terms)
            self._exps = np.array(keys, dtype=int).reshape(-1, 2)
            self._coef = np.array([float(self.terms[k]) for k in keys])
        return self._exps, self._coef

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        exps, coef = self._compile()
        if coef.size == 0:
            return np.zeros(y.shape[:-1])
        if coef.size == 1 and not exps.any():
            return np.full(y.shape[:-1], coef[0])
        p1 = _powers(y[..., 0], int(exps[:, 0].max()))
        p2 = _powers(y[..., 1], int(exps[:, 1].max()))
        return (coef * p1[..., exps[:, 0]] * p2[..., exps[:, 1]]).sum(axis=-1)

    def abs_bound(self, y) -> np.ndarray:
        """Sum of |c_ij| |y1|^i |y2|^j, a magnitude scale for roundoff."""
        y = np.abs(np.asarray(y, dtype=float))
        exps, coef = self._compile()
        if coef.size == 0:
            return np.zeros(y.shape[:-1])
        return (np.abs(coef) * y[..., 0, None] ** exps[:, 0] * y[..., 1, None] ** exps[:, 1]).sum(-1)

    def eval_exact(self, y1: Fraction, y2: Fraction) -> Fraction:
        return sum((c * Fraction(y1) ** i * Fraction(y2) ** j for (i, j), c in self.terms.items()),
                   Fraction(0))


def _powers(x: np.ndarray, n: int) -> np.ndarray:
    """x**0 .. x**n stacked on a new trailing axis, by repeated multiplication."""
    out = np.empty(x.shape + (n + 1,))
    out[..., 0] = 1.0
    for k in range(1, n + 1):
        out[..., k] = out[..., k - 1] * x
    return out


def _coerce(x) -> Poly2:
    return x if isinstance(x, Poly2) else Poly2.const(x)


def poly_sum(items: Iterable[Poly2]) -> Poly2:
    out = Poly2()
    for p in items:
        out = out + p
    return out
