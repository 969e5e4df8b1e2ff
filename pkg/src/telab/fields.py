"""Scalar fields on the plane with first and second partial derivatives.

The calibration construction needs (iota w), (kappa w), (lambda w) and a
few of their partials. Polynomial fields differentiate exactly; callable
fields fall back to fourth-order central differences.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .poly import Poly2

# derivative multi-indices
D0, D1, D2, D11, D12, D22 = (0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)


class Field:
    """Interface: ``f.d(alpha, y)`` evaluates the partial of order alpha."""

    def d(self, alpha: tuple[int, int], y) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def __call__(self, y) -> np.ndarray:
        return self.d(D0, y)

    def scale(self, y) -> np.ndarray:
        """Magnitude used to turn absolute residuals into relative ones."""
        return np.abs(self(y))


@dataclass(frozen=True)
class PolyField(Field):
    poly: Poly2
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def _partial(self, alpha) -> Poly2:
        if alpha not in self._cache:
            self._cache[alpha] = self.poly.deriv(0, alpha[0]).deriv(1, alpha[1])
        return self._cache[alpha]

    def d(self, alpha, y) -> np.ndarray:
        return self._partial(tuple(alpha))(y)

    def scale(self, y) -> np.ndarray:
        return self.poly.abs_bound(y)


def const_field(c) -> PolyField:
    return PolyField(Poly2.const(c))


def zero_field() -> PolyField:
    return PolyField(Poly2())


@dataclass(frozen=True)
class FuncField(Field):
    """A smooth callable with finite-difference partials (step ``h``)."""

    fn: Callable[[np.ndarray], np.ndarray]
    h: float = 1e-3

    def d(self, alpha, y) -> np.ndarray:
        y = np.asarray(y, float)
        a1, a2 = alpha
        if (a1, a2) == (0, 0):
            return np.asarray(self.fn(y), float)
        if a1 + a2 == 1:
            e = np.array([1.0, 0.0]) if a1 else np.array([0.0, 1.0])
            return _d1(lambda x: self.fn(x), y, e, self.h)
        if (a1, a2) in ((2, 0), (0, 2)):
            e = np.array([1.0, 0.0]) if a1 else np.array([0.0, 1.0])
            h = self.h
            f = self.fn
            return (-f(y + 2 * h * e) + 16 * f(y + h * e) - 30 * f(y)
                    + 16 * f(y - h * e) - f(y - 2 * h * e)) / (12 * h * h)
        if (a1, a2) == (1, 1):
            e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
            return _d1(lambda x: _d1(self.fn, x, e2, self.h), y, e1, self.h)
        raise ValueError(f"unsupported derivative order {alpha}")


def _d1(f, y, e, h):
    return (-f(y + 2 * h * e) + 8 * f(y + h * e) - 8 * f(y - h * e) + f(y - 2 * h * e)) / (12 * h)


def central_diff(f, y, axis: int, h: float = 1e-3) -> np.ndarray:
    """Fourth-order central difference of ``f`` along ``axis`` at points ``y``."""
    e = np.zeros(2)
    e[axis] = 1.0
    return _d1(f, np.asarray(y, float), e, h)
