"""F-masses of explicit competitor currents and the matching upper bounds.

Four families are supported: the straight segment, the Jin–Kohn diamond,
a general symmetric pair of polylines, and the cross-tie configuration.
All except the segment require a vertical segment with a- below a+.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .potentials import Potential, SegmentSpec, line_integral_sqrtW, segment_energy
from .quadrature import adaptive_gl

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


class DivergentMassError(ValueError):
    """The truncated integrals of a mass do not settle down."""

    def __init__(self, message: str, partial_sums: list[float]):
        super().__init__(f"{message}; partial sums: {partial_sums}")
        self.partial_sums = partial_sums


@dataclass(frozen=True)
class Polyline:
    vertices: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 2:
            raise ValueError("a polyline needs at least two vertices in the plane")
        if not np.all(np.isfinite(v)):
            raise ValueError("polyline vertices must be finite")
        if np.any(np.all(np.diff(v, axis=0) == 0, axis=1)):
            raise ValueError("consecutive polyline vertices must be distinct")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def edges(self) -> np.ndarray:
        return np.diff(self.vertices, axis=0)

    @property
    def closed(self) -> bool:
        return bool(np.all(self.vertices[0] == self.vertices[-1]))

    def refine(self) -> "Polyline":
        """Insert edge midpoints (a reparametrization of the same curve)."""
        v = self.vertices
        mids = 0.5 * (v[:-1] + v[1:])
        out = np.empty((2 * len(v) - 1, 2))
        out[0::2] = v
        out[1::2] = mids
        return Polyline(out)

    def params(self) -> np.ndarray:
        """Normalized cumulative arc length at each vertex."""
        L = np.concatenate([[0.0], np.cumsum(np.hypot(*self.edges.T))])
        return L / L[-1] if L[-1] > 0 else L


# -- current variants ------------------------------------------------------------

@dataclass(frozen=True)
class SegmentCurrent:
    S: SegmentSpec
    variant: str = field(default="segment", init=False)


@dataclass(frozen=True)
class JinKohn:
    """Diamond through a-, (a1 +- b1 L, mid), a+ where L is half the segment length."""

    S: SegmentSpec
    b1: float
    variant: str = field(default="jin_kohn", init=False)

    def __post_init__(self):
        if not self.b1 > 0:
            raise ValueError("JinKohn requires b1 > 0")
        _require_vertical(self.S)

    def corners(self) -> tuple[np.ndarray, np.ndarray]:
        mid = 0.5 * (self.S.am + self.S.ap)
        half = 0.5 * self.S.length
        off = np.array([self.b1 * half, 0.0])
        return mid + off, mid - off

    def as_sym_pair(self) -> "SymPair":
        bp, _ = self.corners()
        return SymPair(self.S, Polyline(np.array([self.S.am, bp, self.S.ap])))


@dataclass(frozen=True)
class SymPair:
    """Half the sum of a polyline from a- to a+ and its mirror image.

    The mirror is taken in the line x = a1. psi = d1/d2 is constant per edge;
    its jumps at interior vertices are the atoms of its derivative.
    """

    S: SegmentSpec
    gamma: Polyline
    variant: str = field(default="sym_pair", init=False)

    def __post_init__(self):
        _require_vertical(self.S)
        v = self.gamma.vertices
        if not (np.allclose(v[0], self.S.am, atol=1e-12) and np.allclose(v[-1], self.S.ap, atol=1e-12)):
            raise ValueError("gamma must run from a- to a+")
        if np.any(self.gamma.edges[:, 1] == 0):
            raise ValueError("gamma_2 derivative vanishes on an edge (horizontal edge)")

    @property
    def psi(self) -> np.ndarray:
        e = self.gamma.edges
        return e[:, 0] / e[:, 1]

    @property
    def psi_atoms(self) -> np.ndarray:
        return np.diff(self.psi)

    def mirror(self, p) -> np.ndarray:
        p = np.array(p, dtype=float)
        p[..., 0] = 2 * self.S.a_minus[0] - p[..., 0]
        return p


@dataclass(frozen=True)
class CrossTie:
    """Cross-tie current for a- = (0, -1), a+ = (0, 1); b1^2 + b2^2 = 1."""

    b1: float
    b2: float | None = None
    variant: str = field(default="cross_tie", init=False)

    def __post_init__(self):
        b1 = float(self.b1)
        b2 = float(np.sqrt(max(1.0 - b1 * b1, 0.0))) if self.b2 is None else float(self.b2)
        if not (0 < b1 <= 1 and 0 <= b2 < 1):
            raise ValueError("CrossTie requires 0 < b1 <= 1 and 0 <= b2 < 1")
        if abs(b1 * b1 + b2 * b2 - 1.0) > 1e-12:
            raise ValueError("CrossTie requires b1^2 + b2^2 = 1")
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "b2", b2)

    @property
    def S(self) -> SegmentSpec:
        return SegmentSpec((0.0, -1.0), (0.0, 1.0))


CurrentSpec = SegmentCurrent | JinKohn | SymPair | CrossTie


def _require_vertical(S: SegmentSpec):
    if not S.is_vertical or S.a_minus[1] >= S.a_plus[1]:
        raise ValueError("this current family needs a vertical segment with a- below a+")


# -- masses -----------------------------------------------------------------------

def _sym_pair_mass(C: SymPair, P: Potential, tol: float) -> float:
    v = C.gamma.vertices
    vm = C.mirror(v)
    e = C.gamma.edges
    total = 0.0
    for k in range(len(e)):
        factor = np.hypot(*e[k]) / abs(e[k, 1])
        total += factor * (line_integral_sqrtW(P, v[k], v[k + 1], tol)
                           + line_integral_sqrtW(P, vm[k], vm[k + 1], tol))
    total *= 0.25
    for j, jump in enumerate(C.psi_atoms, start=1):
        if jump != 0:
            total += 0.25 * abs(jump) * line_integral_sqrtW(P, vm[j], v[j], tol)
    return total


def _jin_kohn_mass(C: JinKohn, P: Potential, tol: float) -> float:
    bp, bm = C.corners()
    am, ap = C.S.am, C.S.ap
    diamond = sum(line_integral_sqrtW(P, p, q, tol) for p, q in ((am, bp), (bp, ap), (am, bm), (bm, ap)))
    return 0.25 * np.sqrt(C.b1**2 + 1) * diamond + 0.5 * C.b1 * line_integral_sqrtW(P, bm, bp, tol)


def _cap_integrand(P: Potential, sign: float, tol: float):
    """u -> (1/sin^2 u) * integral of sqrt(W) across the cap chord at height sign*cos(u)."""
    def f(u):
        out = np.empty_like(u)
        for i, ui in enumerate(u):
            s = np.sin(ui)
            h = sign * np.cos(ui)
            chord = adaptive_gl(lambda x: P.w(np.stack([x, np.full_like(x, h)], -1)), -s, s, tol).value
            out[i] = chord / (s * s)
        return out
    return f


def cross_tie_cap_integral(P: Potential, b2: float, tol: float = 1e-11, rtol: float = 1e-6,
                           max_level: int = 14) -> tuple[float, list[float]]:
    """Integral over D of sqrt(W)/(1 - y2^2)^(3/2), by truncation at u = 10^-j.

    In polar-like coordinates y2 = +-cos(u) the integral becomes
    sum over both caps of int_0^theta chord(u) / sin(u)^2 du, theta = arccos(b2).
    The singular end u -> 0 is approached through the truncation sequence;
    the result is accepted once the relative change drops below ``rtol``.
    """
    theta = float(np.arccos(b2))
    partial = []
    total = 0.0
    upper = theta
    for j in range(1, max_level + 1):
        lower = min(10.0 ** (-j), upper)
        piece = 0.0
        if lower < upper:
            for sign in (-1.0, 1.0):
                piece += adaptive_gl(_cap_integrand(P, sign, tol), lower, upper, tol).value
        total += piece
        partial.append(total)
        upper = lower
        if j >= 2 and abs(piece) <= rtol * max(abs(total), 1e-300):
            return total, partial
        # increments that fail to shrink signal a non-integrable end
        if j >= 4 and all(abs(partial[-i] - partial[-i - 1]) > 0.5 * abs(partial[-i - 1] - partial[-i - 2])
                          for i in (1, 2)):
            raise DivergentMassError("cross-tie cap integral diverges at a-/a+", partial)
    raise DivergentMassError("cross-tie cap integral did not converge", partial)


def _cross_tie_mass(C: CrossTie, P: Potential, tol: float, rtol: float = 1e-6) -> float:
    b1, b2 = C.b1, C.b2
    V = (line_integral_sqrtW(P, (b1, -b2), (b1, b2), tol)
         + line_integral_sqrtW(P, (-b1, -b2), (-b1, b2), tol))
    H = (line_integral_sqrtW(P, (-b1, -b2), (b1, -b2), tol)
         + line_integral_sqrtW(P, (-b1, b2), (b1, b2), tol)) if b2 > 0 else 0.0
    Dint, _ = cross_tie_cap_integral(P, b2, tol, rtol)
    return 0.25 * V + b2 / (4 * b1) * H + 0.25 * Dint


def mass(C: CurrentSpec, P: Potential, tol: float = 1e-11) -> float:
    """F-mass of the current C for the potential P."""
    if isinstance(C, SegmentCurrent):
        return 0.5 * segment_energy(P, C.S, tol)
    if isinstance(C, JinKohn):
        return _jin_kohn_mass(C, P, tol)
    if isinstance(C, SymPair):
        return _sym_pair_mass(C, P, tol)
    if isinstance(C, CrossTie):
        return _cross_tie_mass(C, P, tol)
    raise TypeError(f"unknown current {C!r}")


def upper_bound_energy(C: CurrentSpec, P: Potential, tol: float = 1e-11) -> float:
    """Limiting energy of the construction that goes with C."""
    if isinstance(C, SegmentCurrent):
        return segment_energy(P, C.S, tol)
    if isinstance(C, (JinKohn, CrossTie)):
        return 2.0 * mass(C, P, tol)
    raise ValueError("no construction upper bound defined for a generic symmetric pair")


# -- one-parameter scans ----------------------------------------------------------------

@dataclass(frozen=True)
class ScalarOptResult:
    param: float
    mass: float
    flags: tuple[str, ...] = ()
    scan: tuple[tuple[float, float], ...] = ()


def optimize_scalar_param(variant: str, P: Potential, bracket=(1e-3, 1.0), tol: float = 1e-6,
                          S: SegmentSpec | None = None, n_scan: int = 16,
                          mass_tol: float = 1e-11) -> ScalarOptResult:
    """Minimize the mass of a one-parameter family over ``bracket``.

    ``variant`` is ``"jin_kohn"`` (parameter b1) or ``"cross_tie"``
    (parameter b1, b2 = sqrt(1 - b1^2)). A 16-point scan is followed by a
    golden-section search around the best scan point; a scan with more than
    one local minimum returns the best scan point flagged ``multimodal``.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not 0 < lo <= hi <= 1:
        raise ValueError("bracket must satisfy 0 < lo <= hi <= 1")
    S = S or SegmentSpec((0.0, -1.0), (0.0, 1.0))

    def f(b):
        if variant == "jin_kohn":
            return mass(JinKohn(S, b), P, mass_tol)
        if variant == "cross_tie":
            return mass(CrossTie(b), P, mass_tol)
        raise ValueError(f"unknown family {variant!r}")

    if lo == hi:
        return ScalarOptResult(lo, f(lo))
    xs = np.linspace(lo, hi, n_scan)
    fs = np.array([f(x) for x in xs])
    scan = tuple(zip(xs.tolist(), fs.tolist()))
    # local minima of the sampled sequence (plateaus count once)
    is_min = np.r_[fs[0] <= fs[1], (fs[1:-1] <= fs[:-2]) & (fs[1:-1] <= fs[2:]), fs[-1] <= fs[-2]]
    n_min = int(np.sum(is_min & np.r_[True, fs[1:] != fs[:-1]]))
    i = int(np.argmin(fs))
    if n_min > 1:
        return ScalarOptResult(float(xs[i]), float(fs[i]), ("multimodal",), scan)
    a = xs[max(i - 1, 0)]
    b = xs[min(i + 1, n_scan - 1)]
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    cands = [(fc, c), (fd, d), (f(a), a), (f(b), b), (float(fs[i]), float(xs[i]))]
    best_f, best_x = min(cands)
    return ScalarOptResult(float(best_x), float(best_f), (), scan)


# -- descriptors --------------------------------------------------------------------

def current_from_descriptor(desc: Mapping[str, Any], S: SegmentSpec) -> CurrentSpec:
    kind = desc.get("variant")
    if kind == "segment":
        return SegmentCurrent(S)
    if kind == "jin_kohn":
        return JinKohn(S, float(desc["b1"]))
    if kind == "sym_pair":
        return SymPair(S, Polyline(np.asarray(desc["vertices"], float)))
    if kind == "cross_tie":
        if S.a_minus != (0.0, -1.0) or S.a_plus != (0.0, 1.0):
            raise ValueError("cross_tie is defined for a- = (0, -1), a+ = (0, 1)")
        return CrossTie(float(desc["b1"]), desc.get("b2"))
    raise ValueError(f"unknown current variant {kind!r}")
