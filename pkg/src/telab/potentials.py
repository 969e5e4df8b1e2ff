"""Double-well type potentials W on the plane and line-segment energies."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .quadrature import adaptive_gl

KINDS = ("aviles_giga", "power_annulus", "beta_degenerate", "constant", "user_grid")


class PotentialDomainError(ValueError):
    """Raised when a grid-sampled potential is evaluated outside its samples."""


def _sq_norm(y: np.ndarray) -> np.ndarray:
    return y[..., 0] ** 2 + y[..., 1] ** 2


@dataclass(frozen=True)
class Potential:
    """A nonnegative potential W with growth metadata.

    ``c1`` and ``c2`` are constants for the growth window
    ``c1 |y|^(2 p_bar) - 1 <= W(y) <= c2 (|y|^(2 p_bar) + 1)``.
    ``scale`` multiplies W (so sqrt(W) picks up sqrt(scale)).
    """

    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)
    p_bar: float = 2.0
    c1: float = 0.5
    c2: float = 2.0
    scale: float = 1.0
    zero_set_hint: str | None = None
    _interp: Any = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.kind == "beta_degenerate":
            beta = float(self.params["beta"])
            if not 0 < beta < 1:
                raise ValueError("beta_degenerate requires beta in (0, 1)")
        if self.kind == "power_annulus":
            n, m = int(self.params["n"]), int(self.params["m"])
            if n < 0 or m < 1:
                raise ValueError("power_annulus requires n >= 0 and m >= 1")
        if self.kind == "constant" and float(self.params["c"]) < 0:
            raise ValueError("constant potential must be nonnegative")
        if self.kind == "user_grid":
            xs = np.asarray(self.params["xs"], float)
            ys = np.asarray(self.params["ys"], float)
            vals = np.asarray(self.params["values"], float)
            if vals.shape != (xs.size, ys.size):
                raise ValueError("user_grid values must have shape (len(xs), len(ys))")
            if np.any(vals < 0):
                raise ValueError("user_grid values must be nonnegative")
            interp = RegularGridInterpolator((xs, ys), vals, method="linear", bounds_error=True)
            object.__setattr__(self, "_interp", interp)

    # -- evaluation -----------------------------------------------------
    def kinks_on_segment(self, p0, p1) -> list[float]:
        """Parameters t in (0, 1) where sqrt(W) may fail to be smooth on p0 + t (p1 - p0).

        Radial kinds are nonsmooth on the unit circle; bilinear grids on
        their grid lines.
        """
        p0 = np.asarray(p0, float)
        d = np.asarray(p1, float) - p0
        ts: list[float] = []
        if self.kind in ("aviles_giga", "power_annulus", "beta_degenerate"):
            a, b, c = d @ d, 2 * p0 @ d, p0 @ p0 - 1.0
            disc = b * b - 4 * a * c
            if disc > 0:
                r = np.sqrt(disc)
                ts = [(-b - r) / (2 * a), (-b + r) / (2 * a)]
        elif self.kind == "user_grid":
            for axis, key in ((0, "xs"), (1, "ys")):
                if d[axis] != 0:
                    ts += list((np.asarray(self.params[key]) - p0[axis]) / d[axis])
        return sorted({float(t) for t in ts if 1e-14 < t < 1 - 1e-14})

    def W(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        r2 = _sq_norm(y)
        k = self.kind
        if k == "aviles_giga":
            out = (1.0 - r2) ** 2
        elif k == "power_annulus":
            n, m = int(self.params["n"]), int(self.params["m"])
            out = r2 ** (2 * n) * (1.0 - r2**m) ** 2
        elif k == "beta_degenerate":
            out = np.abs(1.0 - r2) ** (2.0 * float(self.params["beta"]))
        elif k == "constant":
            out = np.full(r2.shape, float(self.params["c"]))
        else:
            pts = y.reshape(-1, 2)
            try:
                out = self._interp(pts).reshape(r2.shape)
            except ValueError as exc:
                raise PotentialDomainError(
                    "user_grid potential evaluated outside its bounding box"
                ) from exc
        return self.scale * out

    def w(self, y) -> np.ndarray:
        """sqrt(W), nonnegative."""
        y = np.asarray(y, dtype=float)
        if self.kind == "user_grid":
            return np.sqrt(self.W(y))
        return np.abs(self.signed_w(y))

    def signed_w(self, y) -> np.ndarray:
        """A root w with w**2 = W that is smooth where one exists.

        For the polynomial families this is the natural polynomial root,
        which changes sign across the unit circle.
        """
        y = np.asarray(y, dtype=float)
        r2 = _sq_norm(y)
        s = np.sqrt(self.scale)
        k = self.kind
        if k == "aviles_giga":
            return s * (1.0 - r2)
        if k == "power_annulus":
            n, m = int(self.params["n"]), int(self.params["m"])
            return s * r2**n * (1.0 - r2**m)
        if k == "beta_degenerate":
            beta = float(self.params["beta"])
            return s * np.sign(1.0 - r2) * np.abs(1.0 - r2) ** beta
        if k == "constant":
            return np.full(r2.shape, s * np.sqrt(float(self.params["c"])))
        return np.sqrt(self.W(y))

    # -- metadata -------------------------------------------------------
    def metadata(self) -> dict:
        meta = {"kind": self.kind, "params": _jsonable(self.params), "p_bar": self.p_bar,
                "c1": self.c1, "c2": self.c2, "scale": self.scale}
        if self.kind == "beta_degenerate":
            meta["extension"] = "|1-|y|^2|^(2 beta) outside the unit disk"
        if self.zero_set_hint:
            meta["zero_set_hint"] = self.zero_set_hint
        return meta

    def growth_violation(self, radii=None, n_angles: int = 64) -> float:
        """Largest violation of the growth window on sample rings (<= 0 is fine)."""
        if radii is None:
            radii = np.geomspace(1e-3, 1e3, 61)
        th = np.linspace(0, 2 * np.pi, n_angles, endpoint=False)
        r = np.asarray(radii, float)[:, None]
        y = np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)
        Wv = self.W(y)
        rp = r ** (2 * self.p_bar) * np.ones_like(Wv)
        low = self.c1 * rp - 1 - Wv
        up = Wv - self.c2 * (rp + 1)
        # relative to the size of the terms, since W can be huge on outer rings
        scale = np.maximum(1.0, rp)
        return float(np.max(np.maximum(low, up) / scale))


def _jsonable(params):
    out = {}
    for k, v in params.items():
        out[k] = np.asarray(v).tolist() if isinstance(v, np.ndarray) else v
    return out


# -- constructors -----------------------------------------------------------

def aviles_giga() -> Potential:
    return Potential("aviles_giga", {}, p_bar=2.0, c1=0.5, c2=2.0, zero_set_hint="unit circle")


def power_annulus(n: int, m: int) -> Potential:
    """W = |y|^(4n) (1 - |y|^(2m))^2."""
    c1 = min(0.25, 2.0 ** (-(2 * n + 2 * m) / m))
    return Potential("power_annulus", {"n": int(n), "m": int(m)}, p_bar=2.0 * (n + m),
                     c1=c1, c2=2.0, zero_set_hint="origin and unit circle" if n else "unit circle")


def beta_degenerate(beta: float) -> Potential:
    """W = |1 - |y|^2|^(2 beta), beta in (0, 1)."""
    return Potential("beta_degenerate", {"beta": float(beta)}, p_bar=2.0 * beta,
                     c1=2.0 ** (-2 * beta), c2=2.0 ** (2 * beta), zero_set_hint="unit circle")


def constant(c: float) -> Potential:
    return Potential("constant", {"c": float(c)}, p_bar=0.0, c1=float(c), c2=max(float(c), 1e-300))


def user_grid(xs, ys, values, p_bar: float = 0.0, c1: float = 0.0, c2: float = 1.0) -> Potential:
    """Bilinear interpolation of samples ``values[i, j] = W(xs[i], ys[j])``."""
    return Potential("user_grid", {"xs": np.asarray(xs, float), "ys": np.asarray(ys, float),
                                   "values": np.asarray(values, float)},
                     p_bar=p_bar, c1=c1, c2=c2)


def from_descriptor(desc: Mapping[str, Any]) -> Potential:
    """Build a potential from ``{"kind": ..., "params": {...}, "p_bar": r}``."""
    kind = desc["kind"]
    params = dict(desc.get("params", {}))
    if kind == "aviles_giga":
        pot = aviles_giga()
    elif kind == "power_annulus":
        pot = power_annulus(params["n"], params["m"])
    elif kind == "beta_degenerate":
        pot = beta_degenerate(params["beta"])
    elif kind == "constant":
        pot = constant(params["c"])
    elif kind == "user_grid":
        pot = user_grid(params["xs"], params["ys"], params["values"],
                        p_bar=float(desc.get("p_bar", 0.0)),
                        c1=float(params.get("c1", 0.0)), c2=float(params.get("c2", 1.0)))
    else:
        raise ValueError(f"unknown potential kind {kind!r}")
    if "p_bar" in desc and float(desc["p_bar"]) != pot.p_bar:
        pot = Potential(pot.kind, pot.params, p_bar=float(desc["p_bar"]), c1=pot.c1, c2=pot.c2,
                        zero_set_hint=pot.zero_set_hint)
    return pot


# -- segments ---------------------------------------------------------------

@dataclass(frozen=True)
class SegmentSpec:
    a_minus: tuple[float, float]
    a_plus: tuple[float, float]

    def __post_init__(self):
        am = tuple(float(v) for v in self.a_minus)
        ap = tuple(float(v) for v in self.a_plus)
        if len(am) != 2 or len(ap) != 2 or not all(np.isfinite(am + ap)):
            raise ValueError("segment endpoints must be finite points in the plane")
        if am == ap:
            raise ValueError("a_minus and a_plus must differ")
        object.__setattr__(self, "a_minus", am)
        object.__setattr__(self, "a_plus", ap)

    @property
    def am(self) -> np.ndarray:
        return np.array(self.a_minus)

    @property
    def ap(self) -> np.ndarray:
        return np.array(self.a_plus)

    @property
    def length(self) -> float:
        return float(np.hypot(*(self.ap - self.am)))

    @property
    def normal(self) -> np.ndarray:
        """(a- - a+)^perp / |a- - a+| with (x, y)^perp = (-y, x)."""
        d = self.am - self.ap
        return np.array([-d[1], d[0]]) / np.hypot(*d)

    @property
    def is_vertical(self) -> bool:
        return self.a_minus[0] == self.a_plus[0]


def line_integral_sqrtW(P: Potential, p0, p1, tol: float = 1e-12) -> float:
    """Integral of sqrt(W) over the straight segment [p0, p1] (arc length)."""
    p0 = np.asarray(p0, float)
    d = np.asarray(p1, float) - p0
    L = float(np.hypot(*d))
    if L == 0:
        return 0.0
    if P.kind == "constant":
        return float(P.w(p0)) * L

    def integrand(t):
        return P.w(p0 + t[:, None] * d)

    cuts = [0.0, *P.kinks_on_segment(p0, p0 + d), 1.0]
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        total += adaptive_gl(integrand, lo, hi, tol * (hi - lo) / L).value
    return total * L


def segment_energy(P: Potential, S: SegmentSpec, tol: float = 1e-12) -> float:
    """Line integral of sqrt(W) over [a-, a+]."""
    return line_integral_sqrtW(P, S.a_minus, S.a_plus, tol)
