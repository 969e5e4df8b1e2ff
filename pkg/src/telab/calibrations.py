"""Calibration data: the polynomial family, the PDE criterion, and h / phi.

The PDE criterion asks for fields iota, kappa, lambda with values in
[-1, 1], admissible pointwise, such that

    d11 (kappa w) - d22 (lambda w) - 2 d12 (iota w) = 0,

where w is a root of W. The functions here work with the products
``iota_w``, ``kappa_w``, ``lambda_w`` as primitive smooth fields.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import comb

import numpy as np

from .fields import D0, D1, D2, D11, D12, D22, Field, PolyField, central_diff, const_field, zero_field
from .poly import Poly2, poly_sum
from .potentials import Potential, SegmentSpec
from .quadrature import adaptive_gl, composite_gl
from .theta import admissibility_margin

W_FLOOR = 1e-8


class PdeCriterionError(ValueError):
    """The supplied fields do not satisfy the PDE criterion."""


# -- polynomial family ------------------------------------------------------------

def coeff_ratio(n: int, k: int) -> Fraction:
    """c_k / c_{k-1} for the polynomial family of order n (1 <= k <= n)."""
    return Fraction((2 * n - 2 * k + 2) * (2 * n - 2 * k + 1) * (4 * k + 1),
                    2 * k * (2 * k - 1) * (4 * (n - k) + 1))


def coeffs_forward(n: int) -> list[Fraction]:
    c = [Fraction(1, 4 * n + 1)]
    for k in range(1, n + 1):
        c.append(c[-1] * coeff_ratio(n, k))
    return c


def coeffs_backward(n: int) -> list[Fraction]:
    """Same coefficients, recursed downwards from c_{n-1} = (2n^2 - n)/(4n + 1)."""
    if n == 0:
        return [Fraction(1)]
    c = [Fraction(0)] * (n + 1)
    c[n] = Fraction(1)
    c[n - 1] = Fraction(2 * n * n - n, 4 * n + 1)
    for k in range(n - 1, 0, -1):
        c[k - 1] = c[k] / coeff_ratio(n, k)
    return c


def b_coeffs(c: list[Fraction]) -> list[Fraction]:
    """b_k = c_k / ((2k + 1) binom(n, k)) for k = 0 .. n-1."""
    n = len(c) - 1
    return [c[k] / ((2 * k + 1) * comb(n, k)) for k in range(n)]


@dataclass(frozen=True)
class PolyCalibration:
    """The order-n polynomial P together with its exact coefficient list."""

    n: int
    coeffs: tuple[Fraction, ...]
    P: Poly2
    P11: Poly2
    P22: Poly2

    @property
    def b(self) -> list[Fraction]:
        return b_coeffs(list(self.coeffs))

    def kernel(self) -> Poly2:
        """sum_k c_k y1^(2n-2k) y2^(2k); P22 is (1 - |y|^2) times this."""
        n = self.n
        return poly_sum(Poly2.monomial(2 * n - 2 * k, 2 * k, c) for k, c in enumerate(self.coeffs))


def _assemble_P(n: int, c: list[Fraction]) -> Poly2:
    y1sq = Poly2.monomial(2, 0)
    terms = []
    for k, ck in enumerate(c):
        base = Poly2.monomial(2 * n - 2 * k, 0)
        terms.append(ck * Fraction(1, (2 * k + 2) * (2 * k + 1))
                     * (1 - y1sq) * base * Poly2.monomial(0, 2 * k + 2))
        terms.append(-ck * Fraction(1, (2 * k + 4) * (2 * k + 3)) * base * Poly2.monomial(0, 2 * k + 4))
    terms.append(Poly2.monomial(2 * n + 2, 0, Fraction(1, (2 * n + 2) * (2 * n + 1))))
    terms.append(Poly2.monomial(2 * n + 4, 0, -Fraction(1, (2 * n + 4) * (2 * n + 3))))
    return poly_sum(terms)


def poly_coeffs(n: int) -> PolyCalibration:
    """Exact coefficients and polynomial P for the order-n family.

    ``P`` is symmetric in (y1, y2) and satisfies
    ``|d11 P|, |d22 P| <= |y|^(2n) |1 - |y|^2|`` with equality for d22 P on
    the axis y1 = 0.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        r2 = Poly2.radial_sq()
        P = Fraction(1, 2) * r2 - Fraction(1, 12) * r2 * r2 - Fraction(1, 3) * Poly2.monomial(2, 2)
        c = [Fraction(1)]
    else:
        c = coeffs_forward(n)
        if c[n] != 1:
            raise AssertionError(f"coefficient recursion did not close: c_n = {c[n]}")
        if c[n - 1] != Fraction(2 * n * n - n, 4 * n + 1):
            raise AssertionError("coefficient recursion disagrees with the closed form of c_(n-1)")
        P = _assemble_P(n, c)
    if not P.is_symmetric():
        raise AssertionError("assembled polynomial is not symmetric")
    return PolyCalibration(n=n, coeffs=tuple(c), P=P, P11=P.deriv(0, 2), P22=P.deriv(1, 2))


def poly_second_partials(PC: PolyCalibration, y) -> tuple[np.ndarray, np.ndarray]:
    return PC.P11(y), PC.P22(y)


def verify_poly_bounds(PC: PolyCalibration, grid_radius: float = 3.0, grid_n: int = 256,
                       rtol: float = 1e-10, max_report: int = 20) -> dict:
    """Check both second-derivative bounds on a square grid.

    A point is a violation when ``|d P| - bound > rtol * max(1, scale)``, where
    ``scale = |y|^(2n) (1 + |y|^2)`` is the magnitude of the terms involved
    (absolute tolerances are meaningless for degree-28 polynomials at radius 3).
    """
    if grid_n < 32:
        raise ValueError("grid_n must be at least 32")
    n = PC.n
    g = np.linspace(-grid_radius, grid_radius, grid_n)
    Y = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1)
    r2 = Y[..., 0] ** 2 + Y[..., 1] ** 2
    bound = r2**n * np.abs(1.0 - r2)
    scale = np.maximum(1.0, r2**n * (1.0 + r2))
    violations = []
    slack_min = np.inf
    for name, part in (("d11", PC.P11), ("d22", PC.P22)):
        lhs = np.abs(part(Y))
        slack = bound - lhs
        rel = slack / scale
        slack_min = min(slack_min, float(rel.min()))
        for idx in np.argwhere(rel < -rtol)[:max_report]:
            i, j = idx
            violations.append({"which": name, "y": Y[i, j].tolist(),
                               "lhs": float(lhs[i, j]), "rhs": float(bound[i, j])})
    # equality on the axis y1 = 0
    ax = np.stack([np.zeros_like(g), g], axis=-1)
    r2a = g**2
    axis_gap = np.abs(np.abs(PC.P22(ax)) - r2a**n * np.abs(1 - r2a)) / np.maximum(1.0, r2a**n * (1 + r2a))
    return {"n": n, "grid_radius": grid_radius, "grid_n": grid_n, "rtol": rtol,
            "violations": violations, "slack_min": slack_min,
            "axis_slack_max": float(axis_gap.max()), "max_residual": 0.0}


# -- PDE-criterion data ---------------------------------------------------------

@dataclass(frozen=True)
class PdeInputs:
    """The smooth products (iota w), (kappa w), (lambda w) and the root w."""

    w: Field
    iota_w: Field
    kappa_w: Field
    lambda_w: Field
    label: str = "custom"


def wave_inputs() -> PdeInputs:
    """w = 1 - |y|^2 with kappa = lambda = 1, iota = 0 (w solves the wave equation)."""
    w = PolyField(1 - Poly2.radial_sq())
    return PdeInputs(w=w, iota_w=zero_field(), kappa_w=w, lambda_w=w, label="wave")


def constant_inputs(c: float) -> PdeInputs:
    w = const_field(Fraction(float(np.sqrt(c))))
    return PdeInputs(w=w, iota_w=zero_field(), kappa_w=w, lambda_w=w, label="constant")


def polynomial_inputs(n: int, m: int = 1) -> PdeInputs:
    """Fields for W = |y|^(4n) (1 - |y|^(2m))^2 built from the polynomial family.

    w = sum_{j=n}^{n+m-1} |y|^(2j) (1 - |y|^2) telescopes to |y|^(2n)(1 - |y|^(2m));
    kappa w and lambda w are the matching sums of second partials.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    r2 = Poly2.radial_sq()
    w = (r2**n) * (1 - r2**m)
    pcs = [poly_coeffs(j) for j in range(n, n + m)]
    kw = poly_sum(pc.P22 for pc in pcs)
    lw = poly_sum(pc.P11 for pc in pcs)
    return PdeInputs(w=PolyField(w), iota_w=zero_field(), kappa_w=PolyField(kw),
                     lambda_w=PolyField(lw), label=f"polynomial(n={n}, m={m})")


def zero_inputs(P: Potential) -> PdeInputs:
    """kappa = lambda = iota = 0; yields the trivial bound 0."""
    from .fields import FuncField

    return PdeInputs(w=FuncField(P.w), iota_w=zero_field(), kappa_w=zero_field(),
                     lambda_w=zero_field(), label="zero")


def inputs_for(P: Potential) -> PdeInputs:
    """Known calibration inputs for the built-in potential families."""
    if P.kind == "aviles_giga":
        return wave_inputs()
    if P.kind == "power_annulus":
        return polynomial_inputs(int(P.params["n"]), int(P.params["m"]))
    if P.kind == "constant":
        return constant_inputs(float(P.params["c"]) * P.scale)
    raise ValueError(f"no calibration inputs known for potential kind {P.kind!r}")


@dataclass(frozen=True)
class PdeCriterionData:
    """Validated PDE-criterion fields together with the constructed h and phi."""

    inputs: PdeInputs
    a1: float
    b: float
    box: tuple[float, float, float, float]
    max_residual: float
    residual_at: tuple[float, float]
    fd_error: float
    band_points: int
    admissibility_margin_min: float
    n_panels: int = 1
    w_floor: float = W_FLOOR
    meta: dict = field(default_factory=dict, compare=False)

    # -- quadrature helpers --------------------------------------------------
    def _int_s(self, fn, y1, n_nodes=16):
        """Integral over s from a1 to y1 of fn(s) (fn takes an array of s)."""
        return composite_gl(fn, self.a1, y1, n_nodes, self.n_panels)

    def _int_t(self, fn, y2, n_nodes=16):
        return composite_gl(fn, self.b, y2, n_nodes, self.n_panels)

    @staticmethod
    def _pts(s, t):
        s, t = np.broadcast_arrays(s, t)
        return np.stack([s, t], axis=-1)

    # -- h and its partials --------------------------------------------------
    def h(self, y) -> np.ndarray:
        y = np.asarray(y, float)
        y1, y2 = y[..., 0], y[..., 1]
        I = self.inputs
        first = self._int_s(lambda s: (y1[..., None] - s) * I.lambda_w(self._pts(s, y2[..., None])), y1)
        second = self._int_t(
            lambda t: 2 * I.iota_w.d(D0, self._pts(self.a1, t))
            - (y2[..., None] - t) * I.kappa_w.d(D1, self._pts(self.a1, t)), y2)
        return -first + (y1 - self.a1) * second

    def h2(self, y) -> np.ndarray:
        y = np.asarray(y, float)
        y1, y2 = y[..., 0], y[..., 1]
        I = self.inputs
        first = self._int_s(lambda s: (y1[..., None] - s) * I.lambda_w.d(D2, self._pts(s, y2[..., None])), y1)
        k1 = self._int_t(lambda t: I.kappa_w.d(D1, self._pts(self.a1, t)), y2)
        return -first + (y1 - self.a1) * (2 * I.iota_w(self._pts(self.a1, y2)) - k1)

    def h22(self, y) -> np.ndarray:
        y = np.asarray(y, float)
        y1, y2 = y[..., 0], y[..., 1]
        I = self.inputs
        first = self._int_s(lambda s: (y1[..., None] - s) * I.lambda_w.d(D22, self._pts(s, y2[..., None])), y1)
        at = self._pts(self.a1, y2)
        return -first + (y1 - self.a1) * (2 * I.iota_w.d(D2, at) - I.kappa_w.d(D1, at))

    def h12(self, y) -> np.ndarray:
        y = np.asarray(y, float)
        y1, y2 = y[..., 0], y[..., 1]
        I = self.inputs
        first = self._int_s(lambda s: I.lambda_w.d(D2, self._pts(s, y2[..., None])), y1)
        k1 = self._int_t(lambda t: I.kappa_w.d(D1, self._pts(self.a1, t)), y2)
        return -first + 2 * I.iota_w(self._pts(self.a1, y2)) - k1

    def h11(self, y) -> np.ndarray:
        return -self.inputs.lambda_w(y)

    def phi(self, y) -> np.ndarray:
        y = np.asarray(y, float)
        y1, y2 = y[..., 0], y[..., 1]
        I = self.inputs
        kint = self._int_t(lambda t: I.kappa_w(self._pts(y1[..., None], t)), y2)
        bb = self.b
        tail = self._int_s(lambda s: (y1[..., None] - s) * I.lambda_w.d(D2, self._pts(s, bb))
                           + 2 * I.iota_w(self._pts(s, bb)), y1)
        return self.h2(y) + kint - 2 * y1 * I.iota_w(self._pts(self.a1, bb)) + tail

    # -- normalized coefficient fields -----------------------------------------
    def _ratio(self, f: Field, y) -> np.ndarray:
        w = self.inputs.w(y)
        sign = np.where(w < 0, -1.0, 1.0)
        return np.clip(sign * f(y) / np.maximum(np.abs(w), self.w_floor), -1.0, 1.0)

    def kappa(self, y):
        return self._ratio(self.inputs.kappa_w, y)

    def lam(self, y):
        """lambda normalized to the nonnegative root |w|, continuous across the band."""
        return self._ratio(self.inputs.lambda_w, y)

    def iota(self, y):
        return self._ratio(self.inputs.iota_w, y)

    def report(self) -> dict:
        return {"label": self.inputs.label, "a1": self.a1, "b": self.b, "box": list(self.box),
                "max_residual": self.max_residual, "residual_at": list(self.residual_at),
                "fd_error": self.fd_error, "band_points": self.band_points,
                "admissibility_margin_min": self.admissibility_margin_min,
                "w_floor": self.w_floor, **self.meta}


def pde_residual(inputs: PdeInputs, y) -> tuple[np.ndarray, np.ndarray]:
    """Residual of the PDE criterion and the magnitude of its terms."""
    a = inputs.kappa_w.d(D11, y)
    b = inputs.lambda_w.d(D22, y)
    c = inputs.iota_w.d(D12, y)
    return a - b - 2 * c, np.abs(a) + np.abs(b) + 2 * np.abs(c)


def default_box(S: SegmentSpec) -> tuple[float, float, float, float]:
    mid = 0.5 * (S.am + S.ap)
    half = 0.75 * S.length + 0.5
    return (mid[0] - half, mid[0] + half, mid[1] - half, mid[1] + half)


def build_h_phi(
    inputs: PdeInputs,
    S: SegmentSpec,
    b: float | None = None,
    box: tuple[float, float, float, float] | None = None,
    potential: Potential | None = None,
    residual_tol: float = 1e-6,
    fd_tol: float = 1e-5,
    fd_step: float = 1e-3,
    grid_n: int = 41,
    w_floor: float = W_FLOOR,
) -> PdeCriterionData:
    """Validate PDE-criterion inputs and construct h and phi.

    Checks, on a grid over ``box``: the PDE residual (relative to the size of
    its terms), pointwise admissibility where |w| > w_floor, consistency of w
    with the potential when one is given, and the two identities
    d phi/d y1 = 2 iota w and d phi/d y2 = kappa w + d22 h by central
    differences. The base height ``b`` defaults to a2-.
    """
    a1 = float(S.a_minus[0])
    b = float(S.a_minus[1]) if b is None else float(b)
    box = tuple(float(v) for v in (default_box(S) if box is None else box))
    gx = np.linspace(box[0], box[1], grid_n)
    gy = np.linspace(box[2], box[3], grid_n)
    Y = np.stack(np.meshgrid(gx, gy, indexing="ij"), axis=-1)

    res, mag = pde_residual(inputs, Y)
    rel = np.abs(res) / np.maximum(1.0, mag)
    i, j = np.unravel_index(int(np.argmax(rel)), rel.shape)
    max_res = float(rel[i, j])
    if max_res > residual_tol:
        raise PdeCriterionError(
            f"PDE criterion violated: residual {max_res:.3e} at y = {Y[i, j].tolist()}")

    w = inputs.w(Y)
    if potential is not None:
        gap = np.abs(np.abs(w) - potential.w(Y)) / np.maximum(1.0, np.abs(w))
        if gap.max() > 1e-8:
            k = np.unravel_index(int(np.argmax(gap)), gap.shape)
            raise PdeCriterionError(f"w**2 does not match W at y = {Y[k].tolist()}")
    outside = np.abs(w) > w_floor
    sign = np.where(w < 0, -1.0, 1.0)
    safe = np.where(outside, np.abs(w), 1.0)
    kap = sign * inputs.kappa_w(Y) / safe
    lam = sign * inputs.lambda_w(Y) / safe
    iot = sign * inputs.iota_w(Y) / safe
    margin = admissibility_margin(iot, kap, lam)
    box_ok = (np.abs(kap) <= 1 + 1e-9) & (np.abs(lam) <= 1 + 1e-9) & (np.abs(iot) <= 1 + 1e-9)
    bad = outside & ((margin < -1e-9) | ~box_ok)
    if bad.any():
        k = tuple(np.argwhere(bad)[0])
        raise PdeCriterionError(
            f"admissibility violated at y = {Y[k].tolist()}: iota={iot[k]:.6g}, "
            f"kappa={kap[k]:.6g}, lambda={lam[k]:.6g}")
    margin_min = float(margin[outside].min()) if outside.any() else float("nan")

    # pick enough composite panels that h22 / phi are stable on the grid
    probe = Y[::4, ::4].reshape(-1, 2)
    n_panels = 1
    while True:
        D = PdeCriterionData(inputs, a1, b, box, max_res, tuple(Y[i, j].tolist()), 0.0,
                             int((~outside).sum()), margin_min, n_panels, w_floor)
        D2x = PdeCriterionData(inputs, a1, b, box, max_res, tuple(Y[i, j].tolist()), 0.0,
                               int((~outside).sum()), margin_min, 2 * n_panels, w_floor)
        diff = max(np.max(np.abs(D.phi(probe) - D2x.phi(probe)) / np.maximum(1, np.abs(D2x.phi(probe)))),
                   np.max(np.abs(D.h22(probe) - D2x.h22(probe)) / np.maximum(1, np.abs(D2x.h22(probe)))))
        if diff < 1e-12 or n_panels >= 64:
            break
        n_panels *= 2

    # finite-difference validation of the phi identities on a coarse sub-grid
    pts = Y[2:-2:5, 2:-2:5].reshape(-1, 2)
    dphi1 = central_diff(D.phi, pts, 0, fd_step)
    dphi2 = central_diff(D.phi, pts, 1, fd_step)
    e1 = np.abs(dphi1 - 2 * inputs.iota_w(pts)) / np.maximum(1.0, np.abs(dphi1))
    target2 = inputs.kappa_w(pts) + D.h22(pts)
    e2 = np.abs(dphi2 - target2) / np.maximum(1.0, np.abs(dphi2))
    fd_err = float(max(e1.max(), e2.max()))
    if fd_err > fd_tol:
        k = int(np.argmax(np.maximum(e1, e2)))
        raise PdeCriterionError(
            f"PDE criterion violated: phi identities fail by {fd_err:.3e} at y = {pts[k].tolist()}")
    return PdeCriterionData(inputs, a1, b, box, max_res, tuple(Y[i, j].tolist()), fd_err,
                            int((~outside).sum()), margin_min, n_panels, w_floor,
                            meta={"fd_step": fd_step, "residual_tol": residual_tol,
                                  "grid_n": grid_n})


def pde_lower_bound(D: PdeCriterionData, S: SegmentSpec, tol: float = 1e-12) -> float:
    """Integral of (kappa w)(a1, t) over t in [a2-, a2+]."""
    if not S.is_vertical or S.a_minus[1] >= S.a_plus[1]:
        raise ValueError("pde_lower_bound needs a vertical segment with a- below a+ "
                         "(normal (1, 0)); rotate the problem so that this holds")
    if S.a_minus[0] != D.a1:
        raise ValueError("segment does not match the data's a1")
    kw = D.inputs.kappa_w
    a1 = D.a1
    return adaptive_gl(lambda t: kw(np.stack([np.full_like(t, a1), t], -1)),
                       S.a_minus[1], S.a_plus[1], tol).value
