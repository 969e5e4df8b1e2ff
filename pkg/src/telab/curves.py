"""The curve functional Z_{lambda,h} and its minimization over polylines."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .calibrations import PdeCriterionData, pde_lower_bound
from .currents import Polyline
from .potentials import Potential, SegmentSpec, segment_energy
from .quadrature import adaptive_gl, gl_nodes
from .theta import theta


@dataclass(frozen=True)
class CurveProblem:
    P: Potential
    D: PdeCriterionData
    S: SegmentSpec

    def straight(self, n_vertices: int = 2) -> Polyline:
        t = np.linspace(0.0, 1.0, n_vertices)[:, None]
        return Polyline(self.S.am + t * (self.S.ap - self.S.am))


@dataclass
class CurveOpts:
    n_starts: int = 8          # perturbed starts in addition to the straight segment
    seed: int = 0
    perturb: float = 0.25      # std of start perturbations, relative to |a+ - a-|
    min_step: float = 1e-6     # Powell xtol, relative to |a+ - a-|
    max_evals: int = 3000      # per start
    ftol: float = 1e-10        # Powell relative tolerance on Z
    quad_nodes: int = 15       # fixed rule used inside the search
    quad_panels: int = 4
    tol: float = 1e-10         # adaptive tolerance for reported values
    workers: int = 1


def _integrand(CP: CurveProblem, p0, d):
    def f(t):
        pts = p0 + t[:, None] * d
        lam = CP.D.lam(pts)
        return CP.P.w(pts) * theta(lam, np.broadcast_to(d, pts.shape)) + CP.D.h22(pts) * d[1]
    return f


def _check_membership(CP: CurveProblem, v: np.ndarray):
    start_ok = np.allclose(v[0], CP.S.am, atol=1e-12, rtol=0)
    end_ok = np.allclose(v[-1], CP.S.ap, atol=1e-12, rtol=0)
    closed = np.array_equal(v[0], v[-1])
    if not ((start_ok and end_ok) or closed):
        raise ValueError("curve is not in Gamma_0 or Gamma_1 (endpoints must be a-, a+ or coincide)")


def eval_Z_open(CP: CurveProblem, gamma: Polyline, tol: float = 1e-10) -> float:
    """Z for an arbitrary polyline (no endpoint requirement).

    With this form Z is additive under concatenation of polylines.
    """
    v = gamma.vertices
    e = gamma.edges
    tol_e = tol / len(e)
    total = 0.0
    for k in range(len(e)):
        total += adaptive_gl(_integrand(CP, v[k], e[k]), 0.0, 1.0, tol_e).value
    h2 = CP.D.h2(np.stack([v[0], v[-1]]))
    return float(total - h2[1] + h2[0])


def eval_Z(CP: CurveProblem, gamma: Polyline, tol: float = 1e-10) -> float:
    """Z_{lambda,h}(gamma) for gamma from a- to a+, or closed."""
    _check_membership(CP, gamma.vertices)
    return eval_Z_open(CP, gamma, tol)


def _fast_Z(CP: CurveProblem, v: np.ndarray, opts: CurveOpts) -> float:
    """Fixed composite Gauss–Legendre version of Z, vectorized over all edges."""
    x, w = gl_nodes(opts.quad_nodes)
    m = opts.quad_panels
    edges = np.linspace(0.0, 1.0, m + 1)
    t = (edges[:-1, None] + 0.5 * (x[None, :] + 1.0) / m).ravel()
    wt = np.tile(0.5 * w / m, m)
    d = np.diff(v, axis=0)                       # (E, 2)
    pts = v[:-1, None, :] + t[None, :, None] * d[:, None, :]  # (E, T, 2)
    dd = np.broadcast_to(d[:, None, :], pts.shape)
    vals = CP.P.w(pts) * theta(CP.D.lam(pts), dd) + CP.D.h22(pts) * dd[..., 1]
    h2 = CP.D.h2(np.stack([v[0], v[-1]]))
    return float((vals * wt).sum() - h2[1] + h2[0])


def _descend(CP: CurveProblem, v0: np.ndarray, opts: CurveOpts) -> tuple[np.ndarray, float, int]:
    """Powell search over interior vertices with the fixed-rule Z.

    Vertices are confined to the box on which h and lambda were built.

    Z is only piecewise smooth (Theta has kinks at |lambda| = 1), which is
    why a derivative-free method is used.
    """
    base = v0.copy()
    if len(base) <= 2:
        return base, _fast_Z(CP, base, opts), 1

    def fz(x):
        v = base.copy()
        v[1:-1] = x.reshape(-1, 2)
        return _fast_Z(CP, v, opts)

    x0, x1, y0, y1 = CP.D.box
    n_free = len(base) - 2
    bounds = [(x0, x1), (y0, y1)] * n_free
    start = np.clip(base[1:-1], [x0, y0], [x1, y1]).ravel()
    res = minimize(fz, start, method="Powell", bounds=bounds,
                   options={"xtol": opts.min_step * CP.S.length, "ftol": opts.ftol,
                            "maxfev": opts.max_evals})
    v = base.copy()
    v[1:-1] = res.x.reshape(-1, 2)
    return v, float(res.fun), int(res.nfev)


def _starts(CP: CurveProblem, n_vertices: int, opts: CurveOpts) -> list[np.ndarray]:
    base = CP.straight(n_vertices).vertices
    starts = [base.copy()]
    rng = np.random.default_rng(opts.seed)
    for _ in range(opts.n_starts):
        v = base.copy()
        v[1:-1] += opts.perturb * CP.S.length * rng.standard_normal((n_vertices - 2, 2))
        starts.append(v)
    return starts


@dataclass(frozen=True)
class CurveResult:
    gamma: Polyline
    Z: float
    start_index: int           # -1: the unoptimized straight segment
    start_values: tuple[float, ...]
    evaluations: int
    meta: dict = field(default_factory=dict)


def minimize_Z(CP: CurveProblem, n_vertices: int = 9, opts: CurveOpts | None = None) -> CurveResult:
    """Derivative-free minimization of Z over interior vertex positions.

    Starts: the straight segment plus ``opts.n_starts`` seeded perturbations.
    The best start is chosen by (value, start index), so the result does not
    depend on the number of worker threads.
    """
    opts = opts or CurveOpts()
    if n_vertices < 2:
        raise ValueError("n_vertices must be at least 2")
    if n_vertices == 2:
        g = CP.straight(2)
        z = eval_Z(CP, g, opts.tol)
        return CurveResult(g, z, 0, (z,), 1, {"non_improving_starts": 0})
    starts = _starts(CP, n_vertices, opts)
    if opts.workers > 1:
        with ThreadPoolExecutor(opts.workers) as ex:
            runs = list(ex.map(lambda s: _descend(CP, s, opts), starts))
    else:
        runs = [_descend(CP, s, opts) for s in starts]
    # The search rule can misjudge curves crossing kinks of Theta, so the final
    # ranking uses the adaptive value. The untouched straight segment stays a
    # candidate (index -1), which keeps Z* <= Z(straight).
    straight = CP.straight(n_vertices)
    z_straight = eval_Z(CP, straight, opts.tol)
    cands = [(z_straight, -1, straight)]
    for i, r in enumerate(runs):
        try:
            g = Polyline(r[0])
        except ValueError:          # collapsed vertices
            continue
        cands.append((eval_Z(CP, g, opts.tol), i, g))
    z, best_i, gamma = min(cands, key=lambda c: (c[0], c[1]))
    values = [r[1] for r in runs]
    non_improving = sum(1 for v in values[1:] if v >= values[0] - 1e-12)
    meta = {"n_vertices": n_vertices, "n_starts": len(starts), "z_straight": z_straight,
            "non_improving_starts": non_improving,
            "improved_on_straight": bool(z < z_straight - 1e-12)}
    return CurveResult(gamma, z, best_i, tuple(values), sum(r[2] for r in runs), meta)


def homotopy_convex(CP: CurveProblem, gamma: Polyline, n: int = 11, tol: float = 1e-9) -> bool:
    """Is s -> Z((1-s) gamma0 + s gamma) convex on a sample of s in [0, 1]?"""
    g0 = CP.straight(len(gamma.vertices)).vertices
    s = np.linspace(0, 1, n)
    vals = []
    for si in s:
        v = (1 - si) * g0 + si * gamma.vertices
        if np.any(np.all(np.diff(v, axis=0) == 0, axis=1)):
            return False
        vals.append(eval_Z(CP, Polyline(v)))
    vals = np.array(vals)
    return bool(np.all(vals[2:] - 2 * vals[1:-1] + vals[:-2] >= -tol))


def mass_lower_bound(CP: CurveProblem, n_vertices: int = 9, opts: CurveOpts | None = None) -> dict:
    """Half the minimized curve functional, with provenance flags.

    A local minimum of Z over polylines only bounds inf Z from above, so the
    value is labelled ``heuristic`` unless Z is convex along the straight-line
    homotopy between the segment and the minimizer. When the segment is
    vertical the PDE-criterion bound (half of it) is attached as a certified
    comparison value.
    """
    res = minimize_Z(CP, n_vertices, opts)
    bound = 0.5 * res.Z
    upper = segment_energy(CP.P, CP.S)
    if 2 * bound > upper + 1e-8 * max(1.0, upper):
        raise AssertionError(
            f"curve bound {2 * bound!r} exceeds the segment energy {upper!r}: data violate the hypotheses")
    convex = homotopy_convex(CP, res.gamma) if n_vertices > 2 else True
    out = {"value": bound, "Z": res.Z, "status": "homotopy-convex" if convex else "heuristic",
           "gamma": res.gamma.vertices.tolist(), **res.meta}
    if CP.S.is_vertical and CP.S.a_minus[1] < CP.S.a_plus[1]:
        out["pde_certified"] = 0.5 * pde_lower_bound(CP.D, CP.S)
    return out
