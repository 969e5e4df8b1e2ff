"""Discrete L^p minimization of the calibration energy on a uniform grid.

For a vector field Phi on [-R, R]^2 the energy is

    E_p(Phi) = ( sum_c a_c F_c^(p/2) )^(1/p),   F_c = f_k(D Phi_c) / W_k(y_c),

with a_c the cell masses of a normalized Gaussian weight, D Phi_c the
forward-difference gradient in each cell, and W_k = W + (1 + |y|^2)/k. Phi_1 is pinned to 0 at
a- and 1 at a+. The optimizer works with log E_p in log-sum-exp form, so no
power of F is ever formed explicitly.
"""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import minimize
from scipy.special import logsumexp

from .functionals import f_k_q_grad, f_k_q_hess
from .potentials import Potential, SegmentSpec

SQRT2 = np.sqrt(2.0)
ROW_BLOCK = 8  # fixed row-block size for the (optionally threaded) assembly


class GridError(ValueError):
    pass


@dataclass
class GridField:
    """Nodal values of Phi on a uniform grid with ``nx`` x ``ny`` cells.

    ``phi`` has shape ``(ny + 1, nx + 1, 2)`` and is indexed ``[j, i]`` with
    node coordinates ``x_i = -R + i hx`` and ``y_j = -R + j hy``.
    """

    R: float
    nx: int
    ny: int
    a_minus: tuple[float, float]
    a_plus: tuple[float, float]
    phi: np.ndarray = None
    idx_minus: tuple[int, int] = field(init=False)
    idx_plus: tuple[int, int] = field(init=False)

    def __post_init__(self):
        if self.R <= 0 or self.nx < 2 or self.ny < 2:
            raise GridError("need R > 0 and at least 2 cells per direction")
        self.idx_minus = self._node_of(self.a_minus)
        self.idx_plus = self._node_of(self.a_plus)
        if self.idx_minus == self.idx_plus:
            raise GridError("a- and a+ fall on the same node")
        if self.phi is None:
            self.phi = self.affine_start()
        else:
            self.phi = np.array(self.phi, dtype=float)
            if self.phi.shape != (self.ny + 1, self.nx + 1, 2):
                raise GridError("phi has the wrong shape")
        self.project()

    @property
    def hx(self) -> float:
        return 2.0 * self.R / self.nx

    @property
    def hy(self) -> float:
        return 2.0 * self.R / self.ny

    def _node_of(self, a) -> tuple[int, int]:
        ix = (a[0] + self.R) / self.hx
        iy = (a[1] + self.R) / self.hy
        i, j = int(round(ix)), int(round(iy))
        if abs(ix - i) > 1e-9 or abs(iy - j) > 1e-9 or not (0 <= i <= self.nx and 0 <= j <= self.ny):
            raise GridError(f"point {tuple(a)} is not a grid node (R={self.R}, nx={self.nx}, ny={self.ny})")
        return (j, i)

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.linspace(-self.R, self.R, self.nx + 1), np.linspace(-self.R, self.R, self.ny + 1))

    def cell_centers(self) -> np.ndarray:
        x, y = self.nodes()
        xc = 0.5 * (x[:-1] + x[1:])
        yc = 0.5 * (y[:-1] + y[1:])
        X, Y = np.meshgrid(xc, yc)  # (ny, nx)
        return np.stack([X, Y], axis=-1)

    def affine_start(self) -> np.ndarray:
        """Phi_1 linear along a+ - a-, taking the values 0 and 1 at the endpoints."""
        x, y = self.nodes()
        X, Y = np.meshgrid(x, y)
        am = np.asarray(self.a_minus)
        d = np.asarray(self.a_plus) - am
        phi = np.zeros((self.ny + 1, self.nx + 1, 2))
        phi[..., 0] = ((X - am[0]) * d[0] + (Y - am[1]) * d[1]) / (d @ d)
        return phi

    def project(self):
        self.phi[self.idx_minus + (0,)] = 0.0
        self.phi[self.idx_plus + (0,)] = 1.0

    def free_mask(self) -> np.ndarray:
        m = np.ones(self.phi.shape, dtype=bool)
        m[self.idx_minus + (0,)] = False
        m[self.idx_plus + (0,)] = False
        return m

    def copy(self) -> "GridField":
        return GridField(self.R, self.nx, self.ny, self.a_minus, self.a_plus, self.phi.copy())


def grid_for(S: SegmentSpec, nx: int = 64, ny: int = 64, R: float | None = None) -> GridField:
    if R is None:
        R = 2.0 * max(np.hypot(*S.a_minus), np.hypot(*S.a_plus), 1.0)
    return GridField(float(R), int(nx), int(ny), S.a_minus, S.a_plus)


def default_V_sigma(G: GridField) -> float:
    """R/4: the box then spans +-4 sigma and truncation drops ~e^-8 of the weight."""
    return G.R / 4.0


def cell_gradients(G: GridField, phi: np.ndarray | None = None) -> np.ndarray:
    """Per-cell forward differences from the lower-left node.

    Shape (ny, nx, 2, 2) with D[..., r, c] = d Phi_r / d y_c. Unlike the
    four-corner average, this stencil has no checkerboard null mode, which
    would otherwise let the point constraints be met at almost zero cost.
    """
    phi = G.phi if phi is None else phi
    p00 = phi[:-1, :-1]
    dx = (phi[:-1, 1:] - p00) / G.hx
    dy = (phi[1:, :-1] - p00) / G.hy
    return np.stack([dx, dy], axis=-1)


def _scatter_gradient(G: GridField, gD: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`cell_gradients`: cell-gradient sensitivities to nodes."""
    gx = gD[..., 0] / G.hx
    gy = gD[..., 1] / G.hy
    out = np.zeros_like(G.phi)
    out[:-1, :-1] -= gx + gy
    out[:-1, 1:] += gx
    out[1:, :-1] += gy
    return out


def _mat_to_q(D: np.ndarray) -> np.ndarray:
    m11, m12, m21, m22 = D[..., 0, 0], D[..., 0, 1], D[..., 1, 0], D[..., 1, 1]
    return np.stack([m11 + m22, m11 - m22, m12 + m21, m12 - m21], axis=-1) / SQRT2


def _q_grad_to_mat(gq: np.ndarray) -> np.ndarray:
    g1, g2, g3, g4 = (gq[..., i] for i in range(4))
    m11 = (g1 + g2) / SQRT2
    m22 = (g1 - g2) / SQRT2
    m12 = (g3 + g4) / SQRT2
    m21 = (g3 - g4) / SQRT2
    return np.stack([np.stack([m11, m12], -1), np.stack([m21, m22], -1)], -2)


@dataclass(frozen=True)
class Weights:
    """Per-cell data that do not depend on Phi."""

    log_a: np.ndarray     # log of normalized Gaussian cell masses
    log_Wk: np.ndarray    # log of the regularized potential at cell centres
    V: np.ndarray         # normalized Gaussian density at cell centres (mass = V * cell area)


def make_weights(G: GridField, P: Potential, k_reg: float, V_sigma: float, w_scale: float = 1.0) -> Weights:
    if k_reg < 1:
        raise ValueError("k_reg must be >= 1")
    if V_sigma <= 0:
        raise ValueError("V_sigma must be positive")
    yc = G.cell_centers()
    r2 = (yc**2).sum(-1)
    Wk = w_scale * (P.W(yc) + (1.0 + r2) / k_reg)
    g = np.exp(-r2 / (2 * V_sigma**2))
    area = G.hx * G.hy
    a = g / g.sum()
    return Weights(np.log(a), np.log(Wk), a / area)


def _blocks(ny: int) -> list[slice]:
    return [slice(s, min(s + ROW_BLOCK, ny)) for s in range(0, ny, ROW_BLOCK)]


def _block_terms(Dblk, log_a, log_Wk, k_reg, p, want_grad):
    q = _mat_to_q(Dblk)
    f, gq = f_k_q_grad(q, k_reg)
    with np.errstate(divide="ignore"):
        logF = np.log(f) - log_Wk          # -inf on cells with D Phi = 0
    z = log_a + 0.5 * p * logF
    if not want_grad:
        return z, None, f
    return z, gq, f


def _log_energy(G: GridField, phi: np.ndarray, Wt: Weights, k_reg: float, p: float,
                want_grad: bool, workers: int = 1):
    """log E_p and (optionally) its gradient w.r.t. the nodal values.

    Cells are processed in fixed row blocks; per-block partial results are
    reduced in block order, so the outcome does not depend on ``workers``.
    """
    D = cell_gradients(G, phi)
    blocks = _blocks(G.ny)

    def work(sl):
        return _block_terms(D[sl], Wt.log_a[sl], Wt.log_Wk[sl], k_reg, p, want_grad)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(work, blocks))
    else:
        parts = [work(sl) for sl in blocks]
    z = np.concatenate([pt[0] for pt in parts], axis=0)
    lse = logsumexp(z)
    logE = lse / p
    if not want_grad:
        return logE, None, z
    if not np.isfinite(lse):
        return logE, np.zeros(phi.size), z
    s = np.exp(z - lse)  # softmax weights, sum to 1
    f = np.concatenate([pt[2] for pt in parts], axis=0)
    gq = np.concatenate([pt[1] for pt in parts], axis=0)
    # d logE / d q_c = (1/p) * s_c * (p/2) * grad f_c / f_c
    coef = np.where(f > 0, 0.5 * s / np.where(f > 0, f, 1.0), 0.0)
    gD = _q_grad_to_mat(coef[..., None] * gq)
    return logE, _scatter_gradient(G, gD), z


def assemble_energy(G: GridField, P: Potential, k_reg: float, p: float, V_sigma: float | None = None,
                    w_scale: float = 1.0, workers: int = 1) -> float:
    """Discrete E_p of the current field ``G.phi``."""
    if p <= 2:
        raise ValueError("p must exceed 2")
    if V_sigma is None:
        V_sigma = default_V_sigma(G)
    Wt = make_weights(G, P, k_reg, V_sigma, w_scale)
    logE, _, _ = _log_energy(G, G.phi, Wt, k_reg, p, False, workers)
    return float(np.exp(logE))


@dataclass
class LpOpts:
    max_iters: int = 500
    grad_tol: float = 1e-8
    V_sigma: float | None = None   # None means R / 4
    workers: int = 1
    method: str = "newton"     # "newton" (sparse damped Newton) or "lbfgs"
    maxcor: int = 30           # L-BFGS memory


@dataclass
class LpRunResult:
    p: float
    e_p: float
    iterations: int
    grad_norm: float
    converged: bool
    mu: np.ndarray
    field: GridField
    k_reg: float
    V_sigma: float
    message: str = ""

    @property
    def mu_total(self) -> float:
        return float(self.mu.sum())

    @property
    def non_converged(self) -> bool:
        return not self.converged

    def summary(self) -> dict:
        return {"p": self.p, "e_p": self.e_p, "iterations": self.iterations,
                "grad_norm": self.grad_norm, "converged": self.converged,
                "mu_total": self.mu_total, "k_reg": self.k_reg, "V_sigma": self.V_sigma,
                "message": self.message}


# local dofs of a cell: (Phi_1, Phi_2) at the lower-left node, its right
# neighbour and its upper neighbour; q = B u for the forward-difference D Phi
def _local_B(hx: float, hy: float) -> np.ndarray:
    m = np.zeros((4, 6))                 # rows: m11, m12, m21, m22
    m[0, 0], m[0, 2] = -1 / hx, 1 / hx
    m[1, 0], m[1, 4] = -1 / hy, 1 / hy
    m[2, 1], m[2, 3] = -1 / hx, 1 / hx
    m[3, 1], m[3, 5] = -1 / hy, 1 / hy
    T = np.array([[1, 0, 0, 1], [1, 0, 0, -1], [0, 1, 1, 0], [0, 1, -1, 0]]) / SQRT2
    return T @ m


def _local_dofs(G: GridField) -> np.ndarray:
    """Global dof indices, shape (ny, nx, 6), matching ``phi.ravel()``."""
    J, I = np.meshgrid(np.arange(G.ny), np.arange(G.nx), indexing="ij")
    n00 = J * (G.nx + 1) + I
    nodes = [n00, n00, n00 + 1, n00 + 1, n00 + G.nx + 1, n00 + G.nx + 1]
    return np.stack([2 * n + (k % 2) for k, n in enumerate(nodes)], axis=-1)


def _newton_system(G, phi, Wt, k_reg, p, B, dofs):
    """Gradient and sparse Hessian of J = sum_c exp(z_c - z_max), plus log E_p.

    Minimizing J is equivalent to minimizing E_p; the shift by z_max keeps
    every term <= 1.
    """
    q = _mat_to_q(cell_gradients(G, phi))
    f, gq, Hq = f_k_q_hess(q, k_reg)
    fs = np.maximum(f, 1e-300)
    z = Wt.log_a + 0.5 * p * (np.log(fs) - Wt.log_Wk)
    zmax = z.max()
    e = np.exp(z - zmax)
    J = e.sum()
    logE = (zmax + np.log(J)) / p
    c1 = (e * 0.5 * p / fs)[..., None]
    gqc = c1 * gq
    Hqc = c1[..., None] * (Hq + (0.5 * p - 1.0) * gq[..., :, None] * gq[..., None, :] / fs[..., None, None])
    gu = gqc @ B                                  # (ny, nx, 6)
    Hu = np.einsum("ia,...ij,jb->...ab", B, Hqc, B)
    n = phi.size
    grad = np.zeros(n)
    np.add.at(grad, dofs.ravel(), gu.ravel())
    rows = np.broadcast_to(dofs[..., :, None], Hu.shape).ravel()
    cols = np.broadcast_to(dofs[..., None, :], Hu.shape).ravel()
    H = sp.csr_matrix((Hu.ravel(), (rows, cols)), shape=(n, n))
    return logE, J, grad, H


def _newton(G, Wt, k_reg, p, opts, mask):
    B = _local_B(G.hx, G.hy)
    dofs = _local_dofs(G)
    free = np.flatnonzero(mask.ravel())
    phi = G.phi.copy()
    it, gnorm, msg = 0, np.inf, "iteration limit reached"
    while True:
        logE, J, grad, H = _newton_system(G, phi, Wt, k_reg, p, B, dofs)
        g = grad[free] / (p * J)                  # gradient of log E_p
        E = np.exp(logE)
        gnorm = float(np.max(np.abs(g))) * E      # sup-norm of grad E_p
        if gnorm <= opts.grad_tol * max(1.0, E):
            msg = "converged"
            break
        if it >= opts.max_iters:
            break
        Hf = H[free][:, free]
        diag = Hf.diagonal()
        shift = 1e-12 * float(diag.max()) + 1e-300
        Hf = Hf + sp.diags(np.where(diag > 0, 1e-10 * diag, 0.0) + shift)
        d = spla.spsolve(Hf.tocsc(), -grad[free])
        slope = float(g @ d)
        if not np.isfinite(slope) or slope >= 0:
            d, slope = -g, -float(g @ g)
        t = 1.0
        while True:
            trial = phi.copy()
            trial.ravel()[free] += t * d
            new = _log_energy(G, trial, Wt, k_reg, p, False)[0]
            if new <= logE + 1e-4 * t * slope or t < 1e-12:
                break
            t *= 0.5
        if t < 1e-12 and new >= logE:
            msg = "line search failed"
            break
        phi = trial
        it += 1
    return phi, it, gnorm, msg


def minimize_Ep(G: GridField, P: Potential, k_reg: float, p: float, opts: LpOpts | None = None,
                w_scale: float = 1.0) -> LpRunResult:
    """Minimize E_p over the free nodal values of ``G`` (which is left untouched).

    The two pinned values of Phi_1 are not optimization variables, so they stay
    exactly 0 and 1 at every step. Convergence means
    ||grad E_p||_inf <= grad_tol * max(1, e_p); otherwise the result is
    returned flagged as not converged.
    """
    if p <= 2:
        raise ValueError("p must exceed 2")
    opts = opts or LpOpts()
    if opts.V_sigma is None:
        opts = replace(opts, V_sigma=default_V_sigma(G))
    Wt = make_weights(G, P, k_reg, opts.V_sigma, w_scale)
    work = G.copy()
    mask = work.free_mask()
    if opts.method == "newton":
        phi, nit, _, msg = _newton(work, Wt, k_reg, p, opts, mask)
        work.phi = phi
    elif opts.method == "lbfgs":
        base = work.phi.copy()

        def unpack(x):
            phi = base.copy()
            phi[mask] = x
            return phi

        def fun(x):
            logE, g, _ = _log_energy(work, unpack(x), Wt, k_reg, p, True, opts.workers)
            return logE, g[mask]

        res = minimize(fun, base[mask], jac=True, method="L-BFGS-B",
                       options={"maxiter": opts.max_iters, "maxfun": 4 * opts.max_iters,
                                "gtol": opts.grad_tol, "ftol": 1e-15, "maxcor": opts.maxcor})
        work.phi = unpack(res.x)
        nit, msg = int(res.nit), str(res.message)
    else:
        raise ValueError(f"unknown method {opts.method!r}")
    work.project()
    logE, g, z = _log_energy(work, work.phi, Wt, k_reg, p, True, opts.workers)
    e_p = float(np.exp(logE))
    gnorm = float(np.max(np.abs(g[mask]))) * e_p
    # mu_c = e_p^(2-p) a_c F_c^(p/2 - 1) = e_p^2 * softmax_c / F_c
    D = cell_gradients(work)
    f, _ = f_k_q_grad(_mat_to_q(D), k_reg)
    F = f / np.exp(Wt.log_Wk)
    s = np.exp(z - logsumexp(z))
    mu = np.where(F > 0, e_p**2 * s / np.where(F > 0, F, 1.0), 0.0)
    converged = gnorm <= opts.grad_tol * max(1.0, e_p)
    return LpRunResult(p=float(p), e_p=e_p, iterations=int(nit), grad_norm=gnorm,
                       converged=bool(converged), mu=mu, field=work, k_reg=float(k_reg),
                       V_sigma=float(opts.V_sigma), message=msg)


@dataclass
class SweepResult:
    e_inf: float
    richardson: float | None
    eta0: float
    runs: list[LpRunResult]
    non_converged: bool

    def summary(self) -> dict:
        return {"e_inf": self.e_inf, "e_inf_richardson": self.richardson, "eta0": self.eta0,
                "eta0_richardson": (1.0 / self.richardson) if self.richardson else None,
                "non_converged": self.non_converged, "runs": [r.summary() for r in self.runs]}


def sweep_p(G0: GridField, P: Potential, k_reg: float, p_list, opts: LpOpts | None = None) -> SweepResult:
    """Warm-started sequence of minimizations with increasing p.

    ``e_inf`` is e at the largest p; the Richardson value assumes
    e_p = e_inf - C/p from the last two runs. eta0 = 1/e_inf.
    """
    p_list = [float(p) for p in p_list]
    if not p_list or any(p <= 2 for p in p_list) or any(b <= a for a, b in zip(p_list, p_list[1:])):
        raise ValueError("p_list must be increasing with every p > 2")
    runs = []
    G = G0
    for p in p_list:
        r = minimize_Ep(G, P, k_reg, p, opts)
        runs.append(r)
        G = r.field
    e_inf = runs[-1].e_p
    rich = None
    if len(runs) >= 2:
        p1, p2 = runs[-2].p, runs[-1].p
        e1, e2 = runs[-2].e_p, runs[-1].e_p
        rich = (p2 * e2 - p1 * e1) / (p2 - p1)
    return SweepResult(e_inf, rich, 1.0 / e_inf, runs, any(not r.converged for r in runs))


def concentration_rows(run: LpRunResult) -> list[tuple[float, float, float]]:
    """(x, y, mu weight) per cell, row-major in y then x."""
    yc = run.field.cell_centers()
    return [(float(x), float(y), float(m))
            for x, y, m in zip(yc[..., 0].ravel(), yc[..., 1].ravel(), run.mu.ravel())]


def concentration_csv(run: LpRunResult, path) -> int:
    """Write ``x,y,weight`` rows for every cell to ``path``; returns the row count."""
    rows = concentration_rows(run)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "weight"])
        for x, y, m in rows:
            w.writerow([format(x, ".17g"), format(y, ".17g"), format(m, ".17g")])
    return len(rows)
