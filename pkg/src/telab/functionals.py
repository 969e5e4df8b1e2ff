"""Matrix functionals on 2x2 matrices and their Legendre-type companions.

Matrices are numpy arrays of shape ``(..., 2, 2)`` with ``M[..., i, j] = m_{i+1, j+1}``;
every function here is vectorized over leading axes.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.optimize import minimize

SQRT2 = np.sqrt(2.0)
TRACE_TOL = 1e-9


def as_mat(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.shape[-2:] != (2, 2):
        raise ValueError(f"expected (..., 2, 2) array, got shape {M.shape}")
    return M


def to_q(M) -> np.ndarray:
    """Isometric coordinates (q1, q2, q3, q4) of a 2x2 matrix."""
    M = as_mat(M)
    m11, m12, m21, m22 = M[..., 0, 0], M[..., 0, 1], M[..., 1, 0], M[..., 1, 1]
    return np.stack([m11 + m22, m11 - m22, m12 + m21, m12 - m21], axis=-1) / SQRT2


def from_q(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    q1, q2, q3, q4 = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m11 = (q1 + q2) / SQRT2
    m22 = (q1 - q2) / SQRT2
    m12 = (q3 + q4) / SQRT2
    m21 = (q3 - q4) / SQRT2
    return np.stack([np.stack([m11, m12], -1), np.stack([m21, m22], -1)], -2)


def frob_sq(M) -> np.ndarray:
    M = as_mat(M)
    return (M**2).sum(axis=(-2, -1))


def det(M) -> np.ndarray:
    M = as_mat(M)
    return M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]


def trace(M) -> np.ndarray:
    M = as_mat(M)
    return M[..., 0, 0] + M[..., 1, 1]


def g_quad(M) -> np.ndarray:
    """g(M) = (|M|^2 + sqrt(|M|^4 - 4 det(M)^2)) / 2.

    The radicand is evaluated in its factored form
    ((m11+m22)^2 + (m12-m21)^2)((m11-m22)^2 + (m12+m21)^2), which is a
    product of sums of squares and so never suffers cancellation.
    """
    M = as_mat(M)
    m11, m12, m21, m22 = M[..., 0, 0], M[..., 0, 1], M[..., 1, 0], M[..., 1, 1]
    rad = ((m11 + m22) ** 2 + (m12 - m21) ** 2) * ((m11 - m22) ** 2 + (m12 + m21) ** 2)
    return 0.5 * (frob_sq(M) + np.sqrt(np.maximum(rad, 0.0)))


def g_quad_q(q) -> np.ndarray:
    """Same as :func:`g_quad`, written in q-coordinates."""
    q = np.asarray(q, float)
    a = np.hypot(q[..., 0], q[..., 3])
    b = np.hypot(q[..., 1], q[..., 2])
    return 0.5 * (a + b) ** 2


def f_calib(M) -> np.ndarray:
    """f(M) = g of the trace-free part of M.

    |M|^2 - 2 det M is computed as (m11-m22)^2 + (m12+m21)^2.
    """
    M = as_mat(M)
    m11, m12, m21, m22 = M[..., 0, 0], M[..., 0, 1], M[..., 1, 0], M[..., 1, 1]
    n2 = frob_sq(M)
    tr = m11 + m22
    rad = (m11 - m22) ** 2 + (m12 + m21) ** 2
    return 0.5 * (n2 - 0.5 * tr**2 + np.abs(m12 - m21) * np.sqrt(rad))


def is_trace_free(N, trace_tol: float = TRACE_TOL) -> np.ndarray:
    N = as_mat(N)
    return np.abs(trace(N)) <= trace_tol * np.maximum(np.sqrt(frob_sq(N)), 1.0)


def f_star(N, trace_tol: float = TRACE_TOL) -> np.ndarray:
    """Convex conjugate of :func:`f_calib`; ``inf`` off the trace-free plane.

    Matrices with ``|tr N| <= trace_tol * max(|N|, 1)`` count as trace-free.
    """
    N = as_mat(N)
    val = 0.25 * np.maximum(frob_sq(N) - 2.0 * det(N), (N[..., 0, 1] - N[..., 1, 0]) ** 2)
    out = np.where(is_trace_free(N, trace_tol), val, np.inf)
    return out[()] if out.ndim == 0 else out


def f_k_reg(M, k: float) -> np.ndarray:
    """Strictly convex regularization of f with parameter k >= 1."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return f_k_q(to_q(M), k)


def f_k_q(q, k: float) -> np.ndarray:
    q = np.asarray(q, float)
    eps = (q**2).sum(axis=-1) / (2.0 * k)
    A = np.sqrt(q[..., 3] ** 2 + eps)
    B = np.sqrt(q[..., 1] ** 2 + q[..., 2] ** 2 + eps)
    return 0.5 * (A + B) ** 2


def f_k_q_grad(q, k: float) -> tuple[np.ndarray, np.ndarray]:
    """Value and gradient (w.r.t. q) of the regularized functional.

    The gradient is set to zero where q = 0 (f_k is C^1 there with zero
    derivative by 2-homogeneity).
    """
    q = np.asarray(q, float)
    eps = (q**2).sum(axis=-1) / (2.0 * k)
    A = np.sqrt(q[..., 3] ** 2 + eps)
    B = np.sqrt(q[..., 1] ** 2 + q[..., 2] ** 2 + eps)
    val = 0.5 * (A + B) ** 2
    safeA = np.where(A > 0, A, 1.0)
    safeB = np.where(B > 0, B, 1.0)
    # d(eps)/dq = q/k, so d sqrt(x + eps)/dq picks up q / (2 k root)
    dA = q / (2.0 * k * safeA[..., None])
    dB = q / (2.0 * k * safeB[..., None])
    dA[..., 3] += q[..., 3] / safeA
    dB[..., 1] += q[..., 1] / safeB
    dB[..., 2] += q[..., 2] / safeB
    grad = (A + B)[..., None] * (dA + dB)
    grad = np.where(((A > 0) & (B > 0))[..., None], grad, 0.0)
    return val, grad


def f_k_q_hess(q, k: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Value, gradient and Hessian (w.r.t. q) of the regularized functional.

    With A = sqrt(q.Qa.q) and B = sqrt(q.Qb.q) for diagonal Qa, Qb, the
    Hessian of (A + B)^2 / 2 is (dA + dB)(dA + dB)^T + (A + B)(d2A + d2B).
    Points with q = 0 get a zero gradient and the Hessian 2 Qa + 2 Qb limit
    is replaced by zero there, which is harmless for damped Newton steps.
    """
    q = np.asarray(q, float)
    e = 1.0 / (2.0 * k)
    qa = np.array([e, e, e, 1.0 + e])
    qb = np.array([e, 1.0 + e, 1.0 + e, e])
    A = np.sqrt((qa * q * q).sum(-1))
    B = np.sqrt((qb * q * q).sum(-1))
    ok = (A > 0) & (B > 0)
    sA = np.where(ok, A, 1.0)[..., None]
    sB = np.where(ok, B, 1.0)[..., None]
    dA = qa * q / sA
    dB = qb * q / sB
    s = (A + B)[..., None]
    g = s * (dA + dB)
    d = dA + dB
    hess = d[..., :, None] * d[..., None, :]
    hess = hess + s[..., None] * (
        np.eye(4) * (qa / sA + qb / sB)[..., None, :]
        - dA[..., :, None] * dA[..., None, :] / sA[..., None]
        - dB[..., :, None] * dB[..., None, :] / sB[..., None])
    g = np.where(ok[..., None], g, 0.0)
    hess = np.where(ok[..., None, None], hess, 0.0)
    return 0.5 * (A + B) ** 2, g, hess


def sigma_opt(L) -> tuple[float, float]:
    """Optimal s0 = det(L)/g(L) together with g(L)."""
    L = as_mat(L)
    if L.shape != (2, 2):
        raise ValueError("sigma_opt expects a single 2x2 matrix")
    g = float(g_quad(L))
    if g == 0.0:
        raise ValueError("sigma_opt is undefined for Lambda = 0")
    s0 = float(det(L)) / g
    return float(np.clip(s0, -1.0, 1.0)), g


def phi_sigma(L, s) -> np.ndarray:
    """phi(s) = (|L|^2 - 2 s det L) / (1 - s^2) for |s| < 1.

    Evaluated as m / (2 (1 - s)) + p / (2 (1 + s)) with the sums of squares
    m = |L|^2 - 2 det L and p = |L|^2 + 2 det L, which avoids the 0/0
    cancellation near s = +-1.
    """
    L = as_mat(L)
    s = np.asarray(s, float)
    m11, m12, m21, m22 = L[..., 0, 0], L[..., 0, 1], L[..., 1, 0], L[..., 1, 1]
    m = (m11 - m22) ** 2 + (m12 + m21) ** 2
    p = (m11 + m22) ** 2 + (m12 - m21) ** 2
    return m / (2.0 * (1.0 - s)) + p / (2.0 * (1.0 + s))


# -- brute-force conjugate ------------------------------------------------------

@dataclass(frozen=True)
class OracleResult:
    value: float
    divergent: bool
    radius: float
    argmax: np.ndarray


def _sample_ball(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform samples of the unit ball in R^4, as (n, 2, 2) matrices."""
    z = rng.standard_normal((n, 4))
    z *= (rng.random(n) ** 0.25 / np.sqrt(np.einsum("ij,ij->i", z, z)))[:, None]
    return z.reshape(n, 2, 2)


@lru_cache(maxsize=4)
def _unit_cloud(fn, samples: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    # fn is 2-homogeneous, so one cloud on the unit ball serves every radius:
    # fn(r M) = r^2 fn(M).
    Ms = _sample_ball(np.random.default_rng(seed), samples)
    vals = np.asarray(fn(Ms), dtype=float)
    Ms.setflags(write=False)
    vals.setflags(write=False)
    return Ms, vals


def _polish(fn, N, radius, M0, seed: int = 0) -> tuple[float, np.ndarray]:
    """Local refinement: Nelder–Mead, then a vectorized random-direction search.

    The maximizer often sits on a kink of fn, where Nelder–Mead stalls on the
    ridge; random directions keep finding the improving cone there.
    """
    def clip(x):
        nrm = np.linalg.norm(x, axis=-1, keepdims=True)
        return np.where(nrm > radius, x * (radius / np.maximum(nrm, 1e-300)), x)

    def objective(x):
        M = clip(x).reshape(-1, 2, 2)
        return np.einsum("kij,ij->k", M, N) - np.asarray(fn(M), float).reshape(-1)

    res = minimize(lambda x: -float(objective(x)[0]), M0.ravel(), method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 300,
                            "initial_simplex": M0.ravel() + 0.05 * radius * np.vstack(
                                [np.zeros(4), np.eye(4)])})
    x = clip(res.x)
    best = float(objective(x)[0])
    rng = np.random.default_rng(seed)
    sigma = 0.01 * radius
    for _ in range(600):
        if sigma < 1e-11 * radius:
            break
        d = rng.standard_normal((256, 4))
        d *= (sigma * rng.random(256) / np.linalg.norm(d, axis=1))[:, None]
        cand = clip(x + d)
        vals = objective(cand)
        i = int(np.argmax(vals))
        if vals[i] > best:
            best, x = float(vals[i]), cand[i]
            sigma *= 1.5
        else:
            sigma *= 0.5
    return best, x.reshape(2, 2)


def _oracle_at_radius(fn, N, radius, samples, seed, polish) -> tuple[float, np.ndarray]:
    Ms, fv = _unit_cloud(fn, samples, seed)
    vals = radius * np.einsum("kij,ij->k", Ms, N) - radius**2 * fv
    i = int(np.argmax(vals))
    best_val, best_M = float(vals[i]), radius * Ms[i]
    if polish:
        val, M = _polish(fn, N, radius, best_M, seed)
        if val > best_val:
            best_val, best_M = val, M
    return best_val, best_M


def legendre_oracle(
    fn: Callable[[np.ndarray], np.ndarray],
    N,
    radius: float | None = None,
    samples: int = 1_000_000,
    seed: int = 0,
    polish: bool = True,
    growth_rtol: float = 1e-4,
) -> OracleResult:
    """Brute-force sup of M:N - fn(M) over the ball |M| <= radius.

    The supremum is approximated by uniform sampling of the 4-ball followed by
    a Nelder–Mead polish. Divergence (conjugate = +inf) is detected by
    repeating the (unpolished) search on balls of radius 2r and 4r. A finite
    conjugate of a 2-homogeneous functional is attained
    inside the ball, so the values must not keep increasing.
    """
    if samples < 100:
        raise ValueError("oracle under-resolved: need at least 100 samples")
    N = as_mat(N)
    if radius is None:
        radius = 2.0 * max(float(np.linalg.norm(N)), 0.5)
    if radius <= 0:
        raise ValueError("radius must be positive")
    v1, M1 = _oracle_at_radius(fn, N, radius, samples, seed, polish)
    # unpolished probes suffice: they only need to exhibit growth of order r
    v2, _ = _oracle_at_radius(fn, N, 2 * radius, samples, seed, False)
    v4, _ = _oracle_at_radius(fn, N, 4 * radius, samples, seed, False)
    thresh = growth_rtol * max(1.0, abs(v1))
    divergent = (v2 - v1 > thresh) and (v4 - v2 > thresh)
    return OracleResult(value=v1, divergent=bool(divergent), radius=float(radius), argmax=M1)
