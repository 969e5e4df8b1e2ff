"""The one-homogeneous costs Theta_lambda and H_lambda and related checks."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.spatial import ConvexHull

from .functionals import f_star

ADMISSIBILITY_TOL = 1e-12


def _split(z):
    z = np.asarray(z, dtype=float)
    return z[..., 0], z[..., 1]


def theta(lam, z) -> np.ndarray:
    """Theta_lambda(z), the convex envelope of H_lambda.

    Vectorized: ``lam`` broadcasts against ``z[..., 0]``. The value for
    lambda = +-1 is |z2|.
    """
    z1, z2 = _split(z)
    lam = np.asarray(lam, dtype=float)
    lam, z1, z2 = np.broadcast_arrays(lam, z1, z2)
    az1sq = z1 * z1
    az2 = np.abs(z2)
    safe = np.where(az2 > 0, az2, 1.0)
    up = (z2 > 0) & ((1 + lam) * az1sq < (1 - lam) * z2 * z2)
    down = (z2 < 0) & ((1 - lam) * az1sq < (1 + lam) * z2 * z2)
    third = 2.0 * np.abs(z1) * np.sqrt(np.maximum(1.0 - lam * lam, 0.0)) + lam * z2
    out = np.where(up, (1 + lam) * az1sq / safe + az2,
                   np.where(down, (1 - lam) * az1sq / safe + az2, third))
    out = np.where(np.abs(lam) == 1.0, az2, out)
    return out[()] if out.ndim == 0 else out


def h_upper(lam, z) -> np.ndarray:
    """H_lambda(z); +inf on the horizontal axis away from the origin."""
    z1, z2 = _split(z)
    lam = np.asarray(lam, dtype=float)
    lam, z1, z2 = np.broadcast_arrays(lam, z1, z2)
    safe = np.where(z2 != 0, z2, 1.0)
    pos = (1 + lam) * z1 * z1 / safe + z2
    neg = -(1 - lam) * z1 * z1 / safe - z2
    out = np.where(z2 > 0, pos, np.where(z2 < 0, neg, np.where(z1 == 0, 0.0, np.inf)))
    return out[()] if out.ndim == 0 else out


def ray_directions(n: int) -> np.ndarray:
    """Unit directions: half uniform in angle, half clustered at the horizontal.

    H_lambda blows up at the horizontal axis, and the envelope of the
    degenerate cases is governed by nearly horizontal rays, so uniform angles
    alone converge slowly there.
    """
    per = n // 8
    n_uni = n - 4 * per
    ang = 2 * np.pi * (np.arange(n_uni) + 0.5) / n_uni
    uni = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    if per == 0:
        return uni
    s = np.linspace(0.0, np.arcsinh(1e7), per + 1)[1:]
    slope = 1.0 / np.sinh(s)  # |z2| / |z1| from 1 down to 1e-7
    blocks = []
    for sx in (1.0, -1.0):
        for sy in (1.0, -1.0):
            v = np.stack([sx * np.ones_like(slope), sy * slope], axis=-1)
            blocks.append(v / np.linalg.norm(v, axis=1, keepdims=True))
    return np.concatenate([uni] + blocks)


@lru_cache(maxsize=64)
def _hull_facets(lam: float, ray_samples: int) -> tuple[np.ndarray, np.ndarray]:
    U = ray_directions(ray_samples)
    H = h_upper(lam, U)
    ok = np.isfinite(H) & (H > 0)
    pts = np.vstack([U[ok] / H[ok][:, None], np.zeros((1, 2))])
    eq = ConvexHull(pts).equations
    use = eq[:, 2] < -1e-14  # facets not passing through the origin
    return eq[use, :2] / -eq[use, 2:3], eq[use, 2]


def envelope_oracle(lam: float, z, ray_samples: int = 4096) -> np.ndarray:
    """Largest linear minorant of H_lambda (on sampled rays), evaluated at z.

    By homogeneity this is the gauge of the convex hull of the points
    u/H(u) (u sampled on the unit circle) together with the origin.
    Vectorized over ``z[..., :]``.
    """
    if ray_samples < 16:
        raise ValueError("ray_samples must be at least 16")
    z = np.asarray(z, dtype=float)
    normals, _ = _hull_facets(float(lam), int(ray_samples))
    out = np.maximum(0.0, (z @ normals.T).max(axis=-1))
    return out[()] if out.ndim == 0 else out


# -- inequality checks -----------------------------------------------------------

@dataclass(frozen=True)
class LambdaTriple:
    iota: float
    kappa: float
    lam: float

    def violations(self, tol: float = ADMISSIBILITY_TOL) -> list[str]:
        i, k, l = self.iota, self.kappa, self.lam
        out = []
        for name, v in (("iota", i), ("kappa", k), ("lambda", l)):
            if not -1 - tol <= v <= 1 + tol:
                out.append(f"{name} = {v} outside [-1, 1]")
        i2 = i * i
        if i2 > 1 - l * l + tol:
            out.append("iota^2 <= 1 - lambda^2")
        if i2 > (1 + k) * (1 - l) + tol:
            out.append("iota^2 <= (1 + kappa)(1 - lambda)")
        if i2 > (1 - k) * (1 + l) + tol:
            out.append("iota^2 <= (1 - kappa)(1 + lambda)")
        return out

    @property
    def admissible(self) -> bool:
        return not self.violations()


def admissibility_margin(iota, kappa, lam) -> np.ndarray:
    """min{1-l^2, (1+k)(1-l), (1-k)(1+l)} - i^2, vectorized (>= 0 when admissible)."""
    iota, kappa, lam = (np.asarray(v, float) for v in (iota, kappa, lam))
    m = np.minimum(1 - lam * lam, np.minimum((1 + kappa) * (1 - lam), (1 - kappa) * (1 + lam)))
    return m - iota * iota


def fstar_lb_check(r, s, t, lam) -> tuple[np.ndarray, np.ndarray]:
    """Both sides of sqrt(f*([[r, s], [t, -r]])) >= (Theta_lambda(r, s) + lambda t) / 2."""
    r, s, t, lam = np.broadcast_arrays(*(np.asarray(v, float) for v in (r, s, t, lam)))
    N = np.stack([np.stack([r, s], -1), np.stack([t, -r], -1)], -2)
    lhs = np.sqrt(f_star(N))
    rhs = 0.5 * (theta(lam, np.stack([r, s], -1)) + lam * t)
    return lhs, rhs


def subgrad_check(T: LambdaTriple, z) -> tuple[np.ndarray, np.ndarray]:
    """Both sides of Theta_lambda(z) >= 2 iota z1 + kappa z2 for an admissible triple."""
    bad = T.violations()
    if bad:
        raise ValueError("inadmissible triple, violated: " + "; ".join(bad))
    z = np.asarray(z, float)
    return theta(T.lam, z), 2 * T.iota * z[..., 0] + T.kappa * z[..., 1]
