"""Quantitative inverse and implicit function theorems with explicit constants.

For F: R^d -> R^d with C^2 norm at most D and |det DF(0)| >= r the
constants are

    C1 = c1(d) D^-d,   C2 = c2(d) D^(-2d+1),   C4 = c4(d) D^-(d-1)

F is one-to-one on B(0, C1 r) and its image there contains
B(F(0), C2 r^2).  The dimensional factors are fixed below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .derivatives import fd_jacobian
from .streams import stream


class CertificationError(RuntimeError):
    """Raised when a numerical step contradicts the certified (D, r)."""


@dataclass(frozen=True)
class QiftConstants:
    d: int
    D: float
    r: float
    C1: float
    C2: float
    C4: float

    @property
    def injectivity_radius(self):
        return self.C1 * self.r

    @property
    def image_radius(self):
        return self.C2 * self.r ** 2


def c4_factor(d):
    if d == 1:
        return 1.0
    return (d - 1) ** ((d - 1) / 4.0) * float(d) ** (-(d - 1))


def c1_factor(d):
    return min(c4_factor(d) / 2.0, 1.0 / (2.0 * d * math.factorial(d)))


def c2_factor(d):
    return c1_factor(d) * c4_factor(d)


def qift_constants(d, D, r):
    if int(d) != d or d < 1:
        raise ValueError("dimension must be a positive integer")
    d = int(d)
    if not (math.isfinite(D) and D >= 1):
        raise ValueError("C2 bound D must be >= 1")
    if not (r > 0):
        raise ValueError("determinant floor r must be positive")
    if r > D ** d:
        raise ValueError("r exceeds the Hadamard bound D^d")
    return QiftConstants(
        d=d, D=float(D), r=float(r),
        C1=c1_factor(d) * D ** (-d),
        C2=c2_factor(d) * D ** (-2 * d + 1),
        C4=c4_factor(d) * D ** (-(d - 1)),
    )


def sample_ball(rng, d, radius, size):
    """Uniform points in the Euclidean ball of the given radius."""
    g = rng.standard_normal((size, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rad = radius * rng.uniform(0.0, 1.0, size) ** (1.0 / d)
    return g * rad[:, None]


def _jac_batch(F, DF, X):
    if DF is not None:
        return np.asarray(DF(X), dtype=float)
    return np.array([fd_jacobian(F, x, periodic=False, vectorized=True) for x in X])


@dataclass
class InjectivityReport:
    injective: bool
    margin: float
    witness: tuple | None = None


def check_injectivity(F, constants, pair_samples, rng_seed, DF=None, tol=1e-14):
    """Sample pairs in B(0, C1 r) looking for collisions and for failure of monotonicity.

    ``F`` (and ``DF`` if given) must accept an (m, d) batch.  The margin is
    min <F(x2) - F(x1), DF(x1) h> / |DF(x1) h|^2 with h = x2 - x1, which is
    near 1 for a map close to linear and must stay positive.
    """
    rng = stream(rng_seed)
    d = constants.d
    R = constants.injectivity_radius
    X1 = sample_ball(rng, d, R, pair_samples)
    X2 = sample_ball(rng, d, R, pair_samples)
    F1 = np.asarray(F(X1), dtype=float).reshape(pair_samples, d)
    F2 = np.asarray(F(X2), dtype=float).reshape(pair_samples, d)
    J1 = _jac_batch(F, DF, X1).reshape(pair_samples, d, d)
    h = X2 - X1
    Jh = np.einsum("mij,mj->mi", J1, h)
    dF = F2 - F1
    num = np.sum(dF * Jh, axis=1)
    den = np.sum(Jh * Jh, axis=1)
    margins = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)
    dist_in = np.linalg.norm(h, axis=1)
    dist_out = np.linalg.norm(dF, axis=1)
    collide = (dist_in > 0) & (dist_out <= tol)
    worst = int(np.argmin(margins))
    if np.any(collide):
        i = int(np.flatnonzero(collide)[0])
        return InjectivityReport(False, float(margins[worst]), (X1[i], X2[i]))
    ok = bool(margins[worst] > 0)
    return InjectivityReport(ok, float(margins[worst]), None if ok else (X1[worst], X2[worst]))


def det_range(F, constants, samples, rng_seed, DF=None):
    """(min, max) of |det DF| over uniform samples of B(0, C1 r)."""
    X = sample_ball(stream(rng_seed), constants.d, constants.injectivity_radius, samples)
    dets = np.abs(np.linalg.det(_jac_batch(F, DF, X)))
    return float(dets.min()), float(dets.max())


@dataclass
class ReachResult:
    endpoint: np.ndarray
    t: float
    residual: float


def reach_target(F, DF, constants, v, t_max=None, rtol=1e-11, atol=1e-14):
    """Follow z' = DF(z)^-1 v from z(0) = 0 so that F(z(t)) = F(0) + t v.

    ``F`` and ``DF`` take a single point.  Defaults to the full certified
    horizon t_max = C1 C4 r^2.
    """
    v = np.asarray(v, dtype=float)
    nv = np.linalg.norm(v)
    if not np.isclose(nv, 1.0, rtol=1e-12, atol=0.0):
        raise ValueError("direction must be a unit vector")
    horizon = constants.C1 * constants.C4 * constants.r ** 2
    if t_max is None:
        t_max = horizon
    if t_max > horizon * (1 + 1e-12):
        raise ValueError("t_max exceeds the certified horizon C1 C4 r^2")
    floor = constants.r / 4.0

    def rhs(_t, z):
        J = np.asarray(DF(z), dtype=float)
        if abs(np.linalg.det(J)) < floor:
            raise CertificationError("Jacobian determinant fell below r/4 along the path")
        return np.linalg.solve(J, v)

    z0 = np.zeros(constants.d)
    F0 = np.asarray(F(z0), dtype=float)
    if t_max == 0:
        return ReachResult(z0, 0.0, 0.0)
    # scale tolerances to the tiny horizon so relative accuracy is kept
    sol = solve_ivp(rhs, (0.0, t_max), z0, method="RK45", rtol=rtol,
                    atol=atol * t_max, max_step=t_max / 8)
    if not sol.success:
        raise CertificationError(f"path integration failed: {sol.message}")
    zT = sol.y[:, -1]
    res = float(np.linalg.norm(np.asarray(F(zT), dtype=float) - F0 - t_max * v))
    return ReachResult(zT, float(t_max), res)


@dataclass
class ImplicitResult:
    y: np.ndarray
    residual: float
    det: float
    iterations: int


def implicit_solve(G, x0, y0, x_query, constants, DyG=None, tol=1e-12,
                   max_iter=100, check_ball=True, base_tol=1e-8):
    """Solve G(x_query, y) = 0 for y by damped Newton started at y0.

    ``check_ball`` enforces |x_query - x0| < C2 r^2; turn it off to probe
    queries outside the certified ball.
    """
    x0 = np.asarray(x0, dtype=float)
    y = np.array(y0, dtype=float)
    xq = np.asarray(x_query, dtype=float)
    if np.linalg.norm(np.asarray(G(x0, y), dtype=float)) > base_tol:
        raise ValueError("(x0, y0) is not a zero of G")
    if check_ball and np.linalg.norm(xq - x0) >= constants.image_radius:
        raise ValueError("query lies outside the certified ball B(x0, C2 r^2)")

    def jac(yy):
        if DyG is not None:
            return np.asarray(DyG(xq, yy), dtype=float)
        return fd_jacobian(lambda w: G(xq, w), yy, periodic=False)

    g = np.asarray(G(xq, y), dtype=float)
    res = float(np.linalg.norm(g))
    it = 0
    while res > tol:
        if it >= max_iter:
            raise CertificationError(f"Newton did not converge (residual {res:.3e})")
        it += 1
        step = np.linalg.solve(jac(y), -g)
        lam = 1.0
        for _ in range(60):
            y_new = y + lam * step
            g_new = np.asarray(G(xq, y_new), dtype=float)
            r_new = float(np.linalg.norm(g_new))
            if r_new < res:
                break
            lam *= 0.5
        else:
            raise CertificationError(f"damping failed to reduce residual {res:.3e}")
        y, g, res = y_new, g_new, r_new
    return ImplicitResult(y, res, float(np.linalg.det(jac(y))), it)
