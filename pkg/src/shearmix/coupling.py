"""Control sequences steering a separated pair onto R, ball chains inside R, and tube bounds.

R is the set of pairs whose displacement y - x equals (pi, pi).  Under a
horizontal shear with shift zeta the horizontal displacement d1 changes by

    A [sin(y2 - zeta) - sin(x2 - zeta)] = 2A sin(d2/2) cos(m2 - zeta)

with d2 the (lifted) vertical displacement and m2 the midpoint of x2 and
y2, and symmetrically for vertical shears.  The planner picks zeta by
inverse cosine so each half-period moves one displacement as far toward
pi as the reachable interval allows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np

from .derivatives import propagate_derivatives
from .flow import amplitude_of, flow_pair, flow_pair_lifted
from .streams import stream
from .torus import (
    Z_STAR, distance_to_R, linf_dist, segment_cover, segment_length,
    separation, wrap, wrap_signed,
)

R_TOL = 1e-9


class PlanError(RuntimeError):
    def __init__(self, msg, best_residual=None):
        super().__init__(msg)
        self.best_residual = best_residual


@dataclass
class CouplingPlan:
    steps: np.ndarray
    N1: int
    terminal: np.ndarray
    residual: float


@dataclass
class BallChain:
    centers: np.ndarray
    radius: float
    N2: int


def n1_bound(A, s_star):
    """ceil(6 pi / (A sin(A^-2 s_star))): the period budget for reaching R."""
    return math.ceil(6.0 * math.pi / (A * math.sin(s_star / A ** 2)))


def _control(p_move, p_src, q_move, q_src, A):
    """Shift that moves wrap(q_move - p_move) as close to pi as one shear allows."""
    d_src = wrap_signed(q_src - p_src)
    reach = 2.0 * A * math.sin(d_src / 2.0)
    if reach == 0.0:
        return 0.0
    mid = p_src + d_src / 2.0
    need = wrap_signed(math.pi - wrap_signed(q_move - p_move))
    return float(wrap(mid - math.acos(min(1.0, max(-1.0, need / reach)))))


def plan_to_R(z, params, s_star=1.0, max_steps=10_000, tol=R_TOL):
    """Greedy shifts driving ``z`` onto R; ``max_steps`` counts periods."""
    A = amplitude_of(params)
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    z = wrap(np.asarray(z, dtype=float))
    sep = separation(z)
    if sep < s_star / A ** 2:
        raise ValueError(f"separation {sep:.3e} below A^-2 s_star = {s_star / A ** 2:.3e}")
    if distance_to_R(z) <= tol:
        return CouplingPlan(np.zeros(0), 0, z.copy(), distance_to_R(z))

    x1, x2, y1, y2 = (float(c) for c in z)
    steps = []
    best = math.inf
    for _ in range(max_steps):
        zh = _control(x1, x2, y1, y2, A)
        x1 = x1 + A * math.sin(x2 - zh)
        y1 = y1 + A * math.sin(y2 - zh)
        zv = _control(x2, x1, y2, y1, A)
        x2 = x2 + A * math.sin(x1 - zv)
        y2 = y2 + A * math.sin(y1 - zv)
        steps += [zh, zv]
        res = distance_to_R(np.array([x1, x2, y1, y2]))
        best = min(best, res)
        if res <= tol:
            xi = np.array(steps)
            terminal = flow_pair(z, xi, A)
            return CouplingPlan(xi, len(steps) // 2, terminal, distance_to_R(terminal))
    raise PlanError(f"no plan within {max_steps} periods (best residual {best:.3e})", best)


def tube_radius(plan, r1, params, rigorous=False):
    """Shift tolerance around the plan.

    The default is A^(-2 N1) r1.  With ``rigorous`` it is r1/((1+A)^(2 N1) - 1):
    each shear moves its output by at most (1+A) times the input error plus
    A times the shift error, and summing over 2 N1 steps gives a bound that
    keeps the terminal within r1 for every shift in the tube.
    """
    A = amplitude_of(params)
    if rigorous:
        return r1 / math.expm1(2 * plan.N1 * math.log1p(A)) if plan.N1 else math.inf
    return A ** (-2 * plan.N1) * r1


def tube_probability(plan, r1, params):
    """log P[uniform shifts fall in the l-inf tube of radius A^(-2 N1) r1 around the plan]."""
    if r1 <= 0:
        raise ValueError("r1 must be positive")
    A = amplitude_of(params)
    N1 = plan.N1
    if N1 == 0:
        return 0.0
    return 2 * N1 * (-2 * N1 * math.log(A) + math.log(r1) - math.log(2.0 * math.pi))


@dataclass
class TubeCertificate:
    radius: float
    max_deviation: float
    linear_bound: float
    holds: bool


def tube_certificate(z, plan, r1, params, draws=100, rng_seed=0, rigorous=False):
    """Perturb the plan's shifts inside its tube and measure how far the terminal moves.

    ``linear_bound`` is radius * max row sum of |D_xi Phi| at the plan,
    the first-order prediction of the worst deviation.
    """
    A = amplitude_of(params)
    rho = tube_radius(plan, r1, A, rigorous)
    if plan.N1 == 0:
        return TubeCertificate(rho, 0.0, 0.0, True)
    rng = stream(rng_seed)
    pert = plan.steps + rng.uniform(-rho, rho, (draws, plan.steps.size))
    imgs = flow_pair(np.asarray(z, dtype=float), pert, A)
    dev = float(np.max(linf_dist(imgs, plan.terminal)))
    J = propagate_derivatives(z, plan.steps, A).d_shift
    lin = float(np.max(np.abs(J).sum(axis=1)) * rho)
    return TubeCertificate(rho, dev, lin, dev <= r1)


def project_to_R(z):
    """Nearest point of R in l-inf: split the displacement error evenly between x and y."""
    z = np.asarray(z, dtype=float)
    err = wrap_signed(z[2:] - math.pi - z[:2])
    x = wrap(z[:2] + err / 2.0)
    return np.concatenate([x, wrap(x + math.pi)])


def ball_chain(z_prime, r1):
    """Chain of l-inf balls of radius r1 on R from the projection of ``z_prime`` to z*."""
    if r1 <= 0:
        raise ValueError("r1 must be positive")
    z_prime = np.asarray(z_prime, dtype=float)
    zr = project_to_R(z_prime)
    if linf_dist(zr, z_prime) > r1:
        raise ValueError("z_prime is farther than r1 from R")
    xs = segment_cover(zr[:2], Z_STAR[:2], r1)
    centers = np.concatenate([xs, wrap(xs + math.pi)], axis=1)
    return BallChain(centers=centers, radius=float(r1), N2=len(xs) - 1)


def chain_length(x, r1):
    """ceil(|x| / r1) with |x| the geodesic distance from x to the origin."""
    return math.ceil(segment_length(x, Z_STAR[:2]) / r1 - 1e-12) if r1 > 0 else None


def linf_overlap_area(c1, c2, r):
    """Area of the intersection of two l-inf balls of radius r in T^2 (r < pi/2)."""
    gap = np.abs(wrap_signed(np.asarray(c2, dtype=float) - np.asarray(c1, dtype=float)))
    return float(np.prod(np.maximum(0.0, 2.0 * r - gap)))


def m_steps(A, s_star, r1):
    """ceil(6pi/(A sin(A^-2 s_star))) + 2 ceil(2pi/r1) + 2 as an exact Python int.

    Arguments may be mpmath numbers (r1 ~ A^-95 underflows nothing here).
    """
    A = mpmath.mpf(A)
    s_star = mpmath.mpf(s_star)
    r1 = mpmath.mpf(r1)
    if A <= 0 or s_star <= 0 or r1 <= 0:
        raise ValueError("A, s_star, r1 must be positive")
    mag = mpmath.log10(2 * mpmath.pi / r1) + mpmath.log10(6 * mpmath.pi * A / s_star)
    dps = 40 + int(max(0, mpmath.ceil(mag)))
    with mpmath.workdps(dps):
        A = mpmath.mpf(A)
        first = mpmath.ceil(6 * mpmath.pi / (A * mpmath.sin(s_star / A ** 2)))
        second = mpmath.ceil(2 * mpmath.pi / r1)
        return int(first) + 2 * int(second) + 2
