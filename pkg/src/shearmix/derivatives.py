"""Forward-mode first and second derivatives of the two-point shear composition.

Variables are w = (x1, x2, y1, y2, xi_0, ..., xi_{L-1}).  Each shear step
updates one coordinate t from its partner s,

    P[t] += A sin(P[s] - xi_k)

so with theta = P[s] - xi_k and dtheta = G[s] - e_{4+k}

    G[t] += A cos(theta) dtheta
    H[t] += A (cos(theta) H[s] - sin(theta) dtheta dtheta^T)

Everything runs on the universal cover; only the returned positions are
wrapped.  All arrays carry arbitrary leading batch axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .flow import amplitude_of, fixed_point_shifts
from .streams import stream
from .torus import TWO_PI, Z_STAR, wrap, wrap_signed

# (target, source) coordinate pairs for horizontal and vertical steps
_PAIRS = (((0, 1), (2, 3)), ((1, 0), (3, 2)))


@dataclass
class DerivativeStack:
    n: int
    position: np.ndarray
    d_state: np.ndarray
    d_shift: np.ndarray
    state_state: np.ndarray | None = None
    shift_shift: np.ndarray | None = None
    state_shift: np.ndarray | None = None
    jacobian: np.ndarray = field(repr=False, default=None)
    hessian: np.ndarray | None = field(repr=False, default=None)


@dataclass(frozen=True)
class BoundReport:
    n: int
    A: float
    order: int
    sampled_sup: float
    paper_envelope_exponent: int
    fitted_exponent: float
    fitted_prefactor: float


def _accumulate(z, xi, A, order):
    z = np.asarray(z, dtype=float)
    xi = np.asarray(xi, dtype=float)
    batch = np.broadcast_shapes(z.shape[:-1], xi.shape[:-1])
    L = xi.shape[-1]
    m = 4 + L
    P = np.array(np.broadcast_to(z, batch + (4,)), dtype=float)
    G = np.zeros(batch + (4, m))
    G[..., range(4), range(4)] = 1.0
    H = np.zeros(batch + (4, m, m)) if order == 2 else None
    xi = np.broadcast_to(xi, batch + (L,))
    for k in range(L):
        v = 4 + k
        for t, s in _PAIRS[k % 2]:
            theta = P[..., s] - xi[..., k]
            c = np.cos(theta)[..., None]
            sn = np.sin(theta)
            dth = G[..., s, :].copy()
            dth[..., v] -= 1.0
            if order == 2:
                H[..., t, :, :] += A * (
                    c[..., None] * H[..., s, :, :]
                    - sn[..., None, None] * dth[..., :, None] * dth[..., None, :]
                )
            G[..., t, :] += A * c * dth
            P[..., t] += A * sn
    return P, G, H


def propagate_derivatives(z, xi, params, order=1):
    """Exact Jacobian (and Hessian if ``order == 2``) of the pair map after len(xi) shears.

    Unlike :func:`flow.flow_pair` any number of steps >= 1 is accepted, so
    odd step counts (ending on a horizontal shear) can be differentiated.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    A = amplitude_of(params)
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] < 1:
        raise ValueError("need at least one shear step")
    P, G, H = _accumulate(z, xi, A, order)
    st = DerivativeStack(
        n=xi.shape[-1],
        position=wrap(P),
        d_state=G[..., :4],
        d_shift=G[..., 4:],
        jacobian=G,
    )
    if order == 2:
        st.hessian = H
        st.state_state = H[..., :4, :4]
        st.shift_shift = H[..., 4:, 4:]
        st.state_shift = H[..., :4, 4:]
    return st


def derivative_envelope(n_steps, params):
    """Entrywise upper bounds on |Jacobian| and |Hessian| valid for every (z, xi).

    Same recurrence as :func:`propagate_derivatives` with |cos|, |sin| <= 1
    and absolute values throughout.
    """
    A = amplitude_of(params)
    m = 4 + n_steps
    G = np.zeros((4, m))
    G[range(4), range(4)] = 1.0
    H = np.zeros((4, m, m))
    for k in range(n_steps):
        v = 4 + k
        for t, s in _PAIRS[k % 2]:
            dth = G[s].copy()
            dth[v] += 1.0
            H[t] += A * (H[s] + np.outer(dth, dth))
            G[t] += A * dth
    return G, H


def shift_c2_bound(n_steps, params):
    """max(1, sup of first and second shift derivatives) over all inputs."""
    G, H = derivative_envelope(n_steps, params)
    return max(1.0, float(G[:, 4:].max()), float(H[:, 4:, 4:].max()))


# -- finite-difference oracles ------------------------------------------------

def _default_step(x, power):
    return np.finfo(float).eps ** power * (1.0 + np.abs(x))


def _eval(f, pts, vectorized):
    if vectorized:
        return np.asarray(f(pts), dtype=float)
    return np.array([np.asarray(f(p), dtype=float) for p in pts])


def fd_jacobian(f, point, h=None, periodic=True, vectorized=False, richardson=True):
    """Central-difference Jacobian with one Richardson refinement.

    Output differences go through ``wrap_signed`` when ``periodic`` so a
    value crossing 0 = 2pi does not produce a spurious jump.
    """
    x = np.asarray(point, dtype=float)
    d = x.size
    if h is None:
        h = _default_step(x, 1.0 / 3.0)
    h = np.broadcast_to(np.asarray(h, dtype=float), (d,))
    if np.any(h <= 0):
        raise ValueError("step must be positive")

    def central(hh):
        E = np.diag(hh)
        pts = np.concatenate([x + E, x - E])
        vals = _eval(f, pts, vectorized)
        diff = vals[:d] - vals[d:]
        if periodic:
            diff = wrap_signed(diff)
        return (diff / (2.0 * hh[:, None])).T

    J = central(h)
    if richardson:
        J = (4.0 * central(h / 2.0) - J) / 3.0
    return J


def fd_hessian(f, point, h=None, periodic=True, vectorized=False, richardson=True):
    """Second differences, shape (outputs, d, d), with one Richardson refinement."""
    x = np.asarray(point, dtype=float)
    d = x.size
    if h is None:
        h = _default_step(x, 0.25)
    h = np.broadcast_to(np.asarray(h, dtype=float), (d,))
    if np.any(h <= 0):
        raise ValueError("step must be positive")

    def second(hh):
        E = np.diag(hh)
        pts = [x]
        idx = {}
        for i in range(d):
            for j in range(i, d):
                for si in (1, -1):
                    for sj in (1, -1):
                        idx[(i, j, si, sj)] = len(pts)
                        pts.append(x + si * E[i] + sj * E[j])
        vals = _eval(f, np.array(pts), vectorized)
        f0 = vals[0]
        rel = vals - f0
        if periodic:
            rel = wrap_signed(rel)
        out = np.empty((vals.shape[1], d, d))
        for i in range(d):
            for j in range(i, d):
                s = (rel[idx[(i, j, 1, 1)]] - rel[idx[(i, j, 1, -1)]]
                     - rel[idx[(i, j, -1, 1)]] + rel[idx[(i, j, -1, -1)]])
                out[:, i, j] = out[:, j, i] = s / (4.0 * hh[i] * hh[j])
        return out

    Hs = second(h)
    if richardson:
        Hs = (4.0 * second(h / 2.0) - Hs) / 3.0
    return Hs


# -- the special point --------------------------------------------------------

def special_jacobian_closed_form(params):
    """Shift Jacobian of four shears at z* = ((0,0),(pi,pi)), xi = 0, in closed form."""
    A = amplitude_of(params)
    A2, A3, A4 = A * A, A ** 3, A ** 4
    return np.array([
        [-A3 - A, -A2, -A, 0.0],
        [-A4 - 2 * A2, -A3 - A, -A2, -A],
        [A3 + A, -A2, A, 0.0],
        [-A4 - 2 * A2, A3 + A, -A2, A],
    ])


def shift_jacobian_at_special_point(params):
    return propagate_derivatives(Z_STAR, np.zeros(4), params).d_shift


def special_point_determinant(params):
    return float(np.linalg.det(shift_jacobian_at_special_point(params)))


def random_points_on_R(rng, size):
    x = rng.uniform(0.0, TWO_PI, (size, 2))
    return np.concatenate([x, wrap(x + math.pi)], axis=-1)


def shift_jacobian_constancy_on_R(samples, params, rng_seed, z=None):
    """Largest entrywise gap between the shift Jacobian at (z, xi^2(z)) and at z*.

    Random z in R are drawn from ``rng_seed`` unless ``z`` is given.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if z is None:
        z = random_points_on_R(stream(rng_seed), samples)
    z = np.atleast_2d(np.asarray(z, dtype=float))
    xi = np.array([fixed_point_shifts(zi, 2) for zi in z])
    J = propagate_derivatives(z, xi, params).d_shift
    ref = shift_jacobian_at_special_point(params)
    return float(np.max(np.abs(J - ref)))


# -- growth of shift derivatives ----------------------------------------------

def _fit(A_list, sups):
    slope, icept = np.polyfit(np.log(A_list), np.log(sups), 1)
    return float(slope), float(math.exp(icept))


def bound_sweep(n_list, A_list, samples=200, rng_seed=0, orders=(1, 2)):
    """Sampled sup of |D_xi Phi_n| and |D_xi D_xi Phi_n| over random inputs.

    ``n`` counts shear steps.  The same (z, xi) draws are reused across
    amplitudes, and for each n a log-log fit across ``A_list`` gives the
    growth exponent stored in every report for that n.
    """
    if not n_list or not A_list:
        raise ValueError("empty sweep")
    reports = []
    for n in n_list:
        rng = stream(rng_seed, n)
        z = rng.uniform(0.0, TWO_PI, (samples, 4))
        xi = rng.uniform(0.0, TWO_PI, (samples, n))
        sups = {o: [] for o in orders}
        for A in A_list:
            st = propagate_derivatives(z, xi, A, order=max(orders))
            if 1 in sups:
                sups[1].append(float(np.max(np.abs(st.d_shift))))
            if 2 in sups:
                sups[2].append(float(np.max(np.abs(st.shift_shift))))
        for o in orders:
            env = n if o == 1 else 2 * n - 1
            if len(A_list) > 1:
                slope, pref = _fit(A_list, sups[o])
            else:
                slope, pref = float("nan"), float("nan")
            for A, s in zip(A_list, sups[o]):
                reports.append(BoundReport(n, float(A), o, s, env, slope, pref))
    return reports
