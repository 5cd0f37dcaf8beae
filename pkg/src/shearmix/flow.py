"""Exact alternating sine-shear maps on T^2 and the two-point chain.

One unit of time is one shear.  Shift ``xi[k]`` drives step ``k``: even
steps shear horizontally, x1 += A sin(x2 - xi[k]); odd steps shear
vertically, x2 += A sin(x1 - xi[k]).  A period is two steps, so a shift
sequence for n periods has length 2n.

Within a step the moving coordinate depends only on the frozen one, so
the time-t map is the closed-form update scaled by t.  No ODE solver is
involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np

from .streams import BLOCK, blocks, parallel_map, stream
from .torus import TWO_PI, distance_to_R, wrap

Z95 = 1.959963984540054


@dataclass(frozen=True)
class FlowParams:
    amplitude: float

    def __post_init__(self):
        if not (math.isfinite(self.amplitude) and self.amplitude > 0):
            raise ValueError(f"amplitude must be positive and finite, got {self.amplitude!r}")


@dataclass(frozen=True)
class KernelEstimate:
    probability: float
    half_width: float
    samples: int
    hits: int

    @property
    def lower(self):
        return max(0.0, self.probability - self.half_width)


def amplitude_of(params):
    A = params.amplitude if isinstance(params, FlowParams) else float(params)
    if not (math.isfinite(A) and A > 0):
        raise ValueError(f"amplitude must be positive and finite, got {A!r}")
    return A


def _check_step_time(t):
    if not (0.0 <= t <= 1.0):
        raise ValueError(f"step time must lie in [0, 1], got {t!r}")


def horizontal_shear(x, zeta, params, t=1.0):
    """(x1 + t A sin(x2 - zeta), x2), wrapped."""
    _check_step_time(t)
    A = amplitude_of(params)
    x = np.asarray(x, dtype=float)
    out = x.copy()
    out[..., 0] = x[..., 0] + t * A * np.sin(x[..., 1] - zeta)
    return wrap(out)


def vertical_shear(x, zeta, params, t=1.0):
    """(x1, x2 + t A sin(x1 - zeta)), wrapped."""
    _check_step_time(t)
    A = amplitude_of(params)
    x = np.asarray(x, dtype=float)
    out = x.copy()
    out[..., 1] = x[..., 1] + t * A * np.sin(x[..., 0] - zeta)
    return wrap(out)


def lifted_steps(p1, p2, xi, A, start=0, sign=1.0):
    """Apply shear steps to coordinate arrays on the universal cover.

    ``p1``/``p2`` hold first/second coordinates of any number of points;
    ``xi`` has shape (..., L) and broadcasts against them after its last
    axis is consumed.  Returns new (p1, p2) without wrapping.
    """
    xi = np.asarray(xi, dtype=float)
    for k in range(xi.shape[-1]):
        s = xi[..., k]
        if (start + k) % 2 == 0:
            p1 = p1 + sign * A * np.sin(p2 - s)
        else:
            p2 = p2 + sign * A * np.sin(p1 - s)
    return p1, p2


def flow_point(x, xi, params, t=None):
    """Position at time ``t`` (default: end of ``xi``) of the flow started at ``x``."""
    A = amplitude_of(params)
    xi = np.asarray(xi, dtype=float)
    L = xi.shape[-1]
    if t is None:
        t = float(L)
    if not (0.0 <= t <= L):
        raise ValueError(f"time {t!r} outside [0, {L}]")
    x = np.asarray(x, dtype=float)
    full = min(int(math.floor(t)), L)
    frac = t - full
    p1, p2 = lifted_steps(x[..., 0], x[..., 1], xi[..., :full], A)
    if frac > 0:
        s = xi[..., full]
        if full % 2 == 0:
            p1 = p1 + frac * A * np.sin(p2 - s)
        else:
            p2 = p2 + frac * A * np.sin(p1 - s)
    return wrap(np.stack([p1, p2], axis=-1))


def inverse_flow_point(x, xi, params):
    """Pre-image of ``x`` under the full shear composition driven by ``xi``."""
    A = amplitude_of(params)
    xi = np.asarray(xi, dtype=float)
    x = np.asarray(x, dtype=float)
    p1, p2 = x[..., 0], x[..., 1]
    for k in range(xi.shape[-1] - 1, -1, -1):
        s = xi[..., k]
        if k % 2 == 0:
            p1 = p1 - A * np.sin(p2 - s)
        else:
            p2 = p2 - A * np.sin(p1 - s)
    return wrap(np.stack([p1, p2], axis=-1))


def flow_pair_lifted(z, xi, params):
    """Two-point flow on the universal cover (no wrapping); broadcasts ``z`` against ``xi``."""
    A = amplitude_of(params)
    z = np.asarray(z, dtype=float)
    xi = np.asarray(xi, dtype=float)
    x1, x2 = lifted_steps(z[..., 0], z[..., 1], xi, A)
    y1, y2 = lifted_steps(z[..., 2], z[..., 3], xi, A)
    return np.stack(np.broadcast_arrays(x1, x2, y1, y2), axis=-1)


def flow_pair(z, xi, params):
    """Apply the same shear sequence to both points of ``z``."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] == 0 or xi.shape[-1] % 2:
        raise ValueError("two-point flow needs a nonempty, even-length shift sequence")
    return wrap(flow_pair_lifted(z, xi, params))


def fixed_point_shifts(z, periods=2, tol=1e-9):
    """Shifts (x2, x1, ...) that return a pair with displacement (pi, pi) to itself."""
    if periods not in (1, 2):
        raise ValueError("periods must be 1 or 2")
    z = np.asarray(z, dtype=float)
    if distance_to_R(z) > tol:
        raise ValueError("pair is not in R: displacement differs from (pi, pi)")
    return np.array([z[1], z[0]] * periods, dtype=float)


def sample_shifts(rng_seed, n):
    """2n i.i.d. uniform phases for n periods, reproducible from the seed."""
    if n < 1:
        raise ValueError("need at least one period")
    return wrap(stream(rng_seed).uniform(0.0, TWO_PI, 2 * n))


def _estimate(hits, samples):
    p = hits / samples
    hw = min(1.0, Z95 * math.sqrt(p * (1.0 - p) / samples))
    return KernelEstimate(probability=p, half_width=hw, samples=samples, hits=hits)


def kernel_mc_many(z, n, events, samples, rng_seed, params, workers=None, key=()):
    """Monte Carlo estimates of P^n(z, E) for several events on shared shift draws.

    Each event is a vectorised predicate taking an (m, 4) array of pair
    states and returning m booleans.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    A = amplitude_of(params)
    z = np.asarray(z, dtype=float)
    events = list(events)

    def run(block):
        b, size = block
        rng = stream(rng_seed, *key, b)
        xi = rng.uniform(0.0, TWO_PI, (size, 2 * n))
        img = wrap(flow_pair_lifted(z, xi, A))
        return [int(np.count_nonzero(ev(img))) for ev in events]

    counts = parallel_map(run, blocks(samples, BLOCK), workers)
    totals = [sum(c[i] for c in counts) for i in range(len(events))]
    return [_estimate(h, samples) for h in totals]


def kernel_mc(z, n, event, samples, rng_seed, params, workers=None, key=()):
    """Monte Carlo estimate of P^n(z, E) = P[Phi_2n(z) in E]."""
    return kernel_mc_many(z, n, [event], samples, rng_seed, params, workers, key)[0]


def pair_on_R_extended(x, dps=30):
    """(x, x + (pi, pi)) with the translate formed in ``dps``-digit arithmetic.

    A pair in R cannot be stored in binary64 (y - x misses pi by about an
    ulp) and the fixed point is hyperbolic, so double-precision checks of
    the fixed-point identity lose roughly A^4 ulp.  This builds the pair
    at extended precision instead.
    """
    with mpmath.workdps(dps):
        two_pi = 2 * mpmath.pi
        x1, x2 = (mpmath.mpf(float(c)) for c in x)
        return [x1, x2, (x1 + mpmath.pi) % two_pi, (x2 + mpmath.pi) % two_pi]


def flow_pair_extended(z, xi, params, dps=30):
    """Two-point flow in mpmath at ``dps`` digits; returns wrapped mpf coordinates."""
    A = amplitude_of(params)
    if len(xi) == 0 or len(xi) % 2:
        raise ValueError("two-point flow needs a nonempty, even-length shift sequence")
    with mpmath.workdps(dps):
        Am = mpmath.mpf(A)
        x1, x2, y1, y2 = (mpmath.mpf(c) for c in z)
        for k, s in enumerate(xi):
            s = mpmath.mpf(s)
            if k % 2 == 0:
                x1 += Am * mpmath.sin(x2 - s)
                y1 += Am * mpmath.sin(y2 - s)
            else:
                x2 += Am * mpmath.sin(x1 - s)
                y2 += Am * mpmath.sin(y1 - s)
        two_pi = 2 * mpmath.pi
        return [c % two_pi for c in (x1, x2, y1, y2)]


def extended_linf_dist(z1, z2, dps=30):
    """Torus l-inf distance between two mpf pair states."""
    with mpmath.workdps(dps):
        two_pi = 2 * mpmath.pi
        out = mpmath.mpf(0)
        for a, b in zip(z1, z2):
            d = (mpmath.mpf(a) - mpmath.mpf(b)) % two_pi
            out = max(out, min(d, two_pi - d))
        return out
