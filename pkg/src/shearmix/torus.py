"""Points, distances and balls on T = R/2piZ, T^2 and the off-diagonal pair space.

Angles are plain floats (or numpy arrays of them) kept in the canonical
range [0, 2pi).  A point of T^2 is an array of shape (..., 2) and a pair
state z = (x, y) is an array of shape (..., 4) laid out as
(x1, x2, y1, y2).
"""

from __future__ import annotations

import math

import numpy as np

TWO_PI = 2.0 * math.pi

#: the special pair ((0, 0), (pi, pi))
Z_STAR = np.array([0.0, 0.0, math.pi, math.pi])


def wrap(a):
    """Canonical representative of ``a`` in [0, 2pi)."""
    arr = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("cannot wrap a non-finite angle")
    out = np.mod(arr, TWO_PI)
    # np.mod(-tiny, 2pi) rounds up to exactly 2pi
    out = np.where(out >= TWO_PI, 0.0, out)
    if out.ndim == 0:
        return float(out)
    return out


def wrap_signed(a):
    """Representative of ``a`` in (-pi, pi]; a displacement of exactly pi stays +pi."""
    arr = np.asarray(a, dtype=float)
    out = math.pi - np.mod(math.pi - arr, TWO_PI)
    out = np.where(out <= -math.pi, out + TWO_PI, out)
    if out.ndim == 0:
        return float(out)
    return out


def torus_dist(a, b):
    """Arc-length distance between angles, in [0, pi]."""
    d = np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), TWO_PI)
    out = np.minimum(d, TWO_PI - d)
    if out.ndim == 0:
        return float(out)
    return out


def point_dist_inf(x, y):
    """l-infinity torus distance between points of T^2 (last axis of size 2)."""
    out = np.max(torus_dist(np.asarray(x), np.asarray(y)), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def point_dist_l2(x, y):
    out = np.sqrt(np.sum(torus_dist(np.asarray(x), np.asarray(y)) ** 2, axis=-1))
    return float(out) if np.ndim(out) == 0 else out


def linf_dist(z1, z2):
    """Max over the four angular coordinates of the torus distance."""
    out = np.max(torus_dist(np.asarray(z1), np.asarray(z2)), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def in_ball_inf(center, r, z):
    if r <= 0:
        raise ValueError("ball radius must be positive")
    return linf_dist(center, z) < r


def make_pair(x, y):
    """Stack two torus points into a canonical pair state, rejecting the diagonal."""
    x = wrap(np.asarray(x, dtype=float))
    y = wrap(np.asarray(y, dtype=float))
    if np.any(point_dist_inf(x, y) == 0.0):
        raise ValueError("pair state lies on the diagonal x == y")
    return np.concatenate([np.atleast_1d(x), np.atleast_1d(y)], axis=-1)


def separation(z):
    """l-infinity torus distance |x - y| of a pair state (vectorised over leading axes)."""
    z = np.asarray(z, dtype=float)
    return point_dist_inf(z[..., :2], z[..., 2:])


def displacement(z):
    """Signed displacement wrap(y - x) in (-pi, pi]^2."""
    z = np.asarray(z, dtype=float)
    return wrap_signed(z[..., 2:] - z[..., :2])


def distance_to_R(z):
    """l-infinity distance of the displacement y - x from (pi, pi)."""
    z = np.asarray(z, dtype=float)
    out = np.max(torus_dist(z[..., 2:] - z[..., :2], math.pi), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def segment_cover(start, end, r):
    """Centres spaced exactly ``r`` along the shortest segment from ``start`` towards ``end``.

    ``end`` is lifted to the representative nearest ``start`` in each
    coordinate (a difference of exactly pi is taken in the positive
    direction).  Returns an array of shape (k, 2) with k = ceil(L/r) + 1
    where L is the segment length; the last centre lies within ``r`` of
    ``end``.  A zero-length segment yields the single centre ``start``.
    """
    if r <= 0:
        raise ValueError("spacing must be positive")
    start = wrap(np.asarray(start, dtype=float))
    delta = wrap_signed(np.asarray(end, dtype=float) - start)
    length = float(np.hypot(delta[0], delta[1]))
    if length == 0.0:
        return start[None, :].copy()
    count = math.ceil(length / r - 1e-12) + 1
    steps = np.arange(count)[:, None] * (r / length) * delta[None, :]
    return wrap(start[None, :] + steps)


def segment_length(start, end):
    """Euclidean length of the shortest segment between two points of T^2."""
    delta = wrap_signed(np.asarray(end, dtype=float) - np.asarray(start, dtype=float))
    return float(np.hypot(delta[0], delta[1]))
