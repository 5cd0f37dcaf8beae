"""Compiled inner loops for grid pullback.

``fsin`` is a branch-light sine (three-part 2pi reduction, reflection to
[-pi/2, pi/2], odd polynomial) that numba can vectorise; libm sin blocks
SIMD and is about 10x slower here.  Accuracy is a few ulp for |x| < 1e4.
"""

import numba
import numpy as np

INV_TWO_PI = 0.15915494309189535
TWO_PI_HI = 6.2831853069365025
TWO_PI_MID = 2.4308402025215864e-10
TWO_PI_LO = 8.089064995183803e-21
PI_HI = 3.141592653589793
PI_LO = 1.2246467991473532e-16
HALF_PI = 1.5707963267948966


@numba.njit(inline="always", cache=True)
def fsin(x):
    k = np.floor(x * INV_TWO_PI + 0.5)
    r = ((x - k * TWO_PI_HI) - k * TWO_PI_MID) - k * TWO_PI_LO
    if r > HALF_PI:
        r = (PI_HI - r) + PI_LO
    elif r < -HALF_PI:
        r = (-PI_HI - r) - PI_LO
    r2 = r * r
    p = 1.9572941063391263e-20
    p = p * r2 - 8.22063524662433e-18
    p = p * r2 + 2.8114572543455206e-15
    p = p * r2 - 7.647163731819816e-13
    p = p * r2 + 1.6059043836821613e-10
    p = p * r2 - 2.505210838544172e-08
    p = p * r2 + 2.7557319223985893e-06
    p = p * r2 - 0.0001984126984126984
    p = p * r2 + 0.008333333333333333
    p = p * r2 - 0.16666666666666666
    return r + r * r2 * p


@numba.njit(cache=True, nogil=True)
def fsin_array(x, out):
    for i in range(x.size):
        out[i] = fsin(x[i])


@numba.njit(cache=True, nogil=True)
def _pull_row(p1, p2, xi, nsteps, A):
    for k in range(nsteps - 1, -1, -1):
        s = xi[k]
        if k % 2 == 0:
            for j in range(p1.size):
                p1[j] -= A * fsin(p2[j] - s)
        else:
            for j in range(p1.size):
                p2[j] -= A * fsin(p1[j] - s)


@numba.njit(cache=True, nogil=True)
def pullback_mode(n, xi, nsteps, A, k1, k2, phase, out):
    """out[i, j] = sin(k . Phi^-1(x_ij) + phase) after the first ``nsteps`` shears."""
    h = 2.0 * np.pi / n
    p1 = np.empty(n)
    p2 = np.empty(n)
    for i in range(n):
        for j in range(n):
            p1[j] = i * h
            p2[j] = j * h
        _pull_row(p1, p2, xi, nsteps, A)
        for j in range(n):
            out[i, j] = fsin(k1 * p1[j] + k2 * p2[j] + phase)


@numba.njit(cache=True, nogil=True)
def pullback_points(n, xi, nsteps, A, q1, q2):
    """Unwrapped pre-images of every grid node after the first ``nsteps`` shears."""
    h = 2.0 * np.pi / n
    p1 = np.empty(n)
    p2 = np.empty(n)
    for i in range(n):
        for j in range(n):
            p1[j] = i * h
            p2[j] = j * h
        _pull_row(p1, p2, xi, nsteps, A)
        for j in range(n):
            q1[i, j] = p1[j]
            q2[i, j] = p2[j]
