"""Passive scalar transport by exact pullback, spectral Sobolev norms and decay fits.

Grids are N x N with node (i, j) at (2 pi i/N, 2 pi j/N) (``indexing='ij'``).
Fourier coefficients follow phi_hat_k = (2 pi)^-2 int phi e^{-i k.x} dx,
approximated by fft2(samples)/N^2, and

    ||phi||_{H^s}^2 = sum_{k != 0} |k|^{2s} |phi_hat_k|^2.

Transport never interpolates: phi_t(x) = phi_0(Phi_t^{-1}(x)) with the
initial field evaluated in closed form at the exact pre-image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from . import _kernels
from .flow import amplitude_of
from .streams import parallel_map, stream
from .torus import TWO_PI, wrap

MEAN_TOL = 1e-12


@dataclass
class ScalarFieldGrid:
    n_grid: int
    samples: np.ndarray
    initial: tuple = None
    mean_removed: float = 0.0
    _spectral: np.ndarray = field(default=None, repr=False)

    @property
    def spectral(self):
        if self._spectral is None:
            self._spectral = scipy.fft.fft2(self.samples) / self.n_grid ** 2
        return self._spectral


@dataclass(frozen=True)
class DecayFit:
    rate: float
    intercept: float
    r_squared: float
    n_points: int


def grid_nodes(n):
    g = TWO_PI * np.arange(n) / n
    return np.meshgrid(g, g, indexing="ij")


def _check_grid(n):
    if n < 2 or n & (n - 1):
        raise ValueError("grid size must be a power of two")


def _band_modes(k_max, rng):
    """Half-plane modes 0 < |k|_inf <= k_max with Gaussian cos/sin amplitudes."""
    modes = [(a, b) for a in range(0, k_max + 1) for b in range(-k_max, k_max + 1)
             if (a > 0 or b > 0)]
    ks = np.array(modes, dtype=float)
    coef = rng.standard_normal((len(modes), 2))
    return ks, coef


def evaluate_initial(initial, p1, p2):
    """phi_0 at arbitrary (unwrapped) points."""
    kind = initial[0]
    if kind == "mode":
        k1, k2, phase = initial[1]
        return np.sin(k1 * p1 + k2 * p2 + phase)
    if kind == "band":
        ks, coef = initial[1], initial[2]
        out = np.zeros(np.broadcast(p1, p2).shape)
        for (k1, k2), (a, b) in zip(ks, coef):
            arg = k1 * p1 + k2 * p2
            out += a * np.cos(arg) + b * np.sin(arg)
        return out
    raise ValueError(f"unknown initial field kind {kind!r}")


def init_field(kind="single_mode", n_grid=256, rng_seed=None, k=(1, 0), k_max=4, phase=0.0):
    """Mean-zero initial data: sin(k.x + phase) or a random band-limited sum."""
    _check_grid(n_grid)
    X, Y = grid_nodes(n_grid)
    if kind == "single_mode":
        k1, k2 = int(k[0]), int(k[1])
        if (k1, k2) == (0, 0):
            raise ValueError("mode (0, 0) is not mean-zero")
        if 2 * max(abs(k1), abs(k2)) > n_grid:
            raise ValueError("mode aliases on this grid")
        initial = ("mode", (float(k1), float(k2), float(phase)))
    elif kind == "random_band_limited":
        if n_grid < 2 * k_max:
            raise ValueError("grid too coarse for k_max (need n_grid >= 2 k_max)")
        if rng_seed is None:
            raise ValueError("random initial data needs a seed")
        ks, coef = _band_modes(int(k_max), stream(rng_seed))
        initial = ("band", ks, coef)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return ScalarFieldGrid(n_grid, evaluate_initial(initial, X, Y), initial)


def transport(fld, xi, params, nsteps=None):
    """Pull the initial field of ``fld`` back through the first ``nsteps`` shears of ``xi``.

    The discrete mean of the result (nonzero only through sampling error)
    is subtracted and stored in ``mean_removed``.
    """
    A = amplitude_of(params)
    xi = np.ascontiguousarray(xi, dtype=float)
    nsteps = xi.size if nsteps is None else int(nsteps)
    if not 0 <= nsteps <= xi.size:
        raise ValueError("nsteps outside the shift sequence")
    if fld.initial is None:
        raise ValueError("field has no closed-form initial data to pull back")
    n = fld.n_grid
    if nsteps == 0:
        return ScalarFieldGrid(n, fld.samples.copy(), fld.initial)
    if fld.initial[0] == "mode":
        k1, k2, ph = fld.initial[1]
        out = np.empty((n, n))
        _kernels.pullback_mode(n, xi, nsteps, A, k1, k2, ph, out)
    else:
        q1 = np.empty((n, n))
        q2 = np.empty((n, n))
        _kernels.pullback_points(n, xi, nsteps, A, q1, q2)
        out = evaluate_initial(fld.initial, wrap(q1), wrap(q2))
    mean = float(out.mean())
    out -= mean
    return ScalarFieldGrid(n, out, fld.initial, mean_removed=mean)


def pullback_reference(fld, xi, params):
    """Numpy pullback with libm sine, used to cross-check the compiled kernel."""
    A = amplitude_of(params)
    X, Y = grid_nodes(fld.n_grid)
    p1, p2 = X.copy(), Y.copy()
    for k in range(len(xi) - 1, -1, -1):
        if k % 2 == 0:
            p1 -= A * np.sin(p2 - xi[k])
        else:
            p2 -= A * np.sin(p1 - xi[k])
    return evaluate_initial(fld.initial, p1, p2), (p1, p2)


def _wavenumbers(n):
    k0 = scipy.fft.fftfreq(n, 1.0 / n)
    k1 = scipy.fft.rfftfreq(n, 1.0 / n)
    K2 = k0[:, None] ** 2 + k1[None, :] ** 2
    w = np.full(k1.size, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    return K2, w


def sobolev_norm(fld, s, mean_tol=MEAN_TOL):
    """(sum_{k != 0} |k|^{2s} |phi_hat_k|^2)^{1/2} on the discrete spectrum."""
    samples = fld.samples if isinstance(fld, ScalarFieldGrid) else np.asarray(fld, dtype=float)
    n = samples.shape[0]
    c = scipy.fft.rfft2(samples) / n ** 2
    K2, w = _wavenumbers(n)
    p = np.abs(c) ** 2 * w[None, :]
    l2 = math.sqrt(float(p.sum()))
    if s < 0 and abs(c[0, 0]) > mean_tol * max(l2, 1e-300):
        raise ValueError("negative Sobolev norm needs mean-zero data")
    p[0, 0] = 0.0
    K2[0, 0] = 1.0
    return math.sqrt(float(np.sum(p * K2 ** s)))


def decay_fit(series):
    """Least squares of log(norm) against time (in periods); rate = -slope."""
    t = np.array([s[0] for s in series], dtype=float)
    y = np.array([s[1] for s in series], dtype=float)
    if len(t) < 3:
        raise ValueError("need at least 3 points")
    if np.any(y <= 0):
        raise ValueError("norms must be positive")
    ly = np.log(y)
    # centred least squares: a constant series gives slope exactly 0
    tc = t - t.mean()
    slope = float(np.dot(tc, ly - ly.mean()) / np.dot(tc, tc))
    icept = float(ly.mean() - slope * t.mean())
    resid = ly - (slope * t + icept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return DecayFit(rate=float(-slope) + 0.0, intercept=float(icept), r_squared=r2, n_points=len(t))


def noise_floor(l2, n):
    """Typical H^-1 of a fully scrambled field sampled on an n x n grid."""
    return l2 * math.sqrt(math.pi * math.log(n / 2)) / n


@dataclass
class TrialResult:
    A: float
    trial: int
    times: list
    h_minus_1: list
    h1_initial: float
    fit: DecayFit
    truncated: bool
    floor: float


def run_trial(fld0, A, xi, n_periods, floor_frac=0.1):
    """H^-1 every half period until it falls below the fit floor.

    Points under the floor are kept only while fewer than 3 points exist,
    so every trial can be fitted.
    """
    h0 = sobolev_norm(fld0, -1)
    l2 = sobolev_norm(fld0, 0)
    floor = max(floor_frac * h0, 10.0 * noise_floor(l2, fld0.n_grid))
    times, vals = [0.0], [h0]
    truncated = False
    for step in range(1, 2 * n_periods + 1):
        h = sobolev_norm(transport(fld0, xi, A, nsteps=step), -1)
        if h < floor and len(times) >= 3:
            truncated = True
            break
        times.append(step / 2.0)
        vals.append(h)
    fit = decay_fit(list(zip(times, vals)))
    return times, vals, fit, truncated, floor


def amplitude_sweep(A_list, trials, n_periods, n_grid, init=("single_mode", {}),
                    rng_seed=0, workers=None, floor_frac=0.1):
    """Per-trial H^-1 decay rates for each amplitude.

    Trial t uses the same shifts for every A and every grid size (stream
    key (t,)), so comparisons across A and N are paired.
    """
    if not A_list:
        raise ValueError("empty amplitude list")
    kind, opts = init
    fld0 = init_field(kind, n_grid, rng_seed=rng_seed, **opts)
    h1 = sobolev_norm(fld0, 1)

    def one(job):
        A, t = job
        xi = stream(rng_seed, 1, t).uniform(0.0, TWO_PI, 2 * n_periods)
        times, vals, fit, trunc, floor = run_trial(fld0, A, xi, n_periods, floor_frac)
        return TrialResult(float(A), t, times, vals, h1, fit, trunc, floor)

    jobs = [(float(A), t) for A in A_list for t in range(trials)]
    return parallel_map(one, jobs, workers)


def sweep_summary(results):
    """Rows (A, mean rate, std, per-trial rates) in input order of amplitudes."""
    out = []
    for A in dict.fromkeys(r.A for r in results):
        rates = np.array([r.fit.rate for r in results if r.A == A])
        out.append((A, float(rates.mean()), float(rates.std(ddof=1)) if rates.size > 1 else 0.0,
                    rates.tolist()))
    return out


def sweep_rows(results):
    """Flat table rows: A, trial, period, h_minus_1, h1_initial, rate, r2."""
    rows = []
    for r in results:
        for t, h in zip(r.times, r.h_minus_1):
            rows.append((r.A, r.trial, t, h, r.h1_initial, r.fit.rate, r.fit.r_squared))
    return rows


def prefactor_stats(rates, intercepts):
    """Descriptive statistics of the fitted prefactors exp(intercept) across trials."""
    if len(rates) < 2 or len(rates) != len(intercepts):
        raise ValueError("need >= 2 trials with matching rates and intercepts")
    D = np.exp(np.asarray(intercepts, dtype=float))
    return {
        "mean": float(D.mean()),
        "median": float(np.median(D)),
        "q10": float(np.quantile(D, 0.1)),
        "q90": float(np.quantile(D, 0.9)),
        "all_finite": bool(np.all(np.isfinite(D))),
    }
