import math

import numpy as np
import pytest
from scipy import stats

from shearmix.flow import (
    FlowParams, flow_pair, flow_point, horizontal_shear, inverse_flow_point, kernel_mc,
    kernel_mc_many, sample_shifts, vertical_shear, fixed_point_shifts,
)
from shearmix.torus import TWO_PI, Z_STAR, linf_dist, point_dist_inf, wrap


def rk4_flow(x, xi, A, t_end, h=1e-3):
    """Fixed-step RK4 on the piecewise-constant-in-time velocity field (test oracle)."""
    y = np.array(x, dtype=float)
    for k in range(len(xi)):
        dur = min(1.0, t_end - k)
        if dur <= 0:
            break
        if k % 2 == 0:
            vel = lambda p: np.array([A * math.sin(p[1] - xi[k]), 0.0])
        else:
            vel = lambda p: np.array([0.0, A * math.sin(p[0] - xi[k])])
        m = max(1, int(round(dur / h)))
        dt = dur / m
        for _ in range(m):
            k1 = vel(y)
            k2 = vel(y + dt / 2 * k1)
            k3 = vel(y + dt / 2 * k2)
            k4 = vel(y + dt * k3)
            y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return wrap(y)


def roundoff(A, steps):
    # wrapping at different places perturbs by ~eps, amplified by (1 + A) per shear
    return 64 * np.finfo(float).eps * (1 + A) ** steps


def test_shear_examples():
    assert np.allclose(horizontal_shear([0, math.pi / 2], 0.0, 2.0), [2.0, math.pi / 2])
    assert np.allclose(horizontal_shear([1, 0], 0.0, 5.0), [1.0, 0.0])
    assert np.allclose(horizontal_shear([0, math.pi / 3], math.pi / 3, 7.0), [0.0, math.pi / 3])
    assert np.allclose(vertical_shear([math.pi / 2, 0], 0.0, 2.0), [math.pi / 2, 2.0])
    assert np.allclose(vertical_shear([0, 1], 0.0, 5.0), [0.0, 1.0])


def test_shear_swap_symmetry():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, TWO_PI, (100, 2))
    z = rng.uniform(0, TWO_PI, 100)
    for xx, zz in zip(x, z):
        a = vertical_shear(xx[::-1], zz, 3.0)
        b = horizontal_shear(xx, zz, 3.0)[::-1]
        assert np.allclose(a, b, atol=1e-14)


def test_shear_time_range():
    with pytest.raises(ValueError):
        horizontal_shear([0, 0], 0, 1.0, t=1.5)
    with pytest.raises(ValueError):
        vertical_shear([0, 0], 0, 1.0, t=-0.1)
    with pytest.raises(ValueError):
        FlowParams(-1.0)


def test_flow_point_examples():
    x = np.array([0.0, math.pi / 2])
    assert np.allclose(flow_point(x, [0.0, 0.0], 1.0, t=0.0), x)
    hand = np.array([1.0, math.pi / 2 + math.sin(1.0)])
    assert np.allclose(flow_point(x, [0.0, 0.0], 1.0, t=2.0), hand, atol=1e-15)
    assert np.allclose(rk4_flow(x, [0.0, 0.0], 1.0, 2.0), hand, atol=1e-10)
    with pytest.raises(ValueError):
        flow_point(x, [0.0, 0.0], 1.0, t=2.5)


def test_flow_point_half_steps():
    rng = np.random.default_rng(1)
    x = rng.uniform(0, TWO_PI, 2)
    xi = rng.uniform(0, TWO_PI, 4)
    A = 2.5
    # within one interval the map is linear in t
    half = flow_point(x, xi[:1], A, t=0.5)
    full = flow_point(x, xi[:1], A, t=1.0)
    twice = horizontal_shear(half, xi[0], A, t=0.5)
    assert np.allclose(point_dist_inf(twice, full), 0.0, atol=1e-14)
    # fractional time against the ODE oracle
    ref = rk4_flow(x, xi, A, 2.7)
    assert point_dist_inf(flow_point(x, xi, A, t=2.7), ref) < 1e-9


def test_semigroup_and_inverse():
    rng = np.random.default_rng(2)
    for _ in range(100):
        A = rng.uniform(0.1, 10)
        x = rng.uniform(0, TWO_PI, 2)
        xi = rng.uniform(0, TWO_PI, 6)
        a = flow_point(flow_point(x, xi[:2], A), xi[2:], A)
        b = flow_point(x, xi, A)
        assert point_dist_inf(a, b) < roundoff(A, 4)
        s = flow_point(x, xi, A, t=2.0)
        assert point_dist_inf(flow_point(s, xi[2:], A), b) < roundoff(A, 4)


def test_inverse_round_trip():
    rng = np.random.default_rng(3)
    x = rng.uniform(0, TWO_PI, (10_000, 2))
    xi = rng.uniform(0, TWO_PI, (10_000, 4))
    A = 7.3
    back = flow_point(inverse_flow_point(x, xi, A), xi, A)
    assert np.max(point_dist_inf(back, x)) < roundoff(A, 4)
    assert np.allclose(inverse_flow_point(x, np.zeros((10_000, 0)), A), x)
    one = inverse_flow_point([1.0, 2.0], [0.3], 2.0)
    assert np.allclose(one, wrap(np.array([1.0 - 2.0 * math.sin(2.0 - 0.3), 2.0])))


def test_flow_pair_fixed_point_examples():
    for A in (0.5, 1.0, 7.0):
        assert linf_dist(flow_pair(Z_STAR, [0.0, 0.0], A), Z_STAR) < roundoff(A, 2)
    z = np.array([1.0, 2.0, 1.0 + math.pi, 2.0 + math.pi])
    assert linf_dist(flow_pair(z, [2.0, 1.0], 10.0), z) < 1e-13
    assert np.allclose(fixed_point_shifts(Z_STAR, 2), 0.0)
    a, b = 0.7, 4.1
    assert np.allclose(fixed_point_shifts([a, b, a + math.pi, b + math.pi], 1), [b, a])
    with pytest.raises(ValueError):
        fixed_point_shifts([0, 0, 1, 1], 1)
    with pytest.raises(ValueError):
        fixed_point_shifts(Z_STAR, 3)
    with pytest.raises(ValueError):
        flow_pair(Z_STAR, [0.0], 1.0)


def test_flow_pair_against_ode():
    rng = np.random.default_rng(4)
    z = rng.uniform(0, TWO_PI, 4)
    xi = rng.uniform(0, TWO_PI, 4)
    out = flow_pair(z, xi, 1.0)
    ref = np.concatenate([rk4_flow(z[:2], xi, 1.0, 4.0), rk4_flow(z[2:], xi, 1.0, 4.0)])
    assert linf_dist(out, ref) < 1e-8


def test_fixed_point_moderate_amplitude():
    rng = np.random.default_rng(5)
    x = rng.uniform(0, TWO_PI, (1000, 2))
    z = np.concatenate([x, wrap(x + math.pi)], axis=1)
    for A in (1.0, 2.0, 5.0):
        xi = np.array([fixed_point_shifts(zz, 2) for zz in z])
        assert np.max(linf_dist(flow_pair(z, xi, A), z)) < 1e-12


def test_sample_shifts():
    a = sample_shifts(11, 5)
    assert a.shape == (10,)
    assert np.all((a >= 0) & (a < TWO_PI))
    assert np.array_equal(a, sample_shifts(11, 5))
    assert not np.array_equal(a, sample_shifts(12, 5))
    big = sample_shifts(3, 50_000)
    ks = stats.kstest(big / TWO_PI, "uniform")
    assert ks.statistic < 1.63 / math.sqrt(big.size)  # 1% critical value
    with pytest.raises(ValueError):
        sample_shifts(1, 0)


def test_kernel_mc_trivial_events():
    z = np.array([0.1, 0.2, 2.0, 3.0])
    est = kernel_mc(z, 1, lambda img: np.ones(len(img), bool), 1000, 0, 2.0)
    assert est.probability == 1.0 and est.half_width == 0.0
    est = kernel_mc(z, 1, lambda img: np.zeros(len(img), bool), 1000, 0, 2.0)
    assert est.probability == 0.0


def test_kernel_mc_complement_and_workers():
    z = np.array([0.1, 0.2, 2.0, 3.0])
    ev = lambda img: img[:, 0] < 2.0
    nev = lambda img: ~(img[:, 0] < 2.0)
    p, q = kernel_mc_many(z, 2, [ev, nev], 40_000, 5, 3.0)
    assert p.hits + q.hits == 40_000
    assert p.probability + q.probability == 1.0
    r1 = kernel_mc(z, 2, ev, 40_000, 5, 3.0, workers=1)
    r8 = kernel_mc(z, 2, ev, 40_000, 5, 3.0, workers=8)
    assert r1 == r8


def test_kernel_mc_against_quadrature():
    # n = 1, A = 1, event: x1 of the first point in [1, 2.5)
    z = np.array([0.4, 1.1, 3.0, 5.0])
    A = 1.0
    lo, hi = 1.0, 2.5
    g = (np.arange(512) + 0.5) * TWO_PI / 512
    Z1, Z2 = np.meshgrid(g, g, indexing="ij")
    x1 = z[0] + A * np.sin(z[1] - Z1)
    w1 = wrap(x1)
    quad = np.mean((w1 >= lo) & (w1 < hi))
    est = kernel_mc(z, 1, lambda img: (img[:, 0] >= lo) & (img[:, 0] < hi), 200_000, 9, A)
    assert abs(est.probability - quad) <= 3 * est.half_width


def test_measure_preservation():
    rng = np.random.default_rng(6)
    x = rng.uniform(0, TWO_PI, (1_000_000, 2))
    xi = rng.uniform(0, TWO_PI, 4)
    img = flow_point(x, xi, 3.0)
    h, _, _ = np.histogram2d(img[:, 0], img[:, 1], bins=32, range=[[0, TWO_PI]] * 2)
    chi = stats.chisquare(h.ravel())
    assert chi.pvalue > 0.05 or chi.statistic < stats.chi2.ppf(0.999, 32 * 32 - 1)


def test_pair_contraction_floor():
    rng = np.random.default_rng(7)
    m = 100_000
    z = rng.uniform(0, TWO_PI, (m, 4))
    xi = rng.uniform(0, TWO_PI, (m, 2))
    for Av in (0.5, 3.0, 20.0):
        img = flow_pair(z, xi, Av)
        before = point_dist_inf(z[:, :2], z[:, 2:])
        after = point_dist_inf(img[:, :2], img[:, 2:])
        assert np.all(after >= before / (1 + Av) ** 2 - 1e-12)
