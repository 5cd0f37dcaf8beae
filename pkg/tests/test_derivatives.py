import math

import numpy as np
import pytest

from shearmix.derivatives import (
    bound_sweep, derivative_envelope, fd_hessian, fd_jacobian, propagate_derivatives,
    shift_c2_bound, shift_jacobian_at_special_point, shift_jacobian_constancy_on_R,
    special_jacobian_closed_form, special_point_determinant,
)
from shearmix.flow import flow_pair_lifted, horizontal_shear
from shearmix.torus import TWO_PI, Z_STAR, wrap


def lifted_map(n, A):
    """w = (z, xi) -> Phi_n(z; xi) on the cover, vectorised over rows of w."""
    def f(w):
        w = np.atleast_2d(w)
        return flow_pair_lifted(w[:, :4], w[:, 4:4 + n], A)
    return f


def rel_err(a, b):
    return float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b))))


def test_single_shear_second_derivative():
    A, xi = 2.3, 0.4
    z = np.array([0.3, 1.7, 2.0, 5.5])
    st = propagate_derivatives(z, [xi], A, order=2)
    assert st.state_state[0, 1, 1] == pytest.approx(-A * math.sin(z[1] - xi), abs=1e-15)
    assert np.allclose(st.d_state[:2, :2], [[1, A * math.cos(z[1] - xi)], [0, 1]])


def test_block_structure():
    rng = np.random.default_rng(0)
    for n in range(1, 9):
        z = rng.uniform(0, TWO_PI, (20, 4))
        xi = rng.uniform(0, TWO_PI, (20, n))
        A = rng.uniform(0.1, 10)
        st = propagate_derivatives(z, xi, A, order=2)
        J = st.d_state
        assert np.allclose(np.linalg.det(J[:, :2, :2]), 1.0, atol=1e-10)
        assert np.allclose(np.linalg.det(J[:, 2:, 2:]), 1.0, atol=1e-10)
        assert np.all(J[:, :2, 2:] == 0) and np.all(J[:, 2:, :2] == 0)
        H = st.state_state
        # no second partials mixing x and y
        assert np.all(H[:, :, :2, 2:] == 0) and np.all(H[:, :, 2:, :2] == 0)
        assert np.allclose(H, np.swapaxes(H, -1, -2))


def test_chain_rule_composition():
    rng = np.random.default_rng(1)
    A = 1.7
    z = rng.uniform(0, TWO_PI, 4)
    xi1 = rng.uniform(0, TWO_PI, 4)
    xi2 = rng.uniform(0, TWO_PI, 2)
    a = propagate_derivatives(z, xi1, A)
    b = propagate_derivatives(a.position, xi2, A)
    full = propagate_derivatives(z, np.concatenate([xi1, xi2]), A)
    assert np.allclose(full.d_state, b.d_state @ a.d_state, atol=1e-10)
    assert np.allclose(full.d_shift[:, :4], b.d_state @ a.d_shift, atol=1e-10)
    assert np.allclose(full.d_shift[:, 4:], b.d_shift, atol=1e-10)


def test_order_validation():
    with pytest.raises(ValueError):
        propagate_derivatives(Z_STAR, [0.0, 0.0], 1.0, order=3)
    with pytest.raises(ValueError):
        propagate_derivatives(Z_STAR, [], 1.0)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_against_finite_differences(n):
    rng = np.random.default_rng(10 + n)
    worst1 = worst2 = 0.0
    for i in range(20):
        A = rng.uniform(0.5, 5.0)
        w = np.concatenate([rng.uniform(0, TWO_PI, 4), rng.uniform(0, TWO_PI, n)])
        f = lifted_map(n, A)
        st = propagate_derivatives(w[:4], w[4:], A, order=2)
        J = fd_jacobian(f, w, periodic=False, vectorized=True)
        worst1 = max(worst1, rel_err(st.jacobian, J))
        H = fd_hessian(f, w, periodic=False, vectorized=True)
        worst2 = max(worst2, rel_err(st.hessian, H))
    assert worst1 < 1e-6
    assert worst2 < 1e-5


def test_fd_jacobian_basics():
    x = np.array([0.3, -1.2, 2.0])
    assert np.allclose(fd_jacobian(lambda p: p, x, periodic=False), np.eye(3), atol=1e-10)
    A, zeta = 3.0, 0.7
    p = np.array([0.5, 1.1])
    J = fd_jacobian(lambda q: horizontal_shear(q, zeta, A), p)
    assert np.allclose(J, [[1, A * math.cos(p[1] - zeta)], [0, 1]], atol=1e-9)
    # output crossing 0 = 2pi is handled through the nearest lift
    q = np.array([TWO_PI - 1e-7, 0.2])
    assert np.allclose(fd_jacobian(lambda v: wrap(v), q), np.eye(2), atol=1e-8)
    with pytest.raises(ValueError):
        fd_jacobian(lambda v: v, x, h=0.0)
    g = lambda v: np.array([math.exp(v[0]) * math.sin(v[1])])
    exact = [[math.exp(0.3) * math.sin(-1.2), math.exp(0.3) * math.cos(-1.2), 0.0]]
    assert np.allclose(fd_jacobian(g, x, periodic=False), exact, atol=1e-9)


def test_special_point_matrix():
    ref1 = np.array([[-2, -1, -1, 0], [-3, -2, -1, -1], [2, -1, 1, 0], [-3, 2, -1, 1]], float)
    assert np.array_equal(shift_jacobian_at_special_point(1.0), ref1)
    J2 = shift_jacobian_at_special_point(2.0)
    assert J2[0, 0] == -10 and J2[1, 0] == -24
    for A in (1.0, 2.0, 5.0, 10.0, 50.0):
        J = shift_jacobian_at_special_point(A)
        C = special_jacobian_closed_form(A)
        assert np.max(np.abs(J - C)) <= 1e-10 * max(1.0, np.max(np.abs(C)))
        assert abs(special_point_determinant(A) + 4 * A ** 6) <= 1e-10 * 4 * A ** 6
    assert special_point_determinant(1.0) == pytest.approx(-4, rel=1e-12)
    assert special_point_determinant(2.0) == pytest.approx(-256, rel=1e-12)
    assert special_point_determinant(3.0) == pytest.approx(-2916, rel=1e-12)


def test_special_matrix_against_fd():
    for A in (1.0, 2.0):
        f = lambda xi: flow_pair_lifted(Z_STAR, xi, A)
        J = fd_jacobian(f, np.zeros(4), periodic=False, vectorized=True)
        assert np.allclose(J, special_jacobian_closed_form(A), atol=1e-8 * A ** 4)


def test_constancy_on_R():
    for A in (1.0, 2.0, 5.0, 10.0):
        assert shift_jacobian_constancy_on_R(1000, A, rng_seed=3) < 1e-9
    assert shift_jacobian_constancy_on_R(1, 3.0, 0, z=Z_STAR) == 0.0
    rng = np.random.default_rng(4)
    x = rng.uniform(0, TWO_PI, 2)
    z = np.array([*x, *wrap(x + math.pi)])
    t = rng.uniform(0, TWO_PI, 2)
    zt = wrap(z + np.tile(t, 2))
    a = shift_jacobian_constancy_on_R(1, 2.0, 0, z=z)
    b = shift_jacobian_constancy_on_R(1, 2.0, 0, z=zt)
    assert abs(a - b) < 1e-12


def test_envelope_dominates_samples():
    rng = np.random.default_rng(5)
    for n in (1, 2, 3, 4):
        A = 3.0
        G, H = derivative_envelope(n, A)
        st = propagate_derivatives(rng.uniform(0, TWO_PI, (500, 4)),
                                   rng.uniform(0, TWO_PI, (500, n)), A, order=2)
        assert np.all(np.abs(st.jacobian) <= G + 1e-9)
        assert np.all(np.abs(st.hessian) <= H + 1e-9)
    assert shift_c2_bound(1, 0.5) == 1.0


def test_bound_sweep_small():
    reps = bound_sweep([1], [3.0], samples=2000, rng_seed=0, orders=(1,))
    # single shear: |d/dxi (A sin(x2 - xi))| = A |cos|, sup approaches A
    assert reps[0].sampled_sup <= 3.0
    assert reps[0].sampled_sup > 3.0 * (1 - 1e-3)
    with pytest.raises(ValueError):
        bound_sweep([], [1.0])
    reps = bound_sweep([2, 3], [4.0, 8.0, 16.0, 32.0], samples=50, rng_seed=1)
    assert all(r.sampled_sup >= 0 for r in reps)
    again = bound_sweep([2, 3], [4.0, 8.0, 16.0, 32.0], samples=50, rng_seed=1)
    assert reps == again

