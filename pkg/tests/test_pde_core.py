import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, sparse
from scipy.sparse.linalg import splu

from chafee_exit import pde_core as pc


def smooth_field(rng, n=32, decay=3.0, scale=1.0):
    k = np.arange(1, n + 1)
    return scale * rng.standard_normal(n) / k**decay


def rk4_galerkin(a, t, params, h):
    """Classical RK4 on da/dt = -L a + P f(B a)."""
    ops = pc.galerkin(params.n_modes, params.grid_points)
    rhs = lambda x: -ops.eig * x + ops.P @ (params.lam * ((ops.B @ x) - (ops.B @ x) ** 3))
    n = int(round(t / h))
    x = np.array(a, dtype=float)
    for _ in range(n):
        k1 = rhs(x)
        k2 = rhs(x + 0.5 * h * k1)
        k3 = rhs(x + 0.5 * h * k2)
        k4 = rhs(x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


# -- model validation --------------------------------------------------------

def test_params_reject_small_lambda():
    with pytest.raises(ValueError, match="pi"):
        pc.ModelParams(lam=9.0)


def test_params_reject_resonant_lambda():
    with pytest.raises(ValueError, match="coincides"):
        pc.ModelParams(lam=4 * math.pi**2)


def test_params_default_grid():
    p = pc.ModelParams(n_modes=16)
    assert p.grid_points == 64
    with pytest.raises(ValueError):
        pc.ModelParams(n_modes=16, grid_points=40)


# -- semigroup ---------------------------------------------------------------

def test_semigroup_identity():
    a = np.random.default_rng(0).standard_normal(32)
    np.testing.assert_array_equal(pc.apply_semigroup(a, 0.0), a)


def test_semigroup_first_mode():
    out = pc.apply_semigroup(pc.basis_vector(1, 32), 0.1)
    # exp(-pi^2 / 10) = 0.3727078...
    assert out[0] == pytest.approx(math.exp(-math.pi**2 * 0.1), rel=1e-15)
    assert out[0] == pytest.approx(0.372708, abs=5e-7)
    np.testing.assert_array_equal(out[1:], 0.0)


def test_semigroup_negative_time():
    with pytest.raises(ValueError):
        pc.apply_semigroup(np.zeros(4), -1.0)


def test_semigroup_matches_finite_differences():
    # Crank-Nicolson on a fine second-order finite difference grid.
    a = smooth_field(np.random.default_rng(1))
    m, t, n_steps = 2000, 0.05, 5000
    h = 1.0 / (m + 1)
    z = np.arange(1, m + 1) * h
    lap = sparse.diags([np.ones(m - 1), -2 * np.ones(m), np.ones(m - 1)], [-1, 0, 1]) / h**2
    k = t / n_steps
    eye = sparse.identity(m)
    solve = splu((eye - 0.5 * k * lap).tocsc()).solve
    rhs = (eye + 0.5 * k * lap).tocsr()
    u = pc.evaluate(a, z)
    for _ in range(n_steps):
        u = solve(rhs @ u)
    u_sp = pc.evaluate(pc.apply_semigroup(a, t), z)
    assert np.max(np.abs(u - u_sp)) < 1e-6


@given(st.floats(0, 0.2), st.floats(0, 0.2), st.integers(0, 10_000))
def test_semigroup_law(s, t, seed):
    a = np.random.default_rng(seed).standard_normal(32)
    lhs = pc.apply_semigroup(pc.apply_semigroup(a, s), t)
    rhs = pc.apply_semigroup(a, s + t)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-300)


# -- nonlinearity ------------------------------------------------------------

def test_nonlinearity_zero(params):
    np.testing.assert_array_equal(pc.nonlinearity(np.zeros(32), params), 0.0)


def test_reaction_pointwise():
    assert pc.reaction(1.0, 20.0) == 0.0
    assert pc.reaction(0.5, 10.0) == pytest.approx(3.75)


def test_nonlinearity_is_exact_projection(params):
    # Quadrature oracle: <f(u), e_k> by adaptive integration.
    rng = np.random.default_rng(2)
    a = smooth_field(rng, decay=2.0, scale=0.5)
    got = pc.nonlinearity(a, params)
    for k in (1, 2, 5, 17, 32):
        f = lambda z: pc.reaction(pc.evaluate(a, np.array([z]))[0], params.lam) * math.sqrt(2) * math.sin(k * math.pi * z)
        ref, _ = integrate.quad(f, 0, 1, limit=400, epsabs=1e-13)
        assert got[k - 1] == pytest.approx(ref, abs=1e-10)


# -- norms and evaluation ----------------------------------------------------

def test_boundary_values_vanish():
    a = np.random.default_rng(3).standard_normal(32)
    np.testing.assert_array_equal(pc.evaluate(a, np.array([0.0, 1.0])), 0.0)


@given(st.integers(0, 10_000))
@settings(max_examples=50)
def test_norm_ordering(seed):
    a = smooth_field(np.random.default_rng(seed), decay=1.5)
    l2 = pc.l2_norm(a)
    sup = pc.sup_norm(a)
    hn = pc.h_norm(a)
    assert l2 <= sup * (1 + 1e-9) + 1e-12
    assert sup <= hn * (1 + 1e-9) + 1e-12


# -- flow --------------------------------------------------------------------

def test_flow_fixed_point(fine_params):
    phi, _ = pc.stable_equilibria(fine_params)
    for t in (0.5, 2.0, 10.0):
        assert pc.h_norm(pc.flow(phi, t, fine_params) - phi) <= 1e-6


def test_flow_zero_stays_zero(fine_params):
    np.testing.assert_array_equal(pc.flow(np.zeros(32), 3.0, fine_params), 0.0)


def test_flow_matches_rk4_at_unit_time(fine_params):
    rng = np.random.default_rng(4)
    a = smooth_field(rng, scale=0.3)
    a[0] = abs(a[0]) + 0.3
    ref = rk4_galerkin(a, 1.0, fine_params, h=1e-4)
    got = pc.flow(a, 1.0, fine_params)
    ops = pc.galerkin(32, 128)
    assert np.max(np.abs(ops.B @ (got - ref))) < 1e-6


def test_flow_first_order_in_dt():
    # At t = 0.05 the state is still in transit; halving dt halves the error.
    rng = np.random.default_rng(5)
    a = smooth_field(rng, scale=0.5)
    a[0] += 0.5
    p = pc.ModelParams(dt=1e-3)
    ref = rk4_galerkin(a, 0.05, p, h=2e-5)
    errs = [pc.h_norm(pc.flow(a, 0.05, pc.ModelParams(dt=dt)) - ref) for dt in (2e-3, 1e-3, 5e-4)]
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.15)
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.15)


def test_flow_final_partial_step(fine_params):
    a = np.random.default_rng(6).standard_normal(32) * 0.1
    one = pc.flow(a, 0.0105, fine_params)
    two = pc.flow(pc.flow(a, 0.010, fine_params), 0.0005, fine_params)
    np.testing.assert_allclose(one, two, atol=1e-14)


def test_flow_rejects_negative_time(params):
    with pytest.raises(ValueError):
        pc.flow(np.zeros(32), -0.1, params)


@given(st.integers(0, 10_000), st.floats(0.01, 1.0))
@settings(max_examples=25, deadline=None)
def test_flow_odd_symmetry(seed, t):
    p = pc.ModelParams(dt=0.01)
    a = smooth_field(np.random.default_rng(seed), scale=2.0)
    np.testing.assert_allclose(pc.flow(-a, t, p), -pc.flow(a, t, p), atol=1e-12)


def test_large_state_does_not_blow_up(params):
    a = 200.0 * pc.basis_vector(1, 32) + 50.0 * pc.basis_vector(3, 32)
    out = pc.flow(a, 5.0, params)
    phi, _ = pc.stable_equilibria(params)
    assert pc.h_norm(out - phi) < 1e-6


# -- equilibria --------------------------------------------------------------

def shooting_count(lam, n=400):
    """Number of Dirichlet solutions of u'' + lam (u - u^3) = 0 by shooting on u'(0).

    Bounded orbits need u'(0)^2 / 2 < lam / 4, so the scan stops at sqrt(lam / 2).
    All shots are integrated together as one vector ODE.
    """
    grid = np.linspace(1e-3, math.sqrt(lam / 2) * (1 - 1e-6), n)

    def rhs(z, y):
        u, v = y[:n], y[n:]
        return np.concatenate([v, -lam * (u - u**3)])
    sol = integrate.solve_ivp(rhs, (0, 1), np.concatenate([np.zeros(n), grid]), rtol=1e-9, atol=1e-11)
    vals = sol.y[:n, -1]
    positive = int(np.sum(np.sign(vals[1:]) != np.sign(vals[:-1])))
    return 1 + 2 * positive


@pytest.mark.parametrize("lam", [12.0, 20.0, 30.0, 38.0])
def test_three_equilibria_below_second_eigenvalue(lam):
    p = pc.ModelParams(lam=lam, dt=0.01)
    found = pc.find_equilibria(p)
    assert len(found.equilibria) == 3 == shooting_count(lam)
    assert not found.failures


def test_equilibria_properties(fine_params):
    found = pc.find_equilibria(fine_params)
    eq = found.equilibria
    zero = [a for a in eq if pc.h_norm(a) == 0]
    assert len(zero) == 1
    assert pc.h_norm(pc.residual(zero[0], fine_params)) == 0.0
    for a in eq:
        assert pc.h_norm(pc.residual(a, fine_params)) < 1e-8
        assert pc.sup_norm(a) < 1.0
    plus = found.phi_plus
    assert pc.mean_value(plus) > 0
    minus = [a for a in eq if pc.mean_value(a) < 0][0]
    np.testing.assert_allclose(minus, -plus, atol=1e-12)


def test_phi_plus_matches_shooting_profile(fine_params):
    lam = fine_params.lam

    def end(s):
        return integrate.solve_ivp(lambda z, y: [y[1], -lam * (y[0] - y[0] ** 3)], (0, 1), [0.0, s],
                                   rtol=1e-12, atol=1e-13, dense_output=True)
    from scipy.optimize import brentq
    s = brentq(lambda s: end(s).y[0, -1], 1.0, 10.0, xtol=1e-14)
    sol = end(s)
    z = np.linspace(0.05, 0.95, 19)
    phi = pc.find_equilibria(fine_params).phi_plus
    np.testing.assert_allclose(pc.evaluate(phi, z), sol.sol(z)[0], atol=1e-7)


def test_newton_failure_reported(fine_params, caplog):
    res = pc.newton_equilibrium(np.full(32, 1e6), fine_params, max_iter=3)
    assert not res[1]


# -- energy ------------------------------------------------------------------

def test_energy_zero(params):
    assert pc.energy(np.zeros(32), params) == 0.0


def test_energy_symmetric(fine_params):
    phi, minus = pc.stable_equilibria(fine_params)
    assert pc.energy(phi, fine_params) == pytest.approx(pc.energy(minus, fine_params), abs=1e-14)


def test_energy_non_increasing_along_fine_trajectory(fine_params):
    rng = np.random.default_rng(7)
    a = smooth_field(rng, decay=1.5, scale=1.5)
    traj = pc.trajectory(a, 1.0, fine_params)
    e = np.array([pc.energy(x, fine_params) for x in traj])
    assert np.all(np.diff(e) <= 1e-9)
    # oracle: the RK4 solution at t = 1 has the same energy to within the flow tolerance
    ref = rk4_galerkin(a, 1.0, fine_params, h=1e-4)
    assert e[-1] == pytest.approx(pc.energy(ref, fine_params), abs=1e-6)


# -- relaxation --------------------------------------------------------------

def test_relaxation_time_zero_when_inside(params):
    phi, _ = pc.stable_equilibria(params)
    assert pc.relaxation_time(phi, phi, 1e-3, params) == 0.0


def test_relaxation_time_infinite_from_zero(params):
    phi, _ = pc.stable_equilibria(params)
    assert pc.relaxation_time(np.zeros(32), phi, 1e-3, params, t_max=1.0) == math.inf


def test_fit_affine():
    b0, b1 = pc.fit_affine([0, 1, 2], [1, 3, 5])
    assert b0 == pytest.approx(1.0) and b1 == pytest.approx(2.0)
