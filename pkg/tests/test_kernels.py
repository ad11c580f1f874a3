import numpy as np
import pytest

from chafee_exit import kernels, pde_core as pc

py = kernels.backend_module("python")
try:
    cy = kernels.backend_module("cython")
except ImportError:  # pragma: no cover
    cy = None

needs_cython = pytest.mark.skipif(cy is None, reason="compiled kernels not built")


@pytest.fixture(scope="module")
def ops():
    return pc.galerkin(32, 128)


def coeffs(ops, h):
    E, P1 = ops.etd_coefficients(h)
    return E, P1, ops.eig, h, ops.B, ops.P


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


def test_plain_step_is_exponential_euler(ops):
    a = np.random.default_rng(0).standard_normal(32) * 0.02
    E, P1, eig, h, B, P = coeffs(ops, 0.01)
    assert 0.01 * 60 * np.max(np.abs(ops.B @ a)) ** 2 < 1
    want = E * a + P1 * (P @ (20 * (B @ a - (B @ a) ** 3)))
    got = a.copy()
    py.etd_advance(got, 1, E, P1, eig, h, B, P, 20.0, 1e6)
    np.testing.assert_allclose(got, want, rtol=1e-14, atol=1e-16)


@needs_cython
@pytest.mark.parametrize("scale", [0.1, 1.0, 30.0, 1000.0])
def test_advance_backends_agree(ops, scale):
    rng = np.random.default_rng(1)
    a = rng.standard_normal(32) / np.arange(1, 33) * scale
    E, P1, eig, h, B, P = coeffs(ops, 0.01)
    x, y = a.copy(), a.copy()
    okx = py.etd_advance(x, 200, E, P1, eig, h, B, P, 20.0, 1e6)
    oky = cy.etd_advance(y, 200, E, P1, eig, h, B, P, 20.0, 1e6)
    assert okx and oky
    np.testing.assert_allclose(x, y, atol=1e-11)


def test_large_state_substeps_converge(ops):
    # A big excursion relaxes to phi+ instead of blowing up.
    a = 1000.0 * pc.basis_vector(1, 32)
    E, P1, eig, h, B, P = coeffs(ops, 0.02)
    assert py.etd_advance(a, 500, E, P1, eig, h, B, P, 20.0, 1e6)
    assert np.max(np.abs(B @ a)) < 1.0


@needs_cython
def test_classify_backends_agree(ops):
    phi, _ = pc.stable_equilibria(pc.ModelParams(dt=0.01))
    E, P1, eig, h, B, P = coeffs(ops, 0.01)
    floor = 1e-3 * np.sin(np.pi * ops.grid)
    rng = np.random.default_rng(2)
    for _ in range(20):
        a = rng.standard_normal(32) / np.arange(1, 33)
        for use_pos in (False, True):
            r1 = py.etd_classify(a.copy(), 5000, E, P1, eig, h, B, P, 20.0, B @ phi, 1e-3, floor, use_pos)
            r2 = cy.etd_classify(a.copy(), 5000, E, P1, eig, h, B, P, 20.0, B @ phi, 1e-3, floor, use_pos)
            assert tuple(r1) == tuple(r2)


def test_classify_zero_unresolved(ops):
    phi, _ = pc.stable_equilibria(pc.ModelParams(dt=0.01))
    E, P1, eig, h, B, P = coeffs(ops, 0.01)
    floor = 1e-3 * np.sin(np.pi * ops.grid)
    code, steps = kernels.etd_classify(np.zeros(32), 100, E, P1, eig, h, B, P, 20.0, B @ phi,
                                       1e-3, floor, True)
    assert code == kernels.UNRESOLVED and steps == 100


@needs_cython
@pytest.mark.parametrize("track", [False, True])
def test_segment_backends_agree(ops, track):
    phi, _ = pc.stable_equilibria(pc.ModelParams(dt=0.01))
    E, P1, eig, h, B, P = coeffs(ops, 0.01)
    rng = np.random.default_rng(3)
    V = np.eye(32)[:2]
    noise = rng.standard_normal((400, 2)) * 0.3
    barrier = B @ phi - 0.5
    out = []
    for mod in (py, cy):
        a = phi.copy()
        dev = phi.copy()
        res = mod.noisy_segment(a, 0, 400, noise, V, 0.1, E, P1, eig, h, B, P, 20.0, 10,
                                barrier, 1, True, dev, track, 10.0, 1e6)
        out.append((tuple(res), a))
    assert out[0][0][:2] == out[1][0][:2]
    assert out[0][0][2] == pytest.approx(out[1][0][2], abs=1e-12)
    np.testing.assert_allclose(out[0][1], out[1][1], atol=1e-12)


def test_segment_without_noise_matches_flow(ops):
    params = pc.ModelParams(dt=0.01)
    a0 = np.random.default_rng(4).standard_normal(32) * 0.1
    E, P1, eig, h, B, P = coeffs(ops, 0.01)
    a = a0.copy()
    s, status, _ = kernels.noisy_segment(a, 0, 50, np.zeros((50, 0)), np.zeros((0, 32)), 0.1,
                                         E, P1, eig, h, B, P, 20.0, 10, np.zeros(128), 1, False,
                                         a.copy(), False, 1.0)
    assert (s, status) == (50, kernels.DONE)
    np.testing.assert_allclose(a, pc.flow(a0, 0.5, params), atol=1e-13)


def test_segment_deviation_stop(ops):
    E, P1, eig, h, B, P = coeffs(ops, 0.01)
    noise = np.zeros((20, 1))
    noise[4, 0] = 10.0
    a = np.zeros(32)
    s, status, dev = kernels.noisy_segment(a, 0, 20, noise, np.eye(32)[:1], 1.0, E, P1, eig, h,
                                           B, P, 20.0, 10, np.zeros(128), 1, False, np.zeros(32),
                                           True, 0.5)
    assert status == kernels.DEV_EXCEEDED and s == 5 and dev >= 0.5


def test_use_backend_roundtrip():
    old = kernels.BACKEND
    assert kernels.use_backend("python") == "python"
    kernels.use_backend(old)
    assert kernels.BACKEND == old
