import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from axongrowth import backstepping as bk
from axongrowth.model import ErrorState, uniform_grid


def smooth(N, l):
    x = uniform_grid(N) * l
    return 1e-3 * np.sin(3 * x / l) + 2e-3 * np.cos(x / l)


def test_phi_at_zero(km, dc):
    phi, dphi = bk.phi_eval(km, 0.0)
    np.testing.assert_allclose(phi, dc.H, rtol=1e-12, atol=0)
    np.testing.assert_allclose(dphi, km.phi0_row[2:], rtol=1e-12, atol=0)


@pytest.mark.parametrize("x", [0.0, 1e-6, 7.3e-6, 12e-6])
def test_kernel_diagonal(km, bio, x):
    assert bk.kernel_k(km, x, x) == pytest.approx(1.0 / bio.l_c, rel=1e-12)


def test_kernel_ode_residual(km):
    s = np.linspace(-km.l_bar, 0.0, 2001)
    assert bk.kernel_ode_residual(km, s).max() <= 1e-8


def test_interpolation_between_nodes(km):
    for i in (10, 2000, 4000):
        s = 0.5 * (km.s_nodes[i] + km.s_nodes[i + 1])
        exact = km.row_exact(s)
        assert np.abs(bk.phi_rows(km, s)[0] - exact).max() <= 1e-8 * np.abs(exact).max()


def test_kernel_depends_on_difference(km):
    assert bk.kernel_k(km, 0.0, 2e-6) == pytest.approx(bk.kernel_k(km, 3e-6, 5e-6), rel=1e-14)


def test_closed_loop_hurwitz(dc):
    assert bk.GainConfig().is_hurwitz(dc)


def test_gain_condition(dc, bio):
    with pytest.raises(bk.GainConditionViolated):
        bk.build_kernel_model(dc, bk.GainConfig(k1=-1e6, k2=4e13), 24e-6, bio)


def test_out_of_range(km):
    with pytest.raises(bk.KernelRangeError):
        bk.phi_eval(km, 1e-6)
    with pytest.raises(bk.KernelRangeError):
        bk.workspace(km, 32, 2 * km.l_bar)


def test_workspace_table_consistent(km):
    ws = bk.workspace(km, 64, 8e-6)
    x = uniform_grid(64) * 8e-6
    for i, j in [(0, 5), (10, 40), (3, 64)]:
        assert ws.kappa[j - i] == pytest.approx(bk.kernel_k(km, x[i], x[j]), rel=1e-12)


@pytest.mark.parametrize("N", [32, 64, 128, 256])
@pytest.mark.parametrize("l", [1e-6, 6e-6, 12e-6])
def test_round_trip_profile(km, N, l):
    u = smooth(N, l)
    e = ErrorState(u, np.zeros(2))
    w = bk.forward_transform(km, e, l, extended=True)
    back = bk.inverse_transform(km, w, e.X, l, extended=True)
    assert float(np.abs(back - u).max() / np.abs(u).max()) <= 1e-10


@pytest.mark.parametrize("l", [1e-6, 6e-6])
def test_round_trip_with_ode_state(km, l):
    u = smooth(64, l)
    e = ErrorState(u, np.array([1e-3, -2e-6]))
    w = bk.forward_transform(km, e, l, extended=True)
    back = bk.inverse_transform(km, w, e.X, l, extended=True)
    assert float(np.abs(back - u).max() / np.abs(u).max()) <= 1e-10


@pytest.mark.parametrize("l", [12e-6, 24e-6])
def test_round_trip_high_precision(km, l):
    u = smooth(64, l)
    X = np.array([1e-3, -2e-6])
    w = bk.forward_transform(km, ErrorState(u, X), l, digits=40)
    back = bk.inverse_transform(km, w, X, l, digits=40)
    assert float(np.abs(back - u).max() / np.abs(u).max()) <= 1e-14


def test_forward_paths_agree(km):
    l = 5e-6
    e = ErrorState(smooth(64, l), np.array([1e-4, 1e-7]))
    fast = bk.forward_transform(km, e, l)
    ext = np.asarray(bk.forward_transform(km, e, l, extended=True), dtype=float)
    np.testing.assert_allclose(fast, ext, rtol=0, atol=1e-12 * np.abs(ext).max())


def test_control_is_w_boundary_identity(km):
    l = 6e-6
    e = ErrorState(smooth(128, l), np.array([1e-4, 1e-7]))
    w = bk.forward_transform(km, e, l)
    U = bk.continuous_control(km, e, l)
    assert e.u[0] - U == pytest.approx(w[0], abs=1e-12 * abs(U))


def test_inverse_kernel_diagonal(km, bio):
    q, _ = bk.inverse_kernels(km, 128, 6e-6)
    assert q[40, 41] == pytest.approx(1.0 / bio.l_c, rel=1e-2)


@settings(max_examples=30, deadline=None)
@given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0), st.floats(1e-6, 12e-6))
def test_forward_transform_linear(c1, c2, l):
    from axongrowth.model import BioParams, derive_constants
    p = BioParams()
    km = _shared_km(p, derive_constants(p))
    u1, u2 = smooth(32, l), np.cos(uniform_grid(32) * 2.0)
    X1, X2 = np.array([1e-4, 0.0]), np.array([0.0, 1e-7])
    lhs = bk.forward_transform(km, ErrorState(c1 * u1 + c2 * u2, c1 * X1 + c2 * X2), l)
    rhs = (c1 * bk.forward_transform(km, ErrorState(u1, X1), l)
           + c2 * bk.forward_transform(km, ErrorState(u2, X2), l))
    scale = max(np.abs(bk.forward_transform(km, ErrorState(u1, X1), l)).max(),
                np.abs(bk.forward_transform(km, ErrorState(u2, X2), l)).max())
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12 * scale)


_KM = {}


def _shared_km(p, dc):
    if "km" not in _KM:
        _KM["km"] = bk.build_kernel_model(dc, bk.GainConfig(), 24e-6, p)
    return _KM["km"]
