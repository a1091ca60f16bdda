import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from axongrowth import _kernels
from axongrowth.model import PlantState, steady_plant_state, uniform_grid
from axongrowth.solver import (DomainCollapse, NonFinite, SolverConfig, boundary_gradient,
                               convergence_study, plant_step, temporal_study)


def test_spatial_order(bio):
    rep = convergence_study(bio)
    assert min(rep.orders) >= 1.9
    assert all(o >= 1.9 for o in rep.richardson_orders)


def test_temporal_order_crank_nicolson(bio):
    rep = temporal_study(bio)
    assert all(abs(o - 2.0) < 0.1 for o in rep.richardson_orders)


def test_temporal_order_backward_euler(bio):
    rep = temporal_study(bio, theta=1.0)
    assert all(abs(o - 1.0) < 0.1 for o in rep.richardson_orders)


def test_fixed_point(dc, bio):
    s = steady_plant_state(dc, bio, 64)
    ceq = s.c.copy()
    cfg = SolverConfig(N=64)
    drift = 0.0
    for _ in range(2000):
        s, _ = plant_step(s, dc.q_s_star, cfg, bio)
        drift = max(drift, float(np.abs(s.c - ceq).max()))
    assert drift <= 1e-6 * bio.c_inf
    assert s.l == pytest.approx(bio.l_s, rel=1e-12)


def test_deterministic(bio):
    cfg = SolverConfig(N=32)
    out = []
    for _ in range(2):
        s = PlantState(0.0, uniform_grid(32), np.full(33, 2 * bio.c_inf), 2 * bio.c_inf, 1e-6)
        for _ in range(50):
            s, _ = plant_step(s, -0.01, cfg, bio)
        out.append((s.c.copy(), s.l))
    assert np.array_equal(out[0][0], out[1][0]) and out[0][1] == out[1][1]


def test_collapse_raises(bio):
    cfg = SolverConfig(N=32, dt=5.0)
    s = PlantState(0.0, uniform_grid(32), np.zeros(33), 0.0, 1e-8)
    with pytest.raises(DomainCollapse):
        for _ in range(100):
            s, _ = plant_step(s, 0.0, cfg, bio)
            assert s.l > 0


def test_non_finite_input(bio):
    s = PlantState(0.0, uniform_grid(32), np.full(33, np.nan), 0.0, 1e-6)
    with pytest.raises((NonFinite, DomainCollapse)):
        plant_step(s, 0.0, SolverConfig(N=32), bio)


def test_boundary_gradient_exact_for_quadratics():
    xi = uniform_grid(16)
    l = 3e-6
    x = xi * l
    s = PlantState(0.0, xi, 1 + 2 * x / l + (x / l) ** 2, 4.0, l)
    assert boundary_gradient(s) == pytest.approx(4.0 / l, rel=1e-12)


@pytest.mark.parametrize("bad", [dict(N=8), dict(dt=0.0), dict(theta=0.3), dict(t_end=-1.0)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        SolverConfig(**bad).validate()


@settings(max_examples=50, deadline=None)
@given(st.integers(3, 40), st.integers(0, 2**31 - 1))
def test_thomas_matches_dense(n, seed):
    rng = np.random.default_rng(seed)
    lower = rng.uniform(-1, 1, n)
    upper = rng.uniform(-1, 1, n)
    diag = 3 + np.abs(lower) + np.abs(upper)
    rhs = rng.normal(size=n)
    A = np.diag(diag) + np.diag(lower[1:], -1) + np.diag(upper[:-1], 1)
    x, ok = _kernels.thomas(lower, diag, upper, rhs)
    assert ok
    np.testing.assert_allclose(A @ x, rhs, atol=1e-12)
