import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from axongrowth.model import (BioParams, InvalidParameters, ModelRangeError,
                              derive_constants, error_dynamics, from_error_state,
                              nonlinear_terms, nonlinearity_bounds, steady_plant_state,
                              steady_state_derivatives, steady_state_profile, to_error_state)


def test_derived_constants_match_oracles(dc):
    assert dc.lambda_plus == pytest.approx(1047.7225575, rel=1e-10)
    assert dc.lambda_minus == pytest.approx(-47.7225575, rel=1e-9)
    assert dc.K_plus == pytest.approx(0.95625289, rel=1e-8)
    assert dc.K_plus + dc.K_minus == pytest.approx(1.0, rel=1e-15)
    assert dc.beta == pytest.approx(2.5e-6, rel=1e-14)
    assert dc.kappa == pytest.approx(4.4575, rel=1e-14)
    assert dc.a1_tilde == pytest.approx(-0.10354475, rel=1e-12)
    assert dc.q_s_star == pytest.approx(-1.176e-2, rel=1e-3)


def test_characteristic_roots(dc, bio):
    for lam in (dc.lambda_plus, dc.lambda_minus):
        assert bio.D * lam**2 - bio.a * lam - bio.g == pytest.approx(0.0, abs=1e-15)


def test_steady_state_boundary_values(dc, bio):
    assert steady_state_profile(dc, bio, 0.0) == pytest.approx(-dc.q_s_star, rel=1e-14)
    assert steady_state_profile(dc, bio, bio.l_s) == pytest.approx(bio.c_inf, rel=1e-14)


def test_stationary_residual(dc, bio):
    x = np.linspace(0.0, bio.l_s, 301)
    c = steady_state_profile(dc, bio, x)
    cxx = steady_state_derivatives(dc, bio, x, 2)
    res = bio.D * cxx - bio.a * steady_state_derivatives(dc, bio, x, 1) - bio.g * c
    assert np.abs(res).max() <= 1e-12 * np.abs(bio.D * cxx).max()


def test_steady_cone_balance(dc, bio):
    cx = float(steady_state_derivatives(dc, bio, bio.l_s, 1))
    cc = bio.c_inf
    rhs = (bio.a - bio.g * bio.l_c) * cc - bio.D * cx
    assert rhs == pytest.approx(0.0, abs=1e-12 * bio.a * cc)


def test_linearizations_differ_only_in_top_right(bio):
    jac = derive_constants(bio, "jacobian").A1
    lit = derive_constants(bio, "literal").A1
    diff = jac != lit
    assert diff[0, 1] and diff.sum() == 1


@pytest.mark.parametrize("field,value", [("D", 0.0), ("l_s", -1.0), ("a", -1e-9),
                                         ("c_inf", math.nan), ("rt_g", math.inf)])
def test_invalid_parameters(field, value):
    from dataclasses import replace
    with pytest.raises(InvalidParameters):
        derive_constants(replace(BioParams(), **{field: value}))


def test_error_state_round_trip(dc, bio):
    s = steady_plant_state(dc, bio, 64)
    s.c = s.c + 1e-4 * np.sin(np.pi * s.x / s.l)
    e = to_error_state(s, dc, bio)
    back = from_error_state(e, dc, bio, s.l)
    np.testing.assert_allclose(back.c, s.c, rtol=0, atol=1e-17)
    assert back.l == pytest.approx(s.l, rel=1e-15)


def test_error_dynamics_vanish_at_equilibrium(dc, bio):
    u_x_tip = 0.0
    np.testing.assert_allclose(error_dynamics(np.zeros(2), u_x_tip, dc, bio), 0.0, atol=1e-30)


def test_nonlinear_guard(dc, bio):
    with pytest.raises(ModelRangeError):
        nonlinear_terms(np.array([0.0, 1.0]), dc, bio)


@settings(max_examples=60, deadline=None)
@given(st.floats(-1e-3, 1e-3), st.floats(-2e-6, 2e-6))
def test_nonlinearity_bounds_hold(x1, x2):
    p = BioParams()
    dc = derive_constants(p)
    k_n, _ = nonlinearity_bounds(dc, p)
    X = np.array([x1, x2])
    nt = nonlinear_terms(X, dc, p)
    assert math.isfinite(nt.f)
    # second-order remainder of the tip value, |lambda_plus x2| <= 2e-3 here;
    # h_tilde is a cancellation of O(c_inf) terms, hence the rounding floor
    assert abs(nt.h_star) <= k_n * x2 * x2 + 8 * np.finfo(float).eps * p.c_inf
