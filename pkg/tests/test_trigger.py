import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from axongrowth import trigger as tr


def signals(U=0.0, X=(0.0, 0.0), w0x=0.0, wlx=0.0, wn=0.0):
    return tr.TriggerSignals(U, np.asarray(X, dtype=float), w0x, wlx, wn)


def test_reference_trigger_values():
    c = tr.PAPER_FIG2
    assert (c.gamma, c.eta, c.rho, c.sigma, c.m0) == (1e4, 100.0, 4e22, 0.5, -0.5)
    assert c.beta == (1.634e22, 5.229e12, 6.569e-14, 2.614e13, 2.94e-12)


@pytest.mark.parametrize("bad", [dict(sigma=1.5), dict(sigma=0.0), dict(gamma=-1.0),
                                 dict(m0=0.0), dict(beta=(1.0, 2.0))])
def test_config_validation(bad):
    from dataclasses import replace
    with pytest.raises(ValueError):
        replace(tr.PAPER_FIG2, **bad).validate()


def test_alpha3(preset_design):
    assert preset_design.ac.alpha[2] == pytest.approx(2e-10, rel=1e-12)


def test_alphas_positive(preset_design):
    assert all(a > 0 and math.isfinite(a) for a in preset_design.ac.alpha)


def test_dwell_time_positive(preset_design):
    dw = preset_design.dwell
    assert dw.tau > 0 and dw.a1 > 0 and dw.a2 > 0 and dw.a3 > 0
    assert dw.tau_length_reading > 0


def test_dwell_time_closed_form(preset_design):
    cfg = tr.PAPER_FIG2
    dw = tr.dwell_time(cfg, preset_design.ac)
    a1, a2, a3 = dw.a1, dw.a2, dw.a3
    disc = 4 * a1 * a3 - a2 * a2
    assert disc > 0
    F = lambda s: 2 / math.sqrt(disc) * math.atan((2 * a1 * s + a2) / math.sqrt(disc))
    lo, hi = dw.psi_interval
    assert dw.tau == pytest.approx(F(hi) - F(lo), rel=1e-8)


def test_selection_rules(preset_design, bio):
    ac = preset_design.ac
    cfg = tr.etm_defaults(ac, bio)
    assert cfg.gamma >= tr.gamma_lower_bound(ac, bio, cfg.sigma) * (1 - 1e-12)
    cfg.validate()


def test_event_resets_deviation():
    st0 = tr.EtmState.start(tr.PAPER_FIG2, 1.0)
    st1, fired = tr.etm_step(st0, tr.PAPER_FIG2, signals(U=2.0), 0.05, 0.05)
    assert fired
    assert st1.d == 0.0 and st1.U_held == 2.0 and st1.m < 0
    assert st1.events[-1] == tr.Event(1, 0.05, 2.0, 0.05)


def test_quiet_when_deviation_zero():
    st0 = tr.EtmState.start(tr.PAPER_FIG2, 1.0)
    st1, fired = tr.etm_step(st0, tr.PAPER_FIG2, signals(U=1.0), 0.05, 0.05)
    assert not fired and len(st1.events) == 1


def test_non_finite_signal():
    st0 = tr.EtmState.start(tr.PAPER_FIG2, 1.0)
    with pytest.raises(tr.TriggerError):
        tr.etm_step(st0, tr.PAPER_FIG2, signals(U=math.nan), 0.05, 0.05)


def test_zeno_report():
    ev = [tr.Event(0, 0.0, 0.0, 0.0), tr.Event(1, 0.1, 0.0, 0.1), tr.Event(2, 0.12, 0.0, 0.02)]
    rep = tr.zeno_report(ev, 0.05)
    assert not rep.zeno_free and rep.violations == (2,)
    assert tr.zeno_report(ev[:2], 0.05).zeno_free


@settings(max_examples=200, deadline=None)
@given(st.floats(-10.0, -1e-300), st.floats(-1e3, 1e3), st.floats(0.0, 1e-2),
       st.floats(0.0, 1e-2), st.floats(1e-4, 1.0))
def test_invariant_after_step(m, U, X1, wn, dt):
    cfg = tr.PAPER_FIG2
    st0 = tr.EtmState(m=m, U_held=0.0)
    st1, _ = tr.etm_step(st0, cfg, signals(U=U, X=(X1, 0.0), wn=wn), dt, dt)
    assert st1.m < 0
    assert st1.d ** 2 <= -cfg.gamma * st1.m


@settings(max_examples=100, deadline=None)
@given(st.floats(-10.0, -1e-300), st.floats(0.0, 1.0), st.floats(1e-4, 1.0))
def test_m_decreases_without_deviation(m, wn, dt):
    m1 = tr.advance_m(m, tr.PAPER_FIG2, 0.0, signals(wn=wn), dt)
    assert m1 < 0
    assert m1 <= m * math.exp(-tr.PAPER_FIG2.eta * dt) * (1 - 1e-12) or m1 == tr.M_FLOOR
