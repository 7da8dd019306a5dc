import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flatsphere.errors import BlowUpProximity, NumericFault
from flatsphere.timestep import DormandPrince


def test_riccati_to_near_blowup():
    integ = DormandPrince(lambda t, u: u * u, rtol=1e-11, atol=1e-14)
    t, u, stopped = integ.advance(0.0, np.array([1.0]), 0.9)
    assert t == 0.9 and not stopped
    assert u[0] == pytest.approx(10.0, rel=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 1), st.floats(0.1, 3))
def test_linear_decay_exact(lam, t_end):
    integ = DormandPrince(lambda t, u: lam * u, rtol=1e-10, atol=1e-14)
    _, u, _ = integ.advance(0.0, np.array([1.0, -2.0]), t_end)
    assert np.allclose(u, np.array([1.0, -2.0]) * math.exp(lam * t_end), rtol=1e-8)


def test_lands_exactly_on_targets_and_caps():
    integ = DormandPrince(lambda t, u: -u, dt_cap=lambda t, u: 0.01)
    t, u = 0.0, np.array([1.0])
    for target in (0.05, 0.1, 0.3333):
        t, u, _ = integ.advance(t, u, target)
        assert t == target
    assert integ.stats.max_dt <= 0.01 + 1e-15


def test_stop_callback():
    integ = DormandPrince(lambda t, u: np.ones_like(u))
    t, u, stopped = integ.advance(0.0, np.zeros(1), 10.0, stop=lambda t, u: u[0] > 1)
    assert stopped and 1 < u[0] < 10


def test_step_floor_raises():
    integ = DormandPrince(lambda t, u: u**2, dt_floor=1e-6)
    with pytest.raises(BlowUpProximity):
        integ.advance(0.0, np.array([1.0]), 2.0)


def test_nonfinite_rhs_is_fault():
    with pytest.raises(NumericFault):
        DormandPrince(lambda t, u: u * np.nan).advance(0.0, np.ones(2), 1.0)


def test_cached_stage_reused_only_for_same_state():
    calls = []

    def rhs(t, u):
        calls.append(t)
        return -u

    integ = DormandPrince(rhs)
    t, u, _ = integ.advance(0.0, np.ones(1), 0.5)
    n = len(calls)
    integ.advance(t, u, 0.6)
    assert calls[n] != t  # first stage came from the cache
    integ.advance(t, u * 2, 0.6)
    assert integ.stats.rhs_calls == len(calls)
