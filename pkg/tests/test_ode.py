import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from frem.fixtures import get_fixture
from frem.ode import ode_final, ode_mean_field, ode_reverse_mean_field


@pytest.fixture(scope="module")
def death():
    return get_fixture("pure-death").model


def test_pure_decay_analytic(death):
    t, z = ode_mean_field(death, (1.7,), (100.0,), 0.0, 2.0, dt=1e-3)
    want = 100.0 * np.exp(-1.7 * t)
    assert np.max(np.abs(z[:, 0] / want - 1)) < 1e-8
    assert t[0] == 0.0 and t[-1] == 2.0 and len(t) == 2001


def test_pure_decay_reverse_analytic(death):
    tau, z = ode_reverse_mean_field(death, (0.8,), (50.0,), 0.0, 1.0, dt=1e-3)
    want = 51.0 * np.exp(0.8 * tau) - 1.0
    assert np.max(np.abs(z[:, 0] / want - 1)) < 1e-8


def test_zero_duration_returns_start(death):
    t, z = ode_reverse_mean_field(death, (0.8,), (5.0,), 1.0, 1.0)
    assert t.tolist() == [1.0] and z.tolist() == [[5.0]]
    assert ode_final(death, (0.8,), (5.0,), 0.0).tolist() == [5.0]


@given(st.floats(0.1, 5.0), st.floats(0.01, 1.0))
def test_birth_death_fixed_point(c1, c2):
    # below one molecule the lattice guard switches death off, so only
    # fixed points at or above one are fixed points of the guarded flow
    assume(c1 / c2 >= 1.0)
    bd = get_fixture("birth-death").model
    _, z = ode_mean_field(bd, (c1, c2), (c1 / c2,), 0.0, 5.0)
    np.testing.assert_allclose(z[:, 0], c1 / c2, rtol=1e-12)


def test_birth_death_reverse_relaxation():
    bd = get_fixture("birth-death").model
    c1, c2 = 1.0, 0.06
    # dZ/dtau = -c1 + c2 (Z + 1) while Z >= 1
    z0 = 30.0
    tau, z = ode_reverse_mean_field(bd, (c1, c2), (z0,), 0.0, 3.0, dt=1e-3)
    star = c1 / c2 - 1
    want = star + (z0 - star) * np.exp(c2 * tau)
    assert np.max(np.abs(z[:, 0] / want - 1)) < 1e-8


def test_sir_conservation(sir_fx):
    _, z = ode_mean_field(sir_fx.model, sir_fx.theta_true, (300.0, 5.0, 0.0), 0.0, 10.0, dt=1e-3)
    total = z.sum(axis=1)
    assert np.max(np.abs(total - 305.0)) <= 1e-10 * 305.0
    assert np.all(z >= 0)


def test_clamps_negative_components():
    # a big constant removal step overshoots zero; the state is clamped
    m = get_fixture("pure-death").model
    _, z = ode_mean_field(m, (50.0,), (1.0,), 0.0, 1.0, dt=0.1)
    assert np.all(z >= 0)


def test_sharp_guard_in_real_states(decay_fx):
    # below 4 the second channel is off, so only the first decays
    _, z = ode_mean_field(decay_fx.model, (1.0, 100.0), (3.5,), 0.0, 1.0, dt=1e-3)
    assert z[-1, 0] == pytest.approx(3.5 * math.exp(-1.0), rel=1e-8)


def test_final_matches_trajectory(sir_fx):
    _, z = ode_mean_field(sir_fx.model, sir_fx.theta_true, (300.0, 5.0, 0.0), 0.0, 2.0, dt=0.01)
    z_end = ode_final(sir_fx.model, sir_fx.theta_true, (300.0, 5.0, 0.0), 2.0, dt=0.01)
    assert np.array_equal(z[-1], z_end)


def test_lattice_guard_on_real_states():
    bd = get_fixture("birth-death").model
    _, z = ode_mean_field(bd, (0.0, 1.0), (0.5,), 0.0, 1.0)
    assert z[-1, 0] == 0.5


def test_argument_checks(death):
    with pytest.raises(ValueError):
        ode_mean_field(death, (1.0,), (1.0,), 1.0, 0.0)
    with pytest.raises(ValueError):
        ode_mean_field(death, (1.0,), (-1.0,), 0.0, 1.0)
    with pytest.raises(ValueError):
        ode_mean_field(death, (1.0,), (1.0,), 0.0, 1.0, dt=0.0)
