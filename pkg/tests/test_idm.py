import math

import numpy as np
import pytest

from core.idm import IdmParams, idm_accel, idm_accel_array


@pytest.fixture
def params():
    return IdmParams(a=2.0, b=3.0, v0=20.0, s0=5.0, T=3.5)


def test_free_road_start_equals_max_acceleration(params):
    assert idm_accel(0.0, math.inf, 0.0, params) == pytest.approx(2.0)


def test_interaction_term(params):
    # s* = 5 + 10 * 3.5 = 40; 2 * (1 - 0.0625 - 0.64)
    assert idm_accel(10.0, 50.0, 0.0, params) == pytest.approx(0.595)


@pytest.mark.parametrize("v", [5.0, 10.0, 20.0])
def test_platoon_follower_equilibrium(params, v):
    p = params.with_target(v0=20.0, T=0.55)
    gap = p.s0 + v * p.T
    assert abs(idm_accel(v, gap, 0.0, p, platoon_follower=True)) < 1e-6


def test_platoon_of_followers_at_v0_is_at_rest(params):
    p = params.with_target(v0=20.0, T=0.55)
    n = 6
    v = np.full(n, 20.0)
    gap = np.full(n, p.s0 + 20.0 * p.T)
    gap[0] = np.inf
    accel = idm_accel_array(v, gap, np.zeros(n), np.full(n, 20.0), np.full(n, 0.55), np.ones(n, dtype=bool), p)
    assert np.max(np.abs(accel)) < 1e-6


def test_speed_never_goes_negative(params):
    accel = idm_accel(1.0, 0.5, 5.0, params, dt=0.4)
    assert 1.0 + accel * 0.4 >= -1e-12


def test_gap_must_be_positive(params):
    with pytest.raises(ValueError):
        idm_accel(10.0, 0.0, 0.0, params)


def test_array_matches_scalar(params):
    v = np.array([12.0, 8.0, 15.0])
    gap = np.array([np.inf, 30.0, 80.0])
    dv = np.array([0.0, -4.0, 7.0])
    follower = np.array([False, True, False])
    T = np.where(follower, 0.55, 3.5)
    accel = idm_accel_array(v, gap, dv, np.full(3, 20.0), T, follower, params, dt=0.4)
    for i in range(3):
        p = params.with_target(20.0, T[i])
        expected = idm_accel(v[i], gap[i], dv[i], p, dt=0.4, platoon_follower=bool(follower[i]))
        assert accel[i] == pytest.approx(expected)


def test_invalid_parameters():
    with pytest.raises(ValueError, match="must be positive"):
        IdmParams(b=0.0)
