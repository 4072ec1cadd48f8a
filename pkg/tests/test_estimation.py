import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from failsafe_quad.dynamics import RigidState
from failsafe_quad.errors import DomainError, SingularityError
from failsafe_quad.estimation import (
    INNER_PERIOD,
    FilterConfig,
    NoiseConfig,
    SensorConfig,
    SensorSampler,
    StateEstimator,
    body_to_euler_rates,
    complementary,
    ema,
    euler_to_body_rates,
    sample_sensors,
)


def test_ema_examples():
    assert ema(3.0, 7.0, 1.0) == 7.0
    assert ema(0.0, 2.0, 0.5) == 1.0
    with pytest.raises(DomainError):
        ema(0.0, 1.0, 0.0)


@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(0.01, 1.0))
def test_ema_geometric_convergence(prev, c, alpha):
    x = prev
    for k in range(1, 6):
        x = ema(x, c, alpha)
        assert x - c == pytest.approx((prev - c) * (1 - alpha) ** k, abs=1e-9)


def test_complementary_limits():
    dt = INNER_PERIOD
    # huge tau: integrates the gyro only
    assert complementary(0.1, 2.0, 5.0, dt, 1e12) == pytest.approx(0.1 + 2.0 * dt)
    # tau = dt: equal blend
    assert complementary(0.0, 0.0, 1.0, dt, dt) == pytest.approx(0.5)


def test_complementary_fixed_points():
    dt, tau = INNER_PERIOD, 0.05
    x = 0.0
    for _ in range(5000):
        x = complementary(x, 0.0, 0.3, dt, tau)
    assert x == pytest.approx(0.3, abs=1e-12)
    b = 0.2
    x = 0.0
    for _ in range(5000):
        x = complementary(x, b, 0.0, dt, tau)
    assert x == pytest.approx(b * tau, rel=1e-9)


def test_euler_rate_map():
    assert body_to_euler_rates(1.0, 2.0, 3.0, 0.0, 0.0) == pytest.approx((1.0, 2.0, 3.0))
    assert body_to_euler_rates(1.0, 2.0, 3.0, math.pi / 2, 0.0) == pytest.approx((1.0, -3.0, 2.0))
    with pytest.raises(SingularityError):
        body_to_euler_rates(0, 0, 0, 0, math.pi / 2)


@given(*[st.floats(-5, 5)] * 3, st.floats(-1.5, 1.5), st.floats(-1.4, 1.4))
def test_euler_rate_round_trip(p, q, r, phi, theta):
    e = body_to_euler_rates(p, q, r, phi, theta)
    assert euler_to_body_rates(*e, phi, theta) == pytest.approx((p, q, r), abs=1e-9)


TRUE = RigidState(1.0, 2.0, 3.0, 0.1, 0.2, 0.3, 0.05, -0.04, 1.2, 0.5, -0.6, 30.0)


def test_ideal_sensors_return_truth():
    f = sample_sensors(TRUE, 0.0, config=SensorConfig.ideal())
    assert f.gyro == (0.5, -0.6, 30.0)
    assert f.attitude == pytest.approx((0.05, -0.04, 1.2))
    assert f.gps == (1.0, 2.0, 0.1, 0.2)
    assert f.ultrasonic_z == 3.0


def test_gps_is_held_between_samples():
    s = SensorSampler(SensorConfig(noise=NoiseConfig.ideal()))
    a = s.sample(TRUE, 0.05)
    b = s.sample(RigidState(x=9.0), 0.14)
    assert b.gps == a.gps and b.gps_time == 0.05
    c = s.sample(RigidState(x=9.0), 0.15)
    assert c.gps[0] == 9.0


def test_sensor_time_monotone():
    s = SensorSampler()
    s.sample(TRUE, 1.0)
    with pytest.raises(DomainError):
        s.sample(TRUE, 0.5)


def test_gyro_noise_statistics():
    s = SensorSampler(SensorConfig(noise=NoiseConfig(gyro=0.02, attitude=0, gps_pos=0, gps_vel=0, ultrasonic=0)), seed=3)
    g = np.array([s.sample(RigidState(), k * INNER_PERIOD).gyro[0] for k in range(10_000)])
    assert g.std() == pytest.approx(0.02, rel=0.05)


def test_sampler_seeded():
    a = [SensorSampler(seed=7).sample(TRUE, 0.0)]
    b = [SensorSampler(seed=7).sample(TRUE, 0.0)]
    c = [SensorSampler(seed=8).sample(TRUE, 0.0)]
    assert a == b
    assert a != c


def test_estimator_tracks_constant_state():
    sampler = SensorSampler(SensorConfig(noise=NoiseConfig.ideal()))
    est = StateEstimator(FilterConfig())
    still = RigidState(x=1.0, z=2.0, phi=0.1, theta=-0.1)
    est.reset(RigidState(z=2.0))
    for k in range(2000):
        e = est.update(sampler.sample(still, k * INNER_PERIOD))
    assert e.phi == pytest.approx(0.1, abs=1e-6)
    assert e.theta == pytest.approx(-0.1, abs=1e-6)
    assert e.x == 1.0 and e.z == 2.0
    assert e.zd == pytest.approx(0.0, abs=1e-9)


def test_estimator_altitude_rate():
    sampler = SensorSampler(SensorConfig(noise=NoiseConfig.ideal()))
    est = StateEstimator(FilterConfig())
    est.reset(RigidState(z=0.0))
    for k in range(900):
        t = k * INNER_PERIOD
        e = est.update(sampler.sample(RigidState(z=0.5 * t, zd=0.5), t))
    assert e.zd == pytest.approx(0.5, rel=1e-3)


def test_filter_time_constants():
    f = FilterConfig()
    assert f.tau_ema == pytest.approx(2 * INNER_PERIOD)
    assert f.alpha_ema() == pytest.approx(1 / 3)
