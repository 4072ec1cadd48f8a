import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from failsafe_quad.control import (
    ControllerConfig,
    OuterConfig,
    Pid,
    PidGains,
    desired_axis,
    inner_thrusts,
    outer_accel,
    pid_step,
    thrust_demand,
    three_prop_config,
    two_prop_config,
)
from failsafe_quad.equilibrium import FailureConfig, solve_equilibrium
from failsafe_quad.errors import DomainError, ParameterError, SingularityError
from failsafe_quad.lqr import LqrWeights, lqr_gain
from failsafe_quad.params import PRESETS

LOW = PRESETS["low_inertia"]
LOW3 = PRESETS["low_inertia_3p"]
IDENTITY = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))


@pytest.fixture(scope="module")
def two_prop():
    eq = solve_equilibrium(LOW, FailureConfig(frozenset({2, 4})))
    cfg = two_prop_config(f_max=math.inf)
    cfg = cfg.with_gain(lqr_gain(LOW, eq, LqrWeights.diagonal(cfg.q_diag, cfg.r_diag)))
    return cfg, eq


@pytest.fixture(scope="module")
def three_prop():
    eq = solve_equilibrium(LOW3, FailureConfig(frozenset({4}), 0.5))
    cfg = three_prop_config()
    cfg = cfg.with_gain(lqr_gain(LOW3, eq, LqrWeights.diagonal(cfg.q_diag, cfg.r_diag)))
    return cfg, eq


def test_outer_examples():
    cfg = OuterConfig(zeta=(0.7, 0.7, 0.7), omega_n=(1.0, 1.0, 1.0))
    assert outer_accel((0, 0, 0), (0, 0, 0), cfg) == (0.0, 0.0, 0.0)
    assert outer_accel((1, 0, 0), (0, 0, 0), cfg) == pytest.approx((-1.0, 0.0, 0.0))
    capped = OuterConfig(zeta=(0.7, 0.7, 0.7), omega_n=(1.0, 1.0, 1.0), accel_cap=(5.4, 5.4, math.inf))
    assert outer_accel((8, 0, 0), (0, 0, 0), capped)[0] == pytest.approx(-5.4)


def test_outer_damping_term():
    cfg = OuterConfig(zeta=(0.5, 0.5, 0.5), omega_n=(2.0, 2.0, 2.0))
    assert outer_accel((0, 0, 0), (1, 0, 0), cfg)[0] == pytest.approx(-2.0)


def test_desired_axis_examples():
    assert desired_axis((0, 0, 0), LOW.weight, 1.0, IDENTITY, LOW) == pytest.approx((0, 0, 1))
    n = desired_axis((LOW.g, 0, 0), LOW.weight, 1.0, IDENTITY, LOW)
    assert n == pytest.approx((0.7071, 0.0, 0.7071), abs=1e-4)
    with pytest.raises(DomainError):
        desired_axis((0, 0, -LOW.g), LOW.weight, 1.0, IDENTITY, LOW)


@given(st.tuples(*[st.floats(-20, 20)] * 3))
def test_desired_axis_unit(a):
    if math.hypot(a[0], a[1], a[2] + LOW.g) < 1e-6:
        return
    n = desired_axis(a, LOW.weight, 1.0, IDENTITY, LOW)
    assert math.fsum(c * c for c in n) == pytest.approx(1.0)


def test_thrust_demand_hover():
    assert thrust_demand((0, 0, 0), 1.0, LOW) == pytest.approx(LOW.weight)


def test_pid_examples():
    pid = Pid(PidGains())
    assert pid_step(pid, 0.0, 0.0, 0.01) == 0.0
    pid = Pid(PidGains(kp=75.0, out_min=-0.5, out_max=5.0))
    assert pid_step(pid, 0.1, 0.0, 0.01) == 5.0
    with pytest.raises(DomainError):
        pid.step(0.1, 0.0, 0.0)


def test_pid_caps_validated():
    with pytest.raises(ParameterError):
        PidGains(out_min=1.0, out_max=1.0)
    with pytest.raises(ParameterError):
        PidGains(kp=-1.0)


def _dwell(n):
    pid = Pid(PidGains(kp=1.0, ki=2.0, out_min=-1.0, out_max=1.0))
    for _ in range(n):
        pid.step(5.0, 0.0, 0.01)
    # error reverses: the response must not carry a stale integral
    return [pid.step(-0.3, 0.0, 0.01) for _ in range(20)]


def test_anti_windup():
    assert _dwell(10) == _dwell(100)


@settings(max_examples=50)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=40), st.floats(0.1, 5.0))
def test_pid_output_within_caps(errs, cap):
    pid = Pid(PidGains(kp=3.0, kd=0.5, ki=1.0, out_min=-cap, out_max=cap))
    for e in errs:
        u = pid.step(e, -e, 0.01)
        assert -cap <= u <= cap


def test_inner_pass_through(two_prop, three_prop):
    cfg, eq = two_prop
    m = inner_thrusts(np.zeros(4), cfg, eq, (0.0, 0.0), 0.0)
    assert m.thrusts == eq.fbar
    cfg3, eq3 = three_prop
    m = inner_thrusts(np.zeros(4), cfg3, eq3, (0.0, 0.0), (0.0, 0.0, 0.0))
    assert m.thrusts == pytest.approx(eq3.fbar)


def test_inner_tilt_compensation(two_prop):
    cfg, eq = two_prop
    m = inner_thrusts(np.zeros(4), cfg, eq, (0.0, 0.0), 1.0)
    assert m.f1 == pytest.approx(eq.fbar[0] + 1) and m.f3 == pytest.approx(eq.fbar[2] + 1)
    m = inner_thrusts(np.zeros(4), cfg, eq, (math.radians(60), 0.0), 1.0)
    assert m.f1 == pytest.approx(eq.fbar[0] + 2)
    assert m.f2 == m.f4 == 0.0
    with pytest.raises(SingularityError):
        inner_thrusts(np.zeros(4), cfg, eq, (math.pi / 2, 0.0), 1.0)
    floored = inner_thrusts(np.zeros(4), cfg, eq, (math.radians(85), 0.0), 1.0, tilt_floor=0.2)
    assert floored.f1 == pytest.approx(eq.fbar[0] + 5.0)


def test_inner_lqr_direction(two_prop):
    # a pitch-rate error must produce an opposing pitch torque (f3 - f1 < 0 for q > 0)
    cfg, eq = two_prop
    m = inner_thrusts(np.array([0.0, 0.5, 0.0, 0.0]), cfg, eq, (0.0, 0.0), 0.0)
    assert m.f3 - m.f1 < 0


def test_inner_thrusts_clamped(two_prop):
    cfg, eq = two_prop
    m = inner_thrusts(np.zeros(4), cfg.replace(f_max=8.0), eq, (0.0, 0.0), 3.0)
    assert m.f1 == 8.0


def test_inner_requires_gain(two_prop):
    _, eq = two_prop
    with pytest.raises(ParameterError):
        inner_thrusts(np.zeros(4), two_prop_config(), eq, (0.0, 0.0), 0.0)


def test_inner_mode_mismatch(two_prop, three_prop):
    cfg, _ = two_prop
    _, eq3 = three_prop
    with pytest.raises(ParameterError):
        inner_thrusts(np.zeros(4), cfg, eq3, (0.0, 0.0), 0.0)


def test_config_validation():
    with pytest.raises(ParameterError):
        ControllerConfig(mode="five-prop")
    with pytest.raises(ParameterError):
        ControllerConfig(r_diag=(1.0, 1.0, 1.0))
    with pytest.raises(ParameterError):
        three_prop_config(force_pids=())
    with pytest.raises(ParameterError):
        OuterConfig(zeta=(1.0, -1.0, 0.0))
