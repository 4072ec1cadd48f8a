import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from failsafe_quad.errors import FitError
from failsafe_quad.params import G0, PRESETS
from failsafe_quad.sysid import (
    DEFAULT_WINDING_RESISTANCE,
    DragSample,
    PendulumTrial,
    PropSample,
    fit_drag,
    fit_thrust_curve,
    moi_from_pendulum,
    propeller_moi,
    read_drag_csv,
    read_pendulum_csv,
    read_prop_csv,
)

LOW = PRESETS["low_inertia"]


def prop_samples(kf, kt, omegas, noise=None, R=DEFAULT_WINDING_RESISTANCE):
    out = []
    for k, w in enumerate(omegas):
        f, tau = kf * w * w, kt * w * w
        if noise is not None:
            f *= 1 + noise[k, 0]
            tau *= 1 + noise[k, 1]
        current = 5.0 + 0.01 * w
        voltage = (tau * w + current**2 * R) / current
        out.append(PropSample(w, f, voltage, current))
    return out


def period_of(J_pivot, M, r, amp=0.02, dt=1e-4):
    """Small-swing period from a forward simulation of the physical pendulum."""
    k = M * G0 * r / J_pivot
    th, om, t = amp, 0.0, 0.0
    crossings = []
    while len(crossings) < 3:
        def f(a, b):
            return b, -k * math.sin(a)
        k1 = f(th, om)
        k2 = f(th + dt / 2 * k1[0], om + dt / 2 * k1[1])
        k3 = f(th + dt / 2 * k2[0], om + dt / 2 * k2[1])
        k4 = f(th + dt * k3[0], om + dt * k3[1])
        nth = th + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        nom = om + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        if th > 0 >= nth or th < 0 <= nth:
            crossings.append(t + dt * th / (th - nth))
        th, om, t = nth, nom, t + dt
    return crossings[2] - crossings[0]


def test_pendulum_examples():
    jp, _ = moi_from_pendulum(1.0 / G0, PendulumTrial(1.0, 2 * math.pi))
    assert jp == pytest.approx(1.0)
    jp, jc = moi_from_pendulum(1.439, PendulumTrial(0.1, 1.0))
    assert jp == pytest.approx(0.035746, abs=1e-6)
    assert jc == pytest.approx(0.021356, abs=1e-6)


def test_pendulum_too_fast():
    with pytest.raises(FitError):
        moi_from_pendulum(1.439, PendulumTrial(0.1, 0.3))


def test_pendulum_simulation_recovery():
    M, r, J_com = 1.439, 0.2, LOW.Jzz
    T = period_of(J_com + M * r * r, M, r)
    _, jc = moi_from_pendulum(M, PendulumTrial(r, T))
    assert jc == pytest.approx(J_com, rel=0.01)


def test_propeller_moi():
    assert propeller_moi(0.02, 0.01, 0.01, 0.1) == pytest.approx(0.5 * 0.02e-4 + 0.5 * 0.01 * 0.01)


def test_exact_thrust_fit():
    fit = fit_thrust_curve(prop_samples(2e-5, 3e-7, np.linspace(200, 900, 8)))
    assert fit.kf == pytest.approx(2e-5, rel=1e-12)
    assert fit.kt == pytest.approx(3e-7, rel=1e-10)
    assert fit.k == pytest.approx(2e-5 / 3e-7)


def test_noisy_thrust_fit():
    rng = np.random.default_rng(11)
    noise = rng.normal(0.0, 0.01, (20, 2))
    fit = fit_thrust_curve(prop_samples(LOW.kf, LOW.kt, np.linspace(300, 1000, 20), noise))
    assert fit.kf == pytest.approx(LOW.kf, rel=0.02)
    assert fit.kt == pytest.approx(LOW.kt, rel=0.02)


def test_thrust_fit_errors():
    with pytest.raises(FitError):
        fit_thrust_curve(prop_samples(2e-5, 3e-7, [100.0, 200.0]))
    bad = [PropSample(w, -1e-5 * w * w, 10.0, 1.0) for w in (100.0, 200.0, 300.0)]
    with pytest.raises(FitError):
        fit_thrust_curve(bad)


def test_drag_fit():
    gamma = 0.000184199
    samples = [DragSample(gamma * w * w, w) for w in (10.0, 20.0, 35.0, 43.393)]
    assert fit_drag(samples) == pytest.approx(gamma, rel=1e-10)
    rng = np.random.default_rng(5)
    noisy = [DragSample(gamma * w * w * (1 + rng.normal(0, 0.01)), w) for w in np.linspace(5, 50, 20)]
    assert fit_drag(noisy) == pytest.approx(gamma, rel=0.02)
    with pytest.raises(FitError):
        fit_drag([DragSample(1.0, 5.0)] * 4)


@settings(max_examples=30)
@given(st.floats(1e-7, 1e-3), st.floats(1e-3, 0.5), st.floats(1e-6, 1e-2))
def test_round_trip_law(kf, eps, gamma):
    kt = eps * kf
    fit = fit_thrust_curve(prop_samples(kf, kt, [150.0, 400.0, 650.0, 900.0]))
    assert fit.kf == pytest.approx(kf, rel=1e-10)
    assert fit.kt == pytest.approx(kt, rel=1e-10)
    g = fit_drag([DragSample(gamma * w * w, w) for w in (3.0, 17.0, 40.0)])
    assert g == pytest.approx(gamma, rel=1e-10)


def test_csv_readers(tmp_path):
    p = tmp_path / "prop.csv"
    p.write_text("omega,thrust,voltage,current\n100,0.2,11.1,1.5\n200,0.8,11.0,3.0\n")
    assert read_prop_csv(p)[1] == PropSample(200.0, 0.8, 11.0, 3.0)
    d = tmp_path / "drag.csv"
    d.write_text("torque,omega_ss\n0.1,20\n")
    assert read_drag_csv(d) == [DragSample(0.1, 20.0)]
    pend = tmp_path / "pend.csv"
    pend.write_text("axis,pivot_distance,period\nz,0.1,1.0\n")
    assert read_pendulum_csv(pend) == [PendulumTrial(0.1, 1.0, "z")]
    bad = tmp_path / "bad.csv"
    bad.write_text("omega,thrust\n1,2\n")
    with pytest.raises(FitError, match="voltage"):
        read_prop_csv(bad)
    bad.write_text("torque,omega_ss\nx,1\n")
    with pytest.raises(FitError, match=":2"):
        read_drag_csv(bad)
