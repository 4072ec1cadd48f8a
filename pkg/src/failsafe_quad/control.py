"""Runtime control laws for fail-safe flight.

Inner loop: LQR on the reduced attitude error plus either per-motor force
PIDs (three propellers) or a shared, tilt-compensated altitude PID (two
propellers). Outer loop: a damped second-order translational law that asks
for an acceleration, converted to a desired thrust axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import MotorSet
from .equilibrium import Equilibrium
from .errors import DomainError, ParameterError, SingularityError
from .params import QuadParams

THREE_PROP = "three-propeller"
TWO_PROP = "two-propeller"


@dataclass(frozen=True)
class PidGains:
    kp: float = 0.0
    kd: float = 0.0
    ki: float = 0.0
    out_min: float = -math.inf
    out_max: float = math.inf

    def __post_init__(self):
        if not self.out_min < self.out_max:
            raise ParameterError(f"PID caps need out_min < out_max, got ({self.out_min}, {self.out_max})")
        if min(self.kp, self.kd, self.ki) < 0:
            raise ParameterError("PID gains must be non-negative")


class Pid:
    """PID with output clamping and conditional-integration anti-windup."""

    def __init__(self, gains: PidGains):
        self.gains = gains
        self.integral = 0.0

    def reset(self):
        self.integral = 0.0

    def step(self, err: float, err_rate: float, dt: float) -> float:
        if not dt > 0.0:
            raise DomainError("dt must be positive")
        g = self.gains
        candidate = self.integral + err * dt
        u = g.kp * err + g.kd * err_rate + g.ki * candidate
        if u > g.out_max:
            if err < 0.0:
                self.integral = candidate
            return g.out_max
        if u < g.out_min:
            if err > 0.0:
                self.integral = candidate
            return g.out_min
        self.integral = candidate
        return u


def pid_step(pid: Pid, err: float, err_rate: float, dt: float) -> float:
    return pid.step(err, err_rate, dt)


@dataclass(frozen=True)
class OuterConfig:
    zeta: tuple[float, float, float] = (0.7, 0.7, 0.0)
    omega_n: tuple[float, float, float] = (1.0, 1.0, 0.0)
    accel_cap: tuple[float, float, float] = (math.inf, math.inf, math.inf)

    def __post_init__(self):
        for name in ("zeta", "omega_n", "accel_cap"):
            values = tuple(float(v) for v in getattr(self, name))
            if len(values) != 3 or min(values) < 0:
                raise ParameterError(f"{name} must be three non-negative numbers")
            object.__setattr__(self, name, values)


@dataclass(frozen=True)
class ControllerConfig:
    """Fail-safe controller settings.

    ``q_diag`` and ``r_diag`` are the LQR weights (``r_diag`` one entry per
    surviving motor); ``K`` is filled in once the gain has been synthesized
    for a specific equilibrium.
    """

    mode: str = TWO_PROP
    q_diag: tuple[float, ...] = (0.0, 0.0, 5362.0, 5362.0)
    r_diag: tuple[float, ...] = (1.0, 1.0)
    altitude_pid: PidGains = PidGains(kp=4.3, kd=8.9, ki=0.0, out_min=-5.0, out_max=5.0)
    force_pids: tuple[PidGains, ...] = ()
    outer: OuterConfig = OuterConfig()
    f_inner: float = 450.0
    f_outer: float = 45.0
    f_max: float = 9.0
    K: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.mode not in (THREE_PROP, TWO_PROP):
            raise ParameterError(f"unknown controller mode {self.mode!r}")
        if not (self.f_inner > 0 and self.f_outer > 0):
            raise ParameterError("loop frequencies must be positive")
        if len(self.q_diag) != 4:
            raise ParameterError("q_diag needs four entries (p, q, nx, ny)")
        expected = 3 if self.mode == THREE_PROP else 2
        if len(self.r_diag) != expected:
            raise ParameterError(f"{self.mode} mode needs {expected} R weights")
        if self.mode == THREE_PROP and len(self.force_pids) != 3:
            raise ParameterError("three-propeller mode needs three force PIDs")

    def with_gain(self, K) -> "ControllerConfig":
        return replace(self, K=np.asarray(K, float))

    def replace(self, **changes) -> "ControllerConfig":
        return replace(self, **changes)


def outer_accel(d_err, d_err_rate, cfg: OuterConfig) -> tuple[float, float, float]:
    """Desired deviation acceleration of a damped second-order error decay, capped per axis."""
    out = []
    for e, ed, z, wn, cap in zip(d_err, d_err_rate, cfg.zeta, cfg.omega_n, cfg.accel_cap):
        a = -2.0 * z * wn * ed - wn * wn * e
        out.append(min(max(a, -cap), cap))
    return tuple(out)


def desired_axis(accel_des, Fbar: float, nz_bar: float, R_v_to_b, params: QuadParams) -> tuple[float, float, float]:
    """Unit thrust axis, in body coordinates, that yields ``accel_des`` on average."""
    if not (Fbar > 0 and nz_bar > 0):
        raise DomainError("Fbar and nz_bar must be positive")
    M, g = params.M, params.g
    scale = 1.0 / (nz_bar * Fbar)
    v = (M * accel_des[0] * scale, M * accel_des[1] * scale, M * (accel_des[2] + g) * scale)
    b = [sum(R_v_to_b[i][j] * v[j] for j in range(3)) for i in range(3)]
    norm = math.sqrt(b[0] ** 2 + b[1] ** 2 + b[2] ** 2)
    if norm == 0.0:
        raise DomainError("degenerate demand: desired thrust vector is zero")
    return (b[0] / norm, b[1] / norm, b[2] / norm)


def thrust_demand(accel_des, nz_bar: float, params: QuadParams) -> float:
    """Total thrust magnitude that produces ``accel_des`` along the averaged axis."""
    ax, ay, az = accel_des
    return params.M * math.sqrt(ax * ax + ay * ay + (az + params.g) ** 2) / nz_bar


def inner_thrusts(s_err, cfg: ControllerConfig, eq: Equilibrium, attitude, u_pid, tilt_floor: float | None = None) -> MotorSet:
    """Motor thrusts from the LQR deviation and the PID output(s).

    ``u_pid`` is a per-survivor sequence in three-propeller mode and the
    altitude PID output in two-propeller mode. With ``tilt_floor`` set, the
    tilt factor is floored instead of raising near 90 deg, and the altitude
    term is dropped while the vehicle is inverted.
    """
    if cfg.K is None:
        raise ParameterError("controller gain K has not been synthesized")
    expected_mode = TWO_PROP if len(eq.failed) == 2 or eq.rho == 0.0 else THREE_PROP
    if cfg.mode != expected_mode:
        raise ParameterError(f"{cfg.mode} controller cannot fly a {expected_mode} equilibrium")
    u = -(cfg.K @ np.asarray(s_err, float))
    survivors = eq.survivors
    f = [0.0, 0.0, 0.0, 0.0]
    if cfg.mode == THREE_PROP:
        for k, i in enumerate(survivors):
            f[i - 1] = u[k] + eq.fbar[i - 1] + u_pid[k]
    else:
        phi, theta = attitude
        c = math.cos(phi) * math.cos(theta)
        if tilt_floor is None:
            if abs(phi) >= math.pi / 2 or abs(theta) >= math.pi / 2:
                raise SingularityError("tilt compensation undefined at or beyond 90 deg")
            uz = u_pid / c
        else:
            uz = 0.0 if c <= 0.0 else u_pid / max(c, tilt_floor)
        for k, i in enumerate(survivors):
            f[i - 1] = u[k] + eq.fbar[i - 1] + uz
    return MotorSet.command(f, eq.failed, cfg.f_max)


# Gain sets used in the reported simulations.
def three_prop_config(**overrides) -> ControllerConfig:
    base = ControllerConfig(
        mode=THREE_PROP,
        q_diag=(1.0, 1.0, 20.0, 20.0),
        r_diag=(1.11, 10.0, 1.0),
        force_pids=(
            PidGains(kp=1.0, ki=0.129),
            PidGains(kp=1.0, ki=0.05),
            PidGains(kp=1.0, ki=0.114),
        ),
        outer=OuterConfig(zeta=(0.7, 0.7, 4.5), omega_n=(1.0, 1.0, 2.1)),
    )
    return replace(base, **overrides)


def two_prop_config(**overrides) -> ControllerConfig:
    return replace(ControllerConfig(), **overrides)


def robustness_config(**overrides) -> ControllerConfig:
    base = ControllerConfig(
        q_diag=(0.0, 0.0, 420.0, 420.0),
        r_diag=(1.0, 1.0),
        altitude_pid=PidGains(kp=2.8, kd=3.2, ki=0.0, out_min=-5.0, out_max=5.0),
        f_max=15.0,
    )
    return replace(base, **overrides)
