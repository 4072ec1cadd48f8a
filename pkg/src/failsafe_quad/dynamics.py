"""Rigid-body quadcopter plant.

Motors sit in a plus layout: 1 at +x, 2 at +y, 3 at -x, 4 at -y, which gives
roll torque ``l*(f2 - f4)`` and pitch torque ``l*(f3 - f1)``. Motors 1 and 3
spin opposite to 2 and 4; each propeller pushes a reaction torque opposite to
its own spin onto the frame.

Attitude is reported as ZYX Euler angles (roll ``phi``, pitch ``theta``,
yaw ``psi``) but integrated on the unit quaternion so that tumbling through
``theta = +-90 deg`` does not stop a simulation.
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, field
from typing import NamedTuple

from .errors import DomainError
from .params import QuadParams

MOTORS = (1, 2, 3, 4)
# (-1)**i for motor i, used for the net propeller speed Omega.
SPIN_SIGN = (-1.0, 1.0, -1.0, 1.0)


@dataclass(frozen=True)
class RigidState:
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    xd: float = 0.0
    yd: float = 0.0
    zd: float = 0.0
    phi: float = 0.0
    theta: float = 0.0
    psi: float = 0.0
    p: float = 0.0
    q: float = 0.0
    r: float = 0.0

    def as_tuple(self) -> tuple[float, ...]:
        return astuple(self)

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in astuple(self))


@dataclass(frozen=True)
class MotorSet:
    """Propeller thrusts in newtons; failed motors are pinned to zero."""

    f1: float = 0.0
    f2: float = 0.0
    f3: float = 0.0
    f4: float = 0.0
    failed: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        failed = frozenset(self.failed)
        if not failed <= set(MOTORS):
            raise DomainError(f"unknown motor index in failed set {sorted(failed)}")
        object.__setattr__(self, "failed", failed)
        for i in failed:
            object.__setattr__(self, f"f{i}", 0.0)
        for i, f in enumerate(self.thrusts, 1):
            if not f >= 0.0:
                raise DomainError(f"thrust f{i} must be non-negative, got {f!r}")

    @property
    def thrusts(self) -> tuple[float, float, float, float]:
        return (self.f1, self.f2, self.f3, self.f4)

    @classmethod
    def command(cls, thrusts, failed=(), f_max=math.inf) -> "MotorSet":
        """Clamp raw thrust commands to ``[0, f_max]`` and pin failed motors."""
        f = [min(max(float(v), 0.0), f_max) for v in thrusts]
        return cls(*f, failed=frozenset(failed))


class BodyWrench(NamedTuple):
    F: float
    tau_phi: float
    tau_theta: float
    tau_psi: float
    Omega: float


def mix_forces(m: MotorSet, params: QuadParams) -> BodyWrench:
    """Total thrust, body torques and net propeller speed for a thrust set."""
    f1, f2, f3, f4 = m.thrusts
    if min(f1, f2, f3, f4) < 0.0:
        raise DomainError("negative thrust")
    l = params.l
    omega = 0.0
    for s, f in zip(SPIN_SIGN, (f1, f2, f3, f4)):
        omega += s * math.sqrt(f / params.kf)
    return BodyWrench(
        F=f1 + f2 + f3 + f4,
        tau_phi=l * (f2 - f4),
        tau_theta=l * (f3 - f1),
        tau_psi=params.eps * (f1 - f2 + f3 - f4),
        Omega=omega,
    )


def translational_accel(s: RigidState, F: float, params: QuadParams) -> tuple[float, float, float]:
    cphi, sphi = math.cos(s.phi), math.sin(s.phi)
    cth, sth = math.cos(s.theta), math.sin(s.theta)
    cpsi, spsi = math.cos(s.psi), math.sin(s.psi)
    a = F / params.M
    return (
        (cphi * sth * cpsi + sphi * spsi) * a,
        (cphi * sth * spsi - sphi * cpsi) * a,
        cphi * cth * a - params.g,
    )


def _body_rate_dot(p, q, r, tau_phi, tau_theta, tau_psi, Omega, P: QuadParams):
    Jxx, Jyy, Jzz, Jp = P.Jxx, P.Jyy, P.Jzz, P.Jp
    # Euler's equations with the net propeller angular momentum Jp*Omega on
    # body z; drag opposes the yaw rate in either direction.
    return (
        (tau_phi - (Jzz - Jyy) * q * r - Jp * q * Omega) / Jxx,
        (tau_theta - (Jxx - Jzz) * p * r + Jp * p * Omega) / Jyy,
        (tau_psi - (Jyy - Jxx) * p * q - P.gamma * r * abs(r)) / Jzz,
    )


def rotational_accel(s: RigidState, w: BodyWrench, params: QuadParams) -> tuple[float, float, float]:
    return _body_rate_dot(s.p, s.q, s.r, w.tau_phi, w.tau_theta, w.tau_psi, w.Omega, params)


# --- attitude helpers -------------------------------------------------------

def euler_to_quat(phi: float, theta: float, psi: float) -> tuple[float, float, float, float]:
    cr, sr = math.cos(phi / 2), math.sin(phi / 2)
    cp, sp = math.cos(theta / 2), math.sin(theta / 2)
    cy, sy = math.cos(psi / 2), math.sin(psi / 2)
    return (
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    )


def quat_to_euler(q0: float, q1: float, q2: float, q3: float) -> tuple[float, float, float]:
    s = 2.0 * (q0 * q2 - q3 * q1)
    s = 1.0 if s > 1.0 else (-1.0 if s < -1.0 else s)
    return (
        math.atan2(2.0 * (q0 * q1 + q2 * q3), 1.0 - 2.0 * (q1 * q1 + q2 * q2)),
        math.asin(s),
        math.atan2(2.0 * (q0 * q3 + q1 * q2), 1.0 - 2.0 * (q2 * q2 + q3 * q3)),
    )


def rotation_matrix(phi: float, theta: float, psi: float) -> tuple[tuple[float, ...], ...]:
    """Body-to-inertial rotation ``R = Rz(psi) Ry(theta) Rx(phi)`` as nested rows."""
    cphi, sphi = math.cos(phi), math.sin(phi)
    cth, sth = math.cos(theta), math.sin(theta)
    cpsi, spsi = math.cos(psi), math.sin(psi)
    return (
        (cth * cpsi, sphi * sth * cpsi - cphi * spsi, cphi * sth * cpsi + sphi * spsi),
        (cth * spsi, sphi * sth * spsi + cphi * cpsi, cphi * sth * spsi - sphi * cpsi),
        (-sth, sphi * cth, cphi * cth),
    )


# --- integration ------------------------------------------------------------

def _deriv(y, F, tau_phi, tau_theta, tau_psi, Omega, P: QuadParams):
    _, _, _, vx, vy, vz, q0, q1, q2, q3, p, q, r = y
    a = F / P.M
    pd, qd, rd = _body_rate_dot(p, q, r, tau_phi, tau_theta, tau_psi, Omega, P)
    return (
        vx,
        vy,
        vz,
        2.0 * (q1 * q3 + q0 * q2) * a,
        2.0 * (q2 * q3 - q0 * q1) * a,
        (1.0 - 2.0 * (q1 * q1 + q2 * q2)) * a - P.g,
        0.5 * (-q1 * p - q2 * q - q3 * r),
        0.5 * (q0 * p + q2 * r - q3 * q),
        0.5 * (q0 * q - q1 * r + q3 * p),
        0.5 * (q0 * r + q1 * q - q2 * p),
        pd,
        qd,
        rd,
    )


def rk4(y: tuple, w: BodyWrench, dt: float, params: QuadParams) -> tuple:
    """One RK4 step of the 13-element (position, velocity, quaternion, rates) vector."""
    args = (w.F, w.tau_phi, w.tau_theta, w.tau_psi, w.Omega, params)
    k1 = _deriv(y, *args)
    h = 0.5 * dt
    k2 = _deriv(tuple(a + h * b for a, b in zip(y, k1)), *args)
    k3 = _deriv(tuple(a + h * b for a, b in zip(y, k2)), *args)
    k4 = _deriv(tuple(a + dt * b for a, b in zip(y, k3)), *args)
    c = dt / 6.0
    out = [a + c * (b1 + 2.0 * b2 + 2.0 * b3 + b4) for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)]
    n = math.sqrt(out[6] ** 2 + out[7] ** 2 + out[8] ** 2 + out[9] ** 2)
    out[6] /= n
    out[7] /= n
    out[8] /= n
    out[9] /= n
    return tuple(out)


def state_to_vector(s: RigidState) -> tuple:
    return (s.x, s.y, s.z, s.xd, s.yd, s.zd, *euler_to_quat(s.phi, s.theta, s.psi), s.p, s.q, s.r)


def vector_to_state(y) -> RigidState:
    phi, theta, psi = quat_to_euler(y[6], y[7], y[8], y[9])
    return RigidState(y[0], y[1], y[2], y[3], y[4], y[5], phi, theta, psi, y[10], y[11], y[12])


def step(s: RigidState, m: MotorSet, dt: float, params: QuadParams) -> RigidState:
    """Advance the plant by ``dt`` seconds with thrusts held constant."""
    if not dt > 0.0:
        raise DomainError(f"dt must be positive, got {dt!r}")
    return vector_to_state(rk4(state_to_vector(s), mix_forces(m, params), dt, params))


def energy(s: RigidState, params: QuadParams) -> float:
    """Kinetic plus potential energy (diagonal inertia)."""
    v2 = s.xd * s.xd + s.yd * s.yd + s.zd * s.zd
    rot = params.Jxx * s.p**2 + params.Jyy * s.q**2 + params.Jzz * s.r**2
    return 0.5 * params.M * v2 + params.M * params.g * s.z + 0.5 * rot
