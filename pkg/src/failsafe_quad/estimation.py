"""Sensor models and first-order state filters."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import RigidState
from .errors import DomainError, ParameterError, SingularityError

INNER_PERIOD = 1.0 / 450.0


def ema(prev, sample, alpha: float):
    """Exponential moving average ``alpha*sample + (1-alpha)*prev``."""
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha!r}")
    return alpha * sample + (1.0 - alpha) * prev


def complementary(att_prev: float, gyro_rate: float, att_absolute: float, dt: float, tau: float) -> float:
    if not (dt > 0.0 and tau > 0.0):
        raise DomainError("dt and tau must be positive")
    a = tau / (tau + dt)
    return a * (att_prev + gyro_rate * dt) + (1.0 - a) * att_absolute


def body_to_euler_rates(p: float, q: float, r: float, phi: float, theta: float) -> tuple[float, float, float]:
    if abs(theta) >= math.pi / 2:
        raise SingularityError(f"Euler rates undefined at theta={theta!r}")
    sphi, cphi = math.sin(phi), math.cos(phi)
    cth, tth = math.cos(theta), math.tan(theta)
    return (
        p + q * sphi * tth + r * cphi * tth,
        q * cphi - r * sphi,
        (q * sphi + r * cphi) / cth,
    )


def euler_to_body_rates(phid: float, thetad: float, psid: float, phi: float, theta: float) -> tuple[float, float, float]:
    sphi, cphi = math.sin(phi), math.cos(phi)
    sth, cth = math.sin(theta), math.cos(theta)
    return (
        phid - psid * sth,
        thetad * cphi + psid * sphi * cth,
        -thetad * sphi + psid * cphi * cth,
    )


# --- sensors ----------------------------------------------------------------

@dataclass(frozen=True)
class NoiseConfig:
    gyro: float = 0.02
    attitude: float = 0.01
    gps_pos: float = 0.5
    gps_vel: float = 0.1
    ultrasonic: float = 0.01

    @classmethod
    def ideal(cls) -> "NoiseConfig":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)

    @property
    def is_zero(self) -> bool:
        return not any((self.gyro, self.attitude, self.gps_pos, self.gps_vel, self.ultrasonic))


@dataclass(frozen=True)
class FilterConfig:
    """Filter time constants, each ``2**k`` inner periods.

    ``enabled=False`` passes raw samples through (used by the ideal preset).
    """

    tau_complementary: float = 2**5 * INNER_PERIOD
    tau_ema: float = 2**1 * INNER_PERIOD
    tau_zdot: float = 2**3 * INNER_PERIOD
    enabled: bool = True

    def __post_init__(self):
        if min(self.tau_complementary, self.tau_ema, self.tau_zdot) <= 0:
            raise ParameterError("filter time constants must be positive")

    def alpha_ema(self, dt: float = INNER_PERIOD) -> float:
        return dt / (self.tau_ema + dt)


@dataclass(frozen=True)
class SensorConfig:
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    filters: FilterConfig = field(default_factory=FilterConfig)
    gps_rate: float = 10.0
    ultrasonic_rate: float = 45.0

    @classmethod
    def ideal(cls) -> "SensorConfig":
        return cls(noise=NoiseConfig.ideal(), filters=FilterConfig(enabled=False))


@dataclass(frozen=True)
class SensorFrame:
    t: float
    gyro: tuple[float, float, float]
    attitude: tuple[float, float, float]
    gps: tuple[float, float, float, float]
    ultrasonic_z: float
    gps_time: float
    ultrasonic_time: float


class SensorSampler:
    """Rate-limited noisy sensors.

    Gyro and attitude streams refresh on every call; GPS and ultrasonic
    refresh once at least one period has passed since their last sample and
    otherwise repeat the held value. Noise comes from per-stream generators
    seeded from ``seed``, so equal seeds and call sequences give identical
    frames.
    """

    _STREAMS = ("gyro", "attitude", "gps", "ultrasonic")

    def __init__(self, config: SensorConfig | None = None, seed: int = 0):
        self.config = config or SensorConfig()
        self._rng = {name: np.random.default_rng([seed, k]) for k, name in enumerate(self._STREAMS)}
        self._gps = None
        self._gps_time = -math.inf
        self._ultra = None
        self._ultra_time = -math.inf
        self._last_t = -math.inf

    def _noise(self, stream: str, sigma: float, n: int):
        if sigma == 0.0:
            return (0.0,) * n
        return tuple(float(v) for v in self._rng[stream].normal(0.0, sigma, n))

    def sample(self, s: RigidState, t: float) -> SensorFrame:
        if t < self._last_t:
            raise DomainError("sensor time must be monotone")
        self._last_t = t
        nz = self.config.noise
        ng = self._noise("gyro", nz.gyro, 3)
        na = self._noise("attitude", nz.attitude, 3)
        eps = 1e-9
        if t - self._gps_time >= 1.0 / self.config.gps_rate - eps:
            npos = self._noise("gps", nz.gps_pos, 2)
            nvel = self._noise("gps", nz.gps_vel, 2)
            self._gps = (s.x + npos[0], s.y + npos[1], s.xd + nvel[0], s.yd + nvel[1])
            self._gps_time = t
        if t - self._ultra_time >= 1.0 / self.config.ultrasonic_rate - eps:
            self._ultra = s.z + self._noise("ultrasonic", nz.ultrasonic, 1)[0]
            self._ultra_time = t
        psi = s.psi + na[2]
        psi = math.atan2(math.sin(psi), math.cos(psi))
        return SensorFrame(
            t=t,
            gyro=(s.p + ng[0], s.q + ng[1], s.r + ng[2]),
            attitude=(s.phi + na[0], s.theta + na[1], psi),
            gps=self._gps,
            ultrasonic_z=self._ultra,
            gps_time=self._gps_time,
            ultrasonic_time=self._ultra_time,
        )


def sample_sensors(true_state: RigidState, t: float, noise_seed: int = 0, config: SensorConfig | None = None) -> SensorFrame:
    """Single-shot sample from a fresh sampler (no held history)."""
    return SensorSampler(config, noise_seed).sample(true_state, t)


# --- estimator --------------------------------------------------------------

@dataclass
class Estimate:
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


class StateEstimator:
    """EMA-smoothed gyro, complementary attitude, held GPS, differenced altitude rate."""

    def __init__(self, config: FilterConfig, dt: float = INNER_PERIOD):
        self.config = config
        self.dt = dt
        self.est = Estimate()
        self._started = False
        self._z_prev = None
        self._z_prev_time = None

    def reset(self, s: RigidState):
        self.est = Estimate(*s.as_tuple())
        self._started = True
        self._z_prev = s.z
        self._z_prev_time = None

    def update(self, frame: SensorFrame) -> Estimate:
        if not self._started:
            self.reset(RigidState(*frame.gps[:2], frame.ultrasonic_z, frame.gps[2], frame.gps[3], 0.0, *frame.attitude, *frame.gyro))
        e = self.est
        cfg = self.config
        if not cfg.enabled:
            e.p, e.q, e.r = frame.gyro
            e.phi, e.theta, e.psi = frame.attitude
        else:
            a = cfg.alpha_ema(self.dt)
            e.p = ema(e.p, frame.gyro[0], a)
            e.q = ema(e.q, frame.gyro[1], a)
            e.r = ema(e.r, frame.gyro[2], a)
            try:
                phid, thd, psid = body_to_euler_rates(e.p, e.q, e.r, e.phi, e.theta)
            except SingularityError:
                phid = thd = psid = 0.0
            tau = cfg.tau_complementary
            e.phi = _wrap(complementary(e.phi, phid, _near(frame.attitude[0], e.phi), self.dt, tau))
            e.theta = complementary(e.theta, thd, frame.attitude[1], self.dt, tau)
            k = tau / (tau + self.dt)
            pred = e.psi + psid * self.dt
            e.psi = math.atan2(
                k * math.sin(pred) + (1 - k) * math.sin(frame.attitude[2]),
                k * math.cos(pred) + (1 - k) * math.cos(frame.attitude[2]),
            )
        e.x, e.y, e.xd, e.yd = frame.gps
        if frame.ultrasonic_time != self._z_prev_time:
            if self._z_prev_time is not None:
                h = frame.ultrasonic_time - self._z_prev_time
                raw = (frame.ultrasonic_z - self._z_prev) / h
                e.zd = ema(e.zd, raw, h / (cfg.tau_zdot + h)) if cfg.enabled else raw
            self._z_prev = frame.ultrasonic_z
            self._z_prev_time = frame.ultrasonic_time
            e.z = frame.ultrasonic_z
        return e


def _wrap(a: float) -> float:
    return math.atan2(math.sin(a), math.cos(a))


def _near(a: float, ref: float) -> float:
    """Shift ``a`` by a multiple of 2*pi to lie within pi of ``ref``."""
    return ref + _wrap(a - ref)
