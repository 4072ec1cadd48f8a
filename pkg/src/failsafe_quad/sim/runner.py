"""Multi-rate closed-loop simulation.

Every plant tick (``spec.dt``) the sensors are sampled, the estimator and
failure detector are updated and the active controller runs its loops when
their periods are due. Thrusts are held between inner-loop updates.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from ..control import THREE_PROP, TWO_PROP, Pid, desired_axis, inner_thrusts, outer_accel, thrust_demand, two_prop_config
from ..detect import FailureDetector, FailureVerdict
from ..dynamics import MotorSet, RigidState, euler_to_quat, mix_forces, quat_to_euler, rk4, rotation_matrix
from ..equilibrium import OPPOSITE, Equilibrium, FailureConfig, solve_equilibrium
from ..errors import FailsafeError
from ..estimation import SensorSampler, StateEstimator
from ..lqr import LqrWeights, lqr_gain
from .scenario import STATE_FIELDS, NominalConfig, ScenarioSpec

MODE_NOMINAL, MODE_FAILSAFE, MODE_NULL = 0, 1, 2

LOG_COLUMNS = (
    ("t",)
    + STATE_FIELDS
    + tuple(f"est_{n}" for n in STATE_FIELDS)
    + ("f1", "f2", "f3", "f4", "u_z", "u_f1", "u_f2", "u_f3")
    + ("ax_des", "ay_des", "az_des", "nx_des", "ny_des", "nz_des")
    + ("mode", "detected")
)
# "detected" holds the latched failure set as a motor bitmask (bit i-1 for motor i), 0 before detection.


@dataclass
class SimLog:
    columns: tuple = LOG_COLUMNS
    rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def array(self) -> np.ndarray:
        return np.asarray(self.rows, float).reshape(-1, len(self.columns))

    def column(self, name: str) -> np.ndarray:
        return self.array()[:, self.columns.index(name)]

    def to_csv(self, fh=None) -> str | None:
        out = fh if fh is not None else io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([repr(float(v)) for v in row])
        return out.getvalue() if fh is None else None


@dataclass
class SimResult:
    spec: ScenarioSpec
    log: SimLog
    crashed: bool
    crash_time: float
    crash_reason: str
    final_state: tuple
    equilibrium: Equilibrium | None
    detection: FailureVerdict | None
    switch_time: float

    @property
    def stable(self) -> bool:
        return assess_stability(self)


def _bitmask(motors) -> int:
    return sum(1 << (i - 1) for i in motors)


def equilibrium_attitude(eq: Equilibrium) -> tuple[float, float]:
    """Roll and pitch that put the body axis ``n`` along inertial vertical."""
    nx, ny, nz = eq.n
    return math.atan2(ny, nz), -math.asin(max(-1.0, min(1.0, nx)))


def initial_vector(spec: ScenarioSpec, eq: Equilibrium | None) -> tuple:
    s = dict(zip(STATE_FIELDS, spec.initial.as_tuple()))
    if spec.at_equilibrium and eq is not None:
        s["phi"], s["theta"] = equilibrium_attitude(eq)
        s["p"], s["q"], s["r"] = eq.pbar, eq.qbar, eq.rbar
        # Place the centre of the thrust-induced orbit on the requested
        # position and start with the matching circular velocity.
        R = rotation_matrix(s["phi"], s["theta"], s["psi"])
        w = [sum(R[i][j] * v for j, v in enumerate((eq.pbar, eq.qbar, eq.rbar))) for i in range(3)]
        w2 = w[0] ** 2 + w[1] ** 2 + w[2] ** 2
        if w2 > 0.0:
            a = eq.Fbar / spec.params.M
            rel = (-a * R[0][2] / w2, -a * R[1][2] / w2)
            s["x"] += rel[0]
            s["y"] += rel[1]
            s["xd"] += -w[2] * rel[1]
            s["yd"] += w[2] * rel[0]
    for name, delta in spec.perturbation:
        s[name] += delta
    return (
        s["x"], s["y"], s["z"], s["xd"], s["yd"], s["zd"],
        *euler_to_quat(s["phi"], s["theta"], s["psi"]),
        s["p"], s["q"], s["r"],
    )


def design_equilibrium(spec: ScenarioSpec, failed, cfg) -> Equilibrium:
    fc = FailureConfig(frozenset(failed), spec.failure.rho if len(failed) == 1 else 0.0)
    source = spec.params if spec.equilibrium_source == "plant" else spec.model
    return solve_equilibrium(source, fc, cfg.f_max)


def design_controller(spec: ScenarioSpec, detected) -> tuple:
    """Controller config, equilibrium and commanded failed set for a detected failure.

    A single failure flown by a two-propeller controller also idles the
    opposite motor; a pair cannot be flown in three-propeller mode, so the
    default two-propeller gains take over.
    """
    cfg = spec.controller
    failed = frozenset(detected)
    if len(failed) == 1 and cfg.mode == TWO_PROP:
        (k,) = failed
        failed = frozenset({k, OPPOSITE[k]})
    elif len(failed) == 2 and cfg.mode == THREE_PROP:
        cfg = two_prop_config(f_inner=cfg.f_inner, f_outer=cfg.f_outer, f_max=cfg.f_max)
    eq = design_equilibrium(spec, failed, cfg)
    if cfg.K is None:
        K = lqr_gain(spec.model, eq, LqrWeights.diagonal(cfg.q_diag, cfg.r_diag))
        cfg = cfg.with_gain(K)
    return cfg, eq, failed


class NominalController:
    """Four-motor PD hover controller with inverse mixing."""

    def __init__(self, params, cfg: NominalConfig):
        self.P = params
        self.cfg = cfg

    def thrusts(self, e, ref) -> tuple:
        P, c = self.P, self.cfg
        g = P.g
        wp, zp = c.pos_wn, c.pos_zeta
        ax = wp * wp * (ref[0] - e.x) - 2 * zp * wp * e.xd
        ay = wp * wp * (ref[1] - e.y) - 2 * zp * wp * e.yd
        wa, za = c.alt_wn, c.alt_zeta
        az = wa * wa * (ref[2] - e.z) - 2 * za * wa * e.zd
        cpsi, spsi = math.cos(e.psi), math.sin(e.psi)
        # small-angle inversion of the horizontal dynamics
        theta_d = (ax * cpsi + ay * spsi) / g
        phi_d = (ax * spsi - ay * cpsi) / g
        lim = c.tilt_max
        theta_d = min(max(theta_d, -lim), lim)
        phi_d = min(max(phi_d, -lim), lim)
        tilt = max(math.cos(e.phi) * math.cos(e.theta), 0.5)
        F = P.M * (g + az) / tilt
        w, z = c.att_wn, c.att_zeta
        t_phi = P.Jxx * (w * w * (phi_d - e.phi) - 2 * z * w * e.p)
        t_theta = P.Jyy * (w * w * (theta_d - e.theta) - 2 * z * w * e.q)
        psi_err = math.atan2(math.sin(-e.psi), math.cos(-e.psi))
        t_psi = P.Jzz * (4.0 * psi_err - 4.0 * e.r)
        a = 0.5 * (F + t_psi / P.eps)
        b = F - a
        return (
            0.5 * (a - t_theta / P.l),
            0.5 * (b + t_phi / P.l),
            0.5 * (a + t_theta / P.l),
            0.5 * (b - t_phi / P.l),
        )


class FailsafeController:
    """Outer translational loop and inner LQR attitude loop for one failure case."""

    def __init__(self, spec: ScenarioSpec, cfg, eq: Equilibrium, failed, tilt_floor: float = 0.2):
        self.spec = spec
        self.cfg = cfg
        self.eq = eq
        self.failed = failed
        self.model = spec.model
        self.tilt_floor = tilt_floor
        self.K = cfg.K
        self.alt_pid = Pid(cfg.altitude_pid)
        self.force_pids = [Pid(g) for g in cfg.force_pids]
        self.accel = (0.0, 0.0, 0.0)
        self.u_z = 0.0
        self.u_f = [0.0, 0.0, 0.0]
        self.n_des = tuple(eq.n)

    def outer(self, e, ref, dt: float):
        cfg, eq = self.cfg, self.eq
        err = (e.x - ref[0], e.y - ref[1], e.z - ref[2])
        self.accel = outer_accel(err, (e.xd, e.yd, e.zd), cfg.outer)
        if cfg.mode == THREE_PROP:
            F_des = thrust_demand(self.accel, eq.n[2], self.model)
            survivors = eq.survivors
            for k, i in enumerate(survivors):
                share = eq.fbar[i - 1] / eq.Fbar
                self.u_f[k] = self.force_pids[k].step(share * (F_des - eq.Fbar), 0.0, dt)
        else:
            self.u_z = self.alt_pid.step(ref[2] - e.z, -e.zd, dt)

    def inner(self, e) -> MotorSet:
        eq = self.eq
        R = rotation_matrix(e.phi, e.theta, e.psi)
        R_v_to_b = ((R[0][0], R[1][0], R[2][0]), (R[0][1], R[1][1], R[2][1]), (R[0][2], R[1][2], R[2][2]))
        n = desired_axis(self.accel, eq.Fbar, eq.n[2], R_v_to_b, self.model)
        self.n_des = n
        s_err = (e.p - eq.pbar, e.q - eq.qbar, n[0] - eq.n[0], n[1] - eq.n[1])
        u_pid = self.u_f if self.cfg.mode == THREE_PROP else self.u_z
        return inner_thrusts(s_err, self.cfg, eq, (e.phi, e.theta), u_pid, self.tilt_floor)


def run(spec: ScenarioSpec, record: bool = True) -> SimResult:
    P = spec.params
    dt = spec.dt
    fail = spec.failure
    n_steps = int(round(spec.duration / dt))

    ctrl = None
    eq = None
    detection = None
    switch_time = math.nan
    commanded_failed = frozenset()
    mode = MODE_NULL if spec.null_controller else MODE_NOMINAL
    immediate = bool(fail.motors) and not fail.detect and fail.time <= 0.0
    if fail.motors and (immediate or spec.at_equilibrium) and not spec.null_controller:
        cfg, eq, commanded_failed = design_controller(spec, fail.motors)
        if immediate:
            ctrl = FailsafeController(spec, cfg, eq, commanded_failed)
            mode = MODE_FAILSAFE
            switch_time = 0.0

    y = initial_vector(spec, eq)
    nominal = NominalController(spec.model, spec.nominal)
    sampler = SensorSampler(spec.sensors, spec.seed)
    estimator = StateEstimator(spec.sensors.filters, dt)
    phi0, th0, psi0 = quat_to_euler(*y[6:10])

    estimator.reset(RigidState(*y[:6], phi0, th0, psi0, *y[10:]))
    detector = FailureDetector(spec.detector) if fail.motors and fail.detect else None

    thrust = MotorSet()
    next_inner = next_outer = 0.0
    log = SimLog()
    crashed, crash_time, reason = False, math.nan, ""
    eps_t = 1e-9
    plant_failed = frozenset()

    for k in range(n_steps + 1):
        t = k * dt
        phi, theta, psi = quat_to_euler(y[6], y[7], y[8], y[9])
        true = RigidState(y[0], y[1], y[2], y[3], y[4], y[5], phi, theta, psi, y[10], y[11], y[12])
        est = estimator.update(sampler.sample(true, t))
        ref = spec.reference_at(t)

        if fail.motors and not plant_failed and t >= fail.time - eps_t:
            plant_failed = fail.motors
            if not fail.detect and mode == MODE_NOMINAL:
                cfg, eq, commanded_failed = design_controller(spec, fail.motors)
                ctrl = FailsafeController(spec, cfg, eq, commanded_failed)
                mode, switch_time = MODE_FAILSAFE, t
                next_inner = next_outer = t
        if detector is not None and detection is None:
            v = detector.update(t, est.p, est.q, est.r, est.phi, est.theta)
            if v is not None:
                detection = v
                if mode == MODE_NOMINAL and len(v.failed) <= 2:
                    try:
                        cfg, eq, commanded_failed = design_controller(spec, v.failed)
                    except FailsafeError:
                        pass
                    else:
                        ctrl = FailsafeController(spec, cfg, eq, commanded_failed)
                        mode, switch_time = MODE_FAILSAFE, t
                        next_inner = next_outer = t

        if mode == MODE_FAILSAFE:
            if t >= next_outer - eps_t:
                ctrl.outer(est, ref, 1.0 / ctrl.cfg.f_outer)
                next_outer += 1.0 / ctrl.cfg.f_outer
            if t >= next_inner - eps_t:
                thrust = ctrl.inner(est)
                next_inner += 1.0 / ctrl.cfg.f_inner
        elif mode == MODE_NOMINAL:
            if t >= next_inner - eps_t:
                thrust = MotorSet.command(nominal.thrusts(est, ref), (), 1e9)
                next_inner += dt
        else:
            thrust = MotorSet()

        applied = MotorSet(*thrust.thrusts, failed=plant_failed)
        if record:
            if ctrl is not None:
                extra = (ctrl.u_z, *ctrl.u_f, *ctrl.accel, *ctrl.n_des)
            else:
                extra = (0.0,) * 10
            log.rows.append(
                (t, *true.as_tuple(), est.x, est.y, est.z, est.xd, est.yd, est.zd, est.phi, est.theta,
                 est.psi, est.p, est.q, est.r, *applied.thrusts, *extra, float(mode),
                 float(_bitmask(detection.failed) if detection and detection.failed else 0))
            )
        if k == n_steps:
            break

        y = rk4(y, mix_forces(applied, P), dt, P)

        bad = None
        if not all(math.isfinite(v) for v in y):
            bad = "non-finite state"
        elif math.sqrt(sum(v * v for v in y)) > 1e6:
            bad = "state norm above 1e6"
        elif math.dist(y[:3], ref) > spec.divergence_distance:
            bad = "position diverged"
        elif math.sqrt(y[10] ** 2 + y[11] ** 2 + y[12] ** 2) > spec.divergence_rate:
            bad = "body rate diverged"
        if bad:
            crashed, crash_time, reason = True, t + dt, bad
            break

    return SimResult(
        spec=spec, log=log, crashed=crashed, crash_time=crash_time, crash_reason=reason,
        final_state=tuple(y), equilibrium=eq, detection=detection, switch_time=switch_time,
    )


def assess_stability(result: SimResult, axis_tol: float = 0.1, alt_tol: float = 0.5) -> bool:
    """No crash, and over the last 20% the vertical stays near ``n`` and altitude near reference."""
    if result.crashed:
        return False
    log = result.log
    if not log.rows:
        raise FailsafeError("stability assessment needs a recorded log")
    a = log.array()
    c = log.columns
    t = a[:, 0]
    tail = t >= t[-1] - 0.2 * result.spec.duration
    phi, theta = a[tail, c.index("phi")], a[tail, c.index("theta")]
    nbar = result.equilibrium.n if result.equilibrium is not None else (0.0, 0.0, 1.0)
    dnx = -np.sin(theta) - nbar[0]
    dny = np.sin(phi) * np.cos(theta) - nbar[1]
    if np.max(np.hypot(dnx, dny)) >= axis_tol:
        return False
    zref = np.array([result.spec.reference_at(ti)[2] for ti in t[tail]])
    return bool(np.max(np.abs(a[tail, c.index("z")] - zref)) < alt_tol)


def orbit_radius(result: SimResult, t_start: float) -> float:
    """Mean horizontal distance from the spin-period moving-average centre after ``t_start``.

    Averaging over one spin period removes the circular motion from the
    centre estimate while following any slow drift of the vehicle.
    """
    if result.equilibrium is None:
        raise FailsafeError("orbit radius needs a fail-safe equilibrium")
    a = result.log.array()
    c = result.log.columns
    m = a[:, 0] >= t_start
    x, y = a[m, c.index("x")], a[m, c.index("y")]
    n = int(round(2.0 * math.pi / result.equilibrium.omega_norm / result.spec.dt))
    if n < 2 or len(x) < 2 * n:
        raise FailsafeError("window too short to resolve the orbit")
    k = np.ones(n) / n
    cx, cy = np.convolve(x, k, "valid"), np.convolve(y, k, "valid")
    h = n // 2
    return float(np.mean(np.hypot(x[h:h + len(cx)] - cx, y[h:h + len(cy)] - cy)))


def steady_mean(result: SimResult, column: str, fraction: float = 0.2) -> float:
    """Mean of a logged column over the final ``fraction`` of the run."""
    a = result.log.array()
    t = a[:, 0]
    m = t >= t[-1] - fraction * result.spec.duration
    return float(np.mean(a[m, result.log.columns.index(column)]))
