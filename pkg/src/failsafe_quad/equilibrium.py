"""Periodic (spinning) equilibrium after losing one or two opposing motors.

At the equilibrium the body rates are constant, so the rotational dynamics
reduce to a torque balance in the body frame. Together with the thrust-ratio
constraints (opposing survivors share thrust, the motor opposite the failed
one carries ``rho`` times that) and the averaged lift balance
``F * n_z = M g`` this fixes the thrust level and the three body rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import MotorSet, mix_forces, rotational_accel, RigidState
from .errors import ConvergenceError, DomainError, InfeasibleError, ParameterError
from .params import QuadParams

OPPOSITE = {1: 3, 2: 4, 3: 1, 4: 2}


@dataclass(frozen=True)
class FailureConfig:
    failed: frozenset
    rho: float = 0.0

    def __post_init__(self):
        failed = frozenset(int(i) for i in self.failed)
        if not failed <= {1, 2, 3, 4}:
            raise ParameterError(f"unknown motor in failed set {sorted(failed)}")
        if len(failed) == 2:
            a, b = sorted(failed)
            if OPPOSITE[a] != b:
                raise ParameterError(f"two failed motors must be opposing, got {sorted(failed)}")
            object.__setattr__(self, "rho", 0.0)
        elif len(failed) != 1:
            raise ParameterError("fail-safe equilibria exist for one or two opposing failed motors")
        if not (math.isfinite(self.rho) and self.rho >= 0.0):
            raise ParameterError(f"rho must be finite and >= 0, got {self.rho!r}")
        object.__setattr__(self, "failed", failed)

    @property
    def two_propeller(self) -> bool:
        return len(self.failed) == 2 or self.rho == 0.0

    def pattern(self) -> tuple[float, float, float, float]:
        """Thrust of each motor relative to the equal-thrust survivor pair."""
        if len(self.failed) == 2:
            return tuple(0.0 if i in self.failed else 1.0 for i in (1, 2, 3, 4))
        (k,) = self.failed
        j = OPPOSITE[k]
        return tuple(0.0 if i == k else (self.rho if i == j else 1.0) for i in (1, 2, 3, 4))


@dataclass(frozen=True)
class Equilibrium:
    failed: frozenset
    rho: float
    fbar: tuple[float, float, float, float]
    wbar: tuple[float, float, float, float]
    pbar: float
    qbar: float
    rbar: float
    n: tuple[float, float, float]
    Fbar: float
    epsilon: float
    Rps: float

    @property
    def omega_norm(self) -> float:
        return math.sqrt(self.pbar**2 + self.qbar**2 + self.rbar**2)

    @property
    def survivors(self) -> tuple[int, ...]:
        return tuple(i for i in (1, 2, 3, 4) if i not in self.failed)

    def motor_set(self) -> MotorSet:
        return MotorSet(*self.fbar, failed=self.failed)

    def as_record(self) -> dict[str, float | str]:
        rec: dict[str, float | str] = {
            "failed": ",".join(str(i) for i in sorted(self.failed)),
            "rho": self.rho,
        }
        for i in range(4):
            rec[f"fbar{i + 1}"] = self.fbar[i]
        for i in range(4):
            rec[f"wbar{i + 1}"] = self.wbar[i]
        rec.update(
            pbar=self.pbar, qbar=self.qbar, rbar=self.rbar,
            nx=self.n[0], ny=self.n[1], nz=self.n[2],
            Fbar=self.Fbar, epsilon=self.epsilon, Rps=self.Rps,
        )
        return rec


def primary_axis(p: float, q: float, r: float) -> tuple[float, float, float]:
    norm = math.sqrt(p * p + q * q + r * r)
    if norm == 0.0:
        raise DomainError("primary axis undefined for a zero rate vector")
    return (p / norm, q / norm, r / norm)


def orbit_radius(nz: float, omega_norm: float, g: float) -> float:
    """Radius of the horizontal circle traced by the centre of mass."""
    if not 0.0 < nz <= 1.0:
        raise DomainError(f"nz must lie in (0, 1], got {nz!r}")
    if not omega_norm > 0.0:
        raise DomainError(f"omega_norm must be positive, got {omega_norm!r}")
    return math.sqrt(max(0.0, 1.0 - nz * nz)) / nz * g / omega_norm**2


def _upward_axis(p, q, r):
    n = primary_axis(p, q, r)
    # The thrust-carrying direction is the one with positive body-z component.
    return n if n[2] >= 0.0 else (-n[0], -n[1], -n[2])


def equilibrium_residual(params: QuadParams, fbar, p: float, q: float, r: float, failed=()) -> np.ndarray:
    """Body-rate accelerations (rad/s^2) and lift imbalance (m/s^2) at a candidate point."""
    m = MotorSet(*fbar, failed=frozenset(failed))
    w = mix_forces(m, params)
    pd, qd, rd = rotational_accel(RigidState(p=p, q=q, r=r), w, params)
    nz = _upward_axis(p, q, r)[2]
    return np.array([pd, qd, rd, (w.F * nz - params.weight) / params.M])


def _build(params: QuadParams, fc: FailureConfig, f: float, p: float, q: float, r: float) -> Equilibrium:
    c = fc.pattern()
    fbar = tuple(ci * f for ci in c)
    wbar = tuple(math.sqrt(fi / params.kf) for fi in fbar)
    n = _upward_axis(p, q, r)
    omega = math.sqrt(p * p + q * q + r * r)
    return Equilibrium(
        failed=fc.failed,
        rho=fc.rho,
        fbar=fbar,
        wbar=wbar,
        pbar=p,
        qbar=q,
        rbar=r,
        n=n,
        Fbar=sum(fbar),
        epsilon=params.eps,
        Rps=orbit_radius(n[2], omega, params.g),
    )


def _yaw_sign(c) -> float:
    return 1.0 if c[0] - c[1] + c[2] - c[3] >= 0.0 else -1.0


def closed_form_two_propeller(params: QuadParams, failed) -> Equilibrium:
    """Opposing-pair solution: level spin about body z, survivors share the weight."""
    fc = FailureConfig(frozenset(failed), 0.0)
    if len(fc.failed) != 2:
        raise ParameterError("closed form applies to two opposing failed motors")
    c = fc.pattern()
    f = params.weight / 2.0
    w = math.sqrt(f / params.kf)
    r = _yaw_sign(c) * math.sqrt(2.0 * params.kt * w * w / params.gamma)
    return _build(params, fc, f, 0.0, 0.0, r)


def solve_equilibrium(
    params: QuadParams,
    fc: FailureConfig,
    f_max: float = math.inf,
    *,
    method: str = "auto",
    tol: float = 1e-9,
    max_iter: int = 200,
) -> Equilibrium:
    """Solve for the periodic equilibrium of a failure configuration.

    ``method="auto"`` uses the closed form for opposing-pair failures and a
    damped Newton iteration otherwise; ``method="newton"`` forces the
    iteration (an opposing pair is then treated as one failure with rho=0).
    """
    if method not in ("auto", "newton"):
        raise ValueError(f"unknown method {method!r}")
    if method == "auto" and len(fc.failed) == 2:
        eq = closed_form_two_propeller(params, fc.failed)
    else:
        eq = _newton(params, fc, tol, max_iter)
    worst = max(eq.fbar)
    if worst > f_max:
        raise InfeasibleError(f"equilibrium needs {worst:.6g} N per motor, above f_max={f_max:.6g} N")
    return eq


def _newton(params: QuadParams, fc: FailureConfig, tol: float, max_iter: int) -> Equilibrium:
    c = fc.pattern()
    failed = fc.failed

    def residual(x):
        f, p, q, r = x
        return equilibrium_residual(params, tuple(ci * f for ci in c), p, q, r, failed)

    f0 = params.weight / 2.0
    tau_psi = params.eps * f0 * abs(c[0] - c[1] + c[2] - c[3])
    if tau_psi < 1e-12 * params.eps * f0:
        raise InfeasibleError(f"rho={fc.rho} cancels the yaw torque; no spinning equilibrium exists")
    x =np.array([f0, 0.0, 0.0, _yaw_sign(c) * math.sqrt(tau_psi / params.gamma)])
    scale = np.array([f0, 1.0, 1.0, abs(x[3])])
    res = residual(x)
    norm = np.max(np.abs(res))
    for _ in range(max_iter):
        if norm < tol:
            break
        J = np.empty((4, 4))
        for k in range(4):
            h = 1e-7 * scale[k]
            xp, xm = x.copy(), x.copy()
            xp[k] += h
            xm[k] -= h
            J[:, k] = (residual(xp) - residual(xm)) / (2.0 * h)
        try:
            dx = np.linalg.solve(J, -res)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular Jacobian in equilibrium solve", norm) from None
        t = 1.0
        while t > 1e-6:
            xn = x + t * dx
            if xn[0] > 0.0:
                rn = residual(xn)
                nn = np.max(np.abs(rn))
                if nn < norm:
                    break
            t *= 0.5
        else:
            raise ConvergenceError(f"line search stalled at residual {norm:.3e}", norm)
        x, res, norm = xn, rn, nn
    if norm >= tol:
        raise ConvergenceError(f"no convergence after {max_iter} iterations, residual {norm:.3e}", norm)
    f, p, q, r = (float(v) for v in x)
    if f <= 0.0:
        raise InfeasibleError("equilibrium requires negative thrust")
    return _build(params, fc, f, p, q, r)
