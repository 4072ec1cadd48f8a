"""Identification of inertia, propeller and drag coefficients from bench data."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FitError
from .params import G0

# Propeller profile-drag torque cannot be separated from the reaction torque
# on the bench (both scale with omega^2), so it is lumped into the body drag.
PROP_DRAG_COEFF = 0.0
DEFAULT_WINDING_RESISTANCE = 0.12


@dataclass(frozen=True)
class PendulumTrial:
    pivot_distance: float
    period: float
    axis: str = ""

    def __post_init__(self):
        if not (self.pivot_distance > 0 and self.period > 0):
            raise FitError("pivot distance and period must be positive")


@dataclass(frozen=True)
class PropSample:
    omega: float
    thrust: float
    voltage: float = 0.0
    current: float = 0.0


@dataclass(frozen=True)
class DragSample:
    total_torque: float
    omega_ss: float


@dataclass(frozen=True)
class ThrustFit:
    kf: float
    kt: float

    @property
    def k(self) -> float:
        """Thrust per unit reaction torque."""
        return self.kf / self.kt


def moi_from_pendulum(M: float, trial: PendulumTrial, g: float = G0) -> tuple[float, float]:
    """Inertia about the pivot from the small-swing period, and about the centre of mass."""
    r, T = trial.pivot_distance, trial.period
    j_pivot = M * g * r * (T / (2.0 * math.pi)) ** 2
    j_com = j_pivot - M * r * r
    if j_com <= 0.0:
        raise FitError(f"period {T} s is too short for pivot distance {r} m (J_com={j_com:.3g})")
    return j_pivot, j_com


def propeller_moi(motor_mass: float, motor_radius: float, blade_mass: float, blade_radius: float) -> float:
    """Spin inertia of a solid-cylinder rotor plus a uniform-disk blade."""
    return 0.5 * motor_mass * motor_radius**2 + 0.5 * blade_mass * blade_radius**2


def _origin_fit(x2: np.ndarray, y: np.ndarray, what: str) -> float:
    # y = c * x2, least squares through the origin
    denom = float(np.dot(x2, x2))
    if denom <= 0.0:
        raise FitError(f"{what}: all speeds are zero")
    c = float(np.dot(x2, y)) / denom
    if not c > 0.0:
        raise FitError(f"{what}: fitted coefficient {c:.3g} is not positive")
    return c


def electrical_torque(sample: PropSample, winding_resistance: float = DEFAULT_WINDING_RESISTANCE) -> float:
    """Shaft torque from air-gap power: ``(V I - I^2 R_w) / omega``."""
    if sample.omega <= 0.0:
        raise FitError("electrical torque needs a positive speed")
    return (sample.voltage * sample.current - sample.current**2 * winding_resistance) / sample.omega


def fit_thrust_curve(samples, winding_resistance: float = DEFAULT_WINDING_RESISTANCE) -> ThrustFit:
    samples = list(samples)
    if len(samples) < 3:
        raise FitError("thrust fit needs at least 3 samples")
    w2 = np.array([s.omega**2 for s in samples])
    kf = _origin_fit(w2, np.array([s.thrust for s in samples]), "thrust fit")
    tau = np.array([electrical_torque(s, winding_resistance) for s in samples])
    kt = _origin_fit(w2, tau, "torque fit")
    return ThrustFit(kf, kt)


def fit_drag(samples) -> float:
    """Yaw drag coefficient from (total torque, steady spin rate) pairs."""
    samples = list(samples)
    if len(samples) < 3:
        raise FitError("drag fit needs at least 3 samples")
    w = np.array([s.omega_ss for s in samples])
    if np.ptp(w) == 0.0:
        raise FitError("drag fit is degenerate: all samples share one spin rate")
    return _origin_fit(w * w, np.array([s.total_torque for s in samples]), "drag fit")


# --- CSV ingestion ----------------------------------------------------------

def _read_rows(path, columns):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in columns if c not in (reader.fieldnames or [])]
        if missing:
            raise FitError(f"{path}: missing column(s) {', '.join(missing)}")
        rows = []
        for lineno, row in enumerate(reader, 2):
            try:
                rows.append({c: float(row[c]) for c in columns})
            except (TypeError, ValueError):
                raise FitError(f"{path}:{lineno}: non-numeric value") from None
        return rows


def read_prop_csv(path: str | Path) -> list[PropSample]:
    return [PropSample(**r) for r in _read_rows(path, ("omega", "thrust", "voltage", "current"))]


def read_drag_csv(path: str | Path) -> list[DragSample]:
    return [DragSample(r["torque"], r["omega_ss"]) for r in _read_rows(path, ("torque", "omega_ss"))]


def read_pendulum_csv(path: str | Path) -> list[PendulumTrial]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        out = []
        for lineno, row in enumerate(reader, 2):
            try:
                out.append(PendulumTrial(float(row["pivot_distance"]), float(row["period"]), row.get("axis", "")))
            except (KeyError, TypeError, ValueError):
                raise FitError(f"{path}:{lineno}: expected axis,pivot_distance,period") from None
        return out
