"""Physical model constants and the key=value parameter file format."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import ParameterError

G0 = 9.80665


@dataclass(frozen=True)
class QuadParams:
    """Rigid-body and propulsion constants of a quadcopter.

    Units are SI throughout. ``Jp`` is the spin inertia of one propeller plus
    rotor; ``gamma`` is the yaw drag coefficient so that the drag torque is
    ``gamma * r * |r|``. ``Jxz`` is carried for completeness but the rotational
    model assumes a diagonal inertia tensor.
    """

    M: float
    l: float
    g: float
    Jxx: float
    Jyy: float
    Jzz: float
    Jxz: float
    Jp: float
    gamma: float
    kf: float
    kt: float

    @property
    def eps(self) -> float:
        """Propeller torque-to-thrust ratio ``kt / kf``."""
        return self.kt / self.kf

    @property
    def weight(self) -> float:
        return self.M * self.g

    def validate(self) -> "QuadParams":
        for name in FIELDS:
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value!r}")
            if name != "Jxz" and value <= 0.0:
                raise ParameterError(f"{name} must be strictly positive, got {value!r}")
        if self.kt / self.kf >= 1.0:
            raise ParameterError("kt/kf must be < 1")
        J = (self.Jxx, self.Jyy, self.Jzz)
        for i in range(3):
            if J[i] > J[(i + 1) % 3] + J[(i + 2) % 3] + 1e-15:
                raise ParameterError("principal inertias violate the triangle inequality")
        return self

    def replace(self, **changes) -> "QuadParams":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        return "".join(f"{name}={getattr(self, name)!r}\n" for name in FIELDS)

    def to_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in FIELDS}


FIELDS = tuple(f.name for f in dataclasses.fields(QuadParams))
# Propeller coefficients were not measured here. kf is fitted to the two-propeller
# Propeller coefficients are not published. kf is fitted to the two-propeller
# hover point (7.0559 N at 803.9458 rad/s); kt to the matching 32.021 rad/s
# spin rate. Jp is an assumed small rotor inertia.
_KF_TWO_PROP = 1.0916864816154956e-05
_EPS_TWO_PROP = 0.013383681096499709
_JP_DEFAULT = 2.0e-6

PRESETS: dict[str, QuadParams] = {
    "low_inertia": QuadParams(
        M=1.439,
        l=0.2475,
        g=G0,
        Jxx=0.018517242,
        Jyy=0.020562251,
        Jzz=0.028316170,
        Jxz=9.76065e-05,
        Jp=_JP_DEFAULT,
        gamma=0.000184199,
        kf=_KF_TWO_PROP,
        kt=_EPS_TWO_PROP * _KF_TWO_PROP,
    ),
    "high_inertia": QuadParams(
        M=1.988,
        l=0.2475,
        g=G0,
        Jxx=0.125203794,
        Jyy=0.120414017,
        Jzz=0.163195234,
        Jxz=2.66838e-04,
        Jp=_JP_DEFAULT,
        gamma=0.00258396780706647,
        kf=_KF_TWO_PROP,
        kt=_EPS_TWO_PROP * _KF_TWO_PROP,
    ),
}

# Three-propeller reproduction set: kf from 5.6128 N at 710.67829 rad/s and
# kt chosen so that the rho=0.5 motor-4 solution spins at 43.393 rad/s.
PRESETS["low_inertia_3p"] = PRESETS["low_inertia"].replace(
    kf=5.6128 / 710.67829**2,
    kt=0.040916292436127134 * 5.6128 / 710.67829**2,
)


def parse_params(text: str, source: str = "<string>") -> QuadParams:
    """Parse ``key=value`` lines; ``#`` starts a comment.

    A line ``preset=<name>`` seeds every field from a named preset so that a
    file may override only a few values.
    """
    values: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "preset":
            if value not in PRESETS:
                raise ParameterError(f"{source}:{lineno}: unknown preset {value!r}")
            values = {**PRESETS[value].to_dict(), **values}
            continue
        if key not in FIELDS:
            raise ParameterError(f"{source}:{lineno}: unknown parameter {key!r}")
        try:
            values[key] = float(value)
        except ValueError:
            raise ParameterError(f"{source}:{lineno}: {key} is not a number: {value!r}") from None
    missing = [name for name in FIELDS if name not in values]
    if missing:
        raise ParameterError(f"{source}: missing parameters {', '.join(missing)}")
    return QuadParams(**values).validate()


def load_params(spec: str | Path) -> QuadParams:
    """Load a preset by name, or a parameter file by path."""
    if isinstance(spec, str) and spec in PRESETS:
        return PRESETS[spec]
    path = Path(spec)
    if not path.is_file():
        raise ParameterError(f"no such preset or parameter file: {spec}")
    return parse_params(path.read_text(), str(path))
