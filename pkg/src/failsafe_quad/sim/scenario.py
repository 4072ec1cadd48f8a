"""Declarative scenario description and its text file format.

A scenario file is INI-style::

    [plant]
    preset = low_inertia
    Jp = 3e-6

    [model]            ; optional, defaults to the plant
    preset = low_inertia

    [failure]
    motors = 2,4
    time = 0
    detect = false
    rho = 0

    [initial]
    at_equilibrium = true
    x = -0.1
    y = -0.1
    z = 2

    [references]
    0 = 0, 0, 2        ; time = x, y, z
    10 = -0.3, 0.3, 4

    [controller]
    mode = two-propeller
    Q_nx = 5362
    ...

    [sensors]
    preset = ideal

    [run]
    duration = 40
    seed = 0
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..control import (
    THREE_PROP,
    TWO_PROP,
    ControllerConfig,
    OuterConfig,
    PidGains,
    three_prop_config,
    two_prop_config,
)
from ..detect import DetectorConfig
from ..dynamics import RigidState
from ..errors import ParameterError
from ..estimation import FilterConfig, NoiseConfig, SensorConfig
from ..params import FIELDS, PRESETS, QuadParams, load_params

STATE_FIELDS = ("x", "y", "z", "xd", "yd", "zd", "phi", "theta", "psi", "p", "q", "r")


@dataclass(frozen=True)
class FailureEvent:
    """Motors cut at ``time``.

    With ``detect=False`` the fail-safe controller takes over immediately
    using the true failure set; otherwise it waits for the detector.
    """

    time: float = 0.0
    motors: frozenset = frozenset()
    rho: float = 0.0
    detect: bool = True

    def __post_init__(self):
        object.__setattr__(self, "motors", frozenset(int(m) for m in self.motors))


@dataclass(frozen=True)
class NominalConfig:
    """Four-motor hover controller flown before any failure."""

    att_wn: float = 12.0
    att_zeta: float = 0.9
    pos_wn: float = 1.0
    pos_zeta: float = 0.8
    alt_wn: float = 2.0
    alt_zeta: float = 1.0
    tilt_max: float = 0.35


@dataclass(frozen=True)
class ScenarioSpec:
    params: QuadParams
    model_params: QuadParams | None = None
    failure: FailureEvent = FailureEvent()
    initial: RigidState = RigidState(z=2.0)
    at_equilibrium: bool = False
    perturbation: tuple = ()
    references: tuple = ((0.0, 0.0, 0.0, 2.0),)
    controller: ControllerConfig = field(default_factory=two_prop_config)
    nominal: NominalConfig = NominalConfig()
    null_controller: bool = False
    sensors: SensorConfig = field(default_factory=SensorConfig.ideal)
    detector: DetectorConfig = DetectorConfig()
    equilibrium_source: str = "model"
    duration: float = 20.0
    dt: float = 1.0 / 450.0
    seed: int = 0
    divergence_distance: float = 1000.0
    divergence_rate: float = 1000.0

    def __post_init__(self):
        refs = tuple(tuple(float(v) for v in ref) for ref in self.references)
        if not refs or any(len(r) != 4 for r in refs):
            raise ParameterError("references need (t, x, y, z) rows")
        times = [r[0] for r in refs]
        if times != sorted(times):
            raise ParameterError("reference times must be monotone")
        object.__setattr__(self, "references", refs)
        object.__setattr__(self, "perturbation", tuple(sorted(dict(self.perturbation).items())))
        for name, _ in self.perturbation:
            if name not in STATE_FIELDS:
                raise ParameterError(f"unknown perturbed variable {name!r}")
        if not self.duration > 0:
            raise ParameterError("duration must be positive")
        last_event = max(times[-1], self.failure.time if self.failure.motors else 0.0)
        if self.duration <= last_event:
            raise ParameterError("duration must exceed the last scheduled event")
        if self.equilibrium_source not in ("model", "plant"):
            raise ParameterError("equilibrium_source must be 'model' or 'plant'")
        if not self.dt > 0:
            raise ParameterError("dt must be positive")

    @property
    def model(self) -> QuadParams:
        return self.model_params or self.params

    def replace(self, **changes) -> "ScenarioSpec":
        return replace(self, **changes)

    def reference_at(self, t: float) -> tuple[float, float, float]:
        ref = self.references[0]
        for row in self.references:
            if row[0] <= t:
                ref = row
            else:
                break
        return ref[1:]


# --- canned scenarios used by the reported experiments ----------------------

def two_prop_scenario(**overrides) -> ScenarioSpec:
    """Two-propeller hover start at (-0.1,-0.1,2), step to (-0.3,0.3,4) at 10 s."""
    base = ScenarioSpec(
        params=PRESETS["low_inertia"],
        failure=FailureEvent(0.0, frozenset({2, 4}), 0.0, detect=False),
        initial=RigidState(x=-0.1, y=-0.1, z=2.0),
        at_equilibrium=True,
        references=((0.0, 0.0, 0.0, 2.0), (10.0, -0.3, 0.3, 4.0)),
        controller=two_prop_config(),
        duration=40.0,
    )
    return replace(base, **overrides)


def three_prop_scenario(**overrides) -> ScenarioSpec:
    """Three-propeller (motor 4 out, rho=0.5) start at equilibrium, step at 10 s."""
    base = ScenarioSpec(
        params=PRESETS["low_inertia_3p"],
        failure=FailureEvent(0.0, frozenset({4}), 0.5, detect=False),
        initial=RigidState(x=0.0, y=0.0, z=2.0),
        at_equilibrium=True,
        references=((0.0, 0.0, 0.0, 2.0), (10.0, -0.3, 0.3, 4.0)),
        controller=three_prop_config(),
        duration=40.0,
    )
    return replace(base, **overrides)


def hover_scenario(motors, t_fail: float = 1.0, **overrides) -> ScenarioSpec:
    """Four-motor hover with a motor cut at ``t_fail`` and live detection."""
    base = ScenarioSpec(
        params=PRESETS["low_inertia"],
        failure=FailureEvent(t_fail, frozenset(motors), 0.5, detect=True),
        initial=RigidState(z=2.0),
        references=((0.0, 0.0, 0.0, 2.0),),
        duration=t_fail + 1.0,
    )
    return replace(base, **overrides)


# --- file format ------------------------------------------------------------

_CONTROLLER_KEYS = {
    "mode", "Q_p", "Q_q", "Q_nx", "Q_ny", "R_f", "k_pz", "k_dz", "k_iz", "pid_min", "pid_max",
    "k_pf", "k_if", "k_df", "omega_n_x", "omega_n_y", "omega_n_z", "zeta_x", "zeta_y", "zeta_z",
    "accel_cap_xy", "accel_cap_z", "f_inner", "f_outer", "f_max",
}


def _floats(text: str, where: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ParameterError(f"{where}: expected numbers, got {text!r}") from None


def _num(section, key, where, default=None):
    if key not in section:
        return default
    vals = _floats(section[key], f"{where}.{key}")
    if len(vals) != 1:
        raise ParameterError(f"{where}.{key}: expected one number")
    return vals[0]


def _params_from_section(section, where: str) -> QuadParams:
    values = {}
    base = None
    for key, value in section.items():
        if key == "preset":
            base = value
        elif key == "file":
            base = value
        elif key in FIELDS:
            values[key] = _num(section, key, where)
        else:
            raise ParameterError(f"{where}: unknown parameter {key!r}")
    if base is None and len(values) != len(FIELDS):
        raise ParameterError(f"{where}: give a preset/file or every parameter")
    params = load_params(base) if base is not None else QuadParams(**values)
    return params.replace(**values).validate()


def controller_from_mapping(section, where: str = "controller", base: ControllerConfig | None = None) -> ControllerConfig:
    """Build a controller config from Table-IV-style keys (unknown keys are errors)."""
    for key in section:
        if key not in _CONTROLLER_KEYS:
            raise ParameterError(f"{where}: unknown controller key {key!r}")
    mode = section.get("mode", base.mode if base else TWO_PROP)
    if base is None or base.mode != mode:
        base = three_prop_config() if mode == THREE_PROP else two_prop_config()
    q = list(base.q_diag)
    for k, key in enumerate(("Q_p", "Q_q", "Q_nx", "Q_ny")):
        q[k] = _num(section, key, where, q[k])
    r_diag = tuple(_floats(section["R_f"], f"{where}.R_f")) if "R_f" in section else base.r_diag
    if len(r_diag) == 1:
        r_diag = r_diag * len(base.r_diag)
    ap = base.altitude_pid
    altitude = PidGains(
        kp=_num(section, "k_pz", where, ap.kp),
        kd=_num(section, "k_dz", where, ap.kd),
        ki=_num(section, "k_iz", where, ap.ki),
        out_min=_num(section, "pid_min", where, ap.out_min),
        out_max=_num(section, "pid_max", where, ap.out_max),
    )
    force = base.force_pids
    if mode == THREE_PROP:
        n = len(force)
        kp = _floats(section["k_pf"], where) if "k_pf" in section else [g.kp for g in force]
        ki = _floats(section["k_if"], where) if "k_if" in section else [g.ki for g in force]
        kd = _floats(section["k_df"], where) if "k_df" in section else [g.kd for g in force]
        kp, ki, kd = ([v[0]] * n if len(v) == 1 else v for v in (kp, ki, kd))
        force = tuple(PidGains(kp=a, ki=b, kd=c) for a, b, c in zip(kp, ki, kd))
    o = base.outer
    cap_xy = _num(section, "accel_cap_xy", where, o.accel_cap[0])
    outer = OuterConfig(
        zeta=(_num(section, "zeta_x", where, o.zeta[0]), _num(section, "zeta_y", where, o.zeta[1]), _num(section, "zeta_z", where, o.zeta[2])),
        omega_n=(_num(section, "omega_n_x", where, o.omega_n[0]), _num(section, "omega_n_y", where, o.omega_n[1]), _num(section, "omega_n_z", where, o.omega_n[2])),
        accel_cap=(cap_xy, cap_xy, _num(section, "accel_cap_z", where, o.accel_cap[2])),
    )
    return ControllerConfig(
        mode=mode,
        q_diag=tuple(q),
        r_diag=tuple(r_diag),
        altitude_pid=altitude,
        force_pids=force,
        outer=outer,
        f_inner=_num(section, "f_inner", where, base.f_inner),
        f_outer=_num(section, "f_outer", where, base.f_outer),
        f_max=_num(section, "f_max", where, base.f_max),
    )


def _read_ini(text: str, source: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ParameterError(f"{source}: {exc}") from None
    return cp


def load_gains(path: str | Path, base: ControllerConfig | None = None) -> ControllerConfig:
    """Controller gain file: plain ``key=value`` lines (no section header needed)."""
    path = Path(path)
    if not path.is_file():
        raise ParameterError(f"no such gain file: {path}")
    text = path.read_text()
    if not text.lstrip().startswith("["):
        text = "[controller]\n" + text
    cp = _read_ini(text, str(path))
    return controller_from_mapping(cp["controller"], str(path), base)


def parse_scenario(text: str, source: str = "<scenario>") -> ScenarioSpec:
    cp = _read_ini(text, source)
    known = {"plant", "model", "failure", "initial", "references", "controller", "sensors", "run"}
    for name in cp.sections():
        if name not in known:
            raise ParameterError(f"{source}: unknown section [{name}]")
    if not cp.has_section("plant"):
        raise ParameterError(f"{source}: missing [plant] section")
    plant = _params_from_section(cp["plant"], f"{source}[plant]")
    model = _params_from_section(cp["model"], f"{source}[model]") if cp.has_section("model") else None

    failure = FailureEvent()
    if cp.has_section("failure"):
        f = cp["failure"]
        where = f"{source}[failure]"
        for key in f:
            if key not in ("motors", "time", "rho", "detect"):
                raise ParameterError(f"{where}: unknown key {key!r}")
        motors = frozenset(int(v) for v in _floats(f.get("motors", ""), where))
        try:
            detect = f.getboolean("detect", fallback=True)
        except ValueError:
            raise ParameterError(f"{where}.detect: expected true/false") from None
        failure = FailureEvent(_num(f, "time", where, 0.0), motors, _num(f, "rho", where, 0.0), detect)

    initial = RigidState(z=2.0)
    at_eq = False
    if cp.has_section("initial"):
        sec = cp["initial"]
        where = f"{source}[initial]"
        values = {}
        for key in sec:
            if key == "at_equilibrium":
                at_eq = sec.getboolean(key)
            elif key in STATE_FIELDS:
                values[key] = _num(sec, key, where)
            else:
                raise ParameterError(f"{where}: unknown state variable {key!r}")
        initial = RigidState(**{**{"z": 2.0}, **values})

    refs = ((0.0, initial.x, initial.y, initial.z),)
    if cp.has_section("references"):
        rows = []
        for key, value in cp["references"].items():
            where = f"{source}[references].{key}"
            t = _floats(key, where)
            xyz = _floats(value, where)
            if len(t) != 1 or len(xyz) != 3:
                raise ParameterError(f"{where}: expected 't = x, y, z'")
            rows.append((t[0], *xyz))
        refs = tuple(sorted(rows))

    if cp.has_section("controller"):
        controller = controller_from_mapping(cp["controller"], f"{source}[controller]")
    else:
        controller = two_prop_config() if len(failure.motors) != 1 else three_prop_config()

    sensors = SensorConfig.ideal()
    if cp.has_section("sensors"):
        sec = cp["sensors"]
        where = f"{source}[sensors]"
        preset = sec.get("preset", "ideal")
        if preset not in ("ideal", "default"):
            raise ParameterError(f"{where}: unknown sensor preset {preset!r}")
        sensors = SensorConfig.ideal() if preset == "ideal" else SensorConfig()
        noise = {k: _num(sec, k, where) for k in ("gyro", "attitude", "gps_pos", "gps_vel", "ultrasonic") if k in sec}
        filt = {k: _num(sec, k, where) for k in ("tau_complementary", "tau_ema", "tau_zdot") if k in sec}
        for key in sec:
            if key not in {"preset", "gps_rate", "ultrasonic_rate", "filters", *noise, *filt}:
                raise ParameterError(f"{where}: unknown key {key!r}")
        filters = replace(sensors.filters, **filt)
        if "filters" in sec:
            filters = replace(filters, enabled=sec.getboolean("filters"))
        sensors = SensorConfig(
            noise=replace(sensors.noise, **noise),
            filters=filters,
            gps_rate=_num(sec, "gps_rate", where, sensors.gps_rate),
            ultrasonic_rate=_num(sec, "ultrasonic_rate", where, sensors.ultrasonic_rate),
        )

    run = cp["run"] if cp.has_section("run") else {}
    where = f"{source}[run]"
    for key in run:
        if key not in ("duration", "seed", "dt", "equilibrium_source", "null_controller"):
            raise ParameterError(f"{where}: unknown key {key!r}")
    return ScenarioSpec(
        params=plant,
        model_params=model,
        failure=failure,
        initial=initial,
        at_equilibrium=at_eq,
        references=refs,
        controller=controller,
        sensors=sensors,
        duration=_num(run, "duration", where, 20.0),
        seed=int(_num(run, "seed", where, 0)),
        dt=_num(run, "dt", where, 1.0 / 450.0),
        equilibrium_source=run.get("equilibrium_source", "model"),
        null_controller=str(run.get("null_controller", "false")).lower() in ("1", "true", "yes", "on"),
    )


def load_scenario(path: str | Path) -> ScenarioSpec:
    path = Path(path)
    if not path.is_file():
        raise ParameterError(f"no such scenario file: {path}")
    return parse_scenario(path.read_text(), str(path))


# Text form of the canned scenarios, so command-line overrides can be applied
# to them exactly as to a user file.
BUILTIN_SCENARIOS = {
    "two-prop": """\
[plant]
preset = low_inertia

[failure]
motors = 2, 4
time = 0
detect = false

[initial]
at_equilibrium = true
x = -0.1
y = -0.1
z = 2

[references]
0 = 0, 0, 2
10 = -0.3, 0.3, 4

[controller]
mode = two-propeller

[sensors]
preset = ideal

[run]
duration = 40
seed = 0
""",
    "three-prop": """\
[plant]
preset = low_inertia_3p

[failure]
motors = 4
time = 0
rho = 0.5
detect = false

[initial]
at_equilibrium = true
z = 2

[references]
0 = 0, 0, 2
10 = -0.3, 0.3, 4

[controller]
mode = three-propeller

[sensors]
preset = ideal

[run]
duration = 40
seed = 0
""",
}


def scenario_text(name_or_path: str | Path) -> tuple[str, str]:
    """Return ``(text, source)`` for a built-in scenario name or a file path."""
    if isinstance(name_or_path, str) and name_or_path in BUILTIN_SCENARIOS:
        return BUILTIN_SCENARIOS[name_or_path], f"<{name_or_path}>"
    path = Path(name_or_path)
    if not path.is_file():
        raise ParameterError(f"no such scenario file: {path}")
    return path.read_text(), str(path)


def apply_overrides(text: str, overrides, source: str = "<scenario>") -> str:
    """Apply dotted ``section.key=value`` overrides to scenario text."""
    cp = _read_ini(text, source)
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ParameterError(f"override {item!r} must look like section.key=value")
        dotted, value = item.split("=", 1)
        section, key = dotted.strip().split(".", 1)
        if not cp.has_section(section):
            cp.add_section(section)
        cp[section][key.strip()] = value.strip()
    out = io.StringIO()
    cp.write(out)
    return out.getvalue()
