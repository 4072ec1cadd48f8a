"""Command-line interface.

Exit codes: 0 success (or a stable simulation), 1 simulation crashed or
ended unstable, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from .control import THREE_PROP, TWO_PROP, three_prop_config, two_prop_config
from .detect import CHANNELS, DetectorConfig, replay
from .equilibrium import FailureConfig, solve_equilibrium
from .errors import FailsafeError
from .lqr import LqrWeights, care_residual, linearize, solve_care
from .params import PRESETS, load_params
from .sim import runner, sweeps
from .sim.scenario import apply_overrides, load_gains, parse_scenario, scenario_text
from . import sysid

EXIT_OK, EXIT_CRASH, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def fmt(v) -> str:
    """Full-precision number formatting (round-trips through float())."""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _emit(out, key, value):
    print(f"{key}={fmt(value)}", file=out)


def _motors(text: str) -> frozenset:
    try:
        motors = frozenset(int(v) for v in text.replace(" ", "").split(",") if v)
    except ValueError:
        raise UsageError(f"--failed expects motor numbers like 2,4, got {text!r}") from None
    return motors


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{what} expects comma-separated numbers, got {text!r}") from None


# --- subcommands ------------------------------------------------------------

def cmd_equilibrium(args, out):
    params = load_params(args.params)
    fc = FailureConfig(_motors(args.failed), args.rho)
    eq = solve_equilibrium(params, fc, args.f_max, method=args.method)
    for key, value in eq.as_record().items():
        _emit(out, key, value)
    return EXIT_OK


def cmd_lqr_gains(args, out):
    params = load_params(args.params)
    failed = _motors(args.failed)
    fc = FailureConfig(failed, args.rho)
    eq = solve_equilibrium(params, fc)
    if args.gains:
        cfg = load_gains(args.gains)
        q, r = cfg.q_diag, cfg.r_diag
    else:
        mode = TWO_PROP if fc.two_propeller else THREE_PROP
        default = two_prop_config() if mode == TWO_PROP else three_prop_config()
        q = _floats(args.Q, "--Q") if args.Q else default.q_diag
        r = _floats(args.R, "--R") if args.R else default.r_diag
    model = linearize(params, eq)
    if len(r) != model.B.shape[1]:
        raise UsageError(f"--R needs {model.B.shape[1]} weights for survivors {','.join(map(str, model.survivors))}")
    w = LqrWeights.diagonal(q, r)
    P, K = solve_care(model.A, model.B, w.Q, w.R)
    for name, M in (("A", model.A), ("B", model.B), ("K", K), ("P", P)):
        for i, row in enumerate(np.atleast_2d(M)):
            print(f"{name}[{i}]=" + ",".join(fmt(v) for v in row), file=out)
    _emit(out, "survivors", ",".join(map(str, model.survivors)))
    _emit(out, "care_residual", float(np.abs(care_residual(model.A, model.B, w.Q, w.R, P)).max()))
    for k, lam in enumerate(np.linalg.eigvals(model.A - model.B @ K)):
        print(f"pole[{k}]={fmt(lam.real)},{fmt(lam.imag)}", file=out)
    return EXIT_OK


def _scenario(args):
    text, source = scenario_text(args.scenario)
    if args.set:
        text = apply_overrides(text, args.set, source)
    spec = parse_scenario(text, source)
    if getattr(args, "gains", None):
        spec = spec.replace(controller=load_gains(args.gains, spec.controller))
    return spec


def cmd_simulate(args, out):
    spec = _scenario(args)
    result = runner.run(spec)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            result.log.to_csv(fh)
    _emit(out, "crashed", str(result.crashed).lower())
    if result.crashed:
        _emit(out, "crash_time", result.crash_time)
        _emit(out, "crash_reason", result.crash_reason)
        return EXIT_CRASH
    stable = result.stable
    _emit(out, "stable", str(stable).lower())
    if result.detection is not None:
        _emit(out, "detected", result.detection.label())
        _emit(out, "detection_time", result.detection.detection_time)
    if result.equilibrium is not None:
        _emit(out, "switch_time", result.switch_time)
    names = ("x", "y", "z", "xd", "yd", "zd")
    for name, v in zip(names, result.final_state[:6]):
        _emit(out, f"final_{name}", v)
    return EXIT_OK if stable else EXIT_CRASH


def cmd_sweep(args, out):
    spec = _scenario(args)
    if args.kind == "initial":
        if not args.variable:
            raise UsageError("sweep --kind initial needs --variable")
        res = sweeps.sweep_initial_conditions(spec, args.variable, args.direction)
        value = math.degrees(res.limit) if args.variable in sweeps.ANGLES and args.degrees else res.limit
    elif args.kind == "frequency":
        res = sweeps.sweep_frequency(spec, args.loop)
        value = res.limit
    else:
        res = sweeps.sweep_output_caps(spec, args.channel)
        value = res.limit
    _emit(out, "variable", res.variable)
    _emit(out, "limit", value)
    _emit(out, "unbounded", str(res.unbounded).lower())
    _emit(out, "runs", res.runs)
    return EXIT_OK


def _log_rows(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        prefix = "est_" if all(f"est_{c}" in cols for c in CHANNELS) else ""
        need = ["t"] + [prefix + c for c in CHANNELS]
        missing = [c for c in need if c not in cols]
        if missing:
            raise UsageError(f"{path}: missing column(s) {', '.join(missing)}")
        rows = []
        for lineno, row in enumerate(reader, 2):
            try:
                rows.append(tuple(float(row[c]) for c in need))
            except (TypeError, ValueError):
                raise UsageError(f"{path}:{lineno}: non-numeric value") from None
        return rows


def cmd_detect(args, out):
    path = Path(args.log)
    if not path.is_file():
        raise UsageError(f"no such log file: {path}")
    rows = _log_rows(path)
    if len(rows) > 1:
        dt = rows[1][0] - rows[0][0]
        config = DetectorConfig(sample_period=dt) if dt > 0 else DetectorConfig()
    else:
        config = DetectorConfig()
    verdicts = replay(rows, config)
    if not verdicts:
        _emit(out, "detected", "none")
        return EXIT_OK
    v = verdicts[0]
    _emit(out, "detected", v.label())
    _emit(out, "detection_time", v.detection_time)
    _emit(out, "confidence", v.confidence)
    return EXIT_OK


def cmd_sysid(args, out):
    base = load_params(args.base) if args.base else None
    if args.fit == "fit-thrust":
        fit = sysid.fit_thrust_curve(sysid.read_prop_csv(args.data), args.winding_resistance)
        _emit(out, "kf", fit.kf)
        _emit(out, "kt", fit.kt)
        _emit(out, "k", fit.k)
        new = base.replace(kf=fit.kf, kt=fit.kt) if base else None
    elif args.fit == "fit-drag":
        gamma = sysid.fit_drag(sysid.read_drag_csv(args.data))
        _emit(out, "gamma", gamma)
        new = base.replace(gamma=gamma) if base else None
    else:
        if args.mass is None and base is None:
            raise UsageError("sysid moi needs --mass or --base")
        mass = args.mass if args.mass is not None else base.M
        changes = {}
        for trial in sysid.read_pendulum_csv(args.data):
            j_pivot, j_com = sysid.moi_from_pendulum(mass, trial, base.g if base else sysid.G0)
            label = trial.axis or "?"
            _emit(out, f"J_pivot_{label}", j_pivot)
            _emit(out, f"J_com_{label}", j_com)
            if trial.axis in ("x", "y", "z"):
                changes[f"J{trial.axis}{trial.axis}"] = j_com
        new = base.replace(**changes) if base else None
    if args.out:
        if new is None:
            raise UsageError("--out needs --base to fill in the remaining parameters")
        Path(args.out).write_text(new.validate().to_text())
    return EXIT_OK


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    presets = ", ".join(PRESETS)
    p = _Parser(prog="failsafe-quad", description="Fail-safe quadcopter flight with two or three propellers.")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    e = sub.add_parser("equilibrium", help="solve the spinning equilibrium for a failure case")
    e.add_argument("--params", default="low_inertia", help=f"preset ({presets}) or parameter file")
    e.add_argument("--failed", required=True, help="failed motors, e.g. 2,4 or 4")
    e.add_argument("--rho", type=float, default=0.0, help="opposite-motor thrust ratio for a single failure")
    e.add_argument("--f-max", type=float, default=math.inf, help="per-motor thrust limit in N")
    e.add_argument("--method", choices=("auto", "newton"), default="auto", help="closed form for pairs or force Newton")
    e.set_defaults(func=cmd_equilibrium)

    g = sub.add_parser("lqr-gains", help="linearize at the equilibrium and solve the LQR gain")
    g.add_argument("--params", default="low_inertia", help=f"preset ({presets}) or parameter file")
    g.add_argument("--failed", required=True, help="failed motors")
    g.add_argument("--rho", type=float, default=0.0, help="opposite-motor thrust ratio for a single failure")
    g.add_argument("--Q", help="state weights p,q,nx,ny")
    g.add_argument("--R", help="input weights, one per surviving motor")
    g.add_argument("--gains", help="controller gain file (key=value) to take Q and R from")
    g.set_defaults(func=cmd_lqr_gains)

    def scenario_args(sp):
        sp.add_argument("--scenario", required=True, help="scenario file, or built-in 'two-prop' / 'three-prop'")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override a scenario entry (repeatable)")
        sp.add_argument("--gains", help="controller gain file overriding the [controller] section")

    s = sub.add_parser("simulate", help="run a closed-loop scenario")
    scenario_args(s)
    s.add_argument("--out", help="write the simulation log as CSV")
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="bisect a stability limit (FAILSAFE_QUAD_THREADS caps workers)")
    scenario_args(w)
    w.add_argument("--kind", choices=("initial", "frequency", "caps"), required=True, help="what to sweep")
    w.add_argument("--variable", choices=sweeps.SWEEP_VARIABLES, help="initial-condition variable")
    w.add_argument("--direction", type=int, choices=(1, -1), default=1, help="sweep direction")
    w.add_argument("--degrees", action="store_true", help="report angle limits in degrees")
    w.add_argument("--loop", choices=("inner", "outer"), default="inner", help="loop for frequency sweeps")
    w.add_argument("--channel", choices=sweeps.CAP_CHANNELS, default="accel_xy", help="output for cap sweeps")
    w.set_defaults(func=cmd_sweep)

    d = sub.add_parser("detect", help="replay the failure detector over a logged CSV")
    d.add_argument("--log", required=True, help="CSV with t,p,q,r,phi,theta (or est_ columns)")
    d.set_defaults(func=cmd_detect)

    y = sub.add_parser("sysid", help="fit model coefficients from bench data")
    y.add_argument("fit", choices=("fit-thrust", "fit-drag", "moi"), help="which fit to run")
    y.add_argument("data", help="CSV: omega,thrust,voltage,current | torque,omega_ss | axis,pivot_distance,period")
    y.add_argument("--base", help="parameter preset or file to update with the fit")
    y.add_argument("--out", help="write the updated parameter file")
    y.add_argument("--mass", type=float, help="vehicle mass for pendulum fits (default: from --base)")
    y.add_argument("--winding-resistance", type=float, default=sysid.DEFAULT_WINDING_RESISTANCE, help="motor winding resistance in ohm")
    y.set_defaults(func=cmd_sysid)
    return p


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=err)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args, out)
    except (UsageError, FailsafeError, OSError) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
