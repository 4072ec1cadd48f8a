"""Stability-limit sweeps and parameter studies built on :func:`run`.

Each bisection is sequential; independent runs (sweep directions, probes,
gamma points) are spread over worker processes. ``FAILSAFE_QUAD_THREADS``
caps the number of workers.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from ..dynamics import RigidState
from ..control import OuterConfig, PidGains, robustness_config, three_prop_config
from ..equilibrium import FailureConfig, solve_equilibrium
from ..errors import InvalidBaselineError, ParameterError
from ..params import PRESETS
from .runner import assess_stability, run, steady_mean
from .scenario import FailureEvent, ScenarioSpec, three_prop_scenario, two_prop_scenario

ANGLES = ("phi", "theta", "psi")
RATES = ("p", "q", "r")
VELOCITIES = ("xd", "yd", "zd")
POSITIONS = ("x", "y", "z")
SWEEP_VARIABLES = ANGLES + RATES + VELOCITIES + POSITIONS

# probe span and bisection resolution per kind of variable
_SPAN = {"angle": math.pi, "rate": 200.0, "velocity": 100.0, "position": 100.0}
_RESOLUTION = {"angle": math.radians(0.1), "rate": 0.1, "velocity": 0.1, "position": 0.1}


def _kind(variable: str) -> str:
    if variable in ANGLES:
        return "angle"
    if variable in RATES:
        return "rate"
    if variable in VELOCITIES:
        return "velocity"
    if variable in POSITIONS:
        return "position"
    raise ParameterError(f"cannot sweep {variable!r}; choose from {', '.join(SWEEP_VARIABLES)}")


def worker_count() -> int:
    env = os.environ.get("FAILSAFE_QUAD_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ParameterError(f"FAILSAFE_QUAD_THREADS must be an integer, got {env!r}") from None
        return max(1, n)
    return os.cpu_count() or 1


def is_stable(spec: ScenarioSpec) -> bool:
    return assess_stability(run(spec))


def map_stable(specs, workers: int | None = None) -> list[bool]:
    specs = list(specs)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(specs) <= 1:
        return [is_stable(s) for s in specs]
    with ProcessPoolExecutor(max_workers=min(workers, len(specs))) as pool:
        return list(pool.map(is_stable, specs))


def _bisect(stable_at, lo: float, hi: float, resolution: float) -> tuple[float, int]:
    """Shrink [lo, hi] with stable_at(lo) true and stable_at(hi) false; returns (lo, runs)."""
    runs = 0
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        runs += 1
        if stable_at(mid):
            lo = mid
        else:
            hi = mid
    return lo, runs


@dataclass(frozen=True)
class SweepResult:
    """Outcome of a one-dimensional stability sweep.

    ``limit`` is the last stable value found (signed for initial-condition
    sweeps). ``unbounded`` means the far end of the probe range was stable.
    """

    variable: str
    limit: float
    unbounded: bool
    resolution: float
    runs: int

    def describe(self) -> str:
        if self.unbounded:
            return f"{self.variable}: stable over the whole probe range (|value| >= {abs(self.limit):.17g})"
        return f"{self.variable}: limit {self.limit:.17g}"


def _with_perturbation(spec: ScenarioSpec, variable: str, value: float) -> ScenarioSpec:
    pert = dict(spec.perturbation)
    pert[variable] = pert.get(variable, 0.0) + value
    return spec.replace(perturbation=tuple(pert.items()))


def sweep_initial_conditions(base: ScenarioSpec, variable: str, direction: int = 1, *, span: float | None = None) -> SweepResult:
    """Largest initial offset of ``variable`` (in ``direction``) that the controller still recovers from."""
    if direction not in (1, -1):
        raise ParameterError("direction must be +1 or -1")
    kind = _kind(variable)
    span = _SPAN[kind] if span is None else span
    res = _RESOLUTION[kind]
    if not is_stable(base):
        raise InvalidBaselineError("baseline scenario is not stable")

    def stable_at(mag):
        return is_stable(_with_perturbation(base, variable, direction * mag))

    if stable_at(span):
        return SweepResult(variable, direction * span, True, res, 2)
    mag, runs = _bisect(stable_at, 0.0, span, res)
    return SweepResult(variable, direction * mag, False, res, runs + 2)


def _with_frequency(spec: ScenarioSpec, loop: str, hz: float) -> ScenarioSpec:
    if loop == "inner":
        return spec.replace(controller=spec.controller.replace(f_inner=hz))
    return spec.replace(controller=spec.controller.replace(f_outer=hz))


def sweep_frequency(base: ScenarioSpec, loop: str = "inner", *, lowest: float = 1.0) -> SweepResult:
    """Lowest stable update rate of one loop, to 1 Hz, with the other loop at its base rate."""
    if loop not in ("inner", "outer"):
        raise ParameterError("loop must be 'inner' or 'outer'")
    top = base.controller.f_inner if loop == "inner" else base.controller.f_outer
    if not is_stable(base):
        raise InvalidBaselineError("baseline scenario is not stable at its nominal rates")

    def stable_at(hz):
        return is_stable(_with_frequency(base, loop, hz))

    if stable_at(lowest):
        return SweepResult(f"f_{loop}", lowest, True, 1.0, 2)
    # bisection over integers: hi stable, lo unstable
    lo, hi, runs = int(math.floor(lowest)), int(math.ceil(top)), 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        runs += 1
        if stable_at(mid):
            hi = mid
        else:
            lo = mid
    return SweepResult(f"f_{loop}", float(hi), False, 1.0, runs)


CAP_CHANNELS = ("accel_xy", "accel_z", "altitude_pid")


def with_cap(spec: ScenarioSpec, channel: str, cap: float) -> ScenarioSpec:
    cfg = spec.controller
    if channel == "accel_xy":
        o = cfg.outer
        cfg = cfg.replace(outer=OuterConfig(o.zeta, o.omega_n, (cap, cap, o.accel_cap[2])))
    elif channel == "accel_z":
        o = cfg.outer
        cfg = cfg.replace(outer=OuterConfig(o.zeta, o.omega_n, (o.accel_cap[0], o.accel_cap[1], cap)))
    elif channel == "altitude_pid":
        g = cfg.altitude_pid
        cfg = cfg.replace(altitude_pid=PidGains(g.kp, g.kd, g.ki, -cap, cap))
    else:
        raise ParameterError(f"unknown cap channel {channel!r}; choose from {', '.join(CAP_CHANNELS)}")
    return spec.replace(controller=cfg)


def step_probes(base: ScenarioSpec, offsets, t_step: float = 1.0) -> list[ScenarioSpec]:
    """Copies of ``base`` whose reference jumps by each (dx, dy, dz) at ``t_step``."""
    x0, y0, z0 = base.reference_at(0.0)
    return [
        base.replace(references=((0.0, x0, y0, z0), (t_step, x0 + dx, y0 + dy, z0 + dz)))
        for dx, dy, dz in offsets
    ]


DEFAULT_PROBES = {
    "accel_xy": ((50.0, 0.0, 0.0), (0.0, 50.0, 0.0), (-50.0, 50.0, 0.0)),
    "accel_z": ((0.0, 0.0, 5.0), (0.0, 0.0, -1.5)),
    "altitude_pid": ((0.0, 0.0, 5.0), (0.0, 0.0, -1.5)),
}


def sweep_output_caps(base: ScenarioSpec, channel: str = "accel_xy", *, probes=None, upper: float = 50.0, resolution: float = 0.1) -> SweepResult:
    """Cap boundary for one saturating output.

    Every reference-step probe stays stable with caps up to the returned
    value; above it at least one probe loses the vehicle. ``unbounded``
    means even ``upper`` is safe.
    """
    probes = step_probes(base, probes or DEFAULT_PROBES[channel])
    workers = worker_count()

    def stable_at(cap):
        return all(map_stable([with_cap(p, channel, cap) for p in probes], workers))

    if not stable_at(resolution):
        raise InvalidBaselineError(f"probes are unstable even with {channel} capped at {resolution}")
    if stable_at(upper):
        return SweepResult(channel, upper, True, resolution, 2)
    cap, runs = _bisect(stable_at, resolution, upper, resolution)
    return SweepResult(channel, cap, False, resolution, runs + 2)


def sweep_base(architecture: str = "two", duration: float = 15.0, f_max: float | None = None) -> ScenarioSpec:
    """Hover at equilibrium about (0, 0, 2): the starting point for limit sweeps.

    ``f_max`` overrides the controller's motor thrust ceiling; ``math.inf``
    leaves thrust bounded only below, so the limit reflects the control
    law rather than the actuator size.
    """
    factory = two_prop_scenario if architecture in ("two", "two-propeller") else three_prop_scenario
    spec = factory(initial=RigidState(z=2.0), references=((0.0, 0.0, 0.0, 2.0),), duration=duration)
    if f_max is not None:
        spec = spec.replace(controller=spec.controller.replace(f_max=f_max))
    return spec


# Output caps under which large position offsets are flown out (kept below the
# cap boundaries found by sweep_output_caps for the default gain sets).
OFFSET_CAPS = {
    "two": (("accel_xy", 3.0), ("altitude_pid", 1.1)),
    "three": (("accel_xy", 0.6), ("accel_z", 16.5)),
}


def capped_base(architecture: str = "two", duration: float = 120.0) -> ScenarioSpec:
    """Hover base with :data:`OFFSET_CAPS` applied, for position and velocity offset probes."""
    key = "two" if architecture in ("two", "two-propeller") else "three"
    spec = sweep_base(key, duration)
    for channel, cap in OFFSET_CAPS[key]:
        spec = with_cap(spec, channel, cap)
    return spec


def frequency_base(architecture: str = "two", duration: float = 30.0) -> ScenarioSpec:
    """Reference-step scenario used for loop-rate sweeps (a hover at equilibrium never excites the loops)."""
    factory = two_prop_scenario if architecture in ("two", "two-propeller") else three_prop_scenario
    return factory(duration=duration)


# --- model mismatch ---------------------------------------------------------

def robustness_scenario(truth=None, model=None, *, equilibrium_source: str = "plant", **overrides) -> ScenarioSpec:
    """Two-propeller flight of ``truth`` with gains designed on ``model``.

    With ``equilibrium_source="plant"`` the equilibrium (and hence r, f) is
    the true one while the LQR gain comes from the mismatched inertias.
    """
    truth = truth or PRESETS["high_inertia"]
    model = model or PRESETS["low_inertia"]
    return two_prop_scenario(
        params=truth,
        model_params=model,
        controller=robustness_config(),
        equilibrium_source=equilibrium_source,
        **overrides,
    )


def robustness_case(truth=None, model=None, **kw):
    """Run the mismatch scenario; returns the :class:`SimResult` (``.stable`` gives the verdict)."""
    return run(robustness_scenario(truth, model, **kw))


# --- yaw drag study ---------------------------------------------------------

@dataclass(frozen=True)
class GammaPoint:
    gamma: float
    rbar: float
    nz: float
    Rps: float
    fbar_mean: float
    r_sim: float = math.nan
    f_sim: float = math.nan


def _simulate_gamma(args):
    spec, eq_r = args
    result = run(spec)
    survivors = [i for i in (1, 2, 3, 4) if i not in spec.failure.motors]
    f_mean = sum(steady_mean(result, f"f{i}") for i in survivors) / len(survivors)
    return steady_mean(result, "r"), f_mean, result.crashed


def gamma_sweep(params, gammas, failed=frozenset({4}), rho: float = 0.5, *, simulate: bool = False, duration: float = 20.0, base: ScenarioSpec | None = None):
    """Equilibrium (and optionally simulated) response to the yaw drag coefficient."""
    fc = FailureConfig(frozenset(failed), rho)
    points = []
    jobs = []
    for gamma in gammas:
        p = params.replace(gamma=float(gamma))
        eq = solve_equilibrium(p, fc)
        surv = eq.survivors
        points.append(GammaPoint(float(gamma), eq.rbar, eq.n[2], eq.Rps, sum(eq.fbar[i - 1] for i in surv) / len(surv)))
        if simulate:
            spec = base or two_prop_scenario()
            spec = spec.replace(
                params=p,
                model_params=None,
                failure=FailureEvent(0.0, fc.failed, fc.rho, detect=False),
                references=((0.0, 0.0, 0.0, 2.0),),
                duration=duration,
            )
            if len(fc.failed) == 1:
                spec = spec.replace(controller=three_prop_config())
            jobs.append((spec, eq.rbar))
    if simulate:
        workers = worker_count()
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
                sims = list(pool.map(_simulate_gamma, jobs))
        else:
            sims = [_simulate_gamma(j) for j in jobs]
        points = [replace(pt, r_sim=r, f_sim=f) for pt, (r, f, _) in zip(points, sims)]
    return points
