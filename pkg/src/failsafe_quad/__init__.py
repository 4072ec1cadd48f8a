"""Fault-tolerant quadcopter simulation: spinning flight on three or two propellers."""

from .dynamics import MotorSet, RigidState, mix_forces, step
from .equilibrium import Equilibrium, FailureConfig, primary_axis, solve_equilibrium
from .errors import FailsafeError
from .lqr import linearize, lqr_gain, solve_care
from .params import PRESETS, QuadParams, load_params

__all__ = [
    "Equilibrium",
    "FailsafeError",
    "FailureConfig",
    "MotorSet",
    "PRESETS",
    "QuadParams",
    "RigidState",
    "linearize",
    "load_params",
    "lqr_gain",
    "mix_forces",
    "primary_axis",
    "solve_care",
    "solve_equilibrium",
    "step",
]

__version__ = "0.1.0"
