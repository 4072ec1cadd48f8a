from .runner import LOG_COLUMNS, SimLog, SimResult, assess_stability, orbit_radius, run, steady_mean
from .scenario import (
    FailureEvent,
    NominalConfig,
    ScenarioSpec,
    hover_scenario,
    load_scenario,
    parse_scenario,
    three_prop_scenario,
    two_prop_scenario,
)
