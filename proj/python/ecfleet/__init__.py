"""Planning toolkit for shared EV fleets inside renewable energy communities.

The heavy lifting lives in the C++ extension; this wrapper keeps a small,
dict-friendly surface for scripting and notebooks.
"""

import json as _json

from ._ecfleet import (  # noqa: F401
    CaseBundle,
    ScenarioConfig,
    SyntheticCaseParams,
    ac_power_flow,
    capital_recovery_factor,
    generate_synthetic_case,
    load_case,
    overlapping_pairs,
    scenario_config,
)
from ._ecfleet import run_scenario as _run_scenario_json

__all__ = [
    "CaseBundle",
    "ScenarioConfig",
    "SyntheticCaseParams",
    "ac_power_flow",
    "capital_recovery_factor",
    "generate_case",
    "generate_synthetic_case",
    "load_case",
    "overlapping_pairs",
    "run_scenario",
    "scenario_config",
]


def generate_case(members=20, prosumers=10, rides=88, weeks=4, days_per_block=7, seed=1,
                  fleet_slots=3, cs_slots=2):
    """Deterministic synthetic case mirroring the bundled 21-bus study setup."""
    p = SyntheticCaseParams()
    p.member_count = members
    p.prosumer_count = prosumers
    p.ride_count = rides
    p.weeks = weeks
    p.days_per_block = days_per_block
    p.seed = seed
    p.fleet_slots = fleet_slots
    p.cs_slots = cs_slots
    return generate_synthetic_case(p)


def run_scenario(case, scenario=3, out_dir="", **overrides):
    """Solve one scenario (1..5 or "custom") and return its KPI record as a dict.

    Overrides are the scenario-file keys (mip_gap, time_limit_s, backend,
    cs_location, ...), all passed as strings or stringifiable values.
    """
    cfg = scenario_config(str(scenario), {k: str(v) for k, v in overrides.items()})
    return _json.loads(_run_scenario_json(case, cfg, out_dir))
