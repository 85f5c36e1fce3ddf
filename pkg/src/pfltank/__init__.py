"""Energy-tank speed limiting for power- and force-limited collaboration.

The package wires three layers together: ISO/TS 15066 body-region limit
tables (:mod:`pfltank.iso15066`), a modulated energy tank with a time-varying
floor (:mod:`pfltank.energy_tank`), and a passivity-preserving command filter
(:mod:`pfltank.safety_controller`) that scales or projects the task force so
the manipulator's kinetic energy can never outrun the active limit.
:mod:`pfltank.sim_harness` closes the loop against either a constant-inertia
Cartesian plant or a planar two-link arm and emits verifiable per-cycle logs.
"""

from .errors import ConfigError, DomainError, EmergencyFault, IntegrationFault
from .iso15066 import (
    BUILTIN_REGIONS,
    BodyRegion,
    RobotMassSpec,
    apparent_mass,
    endpoint_mobility,
    max_energy,
    reduced_mass,
    robot_effective_mass,
    v_max,
)
from .energy_tank import (
    PowerFlows,
    TankState,
    commit_step,
    damper_coefficient,
    make_tank,
    modulation,
    set_lower_bound,
    tank_energy,
)
from .robot_dynamics import (
    CartesianPlant,
    PlanarArm,
    PlantState,
    WrenchInput,
    power_balance_residual,
)
from .safety_controller import (
    ControlTick,
    PdGains,
    PlantObservation,
    RegionSchedule,
    SafetyController,
    pd_force,
    project_halfspace,
    solve_alpha,
)
from .sim_harness import (
    CartesianPlantConfig,
    PlanarArmConfig,
    RunResult,
    Scenario,
    SegmentSummary,
    Summary,
    WrenchSegment,
    read_ticks_csv,
    run,
    summarize,
    write_ticks_csv,
)

__version__ = "0.1.0"

__all__ = [
    "BUILTIN_REGIONS",
    "BodyRegion",
    "CartesianPlant",
    "CartesianPlantConfig",
    "ConfigError",
    "ControlTick",
    "DomainError",
    "EmergencyFault",
    "IntegrationFault",
    "PdGains",
    "PlanarArm",
    "PlanarArmConfig",
    "PlantObservation",
    "PlantState",
    "PowerFlows",
    "RegionSchedule",
    "RobotMassSpec",
    "RunResult",
    "SafetyController",
    "Scenario",
    "SegmentSummary",
    "Summary",
    "TankState",
    "WrenchInput",
    "WrenchSegment",
    "apparent_mass",
    "commit_step",
    "damper_coefficient",
    "endpoint_mobility",
    "make_tank",
    "max_energy",
    "modulation",
    "pd_force",
    "power_balance_residual",
    "project_halfspace",
    "read_ticks_csv",
    "reduced_mass",
    "robot_effective_mass",
    "run",
    "set_lower_bound",
    "solve_alpha",
    "summarize",
    "tank_energy",
    "v_max",
    "write_ticks_csv",
]
