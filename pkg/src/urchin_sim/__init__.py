"""Simulator, gait planner and teleoperation server for a spherical
sea-urchin robot with 14 foldable telescopic spines."""

from urchin_sim.geometry import (
    ShellGeometry,
    SpineLayout,
    Pose,
    SpineKind,
    spine_layout,
    tip_position,
    ground_spine,
    support_candidates,
)
from urchin_sim.actuator import (
    LinkState,
    RackLink,
    RackChain,
    TelescopicActuator,
    rack_advance,
    rack_retract,
    extension_of,
    actuator_update,
    level_lengths,
)
from urchin_sim.dynamics import (
    RobotState,
    BodyParams,
    Environment,
    Contact,
    ContactSet,
    ContactParams,
    SupportPolygon,
    contact_solve,
    support_polygon,
    stability_margin,
    step,
    imu_read,
)
from urchin_sim.gait import (
    SpineCommandSet,
    GaitPhase,
    Phase,
    GaitParams,
    GaitController,
    plan_config1,
    plan_config2,
    plan_brake,
    plan_level,
    plan_jump,
    gait_step,
)
from urchin_sim.harness import (
    Scenario,
    TrajectoryLog,
    SimSession,
    load_scenario,
    run,
    write_csv,
    read_csv,
)
from urchin_sim.errors import (
    SaturationError,
    PreconditionError,
    ScenarioError,
    DivergenceError,
    DecodeError,
)

__version__ = "0.1.0"
