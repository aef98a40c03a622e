"""Gait planning: per-spine extension targets and the locomotion FSM.

Two locomotion procedures are implemented.  Configuration 1 starts from a
leveled four-spine stance: the spine facing the ground extends to propel
while the support spine best aligned with the desired heading compresses,
tipping the robot into a roll toward that side.  Configuration 2 starts
fully retracted, resting on the shell: the adjacent spine pair pointing
away from the desired heading extends and shoves the robot forward.
Braking extends whatever spines currently oppose the rolling motion, and
the underwater jump fires the ground spine.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Union

import numpy as np

from urchin_sim.dynamics import (
    Environment,
    RobotState,
    Water,
    contact_solve,
    imu_read,
    stability_margin,
    support_polygon,
)
from urchin_sim.errors import PreconditionError, SaturationError
from urchin_sim.geometry import (
    SPINE_COUNT,
    SPINE_EXTENSION_MAX_MM,
    SpineLayout,
    ground_spine,
    spine_layout,
    support_candidates,
    world_directions,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SpineCommandSet:
    """Per-spine extension targets in mm, all within [0, 64]."""

    targets: tuple[float, ...]

    def __post_init__(self):
        if len(self.targets) != SPINE_COUNT:
            raise ValueError(f"expected {SPINE_COUNT} targets, got {len(self.targets)}")
        for i, t in enumerate(self.targets):
            if not 0.0 <= t <= SPINE_EXTENSION_MAX_MM:
                raise ValueError(f"target for spine {i} out of range: {t}")

    @staticmethod
    def zeros() -> "SpineCommandSet":
        return SpineCommandSet(tuple(0.0 for _ in range(SPINE_COUNT)))

    @staticmethod
    def from_array(values) -> "SpineCommandSet":
        return SpineCommandSet(tuple(float(v) for v in values))


class Phase(Enum):
    REST = "REST"
    STANCE = "STANCE"
    PROPEL = "PROPEL"
    ROLLING = "ROLLING"
    BRAKE = "BRAKE"
    LEVELING = "LEVELING"
    JUMP = "JUMP"


# high-level commands (shared vocabulary with the teleop wire protocol)


@dataclass(frozen=True)
class MoveCommand:
    dir_xy: tuple[float, float]
    config: int = 1
    cycles: int = 1            # >1 repeats the stance cycle
    turn_rad: float = 0.0      # heading rotation between cycles (curvilinear)

    def __post_init__(self):
        if self.config not in (1, 2):
            raise ValueError(f"config must be 1 or 2, got {self.config}")
        if math.hypot(*self.dir_xy) == 0.0:
            raise ValueError("move direction must be non-zero")


@dataclass(frozen=True)
class StopCommand:
    pass


@dataclass(frozen=True)
class LevelCommand:
    pass


@dataclass(frozen=True)
class JumpCommand:
    pass


@dataclass(frozen=True)
class RetractAllCommand:
    pass


@dataclass(frozen=True)
class SpineCommand:
    spine_id: int
    target_mm: float

    def __post_init__(self):
        if not 0 <= self.spine_id < SPINE_COUNT:
            raise ValueError(f"spine_id out of range: {self.spine_id}")
        if not 0.0 <= self.target_mm <= SPINE_EXTENSION_MAX_MM:
            raise ValueError(f"target_mm out of range: {self.target_mm}")


Command = Union[MoveCommand, StopCommand, LevelCommand, JumpCommand,
                RetractAllCommand, SpineCommand]


@dataclass(frozen=True)
class GaitParams:
    control_hz: float = 50.0
    stance_extension_mm: float = 64.0
    level_gain: float = 0.5                  # per-tick proportional gain
    level_tol_rad: float = 0.06              # roll/pitch band counted as level
    level_clearance_tol_m: float = 0.006     # tip-to-ground gap counted as secure
    level_snap_mm: float = 0.25
    level_timeout_s: float = 10.0
    brake_align_dot: float = -0.3            # direction-vs-velocity threshold
    brake_max_z: float = 0.2                 # only near-ground spines brake
    stop_speed_m_s: float = 0.01
    settle_speed_m_s: float = 0.02
    propel_exit_speed_m_s: float = 0.05
    propel_timeout_s: float = 5.0
    stance_wait_timeout_s: float = 2.0
    rolling_min_age_s: float = 0.5
    jump_min_age_s: float = 1.0


DEFAULT_GAIT_PARAMS = GaitParams()


@dataclass(frozen=True)
class GaitPhase:
    """FSM value.  heading is carried only through the active move pipeline
    (STANCE/PROPEL/ROLLING); while LEVELING for a move it is parked in
    pending_move."""

    phase: Phase = Phase.REST
    heading: Optional[tuple[float, float]] = None
    phase_entry_time: float = 0.0
    config: int = 1
    pending_move: Optional[MoveCommand] = None

    def __post_init__(self):
        if self.heading is not None and self.phase not in (
                Phase.STANCE, Phase.PROPEL, Phase.ROLLING):
            raise ValueError(f"heading must be absent in phase {self.phase.name}")


def _unit_heading(heading_xy) -> np.ndarray:
    h = np.asarray(heading_xy, dtype=np.float64)
    n = float(np.linalg.norm(h))
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("heading must be a non-zero finite 2-vector")
    return h / n


def _hold_targets(state: RobotState) -> list[float]:
    return [act.extension_mm for act in state.actuators]


def _stance_margin(state: RobotState, env: Environment,
                   layout: SpineLayout) -> tuple[float, int]:
    contacts = contact_solve(state, env, layout)
    if len(contacts) == 0:
        return 0.0, 0
    poly = support_polygon(contacts)
    margin = stability_margin(state.pose.position[:2], poly)
    return margin, len(contacts.spine_ids())


def plan_config1(state: RobotState, env: Environment, heading_xy,
                 layout: SpineLayout | None = None) -> SpineCommandSet:
    """Propel-and-compress rolling start from a four-spine stance.

    The ground spine extends fully to propel; of the four support spines
    the one whose horizontal direction best aligns with the heading
    compresses to zero, which drops that side and sets the roll direction.
    The other three hold their current extension.
    """
    layout = layout or spine_layout()
    h = _unit_heading(heading_xy)
    contacts = contact_solve(state, env, layout)
    touching = set(contacts.spine_ids())
    cand = support_candidates(state.pose, layout)
    margin, _ = _stance_margin(state, env, layout)
    if not all(c in touching for c in cand) or margin <= 0.0:
        raise PreconditionError(
            f"config-1 needs a 4-spine stance (contacts={sorted(touching)}, margin={margin:.4f})")

    dirs = world_directions(state.pose, layout)
    compress = min(cand, key=lambda i: (-(dirs[i, 0] * h[0] + dirs[i, 1] * h[1]), i))
    targets = _hold_targets(state)
    targets[ground_spine(state.pose, layout)] = SPINE_EXTENSION_MAX_MM
    targets[compress] = 0.0
    return SpineCommandSet.from_array(targets)


def plan_config2(state: RobotState, env: Environment, heading_xy,
                 layout: SpineLayout | None = None) -> SpineCommandSet:
    """Two-neighbor push from the fully retracted shell.

    Extends the adjacent spine pair (lower hemisphere, ground spine
    excluded) whose mean horizontal direction points most directly away
    from the heading.
    """
    layout = layout or spine_layout()
    h = _unit_heading(heading_xy)
    ext = state.extensions_mm()
    if np.any(ext > 1.0):
        raise PreconditionError(
            f"config-2 starts fully retracted; extensions up to {ext.max():.1f} mm present")

    gs = ground_spine(state.pose, layout)
    dirs = world_directions(state.pose, layout)
    eligible = [i for i in range(SPINE_COUNT) if i != gs and dirs[i, 2] < 0.0]
    pairs = [(i, j) for i in eligible for j in eligible
             if i < j and j in layout.adjacency[i]]
    if not pairs:
        raise PreconditionError("no adjacent lower-hemisphere spine pair available")

    def score(pair):
        i, j = pair
        mean = 0.5 * (dirs[i, :2] + dirs[j, :2])
        return (float(mean @ h), i, j)

    i, j = min(pairs, key=score)
    targets = [0.0] * SPINE_COUNT
    targets[i] = SPINE_EXTENSION_MAX_MM
    targets[j] = SPINE_EXTENSION_MAX_MM
    return SpineCommandSet.from_array(targets)


def plan_brake(state: RobotState, layout: SpineLayout | None = None,
               params: GaitParams = DEFAULT_GAIT_PARAMS) -> SpineCommandSet:
    """Extend every near-ground spine opposing the rolling motion.

    Already stopped -> all-zero command set (no-op).
    """
    layout = layout or spine_layout()
    vxy = state.linear_velocity[:2]
    speed = float(np.linalg.norm(vxy))
    if speed <= params.stop_speed_m_s:
        return SpineCommandSet.zeros()
    vhat = vxy / speed
    dirs = world_directions(state.pose, layout)
    targets = [0.0] * SPINE_COUNT
    for i in range(SPINE_COUNT):
        align = float(dirs[i, :2] @ vhat)
        if align < params.brake_align_dot and dirs[i, 2] < params.brake_max_z:
            targets[i] = SPINE_EXTENSION_MAX_MM
    return SpineCommandSet.from_array(targets)


# ---------------------------------------------------------------------------
# leveling


def _support_tip_info(state: RobotState, env: Environment, layout: SpineLayout):
    """(candidate ids, terrain height under each tip, vertical tip clearance)."""
    cand = support_candidates(state.pose, layout)
    pos = state.pose.position
    ext = state.extensions_mm()
    rot = state.pose.rotation()
    tips = np.array([
        pos + rot @ (layout.directions[i] * (0.065 + ext[i] * 1e-3)) for i in cand])
    surf_z, _ = env.terrain.sample(tips[:, :2])
    clearance = tips[:, 2] - surf_z
    return cand, surf_z, clearance


def _required_extensions(state: RobotState, env: Environment, layout: SpineLayout,
                         params: GaitParams) -> tuple[list[int], np.ndarray]:
    """Terrain-relief feedforward: spines over higher ground get less
    extension, mm for mm, from the stance extension baseline.

    Relief is sampled under the target stance footprint (yaw-only attitude,
    tips at stance extension), so the plan neither wanders with transient
    body tilt nor misses relief the tips only meet once extended.
    """
    cand = support_candidates(state.pose, layout)
    pos = state.pose.position
    yaw = imu_read(state).yaw
    c, s = math.cos(yaw), math.sin(yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    reach = 0.065 + params.stance_extension_mm * 1e-3
    tips = np.array([pos + rot @ (layout.directions[i] * reach) for i in cand])
    surf_z, _ = env.terrain.sample(tips[:, :2])
    relief_mm = (surf_z - surf_z.min()) * 1000.0
    required = params.stance_extension_mm - relief_mm
    for k, i in enumerate(cand):
        if required[k] < 0.0 or required[k] > SPINE_EXTENSION_MAX_MM:
            raise SaturationError(
                f"leveling needs {required[k]:.1f} mm on spine {i}, outside the "
                f"0-{SPINE_EXTENSION_MAX_MM:.0f} mm stroke", spine_id=i)
    return cand, required


def plan_level(state: RobotState, env: Environment, tol_rad: float | None = None,
               params: GaitParams = DEFAULT_GAIT_PARAMS,
               layout: SpineLayout | None = None) -> SpineCommandSet:
    """One proportional leveling tick; call repeatedly until
    leveling_converged.  Raises SaturationError when the local relief
    exceeds the stroke."""
    layout = layout or spine_layout()
    cand, required = _required_extensions(state, env, layout, params)
    targets = list(state.targets_mm())
    for k, i in enumerate(cand):
        err = required[k] - targets[i]
        if abs(err) <= params.level_snap_mm:
            targets[i] = float(required[k])
        else:
            targets[i] += params.level_gain * err
    return SpineCommandSet.from_array(np.clip(targets, 0.0, SPINE_EXTENSION_MAX_MM))


def leveling_converged(state: RobotState, env: Environment, tol_rad: float | None = None,
                       params: GaitParams = DEFAULT_GAIT_PARAMS,
                       layout: SpineLayout | None = None) -> bool:
    """All four support tips secured against the terrain, attitude level,
    actuators arrived, and the body settled."""
    layout = layout or spine_layout()
    tol = params.level_tol_rad if tol_rad is None else tol_rad
    cand, required = _required_extensions(state, env, layout, params)
    targets = state.targets_mm()
    ext = state.extensions_mm()
    if any(abs(targets[i] - required[k]) > params.level_snap_mm for k, i in enumerate(cand)):
        return False
    if any(abs(ext[i] - targets[i]) > 1e-9 for i in cand):
        return False
    _, _, clearance = _support_tip_info(state, env, layout)
    if np.any(clearance > params.level_clearance_tol_m):
        return False
    euler = imu_read(state)
    if abs(euler.roll) > tol or abs(euler.pitch) > tol:
        return False
    return float(np.linalg.norm(state.linear_velocity)) < params.settle_speed_m_s


def plan_jump(state: RobotState, env: Environment,
              layout: SpineLayout | None = None) -> SpineCommandSet:
    """Underwater jump: fire the ground spine, everything else retracted."""
    if not isinstance(env.medium, Water):
        raise PreconditionError("jump is defined only under water")
    layout = layout or spine_layout()
    targets = [0.0] * SPINE_COUNT
    targets[ground_spine(state.pose, layout)] = SPINE_EXTENSION_MAX_MM
    return SpineCommandSet.from_array(targets)


# ---------------------------------------------------------------------------
# finite-state controller


def _enter(phase: Phase, t: float, heading=None, config: int = 1,
           pending: Optional[MoveCommand] = None) -> GaitPhase:
    return GaitPhase(phase=phase, heading=heading, phase_entry_time=t,
                     config=config, pending_move=pending)


def _rotated(move: MoveCommand) -> MoveCommand:
    if move.turn_rad == 0.0:
        return move
    c, s = math.cos(move.turn_rad), math.sin(move.turn_rad)
    dx, dy = move.dir_xy
    return replace(move, dir_xy=(c * dx - s * dy, s * dx + c * dy))


def gait_step(phase: GaitPhase, state: RobotState, env: Environment,
              command: Optional[Command] = None,
              params: GaitParams = DEFAULT_GAIT_PARAMS,
              layout: SpineLayout | None = None
              ) -> tuple[GaitPhase, Optional[SpineCommandSet]]:
    """One control tick of the locomotion FSM.

    Returns the next phase and the spine command set to apply, or None to
    leave the previous targets in place.  Invalid commands are ignored
    with a logged warning.
    """
    layout = layout or spine_layout()
    t = state.time_s
    speed_xy = float(np.linalg.norm(state.linear_velocity[:2]))

    # -- command handling -------------------------------------------------
    if isinstance(command, StopCommand):
        if speed_xy > params.stop_speed_m_s:
            return _enter(Phase.BRAKE, t), _latched_brake(state, layout, params)
        return _enter(Phase.REST, t), SpineCommandSet.zeros()
    if isinstance(command, RetractAllCommand):
        return _enter(Phase.REST, t), SpineCommandSet.zeros()
    if isinstance(command, SpineCommand):
        targets = _hold_targets(state)
        targets[command.spine_id] = command.target_mm
        return _enter(Phase.REST, t), SpineCommandSet.from_array(targets)
    if isinstance(command, MoveCommand):
        if phase.phase in (Phase.REST, Phase.STANCE):
            return _dispatch_move(command, state, env, t, params, layout)
        log.warning("move command ignored in phase %s", phase.phase.name)
        command = None
    if isinstance(command, LevelCommand):
        if phase.phase in (Phase.REST, Phase.STANCE):
            return _enter(Phase.LEVELING, t), _try_level(state, env, params, layout)[1]
        log.warning("level command ignored in phase %s", phase.phase.name)
        command = None
    if isinstance(command, JumpCommand):
        if phase.phase is Phase.REST and isinstance(env.medium, Water):
            return _enter(Phase.JUMP, t), plan_jump(state, env, layout)
        log.warning("jump command ignored (phase %s, medium %s)",
                    phase.phase.name, type(env.medium).__name__)
        command = None

    # -- phase-internal transitions ---------------------------------------
    age = t - phase.phase_entry_time

    if phase.phase is Phase.LEVELING:
        if leveling_converged(state, env, None, params, layout):
            move = phase.pending_move
            heading = move.dir_xy if move else None
            nxt = GaitPhase(phase=Phase.STANCE, heading=heading, phase_entry_time=t,
                            config=move.config if move else 1, pending_move=move)
            return nxt, None
        if age > params.level_timeout_s:
            log.warning("leveling timed out after %.1f s; returning to rest", age)
            return _enter(Phase.REST, t), SpineCommandSet.zeros()
        ok, cmds = _try_level(state, env, params, layout)
        if not ok:
            return _enter(Phase.REST, t), SpineCommandSet.zeros()
        return phase, cmds

    if phase.phase is Phase.STANCE:
        if phase.heading is None:
            return phase, None
        try:
            cmds = plan_config1(state, env, phase.heading, layout)
        except PreconditionError:
            if age > params.stance_wait_timeout_s:
                log.warning("stance never stabilized; returning to rest")
                return _enter(Phase.REST, t), SpineCommandSet.zeros()
            return phase, None
        nxt = GaitPhase(phase=Phase.PROPEL, heading=phase.heading, phase_entry_time=t,
                        config=phase.config, pending_move=phase.pending_move)
        return nxt, cmds

    if phase.phase is Phase.PROPEL:
        margin, _ = _stance_margin(state, env, layout)
        if margin < 0.0 or speed_xy > params.propel_exit_speed_m_s:
            nxt = GaitPhase(phase=Phase.ROLLING, heading=phase.heading,
                            phase_entry_time=t, config=phase.config,
                            pending_move=phase.pending_move)
            return nxt, None
        if age > params.propel_timeout_s:
            log.warning("propel did not tip the robot; returning to rest")
            return _enter(Phase.REST, t), SpineCommandSet.zeros()
        return phase, None

    if phase.phase is Phase.ROLLING:
        if age > params.rolling_min_age_s and speed_xy < params.stop_speed_m_s:
            move = phase.pending_move
            pending = None
            if move is not None and move.cycles > 1:
                pending = _rotated(replace(move, cycles=move.cycles - 1))
            return _enter(Phase.REST, t, pending=pending), SpineCommandSet.zeros()
        return phase, None

    if phase.phase is Phase.BRAKE:
        if speed_xy < params.stop_speed_m_s:
            return _enter(Phase.REST, t), SpineCommandSet.zeros()
        return phase, _latched_brake(state, layout, params)

    if phase.phase is Phase.JUMP:
        contacts = contact_solve(state, env, layout)
        if (age > params.jump_min_age_s and len(contacts) > 0
                and speed_xy < params.settle_speed_m_s):
            return _enter(Phase.REST, t), SpineCommandSet.zeros()
        return phase, None

    # REST: start a pending cycle once the robot is back to a clean rest
    if phase.pending_move is not None:
        move = phase.pending_move
        ext = state.extensions_mm()
        if speed_xy < params.stop_speed_m_s and np.all(ext <= 1.0):
            return _dispatch_move(move, state, env, t, params, layout)
        return phase, None
    return phase, None


def _latched_brake(state: RobotState, layout: SpineLayout,
                   params: GaitParams) -> SpineCommandSet:
    """plan_brake latched against the current targets.

    The body spins while braking, so the eligible set rotates faster than
    the 100 mm/s drive can chase; retracting a spine the moment it leaves
    the zone would keep every spike too short to ever reach the ground.
    Targets therefore only grow during BRAKE, and the extended spikes
    arrest the roll as the rotation swings them under the shell.
    """
    plan = plan_brake(state, layout, params)
    current = state.targets_mm()
    return SpineCommandSet.from_array(
        [max(p, c) for p, c in zip(plan.targets, current)])


def _dispatch_move(move: MoveCommand, state: RobotState, env: Environment, t: float,
                   params: GaitParams, layout: SpineLayout
                   ) -> tuple[GaitPhase, Optional[SpineCommandSet]]:
    h = _unit_heading(move.dir_xy)
    move = replace(move, dir_xy=(float(h[0]), float(h[1])))
    if move.config == 1:
        nxt = GaitPhase(phase=Phase.LEVELING, phase_entry_time=t, config=1,
                        pending_move=move)
        return nxt, _try_level(state, env, params, layout)[1]
    try:
        cmds = plan_config2(state, env, move.dir_xy, layout)
    except PreconditionError as exc:
        log.warning("config-2 move rejected: %s", exc)
        return _enter(Phase.REST, t), None
    pending = None
    if move.cycles > 1:
        pending = _rotated(replace(move, cycles=move.cycles - 1))
    nxt = GaitPhase(phase=Phase.PROPEL, heading=move.dir_xy, phase_entry_time=t,
                    config=2, pending_move=pending)
    return nxt, cmds


def _try_level(state: RobotState, env: Environment, params: GaitParams,
               layout: SpineLayout) -> tuple[bool, Optional[SpineCommandSet]]:
    try:
        return True, plan_level(state, env, None, params, layout)
    except SaturationError as exc:
        log.warning("leveling saturated: %s", exc)
        return False, SpineCommandSet.zeros()


class GaitController:
    """Owns the FSM value between control ticks."""

    def __init__(self, params: GaitParams = DEFAULT_GAIT_PARAMS,
                 layout: SpineLayout | None = None):
        self.params = params
        self.layout = layout or spine_layout()
        self.phase = GaitPhase()

    def tick(self, state: RobotState, env: Environment,
             command: Optional[Command] = None) -> Optional[SpineCommandSet]:
        self.phase, cmds = gait_step(self.phase, state, env, command,
                                     self.params, self.layout)
        return cmds

    def reset(self):
        self.phase = GaitPhase()
