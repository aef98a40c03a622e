"""Scenario files, batch simulation runs, trajectory logs and the CLI.

A scenario is a JSON file describing the environment, the robot body, an
initial state and a time-ordered command script.  Running a scenario is a
pure function of (scenario, seed): the same file always produces a
byte-identical CSV log.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from urchin_sim import actuator as act_mod
from urchin_sim.dynamics import (
    Air,
    BodyParams,
    ContactParams,
    Environment,
    FlatTerrain,
    Heightfield,
    RobotState,
    Water,
    contact_solve,
    imu_read,
    stability_margin,
    step,
    support_polygon,
)
from urchin_sim.errors import DivergenceError, ScenarioError
from urchin_sim.gait import (
    Command,
    GaitController,
    GaitParams,
    JumpCommand,
    LevelCommand,
    MoveCommand,
    RetractAllCommand,
    SpineCommand,
    StopCommand,
)
from urchin_sim.geometry import SPINE_COUNT, Pose, quat_normalize, spine_layout

SCHEMA_VERSION = 1
DEFAULT_DT_S = 0.001
DEFAULT_LOG_HZ = 100.0
RESTING_HEIGHT_M = 0.065


# ---------------------------------------------------------------------------
# scenario schema


@dataclass(frozen=True)
class Scenario:
    name: str
    duration_s: float
    dt_s: float = DEFAULT_DT_S
    seed: int = 0
    log_hz: float = DEFAULT_LOG_HZ
    environment: Environment = field(default_factory=lambda: Environment.from_preset("lab-floor"))
    body: BodyParams = field(default_factory=BodyParams)
    initial_pose: Pose = field(default_factory=lambda: Pose(
        position=np.array([0.0, 0.0, RESTING_HEIGHT_M])))
    initial_linear_velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    initial_angular_velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    script: tuple[tuple[float, Command], ...] = ()
    imu_noise_sigma_rad: float = 0.0
    gait: GaitParams = field(default_factory=GaitParams)
    contact: ContactParams = field(default_factory=ContactParams)

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ScenarioError("duration_s must be positive", "duration_s")
        if not 0.0 < self.dt_s <= 0.005:
            raise ScenarioError("dt_s must be in (0, 0.005]", "dt_s")
        last = -math.inf
        for t, _ in self.script:
            if t < last:
                raise ScenarioError("script times must be non-decreasing", "script")
            last = t


def _check_keys(obj: dict, allowed: set[str], where: str):
    for key in obj:
        if key not in allowed:
            raise ScenarioError(f"unknown field {key!r}", where)


def _number(obj, where: str) -> float:
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        raise ScenarioError(f"expected a number, got {obj!r}", where)
    val = float(obj)
    if not math.isfinite(val):
        raise ScenarioError("value must be finite", where)
    return val


def _vector(obj, n: int, where: str) -> list[float]:
    if not isinstance(obj, list) or len(obj) != n:
        raise ScenarioError(f"expected a list of {n} numbers", where)
    return [_number(v, f"{where}[{i}]") for i, v in enumerate(obj)]


_COMMAND_FIELDS = {
    "move": {"dir", "config"},
    "stop": set(),
    "level": set(),
    "jump": set(),
    "retract_all": set(),
    "spine": {"id", "target_mm"},
}


def parse_command_fields(obj: dict, where: str, extended: bool,
                         errcls=ScenarioError) -> Command:
    """Build a gait command from a JSON object holding a 'cmd' field.

    extended=True additionally allows the scenario-only move fields
    (cycles, turn_deg).  Raises errcls with field context on violations.
    """
    name = obj.get("cmd")
    if name not in _COMMAND_FIELDS:
        raise errcls(f"unknown command {name!r}", where)
    allowed = _COMMAND_FIELDS[name] | {"cmd", "t_s", "type"}
    if extended and name == "move":
        allowed |= {"cycles", "turn_deg"}
    for key in obj:
        if key not in allowed:
            raise errcls(f"unknown field {key!r}", f"{where}.{name}")
    if name == "move":
        if "dir" not in obj:
            raise errcls("move requires 'dir'", where)
        dir_xy = _vector(obj["dir"], 2, f"{where}.dir")
        norm = math.hypot(*dir_xy)
        if norm == 0.0:
            raise errcls("move direction must be non-zero", f"{where}.dir")
        config = obj.get("config", 1)
        if config not in (1, 2):
            raise errcls("config must be 1 or 2", f"{where}.config")
        cycles = obj.get("cycles", 1)
        if not isinstance(cycles, int) or isinstance(cycles, bool) or cycles < 1:
            raise errcls("cycles must be a positive integer", f"{where}.cycles")
        turn_deg = _number(obj.get("turn_deg", 0.0), f"{where}.turn_deg")
        return MoveCommand(dir_xy=(dir_xy[0] / norm, dir_xy[1] / norm), config=config,
                           cycles=cycles, turn_rad=math.radians(turn_deg))
    if name == "stop":
        return StopCommand()
    if name == "level":
        return LevelCommand()
    if name == "jump":
        return JumpCommand()
    if name == "retract_all":
        return RetractAllCommand()
    if name == "spine":
        if "id" not in obj or "target_mm" not in obj:
            raise errcls("spine requires 'id' and 'target_mm'", where)
        sid = obj["id"]
        if not isinstance(sid, int) or isinstance(sid, bool) or not 0 <= sid < SPINE_COUNT:
            raise errcls(f"id must be an integer in [0, {SPINE_COUNT - 1}]", f"{where}.id")
        target = _number(obj["target_mm"], f"{where}.target_mm")
        if not 0.0 <= target <= 64.0:
            raise errcls("target_mm must be in [0, 64]", f"{where}.target_mm")
        return SpineCommand(spine_id=sid, target_mm=target)
    raise errcls(f"unknown command {name!r}", where)  # unreachable


def _parse_terrain(obj: dict, where: str):
    _check_keys(obj, {"type", "height_m", "spacing_m", "origin_xy", "heights"}, where)
    kind = obj.get("type", "flat")
    if kind == "flat":
        return FlatTerrain(height_m=_number(obj.get("height_m", 0.0), f"{where}.height_m"))
    if kind == "heightfield":
        if "spacing_m" not in obj or "heights" not in obj:
            raise ScenarioError("heightfield requires 'spacing_m' and 'heights'", where)
        heights = obj["heights"]
        if not isinstance(heights, list) or not all(isinstance(r, list) for r in heights):
            raise ScenarioError("heights must be a 2D list", f"{where}.heights")
        origin = obj.get("origin_xy", [0.0, 0.0])
        try:
            return Heightfield(
                spacing_m=_number(obj["spacing_m"], f"{where}.spacing_m"),
                heights=np.array(heights, dtype=np.float64),
                origin_xy=tuple(_vector(origin, 2, f"{where}.origin_xy")))
        except ScenarioError:
            raise
        except (ValueError, TypeError) as exc:
            raise ScenarioError(str(exc), f"{where}.heights") from exc
    raise ScenarioError(f"unknown terrain type {kind!r}", f"{where}.type")


def _parse_medium(obj: dict, where: str):
    _check_keys(obj, {"type", "buoyancy_fraction", "linear_drag", "angular_drag"}, where)
    kind = obj.get("type", "air")
    if kind == "air":
        return Air()
    if kind == "water":
        try:
            return Water(
                buoyancy_fraction=_number(obj.get("buoyancy_fraction", 0.8),
                                          f"{where}.buoyancy_fraction"),
                linear_drag=_number(obj.get("linear_drag", 2.0), f"{where}.linear_drag"),
                angular_drag=_number(obj.get("angular_drag", 0.01), f"{where}.angular_drag"))
        except ValueError as exc:
            raise ScenarioError(str(exc), where) from exc
    raise ScenarioError(f"unknown medium type {kind!r}", f"{where}.type")


def _parse_environment(obj: dict) -> Environment:
    where = "environment"
    _check_keys(obj, {"preset", "terrain", "friction_mu", "medium", "gravity"}, where)
    preset = obj.get("preset", "lab-floor")
    try:
        env = Environment.from_preset(preset)
    except ValueError as exc:
        raise ScenarioError(str(exc), f"{where}.preset") from exc
    kwargs = {}
    if "terrain" in obj:
        kwargs["terrain"] = _parse_terrain(obj["terrain"], f"{where}.terrain")
    if "friction_mu" in obj:
        mu = _number(obj["friction_mu"], f"{where}.friction_mu")
        if mu < 0:
            raise ScenarioError("friction_mu must be >= 0", f"{where}.friction_mu")
        kwargs["friction_mu"] = mu
    if "medium" in obj:
        kwargs["medium"] = _parse_medium(obj["medium"], f"{where}.medium")
    if "gravity" in obj:
        kwargs["gravity"] = _number(obj["gravity"], f"{where}.gravity")
    return replace(env, **kwargs) if kwargs else env


def parse_scenario(data: dict, source: str = "<dict>") -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object", source)
    _check_keys(data, {
        "schema_version", "name", "duration_s", "dt_s", "seed", "log_hz",
        "environment", "body", "initial_pose", "initial_velocity", "script",
        "imu_noise_sigma_rad"}, source)
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema_version {version}", "schema_version")
    if "name" not in data or not isinstance(data["name"], str):
        raise ScenarioError("scenario requires a string 'name'", "name")
    if "duration_s" not in data:
        raise ScenarioError("scenario requires 'duration_s'", "duration_s")

    env = _parse_environment(data.get("environment", {}))

    body_obj = data.get("body", {})
    _check_keys(body_obj, {"mass_kg", "com_offset"}, "body")
    try:
        body = BodyParams(
            mass_kg=_number(body_obj.get("mass_kg", 0.5), "body.mass_kg"),
            com_offset=np.array(_vector(body_obj.get("com_offset", [0, 0, 0]), 3,
                                        "body.com_offset")))
    except ValueError as exc:
        raise ScenarioError(str(exc), "body") from exc

    pose_obj = data.get("initial_pose", {})
    _check_keys(pose_obj, {"position", "quaternion"}, "initial_pose")
    position = np.array(_vector(pose_obj.get("position", [0.0, 0.0, RESTING_HEIGHT_M]),
                                3, "initial_pose.position"))
    quat = np.array(_vector(pose_obj.get("quaternion", [1.0, 0.0, 0.0, 0.0]),
                            4, "initial_pose.quaternion"))
    if float(np.linalg.norm(quat)) == 0.0:
        raise ScenarioError("quaternion must be non-zero", "initial_pose.quaternion")
    pose = Pose(position=position, orientation=quat_normalize(quat))

    vel_obj = data.get("initial_velocity", {})
    _check_keys(vel_obj, {"linear", "angular"}, "initial_velocity")
    lin = tuple(_vector(vel_obj.get("linear", [0, 0, 0]), 3, "initial_velocity.linear"))
    ang = tuple(_vector(vel_obj.get("angular", [0, 0, 0]), 3, "initial_velocity.angular"))

    script_obj = data.get("script", [])
    if not isinstance(script_obj, list):
        raise ScenarioError("script must be a list", "script")
    script = []
    for i, entry in enumerate(script_obj):
        where = f"script[{i}]"
        if not isinstance(entry, dict) or "t_s" not in entry or "cmd" not in entry:
            raise ScenarioError("script entries need 't_s' and 'cmd'", where)
        t = _number(entry["t_s"], f"{where}.t_s")
        if t < 0:
            raise ScenarioError("t_s must be >= 0", f"{where}.t_s")
        script.append((t, parse_command_fields(entry, where, extended=True)))

    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ScenarioError("seed must be an integer", "seed")

    return Scenario(
        name=data["name"],
        duration_s=_number(data["duration_s"], "duration_s"),
        dt_s=_number(data.get("dt_s", DEFAULT_DT_S), "dt_s"),
        seed=seed,
        log_hz=_number(data.get("log_hz", DEFAULT_LOG_HZ), "log_hz"),
        environment=env,
        body=body,
        initial_pose=pose,
        initial_linear_velocity=lin,
        initial_angular_velocity=ang,
        script=tuple(script),
        imu_noise_sigma_rad=_number(data.get("imu_noise_sigma_rad", 0.0),
                                    "imu_noise_sigma_rad"),
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}", str(path)) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: "
                            f"{exc.msg}", str(path)) from exc
    return parse_scenario(data, source=path.name)


def initial_state(scenario: Scenario) -> RobotState:
    return RobotState(
        pose=scenario.initial_pose,
        linear_velocity=np.array(scenario.initial_linear_velocity),
        angular_velocity=np.array(scenario.initial_angular_velocity))


# ---------------------------------------------------------------------------
# trajectory log


@dataclass(frozen=True)
class LogRow:
    t_s: float
    position: tuple[float, float, float]
    euler: tuple[float, float, float]
    velocity: tuple[float, float, float]
    extensions_mm: tuple[float, ...]
    contact_count: int
    stability_margin_m: float
    phase: str


@dataclass
class TrajectoryLog:
    rows: list[LogRow] = field(default_factory=list)
    diverged: bool = False

    HEADER = (["t_s", "pos_x_m", "pos_y_m", "pos_z_m",
               "roll_rad", "pitch_rad", "yaw_rad",
               "vel_x_m_s", "vel_y_m_s", "vel_z_m_s"]
              + [f"ext_{i:02d}_mm" for i in range(SPINE_COUNT)]
              + ["contact_count", "stability_margin_m", "phase"])


def _fmt(v: float) -> str:
    return f"{v:.9g}"


def write_csv(log: TrajectoryLog, path: str | Path) -> None:
    """Header plus one line per row, 9 significant digits, newline-terminated."""
    lines = [",".join(TrajectoryLog.HEADER)]
    for r in log.rows:
        vals = ([_fmt(r.t_s)] + [_fmt(v) for v in r.position] + [_fmt(v) for v in r.euler]
                + [_fmt(v) for v in r.velocity] + [_fmt(v) for v in r.extensions_mm]
                + [str(r.contact_count), _fmt(r.stability_margin_m), r.phase])
        lines.append(",".join(vals))
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write trajectory to {path}: {exc}") from exc


def read_csv(path: str | Path) -> TrajectoryLog:
    text = Path(path).read_text()
    lines = [ln for ln in text.split("\n") if ln]
    if not lines or lines[0] != ",".join(TrajectoryLog.HEADER):
        raise ValueError(f"{path}: not a trajectory log (bad header)")
    log = TrajectoryLog()
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(TrajectoryLog.HEADER):
            raise ValueError(f"{path}: row has {len(parts)} columns, "
                             f"expected {len(TrajectoryLog.HEADER)}")
        nums = [float(p) for p in parts[:-2]]
        log.rows.append(LogRow(
            t_s=nums[0], position=tuple(nums[1:4]), euler=tuple(nums[4:7]),
            velocity=tuple(nums[7:10]), extensions_mm=tuple(nums[10:24]),
            contact_count=int(nums[24]), stability_margin_m=float(parts[-2]),
            phase=parts[-1]))
        if parts[-1] == "DIVERGED":
            log.diverged = True
    return log


# ---------------------------------------------------------------------------
# simulation session


class SimSession:
    """Owns one live simulation: state, gait controller, script and log."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.env = scenario.environment
        self.body = scenario.body
        self.state = initial_state(scenario)
        self.layout = spine_layout()
        self.controller = GaitController(params=scenario.gait, layout=self.layout)
        self.rng = np.random.default_rng(scenario.seed)
        self._script = list(scenario.script)
        self._script_pos = 0
        self._injected: list[Command] = []
        self._step_index = 0
        dt = scenario.dt_s
        self.steps_per_control = max(1, round(1.0 / (scenario.gait.control_hz * dt)))
        self.steps_per_log = max(1, round(1.0 / (scenario.log_hz * dt)))
        self.log = TrajectoryLog()

    # -- external command entry point (teleop) ----------------------------
    def inject(self, command: Command) -> None:
        self._injected.append(command)

    def set_environment(self, env: Environment) -> None:
        self.env = env

    def reset(self) -> None:
        self.state = initial_state(self.scenario)
        self.controller.reset()
        self._script_pos = 0
        self._injected.clear()
        self._step_index = 0
        self.log = TrajectoryLog()

    # -- bookkeeping -------------------------------------------------------
    def _due_commands(self, t: float) -> list[Command]:
        cmds = list(self._injected)
        self._injected.clear()
        while (self._script_pos < len(self._script)
               and self._script[self._script_pos][0] <= t + 1e-12):
            cmds.append(self._script[self._script_pos][1])
            self._script_pos += 1
        return cmds

    def _control_tick(self) -> None:
        cmds = self._due_commands(self.state.time_s)
        if cmds:
            for cmd in cmds:
                targets = self.controller.tick(self.state, self.env, cmd)
                if targets is not None:
                    self.state = self.state.with_targets(targets.targets)
        else:
            targets = self.controller.tick(self.state, self.env, None)
            if targets is not None:
                self.state = self.state.with_targets(targets.targets)

    def snapshot(self) -> LogRow:
        contacts = contact_solve(self.state, self.env, self.layout)
        if len(contacts) > 0:
            margin = stability_margin(self.state.pose.position[:2],
                                      support_polygon(contacts))
        else:
            margin = 0.0
        euler = imu_read(self.state, self.scenario.imu_noise_sigma_rad, self.rng)
        return LogRow(
            t_s=self.state.time_s,
            position=tuple(float(v) for v in self.state.pose.position),
            euler=(euler.roll, euler.pitch, euler.yaw),
            velocity=tuple(float(v) for v in self.state.linear_velocity),
            extensions_mm=tuple(float(v) for v in self.state.extensions_mm()),
            contact_count=len(contacts),
            stability_margin_m=margin,
            phase=self.controller.phase.phase.value)

    def contact_flags(self) -> list[bool]:
        ids = set(contact_solve(self.state, self.env, self.layout).spine_ids())
        return [i in ids for i in range(SPINE_COUNT)]

    # -- stepping ----------------------------------------------------------
    def advance(self, n_steps: int, log: bool = True) -> None:
        """Run n physics steps, with control ticks and log rows on their
        cadence.  Raises DivergenceError after recording an error row."""
        dt = self.scenario.dt_s
        for _ in range(n_steps):
            if self._step_index % self.steps_per_control == 0:
                self._control_tick()
            try:
                self.state = step(self.state, self.body, self.env, dt,
                                  self.scenario.contact, self.layout)
            except DivergenceError:
                if log:
                    row = self.snapshot()
                    self.log.rows.append(replace(row, t_s=row.t_s + dt, phase="DIVERGED"))
                    self.log.diverged = True
                raise
            self._step_index += 1
            if log and self._step_index % self.steps_per_log == 0:
                self.log.rows.append(self.snapshot())

    def run(self) -> TrajectoryLog:
        total = round(self.scenario.duration_s / self.scenario.dt_s)
        self.log.rows.append(self.snapshot())
        try:
            self.advance(total)
        except DivergenceError:
            pass
        return self.log


def run(scenario: Scenario) -> TrajectoryLog:
    """Execute a scenario start to finish; deterministic given the seed."""
    return SimSession(scenario).run()


# ---------------------------------------------------------------------------
# CLI


def _cmd_run(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
        if args.dt is not None:
            scenario = replace(scenario, dt_s=args.dt)
        if args.duration is not None:
            scenario = replace(scenario, duration_s=args.duration)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 1
    log = run(scenario)
    if args.out:
        write_csv(log, args.out)
        print(f"wrote {len(log.rows)} rows to {args.out}")
    last = log.rows[-1]
    print(f"{scenario.name}: t={last.t_s:.3f}s pos=({last.position[0]:.4f}, "
          f"{last.position[1]:.4f}, {last.position[2]:.4f}) phase={last.phase}")
    if log.diverged:
        print("simulation diverged", file=sys.stderr)
        return 2
    return 0


def _cmd_layout(_args) -> int:
    layout = spine_layout()
    print("id  kind    direction                        neighbors")
    for i in range(SPINE_COUNT):
        d = layout.directions[i]
        neigh = ",".join(str(j) for j in layout.adjacency[i])
        print(f"{i:2d}  {layout.kinds[i].value:6s}  "
              f"({d[0]:+.4f}, {d[1]:+.4f}, {d[2]:+.4f})  {neigh}")
    return 0


def _cmd_rack_demo(args) -> int:
    chain = act_mod.RackChain.folded(link_count=args.links)
    print("step  action   rigid  extension_mm  links (base->tip)")

    def show(stepno, action, ch):
        bits = "".join("R" if l.state is act_mod.LinkState.RIGID else "F" for l in ch.links)
        print(f"{stepno:4d}  {action:7s}  {ch.rigid_count:5d}  "
              f"{act_mod.extension_of(ch):12.1f}  {bits}")

    show(0, "start", chain)
    n = 0
    for _ in range(args.links):
        chain = act_mod.rack_advance(chain)
        n += 1
        show(n, "advance", chain)
    for _ in range(args.links):
        chain = act_mod.rack_retract(chain)
        n += 1
        show(n, "retract", chain)
    return 0


def _cmd_serve(args) -> int:
    from urchin_sim import teleop
    scenario = None
    if args.scenario:
        try:
            scenario = load_scenario(args.scenario)
        except ScenarioError as exc:
            print(f"scenario error: {exc}", file=sys.stderr)
            return 1
    try:
        teleop.serve(port=args.port, broadcast_hz=args.hz, scenario=scenario)
    except OSError as exc:
        print(f"server startup failed: {exc}", file=sys.stderr)
        return 1
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="urchin-sim",
        description="Simulator and teleop server for the 14-spine sea urchin robot")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario file, optionally writing a CSV log")
    p_run.add_argument("scenario")
    p_run.add_argument("--out", help="trajectory CSV output path")
    p_run.add_argument("--dt", type=float, help="physics step override (s)")
    p_run.add_argument("--duration", type=float, help="duration override (s)")
    p_run.set_defaults(func=_cmd_run)

    p_serve = sub.add_parser("serve", help="run the live teleoperation server")
    p_serve.add_argument("--port", type=int, default=8080)
    p_serve.add_argument("--hz", type=float, default=30.0)
    p_serve.add_argument("--scenario", help="initial scenario file")
    p_serve.set_defaults(func=_cmd_serve)

    p_layout = sub.add_parser("layout", help="print the 14 spine directions and adjacency")
    p_layout.set_defaults(func=_cmd_layout)

    p_rack = sub.add_parser("rack-demo", help="print the rack lock/unlock sequence")
    p_rack.add_argument("--links", type=int, default=8)
    p_rack.set_defaults(func=_cmd_rack_demo)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
