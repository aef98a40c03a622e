"""Live teleoperation server.

Runs one simulation in real time and speaks a JSON text-frame protocol over
websockets: state snapshots broadcast at a fixed rate, commands applied in
arrival order at control ticks.  A slow consumer loses frames, never
commands, and never stalls the physics loop.
"""

from __future__ import annotations

import asyncio
import json
import logging
import math
import threading
import time
from dataclasses import dataclass, replace
from typing import Optional, Union

from websockets.asyncio.server import serve as ws_serve

from urchin_sim.dynamics import TERRAIN_PRESETS, Environment
from urchin_sim.errors import DecodeError, ScenarioError
from urchin_sim.gait import Command
from urchin_sim.harness import Scenario, SimSession, parse_command_fields, parse_scenario

log = logging.getLogger(__name__)

DEFAULT_PORT = 8080
DEFAULT_BROADCAST_HZ = 30.0
MAX_STATE_MESSAGE_BYTES = 4096
_CLIENT_QUEUE_FRAMES = 8
_CATCHUP_CAP_S = 0.25      # max sim debt repaid per pacing iteration


@dataclass(frozen=True)
class ResetCommand:
    scenario: Optional[str] = None


@dataclass(frozen=True)
class SetTerrainCommand:
    preset: str


WireCommand = Union[Command, ResetCommand, SetTerrainCommand]


def decode_command(data: bytes | str) -> WireCommand:
    """Strictly validate one inbound command frame."""
    try:
        obj = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DecodeError(f"invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise DecodeError("command must be a JSON object")
    if obj.get("type") != "cmd":
        raise DecodeError("expected type 'cmd'", "type")
    name = obj.get("cmd")
    if name == "reset":
        for key in obj:
            if key not in ("type", "cmd", "scenario"):
                raise DecodeError(f"unknown field {key!r}", "reset")
        scenario = obj.get("scenario")
        if scenario is not None and not isinstance(scenario, str):
            raise DecodeError("scenario must be a string", "reset.scenario")
        return ResetCommand(scenario=scenario)
    if name == "set_terrain":
        for key in obj:
            if key not in ("type", "cmd", "preset"):
                raise DecodeError(f"unknown field {key!r}", "set_terrain")
        preset = obj.get("preset")
        if not isinstance(preset, str) or (preset not in TERRAIN_PRESETS
                                           and preset != "water"):
            raise DecodeError(f"unknown terrain preset {preset!r}", "set_terrain.preset")
        return SetTerrainCommand(preset=preset)
    return parse_command_fields(obj, "cmd", extended=False, errcls=DecodeError)


class TelemetryEncoder:
    """Builds canonical state frames; falls back to the last good snapshot
    (marked stale) if the state contains non-finite values."""

    def __init__(self):
        self._last_good: Optional[dict] = None

    def encode(self, session: SimSession) -> bytes:
        row = session.snapshot()
        flags = session.contact_flags()
        state = session.state
        msg = {
            "type": "state",
            "t_s": row.t_s,
            "pose": {
                "position": list(row.position),
                "quaternion": [float(v) for v in state.pose.orientation],
            },
            "euler": {"roll": row.euler[0], "pitch": row.euler[1], "yaw": row.euler[2]},
            "spines": [
                {"extension_mm": float(act.extension_mm),
                 "target_mm": float(act.target_mm),
                 "contact": flags[i]}
                for i, act in enumerate(state.actuators)
            ],
            "velocity": list(row.velocity),
            "phase": row.phase,
            "stability_margin_m": row.stability_margin_m,
            "environment": session.env.preset_name,
            "stale": False,
        }
        if not _all_finite(msg):
            if self._last_good is None:
                raise DecodeError("non-finite state before any good snapshot")
            msg = dict(self._last_good)
            msg["stale"] = True
        else:
            self._last_good = msg
        data = json.dumps(msg, separators=(",", ":")).encode()
        if len(data) > MAX_STATE_MESSAGE_BYTES:
            raise ValueError(f"state message {len(data)} bytes exceeds "
                             f"{MAX_STATE_MESSAGE_BYTES}")
        return data


def _all_finite(obj) -> bool:
    if isinstance(obj, float):
        return math.isfinite(obj)
    if isinstance(obj, dict):
        return all(_all_finite(v) for v in obj.values())
    if isinstance(obj, list):
        return all(_all_finite(v) for v in obj)
    return True


def encode_state(session: SimSession,
                 encoder: Optional[TelemetryEncoder] = None) -> bytes:
    return (encoder or TelemetryEncoder()).encode(session)


def _default_scenario() -> Scenario:
    return parse_scenario({"name": "teleop-default", "duration_s": 1.0}, "<builtin>")


class TeleopServer:
    """One simulation shared by all connected clients."""

    def __init__(self, port: int = DEFAULT_PORT,
                 broadcast_hz: float = DEFAULT_BROADCAST_HZ,
                 scenario: Optional[Scenario] = None,
                 host: str = "127.0.0.1"):
        if broadcast_hz <= 0:
            raise ValueError("broadcast_hz must be positive")
        self.host = host
        self.port = port
        self.broadcast_hz = broadcast_hz
        self.scenario = scenario or _default_scenario()
        self.scenarios = {self.scenario.name: self.scenario}
        self.session = SimSession(self.scenario)
        self.encoder = TelemetryEncoder()
        self._clients: set[asyncio.Queue] = set()
        self._thread: Optional[threading.Thread] = None
        self._loop: Optional[asyncio.AbstractEventLoop] = None
        self._stopping: Optional[asyncio.Event] = None
        self._ready = threading.Event()
        self._bound_port: Optional[int] = None
        self._startup_error: Optional[BaseException] = None

    # -- command application ------------------------------------------------
    def _apply(self, cmd: WireCommand) -> None:
        if isinstance(cmd, ResetCommand):
            if cmd.scenario is not None:
                scenario = self.scenarios.get(cmd.scenario)
                if scenario is None:
                    raise ScenarioError(f"unknown scenario {cmd.scenario!r}")
                if scenario is not self.session.scenario:
                    self.session = SimSession(scenario)
                    return
            self.session.reset()
        elif isinstance(cmd, SetTerrainCommand):
            env = Environment.from_preset(cmd.preset)
            self.session.set_environment(replace(env, terrain=self.session.env.terrain))
        else:
            self.session.inject(cmd)

    # -- async internals ----------------------------------------------------
    async def _handler(self, websocket) -> None:
        queue: asyncio.Queue = asyncio.Queue(maxsize=_CLIENT_QUEUE_FRAMES)
        self._clients.add(queue)
        sender = asyncio.create_task(self._sender(websocket, queue))
        try:
            async for message in websocket:
                try:
                    cmd = decode_command(message)
                    self._apply(cmd)
                except (DecodeError, ScenarioError) as exc:
                    reply = json.dumps({"type": "error", "reason": str(exc)},
                                       separators=(",", ":"))
                    await queue.put(reply.encode())
        except Exception:
            pass  # client gone; drop silently
        finally:
            self._clients.discard(queue)
            sender.cancel()

    @staticmethod
    async def _sender(websocket, queue: asyncio.Queue) -> None:
        try:
            while True:
                await websocket.send(await queue.get())
        except asyncio.CancelledError:
            raise
        except Exception:
            pass

    def _offer(self, frame: bytes) -> None:
        for queue in self._clients:
            try:
                queue.put_nowait(frame)
            except asyncio.QueueFull:
                try:
                    queue.get_nowait()            # drop the oldest frame
                except asyncio.QueueEmpty:
                    pass
                try:
                    queue.put_nowait(frame)
                except asyncio.QueueFull:
                    pass

    async def _physics_loop(self) -> None:
        dt = self.session.scenario.dt_s
        last = time.perf_counter()
        while True:
            await asyncio.sleep(dt)
            now = time.perf_counter()
            debt = min(now - last, _CATCHUP_CAP_S)
            steps = int(debt / dt)
            if steps > 0:
                self.session.advance(steps, log=False)
                last += steps * dt
            if now - last > _CATCHUP_CAP_S:  # fell too far behind: drop debt
                last = now

    async def _broadcast_loop(self) -> None:
        interval = 1.0 / self.broadcast_hz
        next_at = time.perf_counter() + interval
        while True:
            delay = next_at - time.perf_counter()
            if delay > 0:
                await asyncio.sleep(delay)
            next_at += interval
            if self._clients:
                self._offer(self.encoder.encode(self.session))

    async def _main(self) -> None:
        self._stopping = asyncio.Event()
        try:
            async with ws_serve(self._handler, self.host, self.port) as server:
                self._bound_port = server.sockets[0].getsockname()[1]
                tasks = [asyncio.create_task(self._physics_loop()),
                         asyncio.create_task(self._broadcast_loop())]
                self._ready.set()
                log.info("teleop server on ws://%s:%d at %.0f Hz",
                         self.host, self._bound_port, self.broadcast_hz)
                try:
                    await self._stopping.wait()
                finally:
                    for t in tasks:
                        t.cancel()
        except OSError as exc:
            self._startup_error = exc
            self._ready.set()
            raise

    # -- lifecycle ------------------------------------------------------------
    def run_forever(self) -> None:
        """Run in the current thread until interrupted."""
        try:
            asyncio.run(self._main())
        except KeyboardInterrupt:
            pass

    def start(self) -> int:
        """Run in a background thread; returns the bound port."""

        def _target():
            self._loop = asyncio.new_event_loop()
            asyncio.set_event_loop(self._loop)
            try:
                self._loop.run_until_complete(self._main())
            except OSError:
                pass
            finally:
                self._loop.close()

        self._thread = threading.Thread(target=_target, daemon=True)
        self._thread.start()
        self._ready.wait(timeout=10.0)
        if self._startup_error is not None:
            raise OSError(f"teleop server failed to start: {self._startup_error}")
        if self._bound_port is None:
            raise OSError("teleop server did not start in time")
        return self._bound_port

    def stop(self) -> None:
        if self._loop and self._stopping:
            self._loop.call_soon_threadsafe(self._stopping.set)
        if self._thread:
            self._thread.join(timeout=5.0)


def serve(port: int = DEFAULT_PORT, broadcast_hz: float = DEFAULT_BROADCAST_HZ,
          scenario: Optional[Scenario] = None, host: str = "127.0.0.1") -> None:
    """Blocking entry point used by the CLI."""
    server = TeleopServer(port=port, broadcast_hz=broadcast_hz,
                          scenario=scenario, host=host)
    server.run_forever()
