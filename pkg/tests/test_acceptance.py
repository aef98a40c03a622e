"""Acceptance suite: one test per shipped performance criterion.

Run with `pytest tests/test_acceptance.py -s` to see one line per criterion.
Every tolerance is fixed here, not tuned at runtime.
"""

import json
import math
import random
import time

import numpy as np
import pytest

from urchin_sim.actuator import (
    BASE_HEIGHT_MM,
    EXTENDED_LEN_MM,
    LINK_PITCH_MM,
    LinkState,
    RackChain,
    TelescopicActuator,
    actuator_update,
    extension_of,
    rack_advance,
    rack_retract,
)
from urchin_sim.dynamics import (
    BodyParams,
    Environment,
    Heightfield,
    RobotState,
    step,
)
from urchin_sim.errors import SaturationError
from urchin_sim.gait import plan_level
from urchin_sim.geometry import Pose, SpineKind, spine_layout
from urchin_sim.harness import SimSession, parse_scenario, run, write_csv

BODY = BodyParams()


def report(criterion: int, ok: bool, detail: str):
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
    assert ok, f"criterion {criterion}: {detail}"


def test_criterion_1_actuator_stroke_time():
    t0 = time.monotonic()
    act = TelescopicActuator.retracted().with_target(64.0)
    steps = 0
    while act.extension_mm < 64.0:
        act = actuator_update(act, 0.001)
        steps += 1
        assert steps < 2000
    elapsed = steps * 0.001
    ok = abs(elapsed - 0.640) <= 0.001 + 1e-12
    report(1, ok, f"0->64 mm stroke completed in {elapsed:.3f} s (0.640 +- 0.001)")
    assert time.monotonic() - t0 < 1.0


def test_criterion_2_envelope_ratio():
    ratio = EXTENDED_LEN_MM / BASE_HEIGHT_MM
    ok = abs(ratio - 3.56) <= 0.005
    report(2, ok, f"envelope ratio {EXTENDED_LEN_MM:.0f}/{BASE_HEIGHT_MM:.0f} = {ratio:.4f}")


def test_criterion_3_rack_chain_properties():
    t0 = time.monotonic()
    rng = random.Random(2024)
    folded = RackChain.folded()
    sequences = 10_000
    for _ in range(sequences):
        chain = folded
        advances = 0
        for _ in range(rng.randint(1, 100)):
            if rng.random() < 0.5:
                try:
                    chain = rack_advance(chain)
                    advances += 1
                except SaturationError:
                    pass
            else:
                try:
                    chain = rack_retract(chain)
                    advances -= 1
                except SaturationError:
                    pass
            states = [l.state for l in chain.links]
            rc = chain.rigid_count
            assert states[:rc] == [LinkState.RIGID] * rc
            assert states[rc:] == [LinkState.FOLDED] * (8 - rc)
            assert extension_of(chain) == rc * LINK_PITCH_MM
        for _ in range(chain.rigid_count):
            chain = rack_retract(chain)
        assert chain == folded
    elapsed = time.monotonic() - t0
    report(3, elapsed < 10.0,
           f"{sequences} random sequences kept prefix/extension invariants, "
           f"reversibility bit-exact, in {elapsed:.1f} s (< 10 s)")


def test_criterion_4_layout():
    layout = spine_layout()
    n_axis = sum(k is SpineKind.AXIS for k in layout.kinds)
    n_oct = sum(k is SpineKind.OCTANT for k in layout.kinds)
    unit = np.all(np.abs(np.linalg.norm(layout.directions, axis=1) - 1) < 1e-12)
    zero_sum = np.linalg.norm(layout.directions.sum(axis=0)) < 1e-12
    angle = math.degrees(math.acos(float(
        layout.directions[5] @ layout.directions[12])))
    angle_ok = abs(angle - math.degrees(math.acos(1 / math.sqrt(3)))) < 1e-6
    ok = (len(layout.directions) == 14 and n_axis == 6 and n_oct == 8
          and unit and zero_sum and angle_ok)
    report(4, ok, f"14 unit directions ({n_axis} axis + {n_oct} octant), "
                  f"zero sum, axis-octant angle {angle:.4f} deg")


def test_criterion_5_stance_geometry():
    t0 = time.monotonic()
    scn = parse_scenario({"name": "stance", "duration_s": 5.0,
                          "environment": {"preset": "lab-floor"},
                          "script": [{"t_s": 0.0, "cmd": "level"}]})
    sess = SimSession(scn)
    log = sess.run()
    last = log.rows[-1]
    height_mm = last.position[2] * 1000
    clearance_mm = height_mm - 65.0
    margin_mm = last.stability_margin_m * 1000
    exts = [last.extensions_mm[i] for i in (6, 8, 10, 12)]
    ok = (abs(height_mm - 74.48) <= 1.5
          and abs(clearance_mm - 9.48) <= 1.5
          and abs(margin_mm - 74.48) <= 2.0
          and all(abs(e - 64.0) < 0.5 for e in exts)
          and last.phase == "STANCE")
    report(5, ok, f"stance height {height_mm:.2f} mm (74.48 +- 1.5), "
                  f"clearance {clearance_mm:.2f} mm (9.48 +- 1.5), "
                  f"margin {margin_mm:.2f} mm (74.48 +- 2)")
    assert time.monotonic() - t0 < 10.0


def test_criterion_6_config1_heading():
    results = []
    for hx, hy in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
        scn = parse_scenario({
            "name": "c1", "duration_s": 10.0,
            "environment": {"preset": "lab-floor"},
            "script": [{"t_s": 0.0, "cmd": "move", "dir": [hx, hy], "config": 1}]})
        log = run(scn)
        d = np.array(log.rows[-1].position[:2]) - np.array(log.rows[0].position[:2])
        dist_mm = float(np.linalg.norm(d)) * 1000
        h = np.array([hx, hy]) / math.sqrt(2)
        err_deg = math.degrees(math.acos(
            float(np.clip(d @ h / max(np.linalg.norm(d), 1e-12), -1, 1))))
        results.append((hx, hy, dist_mm, err_deg))
    ok = all(dist >= 20.0 and err < 45.0 for _, _, dist, err in results)
    detail = "; ".join(f"({hx},{hy}): {dist:.0f} mm @ {err:.0f} deg"
                       for hx, hy, dist, err in results)
    report(6, ok, f"config-1 cycles displace >= 20 mm within 45 deg: {detail}")


def test_criterion_7_config2_direction():
    from urchin_sim.gait import plan_config2
    from urchin_sim.harness import initial_state
    layout = spine_layout()
    results = []
    for hx, hy in ((1, 0), (0, 1), (-1, 0), (0, -1)):
        scn = parse_scenario({
            "name": "c2", "duration_s": 6.0,
            "environment": {"preset": "lab-floor"},
            "script": [{"t_s": 0.0, "cmd": "move", "dir": [hx, hy], "config": 2}]})
        pair_cmds = plan_config2(initial_state(scn), scn.environment, (hx, hy))
        pair = [i for i, t in enumerate(pair_cmds.targets) if t > 0]
        log = run(scn)
        d = np.array(log.rows[-1].position[:2]) - np.array(log.rows[0].position[:2])
        mean_xy = 0.5 * (layout.directions[pair[0]][:2] + layout.directions[pair[1]][:2])
        results.append(((hx, hy), float(d @ mean_xy)))
    ok = all(dot < 0 for _, dot in results)
    detail = "; ".join(f"{h}: d.pair={dot:+.4f}" for h, dot in results)
    report(7, ok, f"config-2 moves away from the extended pair: {detail}")


def _speed_xy(row):
    return math.hypot(row.velocity[0], row.velocity[1])


def test_criterion_8_braking():
    base = {
        "name": "brake", "duration_s": 3.0,
        "environment": {"preset": "lab-floor"},
        "initial_velocity": {"linear": [0.3, 0, 0],
                             "angular": [0, 0.3 / 0.065, 0]},
    }
    brake_entry = 0.2
    braked = run(parse_scenario({**base, "script": [
        {"t_s": brake_entry, "cmd": "stop"}]}))
    t_stop = next((r.t_s for r in braked.rows
                   if r.t_s >= brake_entry and _speed_xy(r) < 0.02), None)
    coast = run(parse_scenario({**base, "script": []}))
    coast_slow = next((r.t_s for r in coast.rows
                       if r.t_s >= brake_entry and _speed_xy(r) < 0.02), None)
    brake_time = None if t_stop is None else t_stop - brake_entry
    ok = (brake_time is not None and brake_time <= 1.0
          and (coast_slow is None or coast_slow - brake_entry > 2.0))
    report(8, ok, f"braked to < 0.02 m/s in {brake_time:.2f} s (<= 1.0); "
                  f"coasting stayed above it for "
                  f"{'the whole run' if coast_slow is None else f'{coast_slow - brake_entry:.1f} s'}")


def test_criterion_9_water_behavior():
    sink = run(parse_scenario({
        "name": "sink", "duration_s": 2.0,
        "environment": {"preset": "water"},
        "initial_pose": {"position": [0, 0, 0.3]}}))
    first_contact = next(r.t_s for r in sink.rows if r.contact_count > 0)
    vz_ok = all(r.velocity[2] < 0 for r in sink.rows
                if 0 < r.t_s < first_contact)

    jump = run(parse_scenario({
        "name": "jump", "duration_s": 3.0,
        "environment": {"preset": "water"},
        "initial_pose": {"position": [0, 0, 0.064019]},
        "script": [{"t_s": 0.5, "cmd": "jump"}]}))
    vmax = max(r.velocity[2] for r in jump.rows if r.t_s > 0.5)
    airborne = any(r.contact_count == 0 for r in jump.rows if r.t_s > 0.5)
    ok = vz_ok and vmax > 0.05 and airborne
    report(9, ok, f"sinks until contact at {first_contact:.2f} s; jump peaks "
                  f"at +{vmax:.3f} m/s (> 0.05) with all contacts lost: {airborne}")


def test_criterion_10_friction_contrast():
    def travel(mu):
        env = Environment(friction_mu=mu)
        s = RobotState(pose=Pose(position=np.array([0.0, 0.0, 0.065 - 0.000981])),
                       angular_velocity=np.array([0.0, 200.0, 0.0]))
        for _ in range(2000):
            s = step(s, BODY, env, 0.001)
        return float(s.pose.position[0])

    d_ice, d_sand = travel(0.05), travel(0.6)
    ratio = d_ice / d_sand
    ok = ratio < 0.20
    report(10, ok, f"spinning shell travels {d_ice:.2f} m on mu=0.05 vs "
                   f"{d_sand:.2f} m on mu=0.6 ({ratio:.0%} < 20%)")


def test_criterion_11_determinism(tmp_path):
    scn = parse_scenario({
        "name": "det", "duration_s": 3.0, "seed": 7,
        "environment": {"preset": "lab-floor"},
        "script": [{"t_s": 0.0, "cmd": "move", "dir": [1, 1], "config": 1}]})
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(run(scn), a)
    write_csv(run(scn), b)
    ok = a.read_bytes() == b.read_bytes()
    report(11, ok, f"two runs produced byte-identical CSV logs "
                   f"({a.stat().st_size} bytes)")


def _step_heights(step_m):
    heights = [[0.0] * 9 for _ in range(9)]
    for i in range(9):
        for j in range(9):
            if -0.2 + j * 0.05 >= 0.049 and -0.2 + i * 0.05 >= 0.049:
                heights[i][j] = step_m
    return heights


def test_criterion_12_leveling_on_heightfield():
    scn = parse_scenario({
        "name": "hf", "duration_s": 6.0,
        "environment": {"preset": "lab-floor",
                        "terrain": {"type": "heightfield", "spacing_m": 0.05,
                                    "origin_xy": [-0.2, -0.2],
                                    "heights": _step_heights(0.010)}},
        "script": [{"t_s": 0.0, "cmd": "level"}]})
    log = run(scn)
    last = log.rows[-1]
    exts = [last.extensions_mm[i] for i in (6, 8, 10, 12)]
    diff = max(exts) - min(exts)

    env80 = Environment.from_preset(
        "lab-floor",
        terrain=Heightfield(0.05, np.array(_step_heights(0.080)), (-0.2, -0.2)))
    with pytest.raises(SaturationError) as err:
        state = RobotState.resting()
        for _ in range(500):                 # 10 s of 50 Hz leveling ticks
            cmds = plan_level(state, env80)
            state = state.with_targets(cmds.targets)
            for _ in range(20):
                state = step(state, BODY, env80, 0.001)
    ok = abs(diff - 10.0) <= 2.0 and last.phase == "STANCE"
    report(12, ok, f"10 mm step -> extension spread {diff:.2f} mm (10 +- 2); "
                   f"80 mm step -> saturation on spine {err.value.spine_id}")


def test_criterion_13_teleop_round_trip():
    from websockets.sync.client import connect
    from urchin_sim.teleop import TeleopServer

    srv = TeleopServer(port=0, broadcast_hz=30.0)
    port = srv.start()
    try:
        with connect(f"ws://127.0.0.1:{port}") as ws:
            ws.recv(timeout=2.0)
            count = 0
            t0 = time.monotonic()
            while time.monotonic() - t0 < 1.0:
                ws.recv(timeout=1.0)
                count += 1
            ws.send(json.dumps({"type": "cmd", "cmd": "spine", "id": 5,
                                "target_mm": 64}))
            t_cmd = time.monotonic()
            latency = None
            while time.monotonic() - t_cmd < 0.8:
                msg = json.loads(ws.recv(timeout=1.0))
                if msg.get("type") == "state" and \
                        msg["spines"][5]["extension_mm"] >= 64.0:
                    latency = time.monotonic() - t_cmd
                    break
    finally:
        srv.stop()
    ok = 28 <= count <= 32 and latency is not None
    report(13, ok, f"{count} state msgs in 1 s (30 +- 2); spine 5 reached "
                   f"64 mm after {latency:.2f} s (< 0.8); UI render checks "
                   f"live in frontend/tests")
