"""Fixed-step rigid-body dynamics for the spined sphere.

Model: one rigid body (the shell) with 14 massless rigid prismatic spines.
Contacts are penalty springs with critical damping and regularized Coulomb
friction, evaluated at every spine tip plus the lowest shell point, against
flat or bilinear-heightfield terrain, in air or water.  Integration is
semi-implicit Euler at a fixed step, fully deterministic: the same state,
environment and dt always produce bit-identical trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from urchin_sim.actuator import TelescopicActuator, actuator_update
from urchin_sim.errors import DivergenceError, ScenarioError
from urchin_sim.geometry import (
    SPINE_COUNT,
    Pose,
    SpineLayout,
    quat_from_axis_angle,
    quat_multiply,
    quat_normalize,
    quat_to_matrix,
    spine_layout,
)

SHELL_RADIUS_M = 0.065
GRAVITY_M_S2 = 9.81
MAX_DT_S = 0.005

# name -> Coulomb friction coefficient; the terrain names are qualitative,
# the coefficients are tuning defaults exposed here as config.
TERRAIN_PRESETS = {
    "ice": 0.05,
    "snow": 0.25,
    "sand": 0.6,
    "rock": 0.8,
    "lab-floor": 0.5,
}


# ---------------------------------------------------------------------------
# terrain


@dataclass(frozen=True)
class FlatTerrain:
    height_m: float = 0.0

    def sample(self, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n = len(xy)
        z = np.full(n, self.height_m)
        normals = np.zeros((n, 3))
        normals[:, 2] = 1.0
        return z, normals


@dataclass(frozen=True)
class Heightfield:
    """Regular grid of heights; heights[i, j] sits at
    (origin_x + j*spacing, origin_y + i*spacing).  Queries outside the grid
    clamp to the border."""

    spacing_m: float
    heights: np.ndarray
    origin_xy: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        h = np.asarray(self.heights, dtype=np.float64)
        if h.ndim != 2 or h.shape[0] < 2 or h.shape[1] < 2:
            raise ScenarioError("heightfield needs a 2D grid of at least 2x2 heights")
        if not np.all(np.isfinite(h)):
            raise ScenarioError("heightfield contains non-finite heights")
        if self.spacing_m <= 0:
            raise ScenarioError(f"heightfield spacing must be positive, got {self.spacing_m}")
        object.__setattr__(self, "heights", h)
        h.setflags(write=False)

    def _interp(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        gx = np.clip((x - self.origin_xy[0]) / self.spacing_m, 0.0, self.heights.shape[1] - 1.0)
        gy = np.clip((y - self.origin_xy[1]) / self.spacing_m, 0.0, self.heights.shape[0] - 1.0)
        j0 = np.minimum(gx.astype(np.int64), self.heights.shape[1] - 2)
        i0 = np.minimum(gy.astype(np.int64), self.heights.shape[0] - 2)
        fx = gx - j0
        fy = gy - i0
        h = self.heights
        return ((h[i0, j0] * (1 - fx) + h[i0, j0 + 1] * fx) * (1 - fy)
                + (h[i0 + 1, j0] * (1 - fx) + h[i0 + 1, j0 + 1] * fx) * fy)

    def sample(self, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x, y = xy[:, 0], xy[:, 1]
        z = self._interp(x, y)
        e = 0.5 * self.spacing_m
        dzdx = (self._interp(x + e, y) - self._interp(x - e, y)) / (2 * e)
        dzdy = (self._interp(x, y + e) - self._interp(x, y - e)) / (2 * e)
        normals = np.stack([-dzdx, -dzdy, np.ones_like(z)], axis=1)
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        return z, normals


Terrain = Union[FlatTerrain, Heightfield]


# ---------------------------------------------------------------------------
# medium


@dataclass(frozen=True)
class Air:
    pass


@dataclass(frozen=True)
class Water:
    """Submerged medium.  buoyancy_fraction < 1: the robot sinks."""

    buoyancy_fraction: float = 0.8
    linear_drag: float = 2.0     # N*s/m
    angular_drag: float = 0.01   # N*m*s

    def __post_init__(self):
        if not 0.0 <= self.buoyancy_fraction < 1.0:
            raise ValueError(
                f"buoyancy_fraction must be in [0, 1), got {self.buoyancy_fraction}")


Medium = Union[Air, Water]


@dataclass(frozen=True)
class Environment:
    terrain: Terrain = field(default_factory=FlatTerrain)
    friction_mu: float = TERRAIN_PRESETS["lab-floor"]
    medium: Medium = field(default_factory=Air)
    gravity: float = GRAVITY_M_S2
    preset_name: str = "lab-floor"

    def __post_init__(self):
        if self.friction_mu < 0:
            raise ValueError(f"friction_mu must be >= 0, got {self.friction_mu}")

    @staticmethod
    def from_preset(name: str, terrain: Optional[Terrain] = None) -> "Environment":
        if name == "water":
            return Environment(terrain=terrain or FlatTerrain(), friction_mu=0.5,
                               medium=Water(), preset_name="water")
        if name not in TERRAIN_PRESETS:
            known = ", ".join(sorted(TERRAIN_PRESETS) + ["water"])
            raise ValueError(f"unknown terrain preset {name!r} (known: {known})")
        return Environment(terrain=terrain or FlatTerrain(), friction_mu=TERRAIN_PRESETS[name],
                           medium=Air(), preset_name=name)


# ---------------------------------------------------------------------------
# body and state


def solid_sphere_inertia(mass_kg: float, radius_m: float = SHELL_RADIUS_M) -> np.ndarray:
    return np.eye(3) * (0.4 * mass_kg * radius_m * radius_m)


@dataclass(frozen=True)
class BodyParams:
    mass_kg: float = 0.5
    inertia: np.ndarray | None = None           # 3x3 about the CoM, body frame
    com_offset: np.ndarray | None = None        # body frame, from shell center

    def __post_init__(self):
        if self.mass_kg <= 0:
            raise ValueError(f"mass_kg must be positive, got {self.mass_kg}")
        inertia = self.inertia
        if inertia is None:
            inertia = solid_sphere_inertia(self.mass_kg)
        inertia = np.asarray(inertia, dtype=np.float64)
        if inertia.shape != (3, 3) or not np.allclose(inertia, inertia.T):
            raise ValueError("inertia must be a symmetric 3x3 matrix")
        if np.any(np.linalg.eigvalsh(inertia) <= 0):
            raise ValueError("inertia must be positive definite")
        offset = np.zeros(3) if self.com_offset is None else np.asarray(self.com_offset, float)
        object.__setattr__(self, "inertia", inertia)
        object.__setattr__(self, "com_offset", offset)
        object.__setattr__(self, "_inertia_inv", np.linalg.inv(inertia))
        inertia.setflags(write=False)
        offset.setflags(write=False)

    @property
    def inertia_inv(self) -> np.ndarray:
        return self._inertia_inv  # type: ignore[attr-defined]


@dataclass(frozen=True)
class ContactParams:
    """Penalty-contact constants.  Damping defaults to critical, 2*sqrt(k*m)."""

    spring_n_per_m: float = 5000.0
    damping_n_s_per_m: float | None = None
    stick_velocity_m_s: float = 1e-3

    def damping(self, mass_kg: float) -> float:
        if self.damping_n_s_per_m is not None:
            return self.damping_n_s_per_m
        return 2.0 * math.sqrt(self.spring_n_per_m * mass_kg)


DEFAULT_CONTACT_PARAMS = ContactParams()


@dataclass(frozen=True)
class RobotState:
    pose: Pose
    linear_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))   # m/s, world
    angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))  # rad/s, body
    actuators: tuple[TelescopicActuator, ...] = field(
        default_factory=lambda: tuple(TelescopicActuator.retracted() for _ in range(SPINE_COUNT)))
    time_s: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "linear_velocity", np.asarray(self.linear_velocity, float))
        object.__setattr__(self, "angular_velocity", np.asarray(self.angular_velocity, float))
        self.linear_velocity.setflags(write=False)
        self.angular_velocity.setflags(write=False)
        if len(self.actuators) != SPINE_COUNT:
            raise ValueError(f"expected {SPINE_COUNT} actuators, got {len(self.actuators)}")

    @staticmethod
    def resting(height_m: float = SHELL_RADIUS_M) -> "RobotState":
        return RobotState(pose=Pose(position=np.array([0.0, 0.0, height_m])))

    def extensions_mm(self) -> np.ndarray:
        out = np.empty(SPINE_COUNT)
        for i, act in enumerate(self.actuators):
            out[i] = act.extension_mm
        return out

    def targets_mm(self) -> np.ndarray:
        out = np.empty(SPINE_COUNT)
        for i, act in enumerate(self.actuators):
            out[i] = act.target_mm
        return out

    def with_targets(self, targets_mm: Sequence[float]) -> "RobotState":
        acts = tuple(act.with_target(float(t)) for act, t in zip(self.actuators, targets_mm))
        return replace(self, actuators=acts)


# ---------------------------------------------------------------------------
# contacts


@dataclass(frozen=True)
class Contact:
    point: np.ndarray          # world, m
    normal: np.ndarray         # unit, out of the terrain
    penetration_m: float
    spine_id: int | None       # None -> shell contact

    @property
    def source(self) -> str:
        return "shell" if self.spine_id is None else f"spine:{self.spine_id}"


@dataclass(frozen=True)
class ContactSet:
    contacts: tuple[Contact, ...]

    def __len__(self) -> int:
        return len(self.contacts)

    def spine_ids(self) -> list[int]:
        return [c.spine_id for c in self.contacts if c.spine_id is not None]

    def has_shell(self) -> bool:
        return any(c.spine_id is None for c in self.contacts)


def _contact_arrays(position: np.ndarray, rot: np.ndarray, extensions_mm: np.ndarray,
                    env: Environment, layout: SpineLayout):
    """Penetrating contact candidates as arrays: (points, normals, depths, spine_ids).

    spine_id -1 marks the shell contact.  Spine entries come first in id
    order, so the output ordering is deterministic.
    """
    lengths = SHELL_RADIUS_M + extensions_mm * 1e-3
    dirs_world = layout.directions @ rot.T
    tips = position + dirs_world * lengths[:, None]

    query = np.empty((SPINE_COUNT + 1, 2))
    query[:SPINE_COUNT] = tips[:, :2]
    query[SPINE_COUNT] = position[:2]
    surf_z, normals = env.terrain.sample(query)

    # point-vs-surface gap projected on the local normal
    tip_pen = (surf_z[:SPINE_COUNT] - tips[:, 2]) * normals[:SPINE_COUNT, 2]
    shell_n = normals[SPINE_COUNT]
    shell_pen = SHELL_RADIUS_M - (position[2] - surf_z[SPINE_COUNT]) * shell_n[2]

    pts = []
    nrm = []
    pen = []
    ids = []
    # a tip at zero extension lies on the shell surface; the shell contact
    # already covers it, so only extended spines contact through their tip
    for i in range(SPINE_COUNT):
        if extensions_mm[i] > 0.0 and tip_pen[i] >= 0.0:
            pts.append(tips[i])
            nrm.append(normals[i])
            pen.append(tip_pen[i])
            ids.append(i)
    if shell_pen >= 0.0:
        pts.append(position - shell_n * SHELL_RADIUS_M)
        nrm.append(shell_n)
        pen.append(shell_pen)
        ids.append(-1)
    if not pts:
        return (np.empty((0, 3)), np.empty((0, 3)), np.empty(0), [])
    return np.array(pts), np.array(nrm), np.array(pen), ids


def contact_solve(state: RobotState, env: Environment,
                  layout: SpineLayout | None = None) -> ContactSet:
    """All spine tips and the lowest shell point currently touching terrain."""
    layout = layout or spine_layout()
    pts, nrm, pen, ids = _contact_arrays(
        state.pose.position, state.pose.rotation(), state.extensions_mm(), env, layout)
    contacts = tuple(
        Contact(point=pts[k], normal=nrm[k], penetration_m=float(pen[k]),
                spine_id=None if ids[k] < 0 else ids[k])
        for k in range(len(ids)))
    return ContactSet(contacts)


# ---------------------------------------------------------------------------
# support polygon and stability margin


@dataclass(frozen=True)
class SupportPolygon:
    vertices: np.ndarray     # (n, 2), CCW when non-degenerate
    degenerate: bool


def _convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Monotone-chain hull, CCW, no duplicate endpoint."""
    pts = sorted({(float(p[0]), float(p[1])) for p in points})
    if len(pts) <= 2:
        return np.array(pts)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def support_polygon(contacts: ContactSet) -> SupportPolygon:
    """Convex hull of the contact points projected to the horizontal plane."""
    if len(contacts) == 0:
        raise ValueError("support polygon of an empty contact set")
    xy = np.array([c.point[:2] for c in contacts.contacts])
    hull = _convex_hull_2d(xy)
    return SupportPolygon(vertices=hull, degenerate=len(hull) < 3)


def _point_segment_distance(p, a, b) -> float:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.linalg.norm(p - a))
    t = max(0.0, min(1.0, float((p - a) @ ab) / denom))
    return float(np.linalg.norm(p - (a + t * ab)))


def stability_margin(com_xy: np.ndarray, polygon: SupportPolygon) -> float:
    """Signed distance from the CoM ground projection to the polygon edge.

    Positive inside (statically stable), negative outside (tipping),
    0 for degenerate polygons.
    """
    if polygon.degenerate:
        return 0.0
    p = np.asarray(com_xy, dtype=np.float64)
    verts = polygon.vertices
    n = len(verts)
    inside = True
    line_dists = []
    for i in range(n):
        a, b = verts[i], verts[(i + 1) % n]
        edge = b - a
        cross = edge[0] * (p[1] - a[1]) - edge[1] * (p[0] - a[0])
        length = float(np.linalg.norm(edge))
        line_dists.append(cross / length)
        if cross < 0:
            inside = False
    if inside:
        return float(min(line_dists))
    return -min(_point_segment_distance(p, verts[i], verts[(i + 1) % n]) for i in range(n))


# ---------------------------------------------------------------------------
# integration step


def step(state: RobotState, body: BodyParams, env: Environment, dt: float,
         contact: ContactParams = DEFAULT_CONTACT_PARAMS,
         layout: SpineLayout | None = None) -> RobotState:
    """One fixed semi-implicit Euler step.

    Order: actuators advance toward their targets, contacts are evaluated
    at the new geometry, forces (gravity, medium, penalty contacts with
    Coulomb friction) integrate velocities, then the pose.  Friction is
    impulse-capped so the stick regime cannot overshoot, which keeps the
    stiff penalty model stable at the 1 ms default step.
    """
    if not 0.0 < dt <= MAX_DT_S:
        raise ValueError(f"dt must be in (0, {MAX_DT_S}] s, got {dt}")
    layout = layout or spine_layout()

    acts = state.actuators
    if any(a.extension_mm != a.target_mm for a in acts):
        acts = tuple(actuator_update(a, dt) for a in acts)
    ext_mm = np.empty(SPINE_COUNT)
    for i, a in enumerate(acts):
        ext_mm[i] = a.extension_mm

    pos = state.pose.position
    q = state.pose.orientation
    rot = quat_to_matrix(q)
    v = state.linear_velocity
    w_body = state.angular_velocity
    w_world = rot @ w_body

    m = body.mass_kg
    com = pos + rot @ body.com_offset
    inertia_w_inv = rot @ body.inertia_inv @ rot.T

    force = np.array([0.0, 0.0, -m * env.gravity])
    torque = np.zeros(3)

    if isinstance(env.medium, Water):
        buoy = np.array([0.0, 0.0, env.medium.buoyancy_fraction * m * env.gravity])
        force = force + buoy
        torque = torque + np.cross(pos - com, buoy)
        force = force - env.medium.linear_drag * v
        torque = torque - env.medium.angular_drag * w_world

    pts, nrm, pen, _ids = _contact_arrays(pos, rot, ext_mm, env, layout)
    if len(pen):
        k = contact.spring_n_per_m
        c = contact.damping(m)
        arms = pts - com
        v_pt = v + np.cross(w_world, arms)
        vn = np.einsum("ij,ij->i", v_pt, nrm)
        fn = np.maximum(0.0, k * pen - c * vn)

        vt = v_pt - vn[:, None] * nrm
        slip = np.linalg.norm(vt, axis=1)
        safe = np.maximum(slip, 1e-12)
        t_hat = vt / safe[:, None]
        # effective inverse mass along the slip direction, for the impulse cap
        wvec = np.cross(arms, t_hat)
        k_t = 1.0 / m + np.einsum("ij,ij->i", np.cross(wvec @ inertia_w_inv.T, arms), t_hat)
        coulomb = env.friction_mu * fn * np.minimum(1.0, slip / contact.stick_velocity_m_s)
        cap = slip / (np.maximum(k_t, 1e-12) * dt)
        ft = np.minimum(coulomb, cap)

        f_contact = fn[:, None] * nrm - ft[:, None] * t_hat
        force = force + f_contact.sum(axis=0)
        torque = torque + np.cross(arms, f_contact).sum(axis=0)

    v_new = v + (force / m) * dt
    torque_body = rot.T @ torque
    gyro = np.cross(w_body, body.inertia @ w_body)
    w_body_new = w_body + dt * (body.inertia_inv @ (torque_body - gyro))

    com_new = com + v_new * dt
    w_mag = float(np.linalg.norm(w_body_new))
    if w_mag > 0.0:
        dq = quat_from_axis_angle(w_body_new / w_mag, w_mag * dt)
        q_new = quat_normalize(quat_multiply(q, dq))
    else:
        q_new = q
    rot_new = quat_to_matrix(q_new)
    pos_new = com_new - rot_new @ body.com_offset

    for name, val in (("velocity", v_new), ("angular velocity", w_body_new),
                      ("position", pos_new), ("orientation", q_new)):
        if not np.all(np.isfinite(val)):
            raise DivergenceError(name)

    return RobotState(pose=Pose(position=pos_new, orientation=q_new),
                      linear_velocity=v_new, angular_velocity=w_body_new,
                      actuators=acts, time_s=state.time_s + dt)


# ---------------------------------------------------------------------------
# IMU


class EulerAngles(NamedTuple):
    roll: float
    pitch: float
    yaw: float


def imu_read(state: RobotState, noise_sigma_rad: float = 0.0,
             rng: np.random.Generator | None = None) -> EulerAngles:
    """Absolute orientation as Z-Y-X (yaw-pitch-roll) Euler angles.

    At |pitch| = pi/2 the yaw/roll split is ambiguous; yaw reports 0 and
    roll carries the remaining rotation.  Optional additive Gaussian noise
    models sensor error (off by default).
    """
    w, x, y, z = state.pose.orientation
    sinp = 2.0 * (w * y - z * x)
    if abs(sinp) >= 1.0 - 1e-12:
        pitch = math.copysign(math.pi / 2.0, sinp)
        yaw = 0.0
        roll = 2.0 * math.atan2(x, w)
    else:
        roll = math.atan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y))
        pitch = math.asin(sinp)
        yaw = math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))
    if noise_sigma_rad > 0.0:
        rng = rng or np.random.default_rng()
        noise = rng.normal(0.0, noise_sigma_rad, size=3)
        roll, pitch, yaw = roll + noise[0], pitch + noise[1], yaw + noise[2]
    return EulerAngles(roll, pitch, yaw)
