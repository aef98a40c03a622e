"""Shell geometry, spine layout and pose math for the sea-urchin robot.

The robot is a sphere (130 mm diameter) carrying 14 radially mounted
telescopic spines: 6 on the coordinate axes and 8 through the octant
centers.  Everything here is a pure function over immutable values; all
lengths are SI metres internally, millimetres only at call boundaries
that say so in their name.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

SHELL_DIAMETER_MM = 130.0
SPINE_COUNT = 14

# Adjacency is defined by the two exact inter-spine angles of the layout:
# axis-to-octant acos(1/sqrt(3)), octant-to-octant acos(1/3).
ADJ_COS_AXIS_OCTANT = 1.0 / math.sqrt(3.0)
ADJ_COS_OCTANT_OCTANT = 1.0 / 3.0
_ADJ_ANGLE_TOL_RAD = 1e-9


class SpineKind(Enum):
    AXIS = "axis"
    OCTANT = "octant"


@dataclass(frozen=True)
class ShellGeometry:
    """Spherical shell envelope."""

    diameter_mm: float = SHELL_DIAMETER_MM

    def __post_init__(self):
        if self.diameter_mm <= 0:
            raise ValueError(f"diameter_mm must be positive, got {self.diameter_mm}")

    @property
    def radius_mm(self) -> float:
        return self.diameter_mm / 2.0

    @property
    def radius_m(self) -> float:
        return self.diameter_mm / 2000.0


@dataclass(frozen=True)
class SpineLayout:
    """The 14 unit spine directions (body frame) and their adjacency.

    Canonical ordering: axis spines 0-5 as +x,-x,+y,-y,+z,-z, then octant
    spines 6-13 in lexicographic sign order, so ids are reproducible in
    logs and wire messages.
    """

    directions: np.ndarray            # (14, 3) unit vectors, body frame
    kinds: tuple[SpineKind, ...]      # per spine
    adjacency: tuple[tuple[int, ...], ...]  # per spine, neighbor ids

    def __post_init__(self):
        self.directions.setflags(write=False)

    def neighbors(self, spine_id: int) -> tuple[int, ...]:
        return self.adjacency[spine_id]


def _build_layout() -> SpineLayout:
    dirs = []
    kinds = []
    for axis in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)):
        dirs.append(axis)
        kinds.append(SpineKind.AXIS)
    inv_sqrt3 = 1.0 / math.sqrt(3.0)
    for signs in sorted(itertools.product((-1, 1), repeat=3)):
        dirs.append(tuple(s * inv_sqrt3 for s in signs))
        kinds.append(SpineKind.OCTANT)
    directions = np.array(dirs, dtype=np.float64)

    adjacency = []
    for i in range(SPINE_COUNT):
        neigh = []
        for j in range(SPINE_COUNT):
            if i == j:
                continue
            cosang = float(np.dot(directions[i], directions[j]))
            angle = math.acos(max(-1.0, min(1.0, cosang)))
            if (abs(angle - math.acos(ADJ_COS_AXIS_OCTANT)) < _ADJ_ANGLE_TOL_RAD
                    or abs(angle - math.acos(ADJ_COS_OCTANT_OCTANT)) < _ADJ_ANGLE_TOL_RAD):
                neigh.append(j)
        adjacency.append(tuple(neigh))
    return SpineLayout(directions, tuple(kinds), tuple(adjacency))


_LAYOUT = _build_layout()


def spine_layout() -> SpineLayout:
    """Canonical 14-spine layout (shared immutable instance)."""
    return _LAYOUT


# ---------------------------------------------------------------------------
# quaternion helpers (w, x, y, z)

def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    n = math.sqrt(float(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]))
    if n == 0.0:
        return quat_identity()
    return q / n


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    ax, ay, az = axis
    n = math.sqrt(ax * ax + ay * ay + az * az)
    if n == 0.0:
        return quat_identity()
    half = 0.5 * angle
    s = math.sin(half) / n
    return np.array([math.cos(half), ax * s, ay * s, az * s])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix (body -> world) of a unit quaternion."""
    w, x, y, z = q
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    return np.array([
        [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
        [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
        [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
    ])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    return quat_to_matrix(q) @ np.asarray(v, dtype=np.float64)


@dataclass(frozen=True)
class Pose:
    """Rigid-body pose: world position (m) and body->world unit quaternion."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=quat_identity)

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        object.__setattr__(self, "orientation", np.asarray(self.orientation, dtype=np.float64))
        self.position.setflags(write=False)
        self.orientation.setflags(write=False)

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)


# ---------------------------------------------------------------------------
# operations

SPINE_EXTENSION_MAX_MM = 64.0


def tip_position(pose: Pose, layout: SpineLayout, spine_id: int, extension_mm: float) -> np.ndarray:
    """World position (m) of one spine tip.

    At extension 0 the tip is flush with the shell surface, so a fully
    retracted robot is a pure sphere.
    """
    if not 0.0 <= extension_mm <= SPINE_EXTENSION_MAX_MM:
        raise ValueError(
            f"extension_mm must be in [0, {SPINE_EXTENSION_MAX_MM}], got {extension_mm}")
    if not 0 <= spine_id < SPINE_COUNT:
        raise ValueError(f"spine_id must be in [0, {SPINE_COUNT}), got {spine_id}")
    radius_m = SHELL_DIAMETER_MM / 2000.0
    length = radius_m + extension_mm / 1000.0
    return pose.position + pose.rotation() @ (layout.directions[spine_id] * length)


def world_directions(pose: Pose, layout: SpineLayout) -> np.ndarray:
    """All 14 spine directions rotated into the world frame, shape (14, 3)."""
    return layout.directions @ pose.rotation().T


def ground_spine(pose: Pose, layout: SpineLayout) -> int:
    """Spine whose world direction points most nearly straight down.

    Ties break to the lowest spine id.
    """
    dz = world_directions(pose, layout)[:, 2]
    return int(np.argmin(dz))  # argmin returns first occurrence on ties


def support_candidates(pose: Pose, layout: SpineLayout) -> list[int]:
    """The 4 neighbors of the ground spine best oriented for a stance.

    Of the spines adjacent to the ground spine, picks the 4 with the most
    negative world-z direction and returns them sorted by azimuth.
    """
    gs = ground_spine(pose, layout)
    dirs = world_directions(pose, layout)
    neigh = list(layout.adjacency[gs])
    neigh.sort(key=lambda i: (dirs[i, 2], i))
    chosen = neigh[:4]
    chosen.sort(key=lambda i: math.atan2(dirs[i, 1], dirs[i, 0]))
    return chosen
