// Body-frame spine layout and the little vector math the console needs to
// reconstruct tip positions from a state message.  Mirrors the simulator's
// canonical ordering: 6 axis spines then 8 octant spines in lexicographic
// sign order.

export type Vec3 = [number, number, number];
export type Quat = [number, number, number, number]; // w, x, y, z

export const SHELL_RADIUS_M = 0.065;

const INV_SQRT3 = 1 / Math.sqrt(3);

export const SPINE_DIRECTIONS: Vec3[] = (() => {
  const dirs: Vec3[] = [
    [1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1],
  ];
  for (const sx of [-1, 1]) {
    for (const sy of [-1, 1]) {
      for (const sz of [-1, 1]) {
        dirs.push([sx * INV_SQRT3, sy * INV_SQRT3, sz * INV_SQRT3]);
      }
    }
  }
  return dirs;
})();

export function quatRotate(q: Quat, v: Vec3): Vec3 {
  const [w, x, y, z] = q;
  const [vx, vy, vz] = v;
  // R(q) * v, expanded
  return [
    (1 - 2 * (y * y + z * z)) * vx + 2 * (x * y - w * z) * vy + 2 * (x * z + w * y) * vz,
    2 * (x * y + w * z) * vx + (1 - 2 * (x * x + z * z)) * vy + 2 * (y * z - w * x) * vz,
    2 * (x * z - w * y) * vx + 2 * (y * z + w * x) * vy + (1 - 2 * (x * x + y * y)) * vz,
  ];
}

export function tipPosition(position: Vec3, quaternion: Quat, spineId: number,
                            extensionMm: number): Vec3 {
  const len = SHELL_RADIUS_M + extensionMm / 1000;
  const d = SPINE_DIRECTIONS[spineId];
  const r = quatRotate(quaternion, [d[0] * len, d[1] * len, d[2] * len]);
  return [position[0] + r[0], position[1] + r[1], position[2] + r[2]];
}

/** Monotone-chain convex hull, CCW; degenerate inputs return as-is. */
export function convexHull(points: [number, number][]): [number, number][] {
  const pts = [...new Map(points.map((p) => [`${p[0]},${p[1]}`, p])).values()]
    .sort((a, b) => (a[0] - b[0]) || (a[1] - b[1]));
  if (pts.length <= 2) return pts;
  const cross = (o: number[], a: number[], b: number[]) =>
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
  const lower: [number, number][] = [];
  for (const p of pts) {
    while (lower.length >= 2 && cross(lower[lower.length - 2], lower[lower.length - 1], p) <= 0) {
      lower.pop();
    }
    lower.push(p);
  }
  const upper: [number, number][] = [];
  for (const p of [...pts].reverse()) {
    while (upper.length >= 2 && cross(upper[upper.length - 2], upper[upper.length - 1], p) <= 0) {
      upper.pop();
    }
    upper.push(p);
  }
  return [...lower.slice(0, -1), ...upper.slice(0, -1)];
}
