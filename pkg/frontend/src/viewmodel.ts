// Pure translation from a validated StateMessage to everything the canvas
// and panels draw: two orthographic projections (top = world xy,
// side = world xz), contact markers, the support polygon with the CoM
// projection, per-spine bars and the numeric readouts.

import { SHELL_RADIUS_M, SPINE_DIRECTIONS, convexHull, quatRotate, tipPosition } from "./geometry.js";
import type { StateMessage } from "./protocol.js";

export interface Ray {
  from: [number, number];
  to: [number, number];
  contact: boolean;
}

export interface ViewProjection {
  shellCenter: [number, number];
  shellRadius: number;
  rays: Ray[];
  contactMarkers: [number, number][];
  groundY?: number;                 // side view only: ground line height
  polygon?: [number, number][];     // top view only
  com?: [number, number];           // top view only
  velocity?: [number, number];
}

export interface SpineBar {
  id: number;
  extensionMm: number;
  targetMm: number;
  contact: boolean;
}

export interface ViewModel {
  top: ViewProjection;
  side: ViewProjection;
  phase: string;
  stale: boolean;
  environment: string;
  eulerDeg: { roll: number; pitch: number; yaw: number };
  marginLabel: string;
  speedLabel: string;
  heightLabel: string;
  spines: SpineBar[];
  contactCount: number;
}

const SHELL_CONTACT_TOL_M = 0.002;

function project(v: [number, number, number], plane: "top" | "side"): [number, number] {
  return plane === "top" ? [v[0], v[1]] : [v[0], v[2]];
}

export function toViewModel(msg: StateMessage): ViewModel {
  const pos = msg.pose.position;
  const q = msg.pose.quaternion;

  const tips: [number, number, number][] = [];
  const bases: [number, number, number][] = [];
  for (let i = 0; i < SPINE_DIRECTIONS.length; i++) {
    tips.push(tipPosition(pos, q, i, msg.spines[i].extension_mm));
    const d = SPINE_DIRECTIONS[i];
    const b = quatRotate(q, [d[0] * SHELL_RADIUS_M, d[1] * SHELL_RADIUS_M, d[2] * SHELL_RADIUS_M]);
    bases.push([pos[0] + b[0], pos[1] + b[1], pos[2] + b[2]]);
  }

  const contactTips = tips.filter((_, i) => msg.spines[i].contact);
  const shellTouching = contactTips.length === 0 &&
    pos[2] - SHELL_RADIUS_M < SHELL_CONTACT_TOL_M;
  const contactPoints: [number, number, number][] = shellTouching
    ? [[pos[0], pos[1], pos[2] - SHELL_RADIUS_M]]
    : contactTips;

  const makeView = (plane: "top" | "side"): ViewProjection => ({
    shellCenter: project(pos, plane),
    shellRadius: SHELL_RADIUS_M,
    rays: SPINE_DIRECTIONS.map((_, i) => ({
      from: project(bases[i], plane),
      to: project(tips[i], plane),
      contact: msg.spines[i].contact,
    })),
    contactMarkers: contactPoints.map((p) => project(p, plane)),
  });

  const top = makeView("top");
  const hullPts = contactPoints.map((p) => [p[0], p[1]] as [number, number]);
  top.polygon = hullPts.length >= 3 ? convexHull(hullPts) : hullPts;
  top.com = [pos[0], pos[1]];
  top.velocity = [msg.velocity[0], msg.velocity[1]];

  const side = makeView("side");
  side.groundY = 0;
  side.velocity = [msg.velocity[0], msg.velocity[2]];

  const deg = (r: number) => (r * 180) / Math.PI;
  const speed = Math.hypot(msg.velocity[0], msg.velocity[1], msg.velocity[2]);
  return {
    top,
    side,
    phase: msg.phase,
    stale: msg.stale,
    environment: msg.environment,
    eulerDeg: { roll: deg(msg.euler.roll), pitch: deg(msg.euler.pitch), yaw: deg(msg.euler.yaw) },
    marginLabel: `${(msg.stability_margin_m * 1000).toFixed(1)} mm`,
    speedLabel: `${speed.toFixed(3)} m/s`,
    heightLabel: `${(pos[2] * 1000).toFixed(1)} mm`,
    spines: msg.spines.map((s, id) => ({
      id,
      extensionMm: s.extension_mm,
      targetMm: s.target_mm,
      contact: s.contact,
    })),
    contactCount: contactPoints.length,
  };
}
