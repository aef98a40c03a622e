import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";
import { convexHull, quatRotate, SPINE_DIRECTIONS, tipPosition } from "../src/geometry.js";
import { parseStateMessage, StateMessage } from "../src/protocol.js";
import { toViewModel } from "../src/viewmodel.js";

function fixture(name: string): StateMessage {
  const raw = readFileSync(new URL(`./fixtures/${name}.json`, import.meta.url), "utf8");
  const msg = parseStateMessage(raw);
  if (!msg) throw new Error(`fixture ${name} failed validation`);
  return msg;
}

describe("geometry", () => {
  it("has the canonical 14-direction layout", () => {
    expect(SPINE_DIRECTIONS).toHaveLength(14);
    expect(SPINE_DIRECTIONS[5]).toEqual([0, 0, -1]);
    const sum = SPINE_DIRECTIONS.reduce(
      (acc, d) => [acc[0] + d[0], acc[1] + d[1], acc[2] + d[2]], [0, 0, 0]);
    expect(Math.hypot(...sum)).toBeLessThan(1e-12);
  });

  it("rotates vectors like the identity and a known quarter turn", () => {
    expect(quatRotate([1, 0, 0, 0], [1, 2, 3])).toEqual([1, 2, 3]);
    const half = Math.SQRT1_2;
    const rotated = quatRotate([half, 0, 0, half], [1, 0, 0]); // 90 deg about z
    expect(rotated[0]).toBeCloseTo(0, 12);
    expect(rotated[1]).toBeCloseTo(1, 12);
  });

  it("places the retracted down tip on the shell", () => {
    const tip = tipPosition([0, 0, 0.065], [1, 0, 0, 0], 5, 0);
    expect(tip[2]).toBeCloseTo(0, 12);
    const tipFull = tipPosition([0, 0, 0.129], [1, 0, 0, 0], 5, 64);
    expect(tipFull[2]).toBeCloseTo(0, 12);
  });

  it("hull drops interior points and orders CCW", () => {
    const hull = convexHull([[0, 0], [1, 0], [1, 1], [0, 1], [0.4, 0.5]]);
    expect(hull).toHaveLength(4);
  });
});

describe("toViewModel", () => {
  it("rest state shows the shell with one contact marker", () => {
    const vm = toViewModel(fixture("rest"));
    expect(vm.phase).toBe("REST");
    expect(vm.contactCount).toBe(1);
    expect(vm.top.contactMarkers).toHaveLength(1);
    expect(vm.side.contactMarkers[0][1]).toBeCloseTo(0, 2); // on the ground line
    for (const ray of vm.top.rays) {
      const len = Math.hypot(ray.to[0] - ray.from[0], ray.to[1] - ray.from[1]);
      expect(len).toBeLessThan(1e-9); // retracted: zero-length rays
    }
  });

  it("stance state shows 4 contact markers and the labeled margin", () => {
    const vm = toViewModel(fixture("stance"));
    expect(vm.phase).toBe("STANCE");
    expect(vm.contactCount).toBe(4);
    expect(vm.top.contactMarkers).toHaveLength(4);
    expect(vm.marginLabel).toBe("74.5 mm");
    expect(vm.top.polygon).toHaveLength(4);
    expect(vm.top.com![0]).toBeCloseTo(0, 2);
    // polygon spans the expected stance square (~149 mm across)
    const xs = vm.top.polygon!.map((p) => p[0]);
    expect(Math.max(...xs) - Math.min(...xs)).toBeCloseTo(0.149, 2);
    // four spine bars at full extension and in contact
    const extended = vm.spines.filter((s) => s.extensionMm > 63);
    expect(extended).toHaveLength(4);
    expect(extended.every((s) => s.contact)).toBe(true);
  });

  it("reports attitude in degrees and a stable height label", () => {
    const vm = toViewModel(fixture("stance"));
    expect(Math.abs(vm.eulerDeg.roll)).toBeLessThan(1);
    expect(Math.abs(vm.eulerDeg.pitch)).toBeLessThan(1);
    expect(vm.heightLabel).toMatch(/^74\.\d mm$/);
  });

  it("carries the stale flag through", () => {
    const msg = { ...fixture("rest"), stale: true };
    expect(toViewModel(msg).stale).toBe(true);
  });
});
