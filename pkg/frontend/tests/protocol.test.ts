import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";
import {
  buildMove,
  buildSpine,
  CommandMessage,
  parseErrorMessage,
  parseStateMessage,
  validateCommand,
} from "../src/protocol.js";

const restRaw = readFileSync(new URL("./fixtures/rest.json", import.meta.url), "utf8");

describe("parseStateMessage", () => {
  it("accepts a real server frame", () => {
    const msg = parseStateMessage(restRaw);
    expect(msg).not.toBeNull();
    expect(msg!.spines).toHaveLength(14);
    expect(msg!.phase).toBe("REST");
    expect(msg!.stale).toBe(false);
  });

  it("rejects frames with the wrong spine count", () => {
    const obj = JSON.parse(restRaw);
    obj.spines.pop();
    expect(parseStateMessage(JSON.stringify(obj))).toBeNull();
  });

  it("rejects non-finite numbers", () => {
    const obj = JSON.parse(restRaw);
    obj.t_s = null;
    expect(parseStateMessage(JSON.stringify(obj))).toBeNull();
  });

  it("rejects non-state and invalid JSON", () => {
    expect(parseStateMessage("{\"type\":\"error\",\"reason\":\"x\"}")).toBeNull();
    expect(parseStateMessage("{{{")).toBeNull();
  });

  it("extracts error frames", () => {
    expect(parseErrorMessage("{\"type\":\"error\",\"reason\":\"bad\"}")).toBe("bad");
    expect(parseErrorMessage(restRaw)).toBeNull();
  });
});

describe("validateCommand", () => {
  it("accepts every panel command", () => {
    const commands: CommandMessage[] = [
      { type: "cmd", cmd: "stop" },
      { type: "cmd", cmd: "level" },
      { type: "cmd", cmd: "jump" },
      { type: "cmd", cmd: "retract_all" },
      { type: "cmd", cmd: "reset" },
      { type: "cmd", cmd: "reset", scenario: "stance" },
      { type: "cmd", cmd: "set_terrain", preset: "snow" },
      buildMove([1, 1], 1),
      buildSpine(5, 40),
    ];
    for (const cmd of commands) {
      expect(() => validateCommand(cmd)).not.toThrow();
    }
  });

  it("rejects out-of-range spine commands", () => {
    expect(() => validateCommand(buildSpine(14, 10))).toThrow(/id/);
    expect(() => validateCommand(buildSpine(0, 65))).toThrow(/target_mm/);
    expect(() => validateCommand(buildSpine(2.5, 10))).toThrow(/id/);
  });

  it("rejects bad move commands", () => {
    expect(() =>
      validateCommand({ type: "cmd", cmd: "move", dir: [0, 0], config: 1 }),
    ).toThrow(/non-zero/);
    expect(() =>
      validateCommand({ type: "cmd", cmd: "move", dir: [1, 0], config: 3 as 1 }),
    ).toThrow(/config/);
  });

  it("rejects unknown terrain presets", () => {
    expect(() =>
      validateCommand({ type: "cmd", cmd: "set_terrain", preset: "moon" }),
    ).toThrow(/preset/);
  });

  it("normalizes move directions", () => {
    const cmd = buildMove([3, 4], 2);
    expect(cmd).toMatchObject({ cmd: "move", config: 2 });
    if (cmd.cmd === "move") {
      expect(cmd.dir[0]).toBeCloseTo(0.6, 10);
      expect(cmd.dir[1]).toBeCloseTo(0.8, 10);
    }
  });
});
