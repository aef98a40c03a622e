// Command-panel logic: the 8-way direction pad mapping and the slider rate
// limiter that keeps spine commands at or under 10 messages per second.

import { buildMove, buildSpine, CommandMessage } from "./protocol.js";

const SQ = Math.SQRT1_2;

// screen-up is world +y, screen-right is world +x
export const PAD_DIRECTIONS: Record<string, [number, number]> = {
  N: [0, 1],
  NE: [SQ, SQ],
  E: [1, 0],
  SE: [SQ, -SQ],
  S: [0, -1],
  SW: [-SQ, -SQ],
  W: [-1, 0],
  NW: [-SQ, SQ],
};

export function padCommand(pad: string, config: 1 | 2): CommandMessage {
  const dir = PAD_DIRECTIONS[pad];
  if (!dir) throw new Error(`unknown pad direction '${pad}'`);
  return buildMove(dir, config);
}

/** Leading-edge rate limiter with a trailing flush, capped at one call per
 * minIntervalMs.  Used for slider drags. */
export class RateLimiter<T> {
  private lastSent = -Infinity;
  private pending: T | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly emit: (value: T) => void,
    private readonly minIntervalMs = 100,
    private readonly clock: () => number = () => Date.now(),
  ) {}

  push(value: T): void {
    const now = this.clock();
    const wait = this.lastSent + this.minIntervalMs - now;
    if (wait <= 0) {
      this.lastSent = now;
      this.emit(value);
      return;
    }
    this.pending = value;
    if (this.timer === null) {
      this.timer = setTimeout(() => this.flush(), wait);
    }
  }

  private flush(): void {
    this.timer = null;
    if (this.pending !== null) {
      this.lastSent = this.clock();
      const value = this.pending;
      this.pending = null;
      this.emit(value);
    }
  }
}

export function spineSliderLimiter(
  send: (cmd: CommandMessage) => void,
  minIntervalMs = 100,
  clock?: () => number,
): (id: number, targetMm: number) => void {
  const limiter = new RateLimiter<[number, number]>(
    ([id, mm]) => send(buildSpine(id, mm)), minIntervalMs, clock);
  return (id, targetMm) => limiter.push([id, targetMm]);
}
