// Console wiring: socket session, canvas rendering loop, command panel.

import { padCommand, spineSliderLimiter } from "./controls.js";
import { ConnectionStatus, Session } from "./net.js";
import { CommandMessage, SPINE_COUNT, StateMessage, TERRAIN_PRESETS } from "./protocol.js";
import { toViewModel, ViewModel, ViewProjection } from "./viewmodel.js";

const params = new URLSearchParams(window.location.search);
const serverUrl = params.get("server") ?? "ws://localhost:8080";

let latest: StateMessage | null = null;
let status: ConnectionStatus = "connecting";
let gaitConfig: 1 | 2 = 1;
const commandHistory: string[] = [];

const session = new Session(serverUrl, {
  onState(msg) {
    latest = msg;
  },
  onStatus(s) {
    status = s;
    updateBanner();
    setControlsEnabled(s === "connected");
  },
  onServerError(reason) {
    pushHistory(`server error: ${reason}`);
  },
});

function sendCommand(cmd: CommandMessage): void {
  if (session.send(cmd)) {
    pushHistory(JSON.stringify(cmd));
  }
}

function pushHistory(entry: string): void {
  commandHistory.unshift(entry);
  if (commandHistory.length > 50) commandHistory.pop();
  const el = document.getElementById("history")!;
  el.textContent = commandHistory.slice(0, 8).join("\n");
}

// ---------------------------------------------------------------------------
// canvas rendering

const VIEW_HALF_WIDTH_M = 0.45;

function drawView(ctx: CanvasRenderingContext2D, view: ViewProjection,
                  w: number, h: number, label: string, isSide: boolean): void {
  ctx.save();
  ctx.clearRect(0, 0, w, h);
  const scale = w / (2 * VIEW_HALF_WIDTH_M);
  const toPx = (p: [number, number]): [number, number] =>
    [w / 2 + p[0] * scale, isSide ? h * 0.78 - p[1] * scale : h / 2 - p[1] * scale];

  if (isSide && view.groundY !== undefined) {
    const [, gy] = toPx([0, view.groundY]);
    ctx.strokeStyle = "#6b5d45";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.moveTo(0, gy);
    ctx.lineTo(w, gy);
    ctx.stroke();
  }

  if (view.polygon && view.polygon.length >= 2) {
    ctx.beginPath();
    const pts = view.polygon.map(toPx);
    ctx.moveTo(pts[0][0], pts[0][1]);
    for (const p of pts.slice(1)) ctx.lineTo(p[0], p[1]);
    ctx.closePath();
    ctx.fillStyle = "rgba(80, 160, 220, 0.15)";
    ctx.fill();
    ctx.strokeStyle = "#4a90c2";
    ctx.lineWidth = 1.5;
    ctx.stroke();
  }

  // shell
  const c = toPx(view.shellCenter);
  ctx.beginPath();
  ctx.arc(c[0], c[1], view.shellRadius * scale, 0, 2 * Math.PI);
  ctx.strokeStyle = "#888";
  ctx.fillStyle = "rgba(200, 200, 210, 0.25)";
  ctx.lineWidth = 1.5;
  ctx.fill();
  ctx.stroke();

  for (const ray of view.rays) {
    const a = toPx(ray.from);
    const b = toPx(ray.to);
    ctx.beginPath();
    ctx.moveTo(a[0], a[1]);
    ctx.lineTo(b[0], b[1]);
    ctx.strokeStyle = ray.contact ? "#d9534f" : "#555";
    ctx.lineWidth = ray.contact ? 3 : 2;
    ctx.stroke();
  }

  for (const m of view.contactMarkers) {
    const p = toPx(m);
    ctx.beginPath();
    ctx.arc(p[0], p[1], 5, 0, 2 * Math.PI);
    ctx.fillStyle = "#d9534f";
    ctx.fill();
  }

  if (view.com) {
    const p = toPx(view.com);
    ctx.beginPath();
    ctx.moveTo(p[0] - 6, p[1]);
    ctx.lineTo(p[0] + 6, p[1]);
    ctx.moveTo(p[0], p[1] - 6);
    ctx.lineTo(p[0], p[1] + 6);
    ctx.strokeStyle = "#222";
    ctx.lineWidth = 1.5;
    ctx.stroke();
  }

  if (view.velocity) {
    const [vx, vy] = view.velocity;
    if (Math.hypot(vx, vy) > 0.01) {
      const from = toPx(view.shellCenter);
      const to = toPx([view.shellCenter[0] + vx * 0.4, view.shellCenter[1] + vy * 0.4]);
      ctx.beginPath();
      ctx.moveTo(from[0], from[1]);
      ctx.lineTo(to[0], to[1]);
      ctx.strokeStyle = "#2a9d4e";
      ctx.lineWidth = 2;
      ctx.stroke();
    }
  }

  ctx.fillStyle = "#444";
  ctx.font = "12px sans-serif";
  ctx.fillText(label, 8, 16);
  ctx.restore();
}

function renderFrame(): void {
  if (latest) {
    const vm = toViewModel(latest);
    const topCanvas = document.getElementById("top-view") as HTMLCanvasElement;
    const sideCanvas = document.getElementById("side-view") as HTMLCanvasElement;
    drawView(topCanvas.getContext("2d")!, vm.top, topCanvas.width, topCanvas.height,
             "top (x-y)", false);
    drawView(sideCanvas.getContext("2d")!, vm.side, sideCanvas.width, sideCanvas.height,
             "side (x-z)", true);
    updateReadouts(vm);
    updateBars(vm);
  }
  requestAnimationFrame(renderFrame);
}

function updateReadouts(vm: ViewModel): void {
  const set = (id: string, text: string) => {
    document.getElementById(id)!.textContent = text;
  };
  set("phase-badge", vm.phase + (vm.stale ? " (stale)" : ""));
  document.getElementById("phase-badge")!.className = `badge phase-${vm.phase.toLowerCase()}`;
  set("euler", `roll ${vm.eulerDeg.roll.toFixed(1)}°  pitch ${vm.eulerDeg.pitch.toFixed(1)}°  yaw ${vm.eulerDeg.yaw.toFixed(1)}°`);
  set("margin", `margin ${vm.marginLabel}`);
  set("speed", `speed ${vm.speedLabel}`);
  set("height", `height ${vm.heightLabel}`);
  set("terrain-label", vm.environment);
}

function updateBars(vm: ViewModel): void {
  for (const spine of vm.spines) {
    const fill = document.getElementById(`bar-${spine.id}`)!;
    fill.style.width = `${(spine.extensionMm / 64) * 100}%`;
    fill.className = spine.contact ? "bar-fill contact" : "bar-fill";
    const target = document.getElementById(`tick-${spine.id}`)!;
    target.style.left = `${(spine.targetMm / 64) * 100}%`;
  }
}

function updateBanner(): void {
  const banner = document.getElementById("banner")!;
  banner.textContent = status === "connected"
    ? `connected to ${serverUrl}`
    : status === "connecting" ? `connecting to ${serverUrl}…`
    : `disconnected from ${serverUrl} — retrying`;
  banner.className = `banner ${status}`;
}

function setControlsEnabled(enabled: boolean): void {
  document.querySelectorAll<HTMLButtonElement | HTMLInputElement | HTMLSelectElement>(
    "button, input, select").forEach((el) => {
    el.disabled = !enabled;
  });
}

// ---------------------------------------------------------------------------
// panel construction

function buildPanel(): void {
  const pad = document.getElementById("pad")!;
  const order = ["NW", "N", "NE", "W", "", "E", "SW", "S", "SE"];
  for (const name of order) {
    const btn = document.createElement("button");
    btn.textContent = name || "·";
    if (!name) {
      btn.disabled = true;
      btn.className = "pad-center";
    } else {
      btn.addEventListener("click", () => sendCommand(padCommand(name, gaitConfig)));
    }
    pad.appendChild(btn);
  }

  const configSel = document.getElementById("config") as HTMLSelectElement;
  configSel.addEventListener("change", () => {
    gaitConfig = configSel.value === "2" ? 2 : 1;
  });

  for (const [id, cmd] of [
    ["btn-stop", { type: "cmd", cmd: "stop" }],
    ["btn-level", { type: "cmd", cmd: "level" }],
    ["btn-jump", { type: "cmd", cmd: "jump" }],
    ["btn-retract", { type: "cmd", cmd: "retract_all" }],
    ["btn-reset", { type: "cmd", cmd: "reset" }],
  ] as [string, CommandMessage][]) {
    document.getElementById(id)!.addEventListener("click", () => sendCommand(cmd));
  }

  const terrainSel = document.getElementById("terrain") as HTMLSelectElement;
  for (const preset of TERRAIN_PRESETS) {
    const opt = document.createElement("option");
    opt.value = preset;
    opt.textContent = preset;
    terrainSel.appendChild(opt);
  }
  terrainSel.value = "lab-floor";
  terrainSel.addEventListener("change", () => {
    sendCommand({ type: "cmd", cmd: "set_terrain", preset: terrainSel.value });
  });

  const sliderSend = spineSliderLimiter(sendCommand);
  const bars = document.getElementById("bars")!;
  for (let i = 0; i < SPINE_COUNT; i++) {
    const row = document.createElement("div");
    row.className = "bar-row";
    row.innerHTML = `
      <span class="bar-id">${String(i).padStart(2, "0")}</span>
      <div class="bar-track"><div class="bar-fill" id="bar-${i}"></div>
        <div class="bar-tick" id="tick-${i}"></div></div>
      <input type="range" min="0" max="64" value="0" step="1" id="slider-${i}">`;
    bars.appendChild(row);
    const slider = row.querySelector("input")!;
    slider.addEventListener("input", () => sliderSend(i, Number(slider.value)));
  }
}

buildPanel();
setControlsEnabled(false);
session.connect();
requestAnimationFrame(renderFrame);
