/** Studio glue: timeline, drawing surfaces, generation flow, run comparison. */

import { ApiError, ServiceClient } from "./api.js";
import { bindMaskCanvas, bindSketchCanvas } from "./canvas.js";
import { RunHistory } from "./compare.js";
import { buildRequest } from "./request.js";
import {
  COLORS,
  DIRECTIONS,
  SHAPES,
  buildPrompt,
  canSubmit,
  newTimeline,
  removeSketch,
  setReference,
  undoLast,
} from "./state.js";
import type { CheckpointInfo, TimelineState } from "./types.js";

const $ = <T extends HTMLElement>(id: string): T => document.getElementById(id) as T;

const client = new ServiceClient(
  new URLSearchParams(location.search).get("service") ?? "http://127.0.0.1:8765",
);
const history = new RunHistory();

let state: TimelineState | null = null;
let activeSlot = 0;
let inFlight = false;
let currentJob: string | null = null;
let bindings: { dispose(): void }[] = [];

function option(value: string): HTMLOptionElement {
  const el = document.createElement("option");
  el.value = value;
  el.textContent = value;
  return el;
}

async function boot() {
  const checkpoints = await client.checkpoints();
  const select = $<HTMLSelectElement>("checkpoint");
  checkpoints.forEach((cp) => select.append(option(cp.id)));
  select.onchange = () => initTimeline(checkpoints.find((c) => c.id === select.value)!);
  for (const [id, words] of [["color", COLORS], ["shape", SHAPES], ["dir", DIRECTIONS], ["then", ["", ...DIRECTIONS]]] as const) {
    const sel = $<HTMLSelectElement>(id);
    words.forEach((w) => sel.append(option(w)));
    sel.onchange = updatePrompt;
  }
  if (checkpoints.length) {
    select.value = checkpoints[checkpoints.length - 1].id;
    initTimeline(checkpoints[checkpoints.length - 1]);
  }
}

function updatePrompt() {
  if (!state) return;
  state.prompt = buildPrompt(
    $<HTMLSelectElement>("color").value || "red",
    $<HTMLSelectElement>("shape").value || "square",
    $<HTMLSelectElement>("dir").value || "right",
    $<HTMLSelectElement>("then").value || undefined,
  );
  $("prompt-view").textContent = state.prompt;
  refreshGate();
}

function initTimeline(cp: CheckpointInfo) {
  state = newTimeline(cp);
  activeSlot = cp.K - 1;
  const strip = $("timeline");
  strip.innerHTML = "";
  for (let k = 0; k < cp.K; k++) {
    const cell = document.createElement("button");
    cell.className = "slot";
    cell.textContent = String(k);
    cell.onclick = () => selectSlot(k);
    cell.id = `slot-${k}`;
    strip.append(cell);
  }
  $<HTMLInputElement>("alpha").oninput = (e) => {
    state!.alpha = Number((e.target as HTMLInputElement).value);
    $("alpha-view").textContent = state!.alpha.toFixed(2);
    refreshGate();
  };
  $<HTMLInputElement>("ref-file").onchange = onReferenceUpload;
  $("undo").onclick = () => {
    undoLast(state!);
    selectSlot(activeSlot);
  };
  $("clear-slot").onclick = () => {
    removeSketch(state!, activeSlot);
    selectSlot(activeSlot);
  };
  $("generate").onclick = runGeneration;
  $("cancel").onclick = () => currentJob && client.cancel(currentJob);
  selectSlot(activeSlot);
  updatePrompt();
}

function selectSlot(k: number) {
  if (!state) return;
  activeSlot = k;
  document.querySelectorAll(".slot").forEach((el, i) => {
    el.classList.toggle("active", i === k);
    el.classList.toggle("has-sketch", state!.slots[i].sketch !== null);
    el.classList.toggle("has-ref", state!.referenceSlots.includes(i));
  });
  bindings.forEach((b) => b.dispose());
  const sketchCanvas = $<HTMLCanvasElement>("sketch-canvas");
  const sketchBinding = bindSketchCanvas(sketchCanvas, state, k);
  const maskBinding = $<HTMLInputElement>("mask-mode").checked
    ? bindMaskCanvas(sketchCanvas, state, k, sketchBinding.redraw)
    : { dispose() {}, redraw() {} };
  bindings = [sketchBinding, maskBinding];
  refreshGate();
}

function onReferenceUpload() {
  const input = $<HTMLInputElement>("ref-file");
  const file = input.files?.[0];
  if (!file || !state) return;
  const reader = new FileReader();
  reader.onload = () => {
    const dataUrl = reader.result as string;
    setReference(state!, 0, dataUrl.split(",")[1]);
    $("ref-view").setAttribute("src", dataUrl);
    refreshGate();
  };
  reader.readAsDataURL(file);
}

function refreshGate() {
  if (!state) return;
  const gate = canSubmit(state);
  const btn = $<HTMLButtonElement>("generate");
  btn.disabled = !gate.ok || inFlight;
  $("gate-reason").textContent = gate.ok ? "" : gate.reason;
}

async function runGeneration() {
  if (!state || inFlight) return;
  const gate = canSubmit(state);
  if (!gate.ok) return;
  inFlight = true;
  refreshGate();
  $("status").textContent = "submitting";
  try {
    const request = buildRequest(state);
    const jobId = await client.submit(request);
    currentJob = jobId;
    const job = await client.pollUntilDone(jobId, (j) => {
      $("status").textContent = `${j.state} ${j.progress.step}/${j.progress.of}`;
      $<HTMLProgressElement>("progress").value = j.progress.of ? j.progress.step / j.progress.of : 0;
    });
    if (job.state === "done") {
      const urls = Array.from({ length: job.frames }, (_, k) => client.frameUrl(jobId, k));
      history.add(request, jobId, urls);
      renderRuns();
      $("status").textContent = "done";
    } else {
      $("status").textContent = `${job.state}${job.error ? ": " + job.error : ""}`;
    }
  } catch (err) {
    $("status").textContent = err instanceof ApiError ? err.message : `network error: ${err}`;
  } finally {
    inFlight = false;
    currentJob = null;
    refreshGate();
  }
}

function renderRuns() {
  const pair = history.latestPair();
  const single = history.runs[history.runs.length - 1];
  const scrub = $<HTMLInputElement>("scrub");
  const K = state?.K ?? 8;
  scrub.max = String(K - 1);
  const update = () => {
    const k = Number(scrub.value);
    if (pair) {
      const [a, b] = history.scrub(pair, k);
      $("frame-a").setAttribute("src", a);
      $("frame-b").setAttribute("src", b);
    } else if (single) {
      $("frame-b").setAttribute("src", single.frameUrls[Math.min(k, single.frameUrls.length - 1)]);
    }
  };
  scrub.oninput = update;
  update();
}

boot().catch((err) => {
  $("status").textContent = `service unreachable: ${err}`;
});
