/**
 * Timeline state and submit gating.
 *
 * The gating predicate mirrors the service's validation exactly: a submit is
 * allowed if and only if the request built from this state will be accepted.
 * Prompts are assembled from closed-vocabulary selectors, so free text can
 * never sneak an unknown word past the gate.
 */

import type { CheckpointInfo, SlotState, TimelineState } from "./types.js";

export const COLORS = ["red", "green", "blue", "yellow", "magenta", "cyan"] as const;
export const SHAPES = ["square", "circle", "triangle"] as const;
export const DIRECTIONS = ["right", "left", "up", "down"] as const;

interface UndoEntry {
  slot: number;
  sketch: Float32Array | null;
  mask: Uint8Array | null;
}

const undoStack: UndoEntry[] = [];

export function newTimeline(cp: CheckpointInfo): TimelineState {
  return {
    K: cp.K,
    H: cp.H,
    W: cp.W,
    checkpoint: cp.id,
    referenceSlots: [],
    referenceImages: new Map(),
    slots: Array.from({ length: cp.K }, () => ({ sketch: null, mask: null }) as SlotState),
    alpha: 1.0,
    prompt: "red square moves right",
    steps: 20,
    seed: 0,
  };
}

export function buildPrompt(color: string, shape: string, dir: string, thenDir?: string): string {
  const parts = [color, shape, "moves", dir];
  if (thenDir && thenDir !== dir) parts.push("then", thenDir);
  return parts.join(" ");
}

export function setReference(state: TimelineState, slot: number, imageB64: string): void {
  if (slot < 0 || slot >= state.K) throw new Error(`reference slot ${slot} outside [0, ${state.K})`);
  if (!state.referenceSlots.includes(slot)) {
    state.referenceSlots = [...state.referenceSlots, slot].sort((a, b) => a - b);
  }
  state.referenceImages.set(slot, imageB64);
}

export function placeSketch(state: TimelineState, slot: number, pixels: Float32Array): void {
  if (slot < 0 || slot >= state.K) throw new Error(`slot ${slot} outside [0, ${state.K})`);
  if (pixels.length !== state.H * state.W) {
    throw new Error(`sketch has ${pixels.length} pixels, canvas needs ${state.H * state.W}`);
  }
  const prev = state.slots[slot];
  undoStack.push({ slot, sketch: prev.sketch, mask: prev.mask });
  state.slots[slot] = { sketch: pixels, mask: prev.mask };
}

export function removeSketch(state: TimelineState, slot: number): void {
  const prev = state.slots[slot];
  undoStack.push({ slot, sketch: prev.sketch, mask: prev.mask });
  state.slots[slot] = { sketch: null, mask: null };
}

export function undoLast(state: TimelineState): boolean {
  const entry = undoStack.pop();
  if (!entry) return false;
  state.slots[entry.slot] = { sketch: entry.sketch, mask: entry.mask };
  return true;
}

/** Paint a rectangular brush stroke of "unspecified" (zeros) into a slot's mask. */
export function paintMask(state: TimelineState, slot: number,
                          x0: number, y0: number, x1: number, y1: number): void {
  const s = state.slots[slot];
  if (!s.sketch) {
    // mask without sketch is allowed: treat as all-zero sketch plus painted mask
    s.sketch = new Float32Array(state.H * state.W);
  }
  if (!s.mask) {
    s.mask = new Uint8Array(state.H * state.W).fill(1);
  }
  const xa = Math.max(0, Math.min(x0, x1));
  const xb = Math.min(state.W - 1, Math.max(x0, x1));
  const ya = Math.max(0, Math.min(y0, y1));
  const yb = Math.min(state.H - 1, Math.max(y0, y1));
  for (let y = ya; y <= yb; y++) {
    for (let x = xa; x <= xb; x++) s.mask[y * state.W + x] = 0;
  }
}

export function clearMask(state: TimelineState, slot: number): void {
  state.slots[slot].mask = null;
}

export function sketchSlots(state: TimelineState): number[] {
  return state.slots.map((s, i) => (s.sketch ? i : -1)).filter((i) => i >= 0);
}

export interface Gate {
  ok: boolean;
  reason: string;
}

export function canSubmit(state: TimelineState): Gate {
  if (!state.checkpoint) return { ok: false, reason: "select a checkpoint" };
  if (state.referenceSlots.length < 1 || state.referenceImages.size < 1) {
    return { ok: false, reason: "post-keyframing needs at least one colored reference frame" };
  }
  if (sketchSlots(state).length < 1) {
    return { ok: false, reason: "post-keyframing needs at least one keyframe sketch" };
  }
  if (state.alpha < 0) return { ok: false, reason: "alpha must be non-negative" };
  if (state.steps < 1) return { ok: false, reason: "steps must be at least 1" };
  return { ok: true, reason: "" };
}
