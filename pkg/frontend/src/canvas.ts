/**
 * Sketch drawing and mask painting on a fixed-size pixel grid.
 *
 * The painter owns a Float32Array (strokes) or paints zeros into the slot
 * mask; the canvas element is only a view, scaled up for visibility. Export
 * goes through the dependency-free PNG writer so the tests and the browser
 * produce identical bytes.
 */

import { paintMask, placeSketch } from "./state.js";
import type { TimelineState } from "./types.js";

export const SCALE = 8; // display pixels per model pixel

export interface PaintBinding {
  redraw(): void;
  dispose(): void;
}

function gridFromEvent(canvas: HTMLCanvasElement, ev: PointerEvent): [number, number] {
  const rect = canvas.getBoundingClientRect();
  const x = Math.floor(((ev.clientX - rect.left) / rect.width) * canvas.width / SCALE);
  const y = Math.floor(((ev.clientY - rect.top) / rect.height) * canvas.height / SCALE);
  return [x, y];
}

/** Bind freehand stroke drawing for a slot's sketch layer. */
export function bindSketchCanvas(canvas: HTMLCanvasElement, state: TimelineState,
                                 slot: number, brush = 1): PaintBinding {
  const { H, W } = state;
  canvas.width = W * SCALE;
  canvas.height = H * SCALE;
  const ctx = canvas.getContext("2d")!;
  let drawing = false;
  let layer = state.slots[slot].sketch ?? new Float32Array(H * W);

  function stamp(x: number, y: number) {
    for (let dy = -brush + 1; dy < brush; dy++) {
      for (let dx = -brush + 1; dx < brush; dx++) {
        const yy = y + dy;
        const xx = x + dx;
        if (yy >= 0 && yy < H && xx >= 0 && xx < W) layer[yy * W + xx] = 1.0;
      }
    }
  }

  function redraw() {
    const mask = state.slots[slot].mask;
    for (let y = 0; y < H; y++) {
      for (let x = 0; x < W; x++) {
        const v = layer[y * W + x];
        const hidden = mask && mask[y * W + x] === 0;
        ctx.fillStyle = hidden ? "#284" : v > 0 ? "#fff" : "#111";
        ctx.fillRect(x * SCALE, y * SCALE, SCALE, SCALE);
      }
    }
  }

  const down = (ev: PointerEvent) => {
    drawing = true;
    const [x, y] = gridFromEvent(canvas, ev);
    stamp(x, y);
    placeSketch(state, slot, layer);
    redraw();
  };
  const move = (ev: PointerEvent) => {
    if (!drawing) return;
    const [x, y] = gridFromEvent(canvas, ev);
    stamp(x, y);
    redraw();
  };
  const up = () => {
    drawing = false;
  };
  canvas.addEventListener("pointerdown", down);
  canvas.addEventListener("pointermove", move);
  window.addEventListener("pointerup", up);
  redraw();
  return {
    redraw,
    dispose() {
      canvas.removeEventListener("pointerdown", down);
      canvas.removeEventListener("pointermove", move);
      window.removeEventListener("pointerup", up);
    },
  };
}

/** Bind mask painting (marks regions as unspecified) over the same grid. */
export function bindMaskCanvas(canvas: HTMLCanvasElement, state: TimelineState,
                               slot: number, onPaint: () => void, brush = 2): PaintBinding {
  let painting = false;
  const move = (ev: PointerEvent) => {
    if (!painting) return;
    const [x, y] = gridFromEvent(canvas, ev);
    paintMask(state, slot, x - brush + 1, y - brush + 1, x + brush - 1, y + brush - 1);
    onPaint();
  };
  const down = (ev: PointerEvent) => {
    painting = true;
    move(ev);
  };
  const up = () => {
    painting = false;
  };
  canvas.addEventListener("pointerdown", down);
  canvas.addEventListener("pointermove", move);
  window.addEventListener("pointerup", up);
  return {
    redraw() {},
    dispose() {
      canvas.removeEventListener("pointerdown", down);
      canvas.removeEventListener("pointermove", move);
      window.removeEventListener("pointerup", up);
    },
  };
}
