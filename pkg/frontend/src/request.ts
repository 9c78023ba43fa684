/** Build a service request from the timeline (the client side of Eq-style inputs). */

import { grayPngB64 } from "./png.js";
import { encodeMaskRle } from "./rle.js";
import { sketchSlots } from "./state.js";
import type { GenerationRequest, TimelineState } from "./types.js";

export function buildRequest(state: TimelineState): GenerationRequest {
  if (!state.checkpoint) throw new Error("no checkpoint selected");
  const references = state.referenceSlots
    .filter((slot) => state.referenceImages.has(slot))
    .map((slot) => ({ index: slot, image_b64: state.referenceImages.get(slot)! }));
  const sketches = sketchSlots(state).map((slot) => {
    const s = state.slots[slot];
    const entry: { index: number; image_b64: string; mask_rle?: string } = {
      index: slot,
      image_b64: grayPngB64(s.sketch!, state.W, state.H),
    };
    if (s.mask) entry.mask_rle = encodeMaskRle(s.mask, state.W, state.H);
    return entry;
  });
  return {
    checkpoint: state.checkpoint,
    references,
    sketches,
    alpha: state.alpha,
    prompt: state.prompt,
    steps: state.steps,
    seed: state.seed,
  };
}
