/**
 * Client/server contract echo suite: for a matrix of timeline states, the
 * service must accept the built request exactly when local gating allows
 * submit. Gate-blocked states are force-built and must be rejected.
 */

import { beforeAll, describe, expect, it } from "vitest";

import { ApiError, ServiceClient } from "../src/api.js";
import { grayPngB64 } from "../src/png.js";
import { buildRequest } from "../src/request.js";
import { canSubmit, newTimeline, paintMask, placeSketch, setReference } from "../src/state.js";
import type { CheckpointInfo, GenerationRequest, TimelineState } from "../src/types.js";
import { BASE_URL } from "./setup.js";

const client = new ServiceClient(BASE_URL);
let cp: CheckpointInfo;

beforeAll(async () => {
  const cps = await client.checkpoints();
  cp = cps.find((c) => c.id === "base")!;
  expect(cp).toBeDefined();
});

function refB64(): string {
  const px = new Float32Array(cp.H * cp.W).map((_, i) => ((i * 37) % 255) / 255);
  return grayPngB64(px, cp.W, cp.H);
}

function drawnSketch(): Float32Array {
  const px = new Float32Array(cp.H * cp.W);
  for (let x = 1; x < cp.W - 1; x++) px[Math.floor(cp.H / 2) * cp.W + x] = 1;
  return px;
}

async function serviceAccepts(req: GenerationRequest): Promise<{ ok: boolean; body?: any }> {
  try {
    const id = await client.submit(req);
    await client.pollUntilDone(id);
    return { ok: true };
  } catch (err) {
    if (err instanceof ApiError) return { ok: false, body: err.body };
    throw err;
  }
}

function validState(): TimelineState {
  const state = newTimeline(cp);
  state.steps = 2;
  setReference(state, 0, refB64());
  placeSketch(state, cp.K - 1, drawnSketch());
  return state;
}

interface EchoCase {
  name: string;
  make: () => TimelineState;
  /** Build a request even when the gate blocks (to prove the server agrees). */
  force?: (state: TimelineState) => GenerationRequest;
  expectField?: string;
}

const CASES: EchoCase[] = [
  { name: "minimal valid request", make: validState },
  {
    name: "painted mask request",
    make: () => {
      const s = validState();
      paintMask(s, cp.K - 1, 0, 0, 5, 5);
      return s;
    },
  },
  {
    name: "two sketches at distinct slots",
    make: () => {
      const s = validState();
      placeSketch(s, 1, drawnSketch());
      return s;
    },
  },
  {
    name: "mask-only slot (all-zero sketch plus painted mask)",
    make: () => {
      const s = newTimeline(cp);
      s.steps = 2;
      setReference(s, 0, refB64());
      paintMask(s, 2, 0, 0, cp.W - 1, 3);
      return s;
    },
  },
  {
    name: "no sketches",
    make: () => {
      const s = newTimeline(cp);
      s.steps = 2;
      setReference(s, 0, refB64());
      return s;
    },
    force: (s) => ({ ...buildRequest({ ...s, slots: validState().slots }), sketches: [] }),
    expectField: "sketches",
  },
  {
    name: "no references",
    make: () => {
      const s = newTimeline(cp);
      s.steps = 2;
      placeSketch(s, 1, drawnSketch());
      return s;
    },
    force: (s) => ({ ...buildRequest({ ...s, checkpoint: cp.id }), references: [] }),
    expectField: "references",
  },
  {
    name: "negative alpha",
    make: () => {
      const s = validState();
      s.alpha = -1;
      return s;
    },
    force: (s) => buildRequest(s),
    expectField: "alpha",
  },
  {
    name: "zero steps",
    make: () => {
      const s = validState();
      s.steps = 0;
      return s;
    },
    force: (s) => buildRequest(s),
    expectField: "steps",
  },
];

describe("gating echoes service validation", () => {
  for (const c of CASES) {
    it(c.name, async () => {
      const state = c.make();
      const gate = canSubmit(state);
      const req = gate.ok ? buildRequest(state) : c.force!(state);
      const res = await serviceAccepts(req);
      expect(res.ok).toBe(gate.ok);
      if (!gate.ok && c.expectField) {
        expect(res.body.field).toBe(c.expectField);
      }
    });
  }
});
