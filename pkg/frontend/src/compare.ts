/** Run history and the synchronized side-by-side scrubber. */

import type { GenerationRequest, RunRecord } from "./types.js";

export class RunHistory {
  runs: RunRecord[] = [];

  add(request: GenerationRequest, jobId: string, frameUrls: string[]): RunRecord {
    const record: RunRecord = {
      request: JSON.parse(JSON.stringify(request)),
      jobId,
      frameUrls: [...frameUrls],
      createdAt: Date.now(),
    };
    Object.freeze(record.frameUrls);
    this.runs.push(record);
    return record;
  }

  latestPair(): [RunRecord, RunRecord] | null {
    if (this.runs.length < 2) return null;
    return [this.runs[this.runs.length - 2], this.runs[this.runs.length - 1]];
  }

  /** Frame URLs of both runs at the same temporal index. */
  scrub(pair: [RunRecord, RunRecord], frame: number): [string, string] {
    const clamp = (r: RunRecord) => r.frameUrls[Math.max(0, Math.min(frame, r.frameUrls.length - 1))];
    return [clamp(pair[0]), clamp(pair[1])];
  }
}

/** Fields on which two requests differ (top-level only; arrays compared by JSON). */
export function requestDiff(a: GenerationRequest, b: GenerationRequest): string[] {
  const keys = new Set([...Object.keys(a), ...Object.keys(b)]) as Set<keyof GenerationRequest>;
  const out: string[] = [];
  for (const k of keys) {
    if (JSON.stringify(a[k]) !== JSON.stringify(b[k])) out.push(k);
  }
  return out.sort();
}
