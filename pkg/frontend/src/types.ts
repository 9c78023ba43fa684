/** Service DTOs and client-side timeline state. */

export interface ReferenceIn {
  index: number;
  image_b64: string;
}

export interface SketchIn {
  index: number;
  image_b64: string;
  mask_rle?: string;
}

export interface GenerationRequest {
  checkpoint: string;
  references: ReferenceIn[];
  sketches: SketchIn[];
  alpha: number;
  prompt: string;
  steps: number;
  seed: number;
}

export interface JobProgress {
  step: number;
  of: number;
}

export interface JobInfo {
  id: string;
  state: "queued" | "running" | "done" | "failed" | "cancelled";
  progress: JobProgress;
  error: string | null;
  frames: number;
}

export interface CheckpointInfo {
  id: string;
  K: number;
  H: number;
  W: number;
  adapted: boolean;
}

export interface ApiErrorBody {
  code: string;
  field: string;
  message: string;
}

/** One timeline slot: optional sketch layer plus optional painted mask layer. */
export interface SlotState {
  /** Single-channel strokes, H*W values in [0,1]; null while empty. */
  sketch: Float32Array | null;
  /** Binary mask, 1 = sketch provided here; null means all-ones. */
  mask: Uint8Array | null;
}

export interface TimelineState {
  K: number;
  H: number;
  W: number;
  checkpoint: string | null;
  referenceSlots: number[];
  /** Base64 PNG per reference slot, keyed by slot index. */
  referenceImages: Map<number, string>;
  slots: SlotState[];
  alpha: number;
  prompt: string;
  steps: number;
  seed: number;
}

export interface RunRecord {
  request: GenerationRequest;
  jobId: string;
  frameUrls: string[];
  createdAt: number;
}
