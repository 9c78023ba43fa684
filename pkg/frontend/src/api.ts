/** Thin client for the generation service, with resilient polling. */

import type { ApiErrorBody, CheckpointInfo, GenerationRequest, JobInfo } from "./types.js";

export class ApiError extends Error {
  body: ApiErrorBody;
  status: number;

  constructor(status: number, body: ApiErrorBody) {
    super(`${body.code} (${body.field}): ${body.message}`);
    this.status = status;
    this.body = body;
  }
}

export class ServiceClient {
  constructor(public baseUrl: string) {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await fetch(this.baseUrl + path, init);
    if (!res.ok) {
      const body = (await res.json().catch(() => null)) as ApiErrorBody | null;
      throw new ApiError(res.status, body ?? { code: "http_error", field: "", message: `${res.status}` });
    }
    return (await res.json()) as T;
  }

  health(): Promise<{ status: string }> {
    return this.json("/health");
  }

  checkpoints(): Promise<CheckpointInfo[]> {
    return this.json("/checkpoints");
  }

  async submit(req: GenerationRequest): Promise<string> {
    const out = await this.json<{ id: string }>("/jobs", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(req),
    });
    return out.id;
  }

  poll(jobId: string): Promise<JobInfo> {
    return this.json(`/jobs/${jobId}`);
  }

  cancel(jobId: string): Promise<JobInfo> {
    return this.json(`/jobs/${jobId}/cancel`, { method: "POST" });
  }

  frameUrl(jobId: string, k: number): string {
    return `${this.baseUrl}/jobs/${jobId}/frames/${k}`;
  }

  /**
   * Poll until terminal state. Transient network failures are retried with
   * the same GET (idempotent), so no state is lost on a flaky connection.
   */
  async pollUntilDone(
    jobId: string,
    onProgress?: (job: JobInfo) => void,
    intervalMs = 150,
    maxNetworkRetries = 5,
  ): Promise<JobInfo> {
    let retries = 0;
    for (;;) {
      let job: JobInfo;
      try {
        job = await this.poll(jobId);
        retries = 0;
      } catch (err) {
        if (err instanceof ApiError || ++retries > maxNetworkRetries) throw err;
        await sleep(intervalMs * retries);
        continue;
      }
      onProgress?.(job);
      if (job.state === "done" || job.state === "failed" || job.state === "cancelled") {
        return job;
      }
      await sleep(intervalMs);
    }
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
