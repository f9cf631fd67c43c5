import type { ClassStats, ReviewTask, RoundProgress, Verdict } from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ConflictError extends Error {
  constructor(taskId: string) {
    super(`task ${taskId} already decided`);
    this.name = "ConflictError";
  }
}

/** Thin typed client over the orchestrator review API. */
export class ReviewApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  /** Next leased pending task, or null when none is available. */
  async nextTask(): Promise<ReviewTask | null> {
    const res = await this.fetchFn(`${this.baseUrl}/api/review/next`);
    if (res.status === 204) return null;
    if (!res.ok) throw new Error(`next task failed: HTTP ${res.status}`);
    return (await res.json()) as ReviewTask;
  }

  /** Posts a verdict. Resolves on 200, throws ConflictError on 409. */
  async submitVerdict(taskId: string, verdict: Verdict, reviewer: string): Promise<void> {
    const res = await this.fetchFn(`${this.baseUrl}/api/review/${encodeURIComponent(taskId)}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ verdict, reviewer }),
    });
    if (res.status === 409) throw new ConflictError(taskId);
    if (!res.ok) throw new Error(`verdict failed: HTTP ${res.status}`);
  }

  async classStats(classId: string): Promise<ClassStats> {
    const res = await this.fetchFn(
      `${this.baseUrl}/api/classes/${encodeURIComponent(classId)}/review-stats`,
    );
    if (!res.ok) throw new Error(`stats failed: HTTP ${res.status}`);
    return (await res.json()) as ClassStats;
  }

  async progress(): Promise<RoundProgress> {
    const res = await this.fetchFn(`${this.baseUrl}/api/review/progress`);
    if (!res.ok) throw new Error(`progress failed: HTTP ${res.status}`);
    return (await res.json()) as RoundProgress;
  }
}
