import { ConflictError, ReviewApi } from "./api.js";
import type { KeyValueStore, PendingVerdict, ReviewTask, Verdict } from "./types.js";

const QUEUE_KEY = "review-ui.pending-verdicts";

export type SessionState = "loading" | "reviewing" | "offline" | "complete";

export type SessionSnapshot = {
  state: SessionState;
  card: ReviewTask | null;
  decidedCount: number;
  queuedCount: number;
};

/**
 * Drives one reviewer's pass through the round: fetch a leased task, take a
 * verdict, advance. Verdicts that cannot reach the server are queued in the
 * provided store (localStorage in the browser) and drained on the next
 * opportunity, including after a page reload, so no verdict is ever lost.
 */
export class ReviewSession {
  private card: ReviewTask | null = null;
  private state: SessionState = "loading";
  private decidedCount = 0;
  private submitting = false;
  private readonly decidedTaskIds = new Set<string>();

  constructor(
    private readonly api: ReviewApi,
    private readonly store: KeyValueStore,
    private readonly reviewer: string = "anonymous",
  ) {}

  snapshot(): SessionSnapshot {
    return {
      state: this.state,
      card: this.card,
      decidedCount: this.decidedCount,
      queuedCount: this.queue().length,
    };
  }

  /** Drain any verdicts left over from a previous page load, then fetch. */
  async start(): Promise<SessionSnapshot> {
    const drained = await this.flushQueue();
    if (!drained) {
      this.state = "offline";
      return this.snapshot();
    }
    return this.advance();
  }

  /** Fetch and display the next pending task. */
  async advance(): Promise<SessionSnapshot> {
    try {
      this.card = await this.api.nextTask();
      this.state = this.card === null ? "complete" : "reviewing";
    } catch {
      this.card = null;
      this.state = "offline";
    }
    return this.snapshot();
  }

  /**
   * Record the reviewer's verdict for the current card. Rapid repeat calls
   * for the same task are ignored; a 409 means another session decided it
   * first and we simply move on; a network failure queues the verdict for
   * retry without advancing.
   */
  async decide(verdict: Verdict): Promise<SessionSnapshot> {
    const card = this.card;
    if (card === null || this.submitting || this.decidedTaskIds.has(card.task_id)) {
      return this.snapshot();
    }
    this.submitting = true;
    this.enqueue({ taskId: card.task_id, verdict, reviewer: this.reviewer });
    try {
      const ok = await this.flushQueue();
      if (!ok) {
        this.state = "offline";
        return this.snapshot();
      }
      this.decidedTaskIds.add(card.task_id);
      this.decidedCount += 1;
      return await this.advance();
    } finally {
      this.submitting = false;
    }
  }

  /** Retry after connectivity loss: drain the queue, then resume. */
  async retry(): Promise<SessionSnapshot> {
    const ok = await this.flushQueue();
    if (!ok) {
      this.state = "offline";
      return this.snapshot();
    }
    if (this.card !== null && this.queue().length === 0) {
      // The stalled verdict went through; count it and move on.
      if (!this.decidedTaskIds.has(this.card.task_id)) {
        this.decidedTaskIds.add(this.card.task_id);
        this.decidedCount += 1;
      }
    }
    return this.advance();
  }

  /** Sends every queued verdict; returns false when the server is unreachable. */
  private async flushQueue(): Promise<boolean> {
    let queue = this.queue();
    while (queue.length > 0) {
      const head = queue[0]!;
      try {
        await this.api.submitVerdict(head.taskId, head.verdict, head.reviewer);
      } catch (err) {
        if (!(err instanceof ConflictError)) {
          return false; // network trouble: keep the queue for later
        }
        // 409: someone already decided this task; drop it without duplicating
      }
      queue = queue.slice(1);
      this.persist(queue);
    }
    return true;
  }

  private queue(): PendingVerdict[] {
    const raw = this.store.getItem(QUEUE_KEY);
    if (raw === null) return [];
    try {
      return JSON.parse(raw) as PendingVerdict[];
    } catch {
      return [];
    }
  }

  private enqueue(verdict: PendingVerdict): void {
    const queue = this.queue();
    if (!queue.some((q) => q.taskId === verdict.taskId)) {
      queue.push(verdict);
      this.persist(queue);
    }
  }

  private persist(queue: PendingVerdict[]): void {
    if (queue.length === 0) {
      this.store.removeItem(QUEUE_KEY);
    } else {
      this.store.setItem(QUEUE_KEY, JSON.stringify(queue));
    }
  }
}
