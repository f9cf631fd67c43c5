import type { KeyValueStore, ReviewTask, Verdict } from "../src/types.js";
import type { FetchLike } from "../src/api.js";

export function memoryStore(): KeyValueStore {
  const map = new Map<string, string>();
  return {
    getItem: (key) => map.get(key) ?? null,
    setItem: (key, value) => void map.set(key, value),
    removeItem: (key) => void map.delete(key),
  };
}

type ServerTask = { task: ReviewTask; verdict: Verdict | null };

/** In-memory stand-in for the review service, matching its status codes. */
export class FakeServer {
  tasks: ServerTask[];
  offline = false;
  submissions = 0;

  constructor(taskIds: string[], classId = "dog") {
    this.tasks = taskIds.map((id) => ({
      verdict: null,
      task: {
        task_id: id,
        class_id: classId,
        clip_id: `${id}-clip`,
        media_url: `/media/${id}.mp4`,
      },
    }));
  }

  fetch: FetchLike = async (input, init) => {
    if (this.offline) throw new TypeError("fetch failed");
    const url = String(input);
    if (url.endsWith("/api/review/next")) {
      const pending = this.tasks.find((t) => t.verdict === null);
      if (pending === undefined) return new Response(null, { status: 204 });
      return Response.json(pending.task);
    }
    const verdictMatch = url.match(/\/api\/review\/([^/]+)$/);
    if (verdictMatch !== null && init?.method === "POST") {
      this.submissions += 1;
      const entry = this.tasks.find((t) => t.task.task_id === decodeURIComponent(verdictMatch[1]!));
      if (entry === undefined) return new Response(null, { status: 404 });
      if (entry.verdict !== null) return new Response(null, { status: 409 });
      entry.verdict = (JSON.parse(String(init.body)) as { verdict: Verdict }).verdict;
      return Response.json({ ok: true });
    }
    if (url.includes("/review-stats")) {
      const decided = this.tasks.filter((t) => t.verdict !== null);
      const correct = decided.filter((t) => t.verdict === "correct").length;
      return Response.json({
        class_id: "dog",
        total: this.tasks.length,
        decided: decided.length,
        correct,
        fraction: decided.length ? correct / decided.length : 0,
        retained: decided.length === this.tasks.length
          ? correct / decided.length >= 0.5
          : null,
      });
    }
    if (url.endsWith("/api/review/progress")) {
      return Response.json({ complete: this.tasks.every((t) => t.verdict !== null), classes: [] });
    }
    return new Response(null, { status: 404 });
  };
}
