import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ReviewApi, type FetchLike } from "../src/api.js";
import { ReviewSession } from "../src/session.js";
import type { Verdict } from "../src/types.js";
import { memoryStore } from "./helpers.js";

const PORT = 8937;
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess;
let expected: { class_id: string; plan: { task_id: string; verdict: Verdict }[]; retained: boolean };

const waitForServer = async (): Promise<void> => {
  for (let attempt = 0; attempt < 120; attempt++) {
    try {
      const res = await fetch(`${BASE}/api/review/progress`);
      if (res.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 250));
  }
  throw new Error("review service did not come up");
};

beforeAll(async () => {
  const expectedPath = join(mkdtempSync(join(tmpdir(), "review-ui-")), "expected.json");
  server = spawn("python3", [join(__dirname, "serve_fixture.py"), String(PORT), expectedPath], {
    stdio: ["ignore", "inherit", "inherit"],
  });
  await waitForServer();
  expected = JSON.parse(readFileSync(expectedPath, "utf-8"));
}, 120_000);

afterAll(() => {
  server?.kill();
});

describe("scripted review round against the real orchestrator", () => {
  it("decides 20 tasks, surviving a mid-session reload, and matches the direct retention", async () => {
    const verdictFor = new Map(expected.plan.map((p) => [p.task_id, p.verdict]));
    const store = memoryStore();

    // A fetch we can force offline to strand one verdict in local storage.
    let offline = false;
    const flakyFetch: FetchLike = (input, init) => {
      if (offline) return Promise.reject(new TypeError("fetch failed"));
      return fetch(input, init);
    };

    let session = new ReviewSession(new ReviewApi(BASE, flakyFetch), store, "it");
    let snap = await session.start();
    let decided = 0;

    while (snap.state === "reviewing" && snap.card !== null && decided < 10) {
      const verdict = verdictFor.get(snap.card.task_id);
      expect(verdict).toBeDefined();
      snap = await session.decide(verdict!);
      decided += 1;
    }

    // Verdict 11 hits a network failure: it must land in the local queue.
    expect(snap.card).not.toBeNull();
    const stranded = snap.card!.task_id;
    offline = true;
    snap = await session.decide(verdictFor.get(stranded)!);
    expect(snap.state).toBe("offline");
    expect(snap.queuedCount).toBe(1);

    // Forced page reload: new session over the same storage, network back.
    offline = false;
    session = new ReviewSession(new ReviewApi(BASE, flakyFetch), store, "it");
    snap = await session.start();
    expect(snap.queuedCount).toBe(0); // the stranded verdict was drained
    decided += 1;

    while (snap.state === "reviewing" && snap.card !== null) {
      const verdict = verdictFor.get(snap.card.task_id);
      expect(verdict).toBeDefined();
      snap = await session.decide(verdict!);
      decided += 1;
    }
    expect(snap.state).toBe("complete");
    expect(decided).toBe(20);

    // The server's retention decision equals apply_review_retention run
    // directly by the helper script before the session ever started.
    const api = new ReviewApi(BASE);
    const stats = await api.classStats(expected.class_id);
    expect(stats.decided).toBe(20);
    expect(stats.retained).toBe(expected.retained);

    // And every verdict arrived exactly as planned (none lost or flipped).
    const plannedCorrect = expected.plan.filter((p) => p.verdict === "correct").length;
    expect(stats.correct).toBe(plannedCorrect);
    const progress = await api.progress();
    expect(progress.complete).toBe(true);
  }, 120_000);
});
