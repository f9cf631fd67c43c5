import { ReviewApi } from "./api.js";
import { ReviewSession, type SessionSnapshot } from "./session.js";
import { resolveShortcut } from "./shortcuts.js";

/** Renders the one-card-at-a-time review flow into `root`. */
export function mountReviewUi(root: HTMLElement, api: ReviewApi, session: ReviewSession): void {
  const render = (snapshot: SessionSnapshot): void => {
    root.replaceChildren();
    switch (snapshot.state) {
      case "loading":
        root.append(el("p", "status", "Loading…"));
        return;
      case "offline":
        renderOffline(root, snapshot);
        return;
      case "complete":
        void renderComplete(root, api);
        return;
      case "reviewing":
        renderCard(root, snapshot);
        return;
    }
  };

  const renderOffline = (host: HTMLElement, snapshot: SessionSnapshot): void => {
    host.append(
      el("p", "status error",
         `Server unreachable. ${snapshot.queuedCount} verdict(s) queued locally.`),
      button("Retry", async () => render(await session.retry())),
    );
  };

  const renderCard = (host: HTMLElement, snapshot: SessionSnapshot): void => {
    const card = snapshot.card;
    if (card === null) return;
    const player = document.createElement("video");
    player.src = card.media_url;
    player.controls = true;
    player.autoplay = true;
    player.className = "player";

    host.append(
      el("p", "progress", `decided ${snapshot.decidedCount} · task ${card.task_id}`),
      el("h2", "label", `Does this clip belong to “${card.class_id}”?`),
      player,
      button("Correct (y)", async () => render(await session.decide("correct"))),
      button("Incorrect (n)", async () => render(await session.decide("incorrect"))),
    );
  };

  const renderComplete = async (host: HTMLElement, client: ReviewApi): Promise<void> => {
    host.append(el("h2", "label", "Round complete"));
    try {
      const progress = await client.progress();
      const table = document.createElement("table");
      table.className = "retention";
      const header = document.createElement("tr");
      for (const title of ["class", "correct", "decided", "retained"]) {
        header.append(el("th", "", title));
      }
      table.append(header);
      for (const stats of progress.classes) {
        const row = document.createElement("tr");
        row.append(
          el("td", "", stats.class_id),
          el("td", "", String(stats.correct)),
          el("td", "", String(stats.decided)),
          el("td", stats.retained ? "kept" : "dropped",
             stats.retained === null ? "pending" : stats.retained ? "kept" : "dropped"),
        );
        table.append(row);
      }
      host.append(table);
    } catch {
      host.append(el("p", "status error", "Could not load retention outcomes."));
    }
  };

  document.addEventListener("keydown", (event) => {
    const action = resolveShortcut(event);
    if (action === null) return;
    if (action.kind === "replay") {
      root.querySelector("video")?.play();
      return;
    }
    void session.decide(action.verdict).then(render);
  });

  void session.start().then(render);
}

function el(tag: string, className: string, text: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  node.textContent = text;
  return node;
}

function button(label: string, onClick: () => void): HTMLButtonElement {
  const node = document.createElement("button");
  node.textContent = label;
  node.addEventListener("click", onClick);
  return node;
}
