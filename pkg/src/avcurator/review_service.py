"""HTTP service backing the human verification step.

Reviewers pull one leased task at a time, watch the clip and post a verdict;
verdicts are persisted atomically so restarts lose nothing. A pending task is
leased to at most one reviewer at a time, with leases expiring after a
timeout so abandoned sessions return their tasks to the pool.
"""
from __future__ import annotations

import json
import logging
import threading
import time
from pathlib import Path
from typing import Callable, Sequence

from fastapi import FastAPI
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from .noise_filter import ReviewTask, apply_review_retention

log = logging.getLogger(__name__)


class UnknownTask(KeyError):
    pass


class AlreadyDecided(ValueError):
    pass


class ReviewStore:
    """Task state, leasing and atomic persistence for one review round."""

    def __init__(
        self,
        tasks: Sequence[ReviewTask],
        path: str | Path,
        lease_timeout_s: float = 600.0,
        min_fraction: float = 0.5,
        clock: Callable[[], float] = time.time,
    ):
        self._tasks = {t.task_id: t for t in tasks}
        if len(self._tasks) != len(tasks):
            raise ValueError("duplicate task ids in review round")
        self._path = Path(path)
        self._lease_timeout = lease_timeout_s
        self._min_fraction = min_fraction
        self._clock = clock
        self._leases: dict[str, float] = {}
        self._lock = threading.Lock()

    @classmethod
    def load(cls, path: str | Path, **kwargs) -> "ReviewStore":
        tasks = []
        with open(Path(path), encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    tasks.append(ReviewTask.from_json(json.loads(line)))
        return cls(tasks, path, **kwargs)

    def _persist_locked(self):
        tmp = self._path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            for task_id in sorted(self._tasks):
                fh.write(json.dumps(self._tasks[task_id].to_json(), sort_keys=True) + "\n")
        tmp.replace(self._path)

    def next_task(self) -> ReviewTask | None:
        """Lease the first available pending task; None when nothing is available."""
        with self._lock:
            now = self._clock()
            for task_id in sorted(self._tasks):
                task = self._tasks[task_id]
                if task.verdict != "pending":
                    continue
                expiry = self._leases.get(task_id)
                if expiry is not None and expiry > now:
                    continue
                self._leases[task_id] = now + self._lease_timeout
                return task
            return None

    def submit(self, task_id: str, verdict: str, reviewer: str) -> ReviewTask:
        with self._lock:
            task = self._tasks.get(task_id)
            if task is None:
                raise UnknownTask(task_id)
            if task.verdict != "pending":
                raise AlreadyDecided(task_id)
            task.decide(verdict, reviewer, decided_at=self._clock())
            self._leases.pop(task_id, None)
            self._persist_locked()
            return task

    def class_stats(self, class_id: str) -> dict:
        with self._lock:
            group = [t for t in self._tasks.values() if t.class_id == class_id]
            if not group:
                raise UnknownTask(class_id)
            decided = [t for t in group if t.verdict != "pending"]
            correct = sum(1 for t in decided if t.verdict == "correct")
            fraction = correct / len(decided) if decided else 0.0
            retained = None
            if len(decided) == len(group):
                retained = apply_review_retention(group, self._min_fraction)[class_id]
            return {
                "class_id": class_id,
                "total": len(group),
                "decided": len(decided),
                "correct": correct,
                "fraction": fraction,
                "retained": retained,
            }

    def round_complete(self) -> bool:
        with self._lock:
            return all(t.verdict != "pending" for t in self._tasks.values())

    def retention(self) -> dict[str, bool]:
        with self._lock:
            return apply_review_retention(list(self._tasks.values()), self._min_fraction)

    def all_classes(self) -> list[str]:
        with self._lock:
            return sorted({t.class_id for t in self._tasks.values()})


def media_url_for(clip_id: str) -> str:
    return f"/media/{clip_id.replace(':', '_')}.mp4"


def create_app(
    store: ReviewStore,
    media_dir: str | Path | None = None,
    run_state_path: str | Path | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="curation review service")

    @app.get("/api/review/next")
    def next_task():
        task = store.next_task()
        if task is None:
            return Response(status_code=204)
        return {
            "task_id": task.task_id,
            "class_id": task.class_id,
            "clip_id": task.clip_id,
            "media_url": media_url_for(task.clip_id),
        }

    @app.post("/api/review/{task_id}")
    def submit(task_id: str, body: dict):
        verdict = body.get("verdict")
        reviewer = body.get("reviewer", "")
        if verdict not in ("correct", "incorrect"):
            return JSONResponse({"error": "verdict must be correct|incorrect"}, status_code=400)
        try:
            task = store.submit(task_id, verdict, reviewer)
        except UnknownTask:
            return JSONResponse({"error": f"unknown task {task_id}"}, status_code=404)
        except AlreadyDecided:
            return JSONResponse({"error": f"task {task_id} already decided"}, status_code=409)
        return task.to_json()

    @app.get("/api/classes/{class_id}/review-stats")
    def review_stats(class_id: str):
        try:
            return store.class_stats(class_id)
        except UnknownTask:
            return JSONResponse({"error": f"unknown class {class_id}"}, status_code=404)

    @app.get("/api/review/progress")
    def progress():
        classes = store.all_classes()
        return {
            "complete": store.round_complete(),
            "classes": [store.class_stats(c) for c in classes],
        }

    @app.get("/api/run/state")
    def run_state():
        if run_state_path is None or not Path(run_state_path).exists():
            return JSONResponse({"error": "no run state"}, status_code=404)
        return json.loads(Path(run_state_path).read_text(encoding="utf-8"))

    if media_dir is not None and Path(media_dir).is_dir():
        app.mount("/media", StaticFiles(directory=str(media_dir)), name="media")
    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app


def serve_review(
    tasks_path: str | Path,
    bind: str = "127.0.0.1:8080",
    media_dir: str | Path | None = None,
    run_state_path: str | Path | None = None,
    ui_dir: str | Path | None = None,
    lease_timeout_s: float = 600.0,
    min_fraction: float = 0.5,
):
    """Run the review service until interrupted. Raises if no pending round exists."""
    import uvicorn

    store = ReviewStore.load(
        tasks_path, lease_timeout_s=lease_timeout_s, min_fraction=min_fraction
    )
    if store.round_complete():
        log.warning("review round at %s is already complete", tasks_path)
    app = create_app(store, media_dir=media_dir, run_state_path=run_state_path, ui_dir=ui_dir)
    host, _, port = bind.partition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8080), log_level="warning")
