"""
The human review loop, driven programmatically
==============================================

Stage 4 starts with 20 randomly sampled clips per class going to human
review. The orchestrator serves them over HTTP with task leasing, one clip
per reviewer at a time; verdicts persist across restarts. This demo runs the
service in-process and plays the reviewer, deciding a round for two classes.
"""
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from avcurator.corpus import ClipRecord
from avcurator.noise_filter import apply_review_retention, sample_for_review
from avcurator.review_service import ReviewStore, create_app

workdir = Path(tempfile.mkdtemp(prefix="review_demo_"))

# Build a small review round: 2 classes, 10 tasks each.
clips = []
for cid in ("dog_barking", "cat_meowing"):
    for i in range(40):
        video = f"v_{cid}_{i:03d}"
        clips.append(ClipRecord(clip_id=f"{video}:0", video_id=video, class_id=cid,
                                start=0.0, end=10.0))
tasks = []
for cid in ("cat_meowing", "dog_barking"):
    tasks.extend(sample_for_review(clips, cid, n=10, seed=1))

store = ReviewStore(tasks, workdir / "round1.tasks.jsonl", lease_timeout_s=600.0)
client = TestClient(create_app(store))   # same app `curator serve` binds to a port

# The reviewer loop: GET the next leased task, POST a verdict, repeat.
# Here dog clips are judged 70% correct and cat clips 30% correct.
decided = 0
verdict_plan = {"dog_barking": 7, "cat_meowing": 3}
seen_per_class = {"dog_barking": 0, "cat_meowing": 0}
while True:
    response = client.get("/api/review/next")
    if response.status_code == 204:
        break
    task = response.json()
    cid = task["class_id"]
    verdict = "correct" if seen_per_class[cid] < verdict_plan[cid] else "incorrect"
    seen_per_class[cid] += 1
    post = client.post(f"/api/review/{task['task_id']}",
                       json={"verdict": verdict, "reviewer": "demo"})
    assert post.status_code == 200
    decided += 1

print(f"decided {decided} tasks")
for cid in ("dog_barking", "cat_meowing"):
    stats = client.get(f"/api/classes/{cid}/review-stats").json()
    print(f"  {cid}: {stats['correct']}/{stats['decided']} correct "
          f"-> retained = {stats['retained']}")

# The same decision rule is available as a library call on the decided tasks.
retention = apply_review_retention(list(store._tasks.values()), min_fraction=0.5)
assert retention == {"dog_barking": True, "cat_meowing": False}
print("dog_barking kept (7/10 >= 50%), cat_meowing dropped (3/10): OK")

# Verdicts survived to disk; a fresh store resumes the completed round.
resumed = ReviewStore.load(workdir / "round1.tasks.jsonl")
assert resumed.round_complete()
print(f"round state persisted at {workdir / 'round1.tasks.jsonl'}")
