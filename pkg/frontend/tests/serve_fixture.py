"""Start the review service over the synthetic corpus for the UI integration
test, and write the expected outcome (computed directly, without the server)
so the test can compare the two routes.

Usage: python3 serve_fixture.py <port> <expected_json_path>
"""
import copy
import json
import sys
import tempfile
from pathlib import Path

import uvicorn

from avcurator.corpus import load_manifest
from avcurator.fixtures import generate_fixture, load_truth
from avcurator.noise_filter import apply_review_retention, sample_for_review
from avcurator.pipeline import run_pipeline
from avcurator.review_service import ReviewStore, create_app

CLASS_ID = "dog_barking"


def main():
    port = int(sys.argv[1])
    expected_path = Path(sys.argv[2])

    root = Path(tempfile.mkdtemp(prefix="ui_fixture_"))
    config = generate_fixture(root, seed=7)
    run_pipeline(config, [1, 2, 3])
    clips = load_manifest(Path(config.workdir) / "manifests" / "clips.stage3.jsonl", "clips")
    truth = load_truth(root)

    tasks = sample_for_review(clips, CLASS_ID, n=20, seed=7)

    # The expected retention outcome, computed straight from the library.
    decided = copy.deepcopy(tasks)
    plan = []
    for task in decided:
        verdict = "correct" if truth[task.clip_id] == task.class_id else "incorrect"
        task.decide(verdict, reviewer="script")
        plan.append({"task_id": task.task_id, "verdict": verdict})
    retained = apply_review_retention(decided, min_fraction=0.5)[CLASS_ID]
    expected_path.write_text(json.dumps({
        "class_id": CLASS_ID,
        "plan": plan,
        "retained": retained,
    }))

    store = ReviewStore(tasks, root / "round1.tasks.jsonl", lease_timeout_s=600.0)
    app = create_app(store)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="error")


if __name__ == "__main__":
    main()
