"""
The full four-stage cascade, end to end
=======================================

Generates the deterministic synthetic corpus (10 classes, 135 videos each,
30% planted label noise among the clips that reach stage 4), then runs all
four stages from manifests on disk, exactly as `curator run` would. Every
stage persists its outputs, so the run is resumable and reproducible.
"""
import json
import tempfile
from pathlib import Path

from avcurator.corpus import load_manifest
from avcurator.fixtures import generate_fixture, load_truth
from avcurator.noise_filter import label_purity
from avcurator.pipeline import make_splits, run_pipeline

root = Path(tempfile.mkdtemp(prefix="curation_demo_"))
print(f"working under {root}")

config = generate_fixture(root, seed=7)
print(f"config hash: {config.config_hash()[:12]}")

state = run_pipeline(config, stages=[1, 2, 3, 4])

print("\nstage | goal                      | classes | videos | clips")
goals = {1: "candidate videos", 2: "visual verification",
         3: "audio verification", 4: "iterative noise filtering"}
for report in sorted(state.stage_reports, key=lambda r: r.stage):
    print(f"  {report.stage}   | {goals[report.stage]:25s} | {report.classes_remaining:7d} "
          f"| {report.videos_remaining:6d} | {report.clips_remaining:5d}")

manifests = Path(config.workdir) / "manifests"
truth = load_truth(root)
stage3 = load_manifest(manifests / "clips.stage3.jsonl", "clips")
final = load_manifest(manifests / "clips.stage4.jsonl", "clips")
print(f"\nlabel purity before noise filtering: {label_purity(stage3, truth):.3f}")
print(f"label purity of the final dataset:   {label_purity(final, truth):.3f}")

# Rerunning a completed stage is a no-op thanks to the persisted run state.
again = run_pipeline(config, stages=[4])
assert [r.to_json() for r in again.stage_reports] == [r.to_json() for r in state.stage_reports]
print("rerun of a completed stage is a no-op: OK")

# Finally, carve video-disjoint train/val/test splits (50 test, 20 val per class).
splits = make_splits(final, config)
counts = {}
for clip in splits:
    counts[clip.split] = counts.get(clip.split, 0) + 1
print(f"split sizes: {json.dumps(counts, sort_keys=True)}")
