"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line and enforcing its stated tolerance and runtime budget.

Run with `pytest tests/test_acceptance.py -v -s`.
"""
import hashlib
import time
from pathlib import Path

import numpy as np
import pytest

from avcurator.baseline_classifier import cross_entropy_loss_and_grad
from avcurator.config import PipelineConfig
from avcurator.corpus import ClipRecord, load_manifest
from avcurator.dsp import AudioBuffer, stft_spectrogram
from avcurator.fixtures import generate_fixture, load_truth
from avcurator.metrics import average_precision, d_prime, roc_auc
from avcurator.noise_filter import (
    label_purity,
    sample_for_review,
    apply_review_retention,
    two_split_ensemble_filter,
)
from avcurator.pipeline import make_splits, run_pipeline
from avcurator.visual_stage import FrameScore, VisualGateConfig, select_anchor_frames
from avcurator.audio_stage import AudioGateScores, RejectionPolicy, verify_clip

from test_metrics import ap_oracle, auc_oracle
from test_noise_filter import clip as make_clip
from test_noise_filter import identity_trainer


class Budget:
    def __init__(self, seconds):
        self.limit = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        if exc[0] is None:
            assert self.elapsed < self.limit, (
                f"runtime {self.elapsed:.2f}s exceeded budget {self.limit}s"
            )


def report(name):
    print(f"\nACCEPTANCE PASS: {name}")


TABLE4_ROWS = [
    ("ResNet18/ASTest", 0.944, 2.253),
    ("ResNet34/ASTest", 0.947, 2.292),
    ("ResNet50/ASTest", 0.949, 2.309),
    ("ResNet18/full", 0.968, 2.627),
    ("ResNet34/full", 0.972, 2.703),
    ("ResNet50/full", 0.973, 2.735),
]


def test_dprime_reproduction():
    """d_prime(published AUC) matches the published d' column within 0.02."""
    with Budget(1.0):
        for row, auc, expected in TABLE4_ROWS:
            got = d_prime(auc)
            assert abs(got - expected) <= 0.02, f"{row}: d'({auc}) = {got:.4f} != {expected}"
    report("d-prime reproduction (6/6 rows within ±0.02, < 1 s)")


def test_metric_oracle_equivalence():
    """AP and AUC equal O(n^2) brute-force oracles on 1,000 random instances."""
    rng = np.random.default_rng(2024)
    with Budget(10.0):
        for trial in range(1000):
            n = int(rng.integers(2, 31))
            scores = rng.choice([0.0, 0.2, 0.4, 0.6, 0.8, 1.0], size=n).tolist()
            labels = rng.integers(0, 2, size=n).tolist()
            if sum(labels) == 0:
                labels[int(rng.integers(0, n))] = 1
            assert abs(average_precision(scores, labels) - ap_oracle(scores, labels)) < 1e-12
            if 0 < sum(labels) < n:
                assert abs(roc_auc(scores, labels) - auc_oracle(scores, labels)) < 1e-12
    report("metric oracle equivalence (1,000 instances within 1e-12, < 10 s)")


def test_spectrogram_shape_and_tone_placement():
    """5 s -> 257x500, 10 s -> 257x1000, and a pure tone lands in the analytic bin."""
    with Budget(5.0):
        sr = 16000
        rng = np.random.default_rng(7)
        five = AudioBuffer(0.1 * rng.standard_normal(5 * sr), sr)
        ten = AudioBuffer(0.1 * rng.standard_normal(10 * sr), sr)
        assert stft_spectrogram(five, target_frames=500).shape == (257, 500)
        assert stft_spectrogram(ten, target_frames=1000).shape == (257, 1000)

        for freq in (500.0, 1000.0, 3000.0, 6000.0):
            t = np.arange(5 * sr) / sr
            tone = AudioBuffer(0.5 * np.sin(2 * np.pi * freq * t), sr)
            spec = stft_spectrogram(tone, target_frames=500)
            energy = (np.expm1(spec.values) ** 2).sum(axis=1)
            expected_bin = round(freq / (sr / 512))
            assert int(np.argmax(energy)) == expected_bin
            assert energy[expected_bin] >= 100 * np.median(energy)
    report("spectrogram shapes 257x500 / 257x1000 and analytic tone bins (< 5 s)")


def test_cascade_monotone_and_deterministic(tmp_path):
    """Full pipeline over the synthetic corpus: non-increasing counts and
    byte-identical manifests across two seeded runs."""
    with Budget(120.0):
        digests = []
        for run_name in ("run_a", "run_b"):
            root = tmp_path / run_name
            config = generate_fixture(root, seed=7)
            state = run_pipeline(config, [1, 2, 3, 4])

            reports = sorted(state.stage_reports, key=lambda r: r.stage)
            classes = [r.classes_remaining for r in reports]
            videos = [r.videos_remaining for r in reports]
            assert classes == sorted(classes, reverse=True), "class counts increased"
            assert videos[1:] == sorted(videos[1:], reverse=True), "video counts increased"

            digest = {}
            base = Path(config.workdir)
            for path in sorted(base.rglob("*.jsonl")) + sorted(base.rglob("stage*.json")):
                digest[path.relative_to(base).as_posix()] = hashlib.sha256(
                    path.read_bytes()
                ).hexdigest()
            digests.append(digest)
        assert digests[0] == digests[1], "seeded runs are not byte-identical"
    report("cascade monotonicity and byte-identical seeded determinism (< 2 min)")


def test_purity_improvement_and_partition(tmp_path):
    """Planted-noise purity rises by at least 0.15 over the 0.70 input, and
    easy + hard + recovered + rejected exactly partitions the stage input."""
    root = tmp_path / "purity"
    config = generate_fixture(root, seed=7)
    run_pipeline(config, [1, 2, 3, 4])
    truth = load_truth(root)
    manifests = Path(config.workdir) / "manifests"

    stage_input = load_manifest(manifests / "clips.stage3.jsonl", "clips")
    input_purity = label_purity(stage_input, truth)
    assert input_purity == pytest.approx(0.70, abs=1e-9), "fixture input purity drifted"

    final = load_manifest(manifests / "clips.stage4.jsonl", "clips")
    kept_purity = label_purity(final, truth)
    assert kept_purity >= input_purity + 0.15, (
        f"purity {kept_purity:.4f} did not improve by 0.15 over {input_purity:.2f}"
    )

    buckets = []
    for name in ("easy", "hard", "recovered", "rejected"):
        buckets.extend(load_manifest(manifests / f"clips.stage4.{name}.jsonl", "clips"))
    assert sorted(c.clip_id for c in buckets) == sorted(c.clip_id for c in stage_input), (
        "easy ∪ hard ∪ recovered ∪ rejected does not partition the stage input"
    )
    report(f"purity improvement 0.70 -> {kept_purity:.3f} (≥ +0.15) and exact partition")


def test_ensemble_hygiene_property():
    """No clip is ever scored by a fold model whose training set contained it."""
    rng = np.random.default_rng(99)
    for trial in range(10):
        n_classes = int(rng.integers(2, 7))
        clips, features = [], {}
        for k in range(n_classes):
            for i in range(int(rng.integers(2, 15))):
                c = make_clip(f"h{trial}c{k}", i)
                features[c.clip_id] = rng.standard_normal(n_classes)
                clips.append(c)
        _, _, predictions, audit = two_split_ensemble_filter(
            clips, features, identity_trainer(), seed=trial
        )
        audit.verify()
        for c in clips:
            assert len(audit.scored_by[c.clip_id]) == 2
            for key in audit.scored_by[c.clip_id]:
                assert c.clip_id not in audit.training_sets[key]
    report("ensemble hygiene: held-out scoring only, 10 random corpora")


def test_stage_rule_boundaries():
    """The published gate constants behave strictly at their boundaries."""
    # visual 0.2 is strict
    frames = [FrameScore(video_id="v", time=1.0, scores={"dog": 0.2}),
              FrameScore(video_id="v", time=2.0, scores={"dog": 0.2000001})]
    anchors = select_anchor_frames(frames, ["dog"], VisualGateConfig())
    assert [t for t, _ in anchors] == [2.0]

    # audio 0.5 is strict
    policy = RejectionPolicy(class_id="c", reject_speech=True, reject_music=True)
    assert verify_clip(AudioGateScores("x", speech=0.5, music=0.0, other=0.0), policy).accepted
    assert not verify_clip(AudioGateScores("x", speech=0.5000001, music=0.0, other=0.0),
                           policy).accepted

    # 10/20 review verdicts retain, 9/20 drop
    for n_correct, kept in ((10, True), (9, False)):
        clips = [make_clip("r", i) for i in range(40)]
        tasks = sample_for_review(clips, "r", n=20, seed=1)
        for i, task in enumerate(tasks):
            task.decide("correct" if i < n_correct else "incorrect", "x")
        assert apply_review_retention(tasks)["r"] is kept

    # top-3 keep admits rank 3, rejects rank 4
    classes = [f"c{i}" for i in range(10)]
    clips, features = [], {}
    for k, cid in enumerate(classes):
        for i in range(2):
            c = make_clip(cid, i)
            vec = np.zeros(10)
            vec[k] = 1.0
            features[c.clip_id] = vec
            clips.append(c)
    rank3 = next(c for c in clips if c.class_id == "c4")
    features[rank3.clip_id] = np.array([9, 8, 0, 0, 7, 0, 0, 0, 0, 0], dtype=float)
    rank4 = next(c for c in clips if c.class_id == "c6")
    features[rank4.clip_id] = np.array([9, 8, 7, 0, 0, 0, 6, 0, 0, 0], dtype=float)
    easy, rejected, _, _ = two_split_ensemble_filter(
        clips, features, identity_trainer(), seed=0, top_k_keep=3
    )
    easy_ids = {c.clip_id for c in easy}
    assert rank3.clip_id in easy_ids, "rank 3 must be admitted"
    assert rank4.clip_id not in easy_ids, "rank 4 must be rejected"
    report("stage-rule boundaries: strict 0.2 / strict 0.5 / 10-vs-9 of 20 / top-3 rank edge")


def test_gradient_check():
    """Analytic gradients match central differences within 1e-5 relative error
    on 20 random small instances."""
    rng = np.random.default_rng(11)
    h = 1e-6
    for trial in range(20):
        n, dim, n_classes = 6, 8, 5
        X = rng.standard_normal((n, dim))
        y = rng.integers(0, n_classes, size=n)
        W = 0.7 * rng.standard_normal((n_classes, dim))
        b = 0.7 * rng.standard_normal(n_classes)
        _, gW, gb = cross_entropy_loss_and_grad(W, b, X, y)
        flat_params = [("W", i, j) for i in range(n_classes) for j in range(dim)]
        flat_params += [("b", i, None) for i in range(n_classes)]
        numeric = np.zeros(len(flat_params))
        analytic = np.concatenate([gW.ravel(), gb])
        for p, (kind, i, j) in enumerate(flat_params):
            Wp, Wm, bp, bm = W.copy(), W.copy(), b.copy(), b.copy()
            if kind == "W":
                Wp[i, j] += h
                Wm[i, j] -= h
            else:
                bp[i] += h
                bm[i] -= h
            lp, _, _ = cross_entropy_loss_and_grad(Wp, bp, X, y)
            lm, _, _ = cross_entropy_loss_and_grad(Wm, bm, X, y)
            numeric[p] = (lp - lm) / (2 * h)
        rel = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(analytic), 1e-12)
        assert rel < 1e-5, f"trial {trial}: relative gradient error {rel:.2e}"
    report("gradient check: 20 random instances within 1e-5 relative error")


def test_split_contract():
    """Any class with >= 71 clips gets exactly 50 test and 20 val clips,
    video-disjoint."""
    rng = np.random.default_rng(21)
    for trial, n_clips in enumerate((71, 85, 120, 300)):
        clips = []
        i = 0
        v = 0
        while i < n_clips:
            per_video = 2 if (n_clips - i >= 2 and rng.random() < 0.5) else 1
            for s in range(per_video):
                vid = f"t{trial}_v{v:04d}"
                start = 20.0 * s
                clips.append(ClipRecord(
                    clip_id=f"{vid}:{round(start * 1000)}", video_id=vid,
                    class_id=f"cls{trial}", start=start, end=start + 10.0,
                ))
            i += per_video
            v += 1
        out = make_splits(clips, PipelineConfig(), seed=trial)
        counts = {"test": 0, "val": 0, "train": 0}
        by_video = {}
        for c in out:
            counts[c.split] += 1
            by_video.setdefault(c.video_id, set()).add(c.split)
        assert counts["test"] == 50, f"{n_clips} clips: test={counts['test']}"
        assert counts["val"] == 20, f"{n_clips} clips: val={counts['val']}"
        assert counts["train"] == n_clips - 70
        assert all(len(s) == 1 for s in by_video.values()), "video split leakage"
    report("split contract: exactly 50 test / 20 val, video-disjoint, for ≥ 71 clips")
