"""Stage 3: reject clips dominated by narration or background music.

Each clip carries three detector confidences (speech, music, other). A clip
is rejected when a gated score is strictly greater than the threshold; the
gate never promotes clips, it only removes false positives. Musical classes
waive the music gate by default.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import ClipRecord, ManifestError, SoundClass, StageReport, VideoRecord, stage_report

log = logging.getLogger(__name__)


@dataclass
class AudioGateScores:
    """Three-way detector confidences for one clip. The scores are independent
    confidences, not a softmax simplex; "other" is recorded but never gated."""

    clip_id: str
    speech: float
    music: float
    other: float = 0.0

    def __post_init__(self):
        for name in ("speech", "music", "other"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ManifestError(f"{name} score out of [0, 1]: {value}", field_name=name)

    def to_json(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "speech": self.speech,
            "music": self.music,
            "other": self.other,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AudioGateScores":
        return cls(
            clip_id=obj["clip_id"],
            speech=float(obj["speech"]),
            music=float(obj["music"]),
            other=float(obj.get("other", 0.0)),
        )


@dataclass
class RejectionPolicy:
    class_id: str
    reject_speech: bool = True
    reject_music: bool = True
    threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must be in (0, 1)")


@dataclass
class Verdict:
    accepted: bool
    reason: str | None = None  # "speech" or "music" when rejected


@dataclass
class AudioStageResult:
    clips: list[ClipRecord]
    report: StageReport
    rejections: dict[str, str]        # clip_id -> reason
    missing_scores: list[str]         # clip_ids without a score record


def load_gate_scores(path: str | Path) -> dict[str, AudioGateScores]:
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"audio-score manifest not found: {path}")
    scores: dict[str, AudioGateScores] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = AudioGateScores.from_json(json.loads(line))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ManifestError(f"bad audio-score record: {exc}", line=lineno) from None
            if record.clip_id in scores:
                raise ManifestError(f"duplicate clip_id {record.clip_id!r}", line=lineno)
            scores[record.clip_id] = record
    return scores


GATE_CLASSES = ("speech", "music", "other")


def train_gate_model(features, labels, cfg=None):
    """Fit the built-in classifier as a desk-scale stand-in for the three-way
    speech/music/other gate. `features` is (n, d); labels take values from
    GATE_CLASSES."""
    from .baseline_classifier import TrainConfig, train

    bad = set(labels) - set(GATE_CLASSES)
    if bad:
        raise ValueError(f"gate labels must be speech/music/other, got {sorted(bad)}")
    return train(features, labels, cfg or TrainConfig(), class_ids=list(GATE_CLASSES))


def score_clips_with_gate(model, features) -> dict[str, AudioGateScores]:
    """Run the gate model over per-clip feature vectors and emit score records."""
    scores: dict[str, AudioGateScores] = {}
    for clip_id in sorted(features):
        probs = model.predict(features[clip_id])
        by_class = dict(zip(model.class_ids, (float(p) for p in probs)))
        scores[clip_id] = AudioGateScores(
            clip_id=clip_id,
            speech=by_class["speech"],
            music=by_class["music"],
            other=by_class["other"],
        )
    return scores


def save_gate_scores(scores: Mapping[str, AudioGateScores], path: str | Path) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for clip_id in sorted(scores):
            fh.write(json.dumps(scores[clip_id].to_json(), sort_keys=True) + "\n")
            count += 1
    return count


def policies_for_classes(
    classes: Sequence[SoundClass],
    threshold: float = 0.5,
    overrides: Mapping[str, dict] | None = None,
) -> dict[str, RejectionPolicy]:
    """Derive per-class policies: speech is always gated, music only when the
    class does not allow it. `overrides` may flip either flag per class."""
    policies = {}
    for cls in classes:
        kwargs = {"reject_speech": True, "reject_music": not cls.music_allowed}
        kwargs.update((overrides or {}).get(cls.id, {}))
        policies[cls.id] = RejectionPolicy(class_id=cls.id, threshold=threshold, **kwargs)
    return policies


def verify_clip(scores: AudioGateScores, policy: RejectionPolicy) -> Verdict:
    """Accept or reject one clip. Rejection requires the gated score to be
    strictly greater than the threshold; speech is checked before music."""
    if policy.reject_speech and scores.speech > policy.threshold:
        return Verdict(accepted=False, reason="speech")
    if policy.reject_music and scores.music > policy.threshold:
        return Verdict(accepted=False, reason="music")
    return Verdict(accepted=True)


def run_audio_stage(
    clips: Sequence[ClipRecord],
    score_manifest: Mapping[str, AudioGateScores],
    policies: Mapping[str, RejectionPolicy],
    classes: Sequence[SoundClass] | None = None,
    videos: Sequence[VideoRecord] | None = None,
    min_clips: int = 200,
    min_videos: int = 100,
    on_missing: str = "drop",
) -> AudioStageResult:
    """Gate every clip, then drop classes left with fewer than min_clips
    accepted clips.

    Clips without a score record are dropped or kept according to
    `on_missing`; either way they are listed in the result so the gap is
    visible. Accepted clips gain the audio_pass provenance flag.
    """
    if on_missing not in ("keep", "drop"):
        raise ValueError(f"on_missing must be 'keep' or 'drop', got {on_missing!r}")

    accepted: list[ClipRecord] = []
    rejections: dict[str, str] = {}
    missing: list[str] = []
    for clip in sorted(clips, key=lambda c: c.clip_id):
        scores = score_manifest.get(clip.clip_id)
        if scores is None:
            missing.append(clip.clip_id)
            if on_missing == "keep":
                clip.provenance.add("audio_pass")
                accepted.append(clip)
            continue
        policy = policies.get(clip.class_id)
        if policy is None:
            raise KeyError(f"no rejection policy for class {clip.class_id!r}")
        verdict = verify_clip(scores, policy)
        if verdict.accepted:
            clip.provenance.add("audio_pass")
            accepted.append(clip)
        else:
            rejections[clip.clip_id] = verdict.reason
    if missing:
        log.warning("%d clips had no audio scores (%s)", len(missing), on_missing)

    per_class: dict[str, int] = {}
    for clip in accepted:
        per_class[clip.class_id] = per_class.get(clip.class_id, 0) + 1
    under = {cid for cid in {c.class_id for c in accepted} if per_class.get(cid, 0) < min_clips}
    if classes is not None:
        for cls in classes:
            if cls.status != "dropped" and per_class.get(cls.id, 0) < min_clips:
                cls.advance_status("dropped")
        under |= {cls.id for cls in classes if cls.status == "dropped"}
    kept = [clip for clip in accepted if clip.class_id not in under]

    # Minimum-video rule applies at every stage boundary where video records
    # are known; it may drop further classes.
    if classes is not None and videos is not None:
        kept_video_ids = {clip.video_id for clip in kept}
        live_videos = [v for v in videos if v.video_id in kept_video_ids]
        report = stage_report(list(classes), live_videos, kept, stage=3, min_videos=min_videos)
        dropped = {cls.id for cls in classes if cls.status == "dropped"}
        kept = [clip for clip in kept if clip.class_id not in dropped]
    else:
        live_classes = sorted({clip.class_id for clip in kept})
        live_video_ids = sorted({clip.video_id for clip in kept})
        report = StageReport(
            stage=3,
            classes_remaining=len(live_classes),
            videos_remaining=len(live_video_ids),
            clips_remaining=len(kept),
        )
    if classes is not None:
        for cls in classes:
            if cls.status != "dropped":
                cls.advance_status("audio_verified")
    return AudioStageResult(clips=kept, report=report, rejections=rejections, missing_scores=missing)
