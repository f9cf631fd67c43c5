"""Data model and manifest IO shared by every pipeline stage.

Manifests are newline-delimited JSON, one record per line. Collections are
validated on load and treated as immutable afterwards; writes go through a
temp-file-and-rename so a crash never leaves a partial manifest behind.
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

CLIP_SECONDS = 10.0
DURATION_TOLERANCE_S = 1e-3

GROUPS = (
    "people", "animals", "music", "sports", "nature",
    "vehicle", "home", "tools", "others",
)
STATUSES = ("candidate", "visually_verified", "audio_verified", "retained", "dropped")
PROVENANCE_FLAGS = (
    "visual_pass", "audio_pass", "review_pass",
    "ensemble_easy", "mined_hard", "final_retrieved",
)
SPLITS = ("unassigned", "train", "val", "test")

# Forward ranks for the monotone lifecycle; "dropped" is reachable from anywhere.
_STATUS_RANK = {"candidate": 0, "visually_verified": 1, "audio_verified": 2, "retained": 3}


class ManifestError(ValueError):
    """Raised for malformed manifests; carries the offending line number."""

    def __init__(self, message: str, *, line: int | None = None, field_name: str | None = None):
        detail = message
        if field_name is not None:
            detail += f" (field: {field_name})"
        if line is not None:
            detail += f", line {line}"
        super().__init__(detail)
        self.line = line
        self.field_name = field_name


class StatusTransitionError(ValueError):
    """Raised on a backward or otherwise illegal class-status transition."""


def derive_clip_id(video_id: str, start: float) -> str:
    """Deterministic clip identity: source video plus start offset in ms."""
    return f"{video_id}:{round(start * 1000)}"


@dataclass
class SoundClass:
    """One leaf of the flat sound taxonomy."""

    id: str
    display_label: str
    group: str
    status: str = "candidate"
    music_allowed: bool | None = None
    visual_signature: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.music_allowed is None:
            # Musical classes keep their background music by default.
            self.music_allowed = self.group == "music"
        self.validate()

    def validate(self):
        if not self.id:
            raise ManifestError("class id must be non-empty", field_name="id")
        if not self.display_label:
            raise ManifestError("display_label must be non-empty", field_name="display_label")
        if self.group not in GROUPS:
            raise ManifestError(f"unknown group {self.group!r}", field_name="group")
        if self.status not in STATUSES:
            raise ManifestError(f"unknown status {self.status!r}", field_name="status")
        if len(self.visual_signature) > 20:
            raise ManifestError("visual_signature longer than 20", field_name="visual_signature")

    def advance_status(self, new_status: str):
        """Move along candidate -> visually_verified -> audio_verified -> retained.

        "dropped" is allowed from any live state; backward moves are rejected.
        """
        if new_status not in STATUSES:
            raise StatusTransitionError(f"unknown status {new_status!r}")
        if self.status == new_status:
            return
        if self.status == "dropped":
            raise StatusTransitionError(f"{self.id}: cannot leave dropped state")
        if new_status == "dropped":
            self.status = "dropped"
            return
        if _STATUS_RANK[new_status] < _STATUS_RANK[self.status]:
            raise StatusTransitionError(
                f"{self.id}: backward transition {self.status} -> {new_status}"
            )
        self.status = new_status

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "display_label": self.display_label,
            "group": self.group,
            "status": self.status,
            "music_allowed": self.music_allowed,
            "visual_signature": list(self.visual_signature),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SoundClass":
        return cls(
            id=obj["id"],
            display_label=obj["display_label"],
            group=obj["group"],
            status=obj.get("status", "candidate"),
            music_allowed=obj.get("music_allowed"),
            visual_signature=list(obj.get("visual_signature", [])),
        )


@dataclass
class VideoRecord:
    """A source video drawn by one class's search queries."""

    video_id: str
    duration: float
    class_id: str
    query_used: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.video_id:
            raise ManifestError("video_id must be non-empty", field_name="video_id")
        if not (self.duration > 0):
            raise ManifestError("duration must be > 0", field_name="duration")

    def to_json(self) -> dict:
        return {
            "video_id": self.video_id,
            "duration": self.duration,
            "class_id": self.class_id,
            "query_used": self.query_used,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "VideoRecord":
        return cls(
            video_id=obj["video_id"],
            duration=float(obj["duration"]),
            class_id=obj["class_id"],
            query_used=obj.get("query_used", ""),
        )


@dataclass
class ClipRecord:
    """A 10 s clip carved around an anchor frame."""

    clip_id: str
    video_id: str
    class_id: str
    start: float
    end: float
    anchor_frame_time: float = 0.0
    provenance: set[str] = field(default_factory=set)
    split: str = "unassigned"

    def __post_init__(self):
        self.provenance = set(self.provenance)
        self.validate()

    def validate(self):
        if not self.clip_id:
            raise ManifestError("clip_id must be non-empty", field_name="clip_id")
        if abs((self.end - self.start) - CLIP_SECONDS) > DURATION_TOLERANCE_S:
            raise ManifestError(
                f"duration violation: end - start = {self.end - self.start:.4f}, "
                f"expected {CLIP_SECONDS}",
                field_name="end",
            )
        if self.start < 0:
            raise ManifestError("start must be >= 0", field_name="start")
        unknown = self.provenance - set(PROVENANCE_FLAGS)
        if unknown:
            raise ManifestError(f"unknown provenance flags {sorted(unknown)}", field_name="provenance")
        if self.split not in SPLITS:
            raise ManifestError(f"unknown split {self.split!r}", field_name="split")

    def to_json(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "video_id": self.video_id,
            "class_id": self.class_id,
            "start": self.start,
            "end": self.end,
            "anchor_frame_time": self.anchor_frame_time,
            "provenance": sorted(self.provenance),
            "split": self.split,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ClipRecord":
        return cls(
            clip_id=obj["clip_id"],
            video_id=obj["video_id"],
            class_id=obj["class_id"],
            start=float(obj["start"]),
            end=float(obj["end"]),
            anchor_frame_time=float(obj.get("anchor_frame_time", 0.0)),
            provenance=set(obj.get("provenance", [])),
            split=obj.get("split", "unassigned"),
        )


@dataclass
class StageReport:
    """Counts surviving one cascade stage."""

    stage: int
    classes_remaining: int
    videos_remaining: int
    clips_remaining: int

    def __post_init__(self):
        if not 1 <= self.stage <= 4:
            raise ValueError(f"stage must be in 1..4, got {self.stage}")
        for name in ("classes_remaining", "videos_remaining", "clips_remaining"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def to_json(self) -> dict:
        return {
            "stage": self.stage,
            "classes_remaining": self.classes_remaining,
            "videos_remaining": self.videos_remaining,
            "clips_remaining": self.clips_remaining,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "StageReport":
        return cls(
            stage=int(obj["stage"]),
            classes_remaining=int(obj["classes_remaining"]),
            videos_remaining=int(obj["videos_remaining"]),
            clips_remaining=int(obj["clips_remaining"]),
        )


_KINDS = {
    "classes": (SoundClass, "id"),
    "videos": (VideoRecord, "video_id"),
    "clips": (ClipRecord, "clip_id"),
}


def load_manifest(path: str | Path, kind: str) -> list:
    """Load and validate a newline-delimited JSON manifest.

    kind is one of "classes", "videos", "clips" or "scores" (scores lines are
    returned as plain dicts; their schema is owner-specific). Any invariant
    violation or duplicate primary id raises ManifestError with the 1-based
    line number.
    """
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    if kind == "scores":
        records = []
        for lineno, obj in _iter_jsonl(path):
            if not isinstance(obj, dict):
                raise ManifestError("score record must be a JSON object", line=lineno)
            records.append(obj)
        return records
    if kind not in _KINDS:
        raise ValueError(f"unknown manifest kind {kind!r}")
    record_cls, key = _KINDS[kind]
    records = []
    seen: dict[str, int] = {}
    for lineno, obj in _iter_jsonl(path):
        try:
            record = record_cls.from_json(obj)
        except ManifestError as exc:
            raise ManifestError(str(exc), line=lineno) from None
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"malformed record: {exc}", line=lineno) from None
        rid = getattr(record, key)
        if rid in seen:
            raise ManifestError(
                f"duplicate {key} {rid!r} (first seen on line {seen[rid]})", line=lineno
            )
        seen[rid] = lineno
        records.append(record)
    if kind == "clips":
        _check_clips_per_video(records)
    return records


def _iter_jsonl(path: Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"invalid JSON: {exc.msg}", line=lineno) from None


def _check_clips_per_video(clips: Sequence[ClipRecord]):
    counts: dict[tuple[str, str], int] = {}
    for clip in clips:
        key = (clip.class_id, clip.video_id)
        counts[key] = counts.get(key, 0) + 1
        if counts[key] > 2:
            raise ManifestError(
                f"more than 2 clips from video {clip.video_id!r} in class {clip.class_id!r}"
            )


def save_manifest(records: Iterable, path: str | Path) -> int:
    """Write records as canonical NDJSON via temp-file-and-rename; returns count."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            for record in records:
                obj = record.to_json() if hasattr(record, "to_json") else record
                fh.write(json.dumps(obj, sort_keys=True) + "\n")
                count += 1
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return count


def stage_report(
    classes: Sequence[SoundClass],
    videos: Sequence[VideoRecord],
    clips: Sequence[ClipRecord],
    stage: int,
    min_videos: int = 100,
) -> StageReport:
    """Apply the minimum-video rule at a stage boundary and count survivors.

    Classes whose live video count falls below min_videos are marked dropped
    in place. Videos and clips belonging to dropped classes are excluded from
    the counts.
    """
    if not 1 <= stage <= 4:
        raise ValueError(f"stage must be in 1..4, got {stage}")
    video_counts: dict[str, int] = {}
    for video in videos:
        video_counts[video.class_id] = video_counts.get(video.class_id, 0) + 1
    for cls in classes:
        if cls.status == "dropped":
            continue
        if video_counts.get(cls.id, 0) < min_videos:
            cls.advance_status("dropped")
    live = {cls.id for cls in classes if cls.status != "dropped"}
    return StageReport(
        stage=stage,
        classes_remaining=len(live),
        videos_remaining=sum(1 for v in videos if v.class_id in live),
        clips_remaining=sum(1 for c in clips if c.class_id in live),
    )


def diff_manifests(
    before: Sequence[ClipRecord], after: Sequence[ClipRecord]
) -> tuple[list[ClipRecord], list[ClipRecord]]:
    """Partition `before` into (kept, removed) by clip_id membership in `after`."""
    after_ids = {clip.clip_id for clip in after}
    kept = [clip for clip in before if clip.clip_id in after_ids]
    removed = [clip for clip in before if clip.clip_id not in after_ids]
    return kept, removed


def validate_clips_against_videos(
    clips: Sequence[ClipRecord], videos: Sequence[VideoRecord]
):
    """Cross-manifest checks that single-record validation cannot do: every
    clip's video exists, is long enough to yield clips, and contains the
    clip's time span."""
    durations = {v.video_id: v.duration for v in videos}
    for clip in clips:
        duration = durations.get(clip.video_id)
        if duration is None:
            raise ManifestError(f"clip {clip.clip_id}: unknown video {clip.video_id!r}")
        if duration < CLIP_SECONDS:
            raise ManifestError(
                f"clip {clip.clip_id}: video {clip.video_id!r} is only {duration:.2f}s"
            )
        if clip.end > duration + DURATION_TOLERANCE_S:
            raise ManifestError(
                f"clip {clip.clip_id}: ends at {clip.end:.3f}s past video duration {duration:.3f}s"
            )
