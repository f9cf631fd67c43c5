"""Stage 2 filtering: anchor-frame selection and 10 s clip carving.

Per-frame image-classifier confidences arrive as manifests; a frame's score
for a class is the max confidence over the class's visual signature. Frames
scoring strictly above the gate threshold become anchors and each anchor is
expanded five seconds to either side, shifting inward at video boundaries so
every clip keeps the full 10 s width.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import (
    ClipRecord,
    ManifestError,
    SoundClass,
    StageReport,
    VideoRecord,
    derive_clip_id,
    stage_report,
)

log = logging.getLogger(__name__)


class VideoTooShort(ValueError):
    """The video cannot hold a single full-width clip."""


@dataclass
class FrameScore:
    video_id: str
    time: float
    scores: dict[str, float]

    def __post_init__(self):
        if self.time < 0:
            raise ManifestError("frame time must be >= 0", field_name="time")
        for label, conf in self.scores.items():
            if not 0.0 <= conf <= 1.0:
                raise ManifestError(
                    f"confidence for {label!r} out of [0, 1]: {conf}", field_name="scores"
                )

    def to_json(self) -> dict:
        return {"video_id": self.video_id, "time": self.time, "scores": self.scores}

    @classmethod
    def from_json(cls, obj: dict) -> "FrameScore":
        return cls(
            video_id=obj["video_id"],
            time=float(obj["time"]),
            scores={k: float(v) for k, v in obj["scores"].items()},
        )


@dataclass
class VisualGateConfig:
    confidence_threshold: float = 0.2
    frames_per_video: int = 10
    clip_half_width: float = 5.0
    max_clips_per_video: int = 2
    # When set, replaces any-overlap suppression with a minimum anchor spacing.
    min_separation: float | None = None

    def __post_init__(self):
        if not 0.0 < self.confidence_threshold < 1.0:
            raise ValueError("confidence_threshold must be in (0, 1)")
        if self.frames_per_video < 1:
            raise ValueError("frames_per_video must be >= 1")
        if self.clip_half_width <= 0:
            raise ValueError("clip_half_width must be > 0")
        if self.max_clips_per_video < 1:
            raise ValueError("max_clips_per_video must be >= 1")


def load_frame_scores(path: str | Path) -> list[FrameScore]:
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"frame-score manifest not found: {path}")
    frames = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                frames.append(FrameScore.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ManifestError(f"bad frame-score record: {exc}", line=lineno) from None
    return frames


def select_anchor_frames(
    frames: Sequence[FrameScore],
    signature: Sequence[str],
    cfg: VisualGateConfig,
) -> list[tuple[float, float]]:
    """Pick up to frames_per_video anchor (time, score) pairs.

    A frame's signature score is the max confidence over the signature's
    labels; only scores strictly above the threshold survive. Sorting is by
    descending score with earlier frames winning ties.
    """
    video_ids = {f.video_id for f in frames}
    if len(video_ids) > 1:
        raise ValueError(f"frames span multiple videos: {sorted(video_ids)}")
    labels = list(signature)
    scored = []
    for frame in frames:
        score = max((frame.scores.get(label, 0.0) for label in labels), default=0.0)
        if score > cfg.confidence_threshold:
            scored.append((frame.time, score))
    scored.sort(key=lambda ts: (-ts[1], ts[0]))
    return scored[: cfg.frames_per_video]


def carve_clips(
    anchors: Sequence[tuple[float, float]],
    video: VideoRecord,
    cfg: VisualGateConfig,
) -> list[ClipRecord]:
    """Expand anchors into non-overlapping, boundary-shifted 10 s clips.

    Anchors are consumed in descending score order; an anchor whose shifted
    window overlaps an already accepted window is dropped (greedy suppression).
    At most max_clips_per_video clips are emitted.
    """
    width = 2 * cfg.clip_half_width
    if video.duration < width:
        raise VideoTooShort(
            f"video {video.video_id} is {video.duration:.1f}s, needs >= {width:.1f}s"
        )
    accepted: list[tuple[float, float, float]] = []  # (start, end, anchor_time)
    for time, score in sorted(anchors, key=lambda ts: (-ts[1], ts[0])):
        start = time - cfg.clip_half_width
        if start < 0.0:
            start = 0.0
        elif start + width > video.duration:
            start = video.duration - width
        end = start + width
        if cfg.min_separation is not None:
            clash = any(abs(time - at) < cfg.min_separation for _, _, at in accepted)
        else:
            clash = any(start < ae and as_ < end for as_, ae, _ in accepted)
        if clash:
            continue
        accepted.append((start, end, time))
        if len(accepted) >= cfg.max_clips_per_video:
            break
    clips = []
    for start, end, anchor_time in accepted:
        clips.append(
            ClipRecord(
                clip_id=derive_clip_id(video.video_id, start),
                video_id=video.video_id,
                class_id=video.class_id,
                start=start,
                end=end,
                anchor_frame_time=anchor_time,
                provenance={"visual_pass"},
            )
        )
    return clips


def run_visual_stage(
    videos: Sequence[VideoRecord],
    frame_scores: Iterable[FrameScore],
    signatures: dict[str, Sequence[str]],
    cfg: VisualGateConfig,
    classes: Sequence[SoundClass] | None = None,
    min_videos: int = 100,
) -> tuple[list[ClipRecord], StageReport]:
    """Gate every video and carve clips; per-video failures are logged and
    skipped, never abort the stage.

    Classes ending up under the minimum-video threshold are dropped and their
    clips discarded. The report counts what survives.
    """
    frames_by_video: dict[str, list[FrameScore]] = {}
    for frame in frame_scores:
        frames_by_video.setdefault(frame.video_id, []).append(frame)

    clips: list[ClipRecord] = []
    for video in sorted(videos, key=lambda v: v.video_id):
        signature = signatures.get(video.class_id)
        if signature is None:
            log.warning("no visual signature for class %s; skipping %s",
                        video.class_id, video.video_id)
            continue
        try:
            anchors = select_anchor_frames(
                frames_by_video.get(video.video_id, []), signature, cfg
            )
            clips.extend(carve_clips(anchors, video, cfg))
        except (VideoTooShort, ValueError) as exc:
            log.warning("skipping video %s: %s", video.video_id, exc)

    if classes is None:
        classes = _classes_from_videos(videos)
    live_videos = _videos_with_clips(videos, clips)
    report = stage_report(list(classes), live_videos, clips, stage=2, min_videos=min_videos)
    dropped = {cls.id for cls in classes if cls.status == "dropped"}
    clips = [clip for clip in clips if clip.class_id not in dropped]
    for cls in classes:
        if cls.status != "dropped":
            cls.advance_status("visually_verified")
    return clips, report


def _classes_from_videos(videos: Sequence[VideoRecord]) -> list[SoundClass]:
    ids = sorted({v.class_id for v in videos})
    return [SoundClass(id=i, display_label=i, group="others") for i in ids]


def _videos_with_clips(
    videos: Sequence[VideoRecord], clips: Sequence[ClipRecord]
) -> list[VideoRecord]:
    with_clips = {clip.video_id for clip in clips}
    return [v for v in videos if v.video_id in with_clips]
