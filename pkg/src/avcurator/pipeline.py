"""Stage execution, run-state persistence and split generation.

Each stage reads the previous stage's persisted manifests and writes its own,
so a run can be killed and resumed between stages; rerunning a completed
stage with an unchanged config is a no-op. All outputs are written in a
canonical order, making two runs with identical inputs, config and seed
byte-identical.
"""
from __future__ import annotations

import json
import logging
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import audio_stage, noise_filter, query_expansion, signature_matcher, visual_stage
from .baseline_classifier import TrainConfig, load_feature_manifest
from .config import PipelineConfig
from .corpus import (
    ClipRecord,
    SoundClass,
    StageReport,
    VideoRecord,
    load_manifest,
    save_manifest,
    stage_report,
)

log = logging.getLogger(__name__)


class MissingUpstream(RuntimeError):
    """A stage was requested before its upstream stage produced outputs."""


class ConfigMismatch(RuntimeError):
    """Resume attempted with a config differing from the one that started the run."""


class PendingReview(RuntimeError):
    """Stage 4 sampled its review round but verdicts are still outstanding."""


@dataclass
class RunState:
    run_id: str
    config_hash: str
    completed_stages: list[int] = field(default_factory=list)
    stage_reports: list[StageReport] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "run_id": self.run_id,
            "config_hash": self.config_hash,
            "completed_stages": sorted(self.completed_stages),
            "stage_reports": [r.to_json() for r in sorted(self.stage_reports,
                                                          key=lambda r: r.stage)],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RunState":
        return cls(
            run_id=obj["run_id"],
            config_hash=obj["config_hash"],
            completed_stages=list(obj.get("completed_stages", [])),
            stage_reports=[StageReport.from_json(r) for r in obj.get("stage_reports", [])],
        )

    def save(self, path: str | Path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.to_json(), indent=2, sort_keys=True), encoding="utf-8")
        tmp.replace(path)

    @classmethod
    def load(cls, path: str | Path) -> "RunState":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


class PipelineRun:
    """Filesystem layout and stage dispatch for one configured run."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.workdir = Path(config.workdir)
        self.manifests = self.workdir / "manifests"
        self.reports = self.workdir / "reports"
        self.review_dir = self.workdir / "review"
        self.state_path = self.workdir / "run_state.json"

    # ---- state -----------------------------------------------------------

    def load_state(self) -> RunState:
        if self.state_path.exists():
            state = RunState.load(self.state_path)
            if state.config_hash != self.config.config_hash():
                raise ConfigMismatch(
                    f"run was started with config {state.config_hash[:12]}, "
                    f"current config is {self.config.config_hash()[:12]}"
                )
            return state
        digest = self.config.config_hash()
        return RunState(run_id=f"run-{digest[:12]}", config_hash=digest)

    def _commit_stage(self, state: RunState, report: StageReport):
        state.stage_reports = [r for r in state.stage_reports if r.stage != report.stage]
        state.stage_reports.append(report)
        if report.stage not in state.completed_stages:
            state.completed_stages.append(report.stage)
        report_path = self.reports / f"stage{report.stage}.json"
        report_path.parent.mkdir(parents=True, exist_ok=True)
        tmp = report_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(report.to_json(), indent=2, sort_keys=True), encoding="utf-8")
        tmp.replace(report_path)
        state.save(self.state_path)

    # ---- stage inputs ----------------------------------------------------

    def _classes(self, stage: int) -> list[SoundClass]:
        for prev in range(stage - 1, 0, -1):
            path = self.manifests / f"classes.stage{prev}.jsonl"
            if path.exists():
                return load_manifest(path, "classes")
        if not self.config.classes_path:
            raise MissingUpstream("no classes manifest configured")
        return load_manifest(self.config.classes_path, "classes")

    def _videos(self) -> list[VideoRecord]:
        if not self.config.videos_path:
            raise MissingUpstream("no videos manifest configured")
        return load_manifest(self.config.videos_path, "videos")

    def _clips(self, stage: int) -> list[ClipRecord]:
        path = self.manifests / f"clips.stage{stage}.jsonl"
        if not path.exists():
            raise MissingUpstream(f"stage {stage} clips not found at {path}; run stage {stage} first")
        return load_manifest(path, "clips")

    # ---- stages ----------------------------------------------------------

    def run(self, stages: Sequence[int]) -> RunState:
        stages = sorted(set(stages))
        if any(s not in (1, 2, 3, 4) for s in stages):
            raise ValueError(f"stages must be within 1..4, got {stages}")
        state = self.load_state()
        handlers = {1: self._stage1, 2: self._stage2, 3: self._stage3, 4: self._stage4}
        for stage in stages:
            if stage in state.completed_stages:
                log.info("stage %d already complete for this config; skipping", stage)
                continue
            if stage > 1 and (stage - 1) not in state.completed_stages:
                raise MissingUpstream(
                    f"stage {stage} requested but stage {stage - 1} has not completed"
                )
            report = handlers[stage]()
            self._commit_stage(state, report)
        return state

    def _stage1(self) -> StageReport:
        cfg = self.config
        classes = self._classes(1)
        videos = self._videos()
        lexicons = [query_expansion.Lexicon.load(p) for p in cfg.lexicon_paths]
        variants = []
        for cls in sorted(classes, key=lambda c: c.id):
            if cls.status == "dropped":
                continue
            variants.extend(query_expansion.expand_queries(cls, lexicons))
        query_expansion.emit_query_manifest(variants, self.manifests / "queries.jsonl")
        report = stage_report(classes, videos, [], stage=1, min_videos=cfg.min_videos)
        save_manifest(sorted(classes, key=lambda c: c.id), self.manifests / "classes.stage1.jsonl")
        live = {c.id for c in classes if c.status != "dropped"}
        save_manifest(
            sorted((v for v in videos if v.class_id in live), key=lambda v: v.video_id),
            self.manifests / "videos.stage1.jsonl",
        )
        return report

    def _stage2(self) -> StageReport:
        cfg = self.config
        classes = self._classes(2)
        videos_path = self.manifests / "videos.stage1.jsonl"
        if not videos_path.exists():
            raise MissingUpstream("stage 1 video manifest missing; run stage 1 first")
        videos = load_manifest(videos_path, "videos")
        if not cfg.frame_scores_path:
            raise MissingUpstream("no frame-score manifest configured")
        frames = visual_stage.load_frame_scores(cfg.frame_scores_path)
        signatures = self._signatures(classes)

        gate = visual_stage.VisualGateConfig(
            confidence_threshold=cfg.visual_threshold,
            frames_per_video=cfg.frames_per_video,
            clip_half_width=cfg.clip_half_width,
            max_clips_per_video=cfg.max_clips_per_video,
        )
        live = [c for c in classes if c.status != "dropped"]
        live_ids = {c.id for c in live}
        clips, report = visual_stage.run_visual_stage(
            [v for v in videos if v.class_id in live_ids],
            frames,
            signatures,
            gate,
            classes=live,
            min_videos=cfg.min_videos,
        )
        save_manifest(sorted(clips, key=lambda c: (c.class_id, c.clip_id)),
                      self.manifests / "clips.stage2.jsonl")
        save_manifest(sorted(classes, key=lambda c: c.id), self.manifests / "classes.stage2.jsonl")
        return report

    def _signatures(self, classes: Sequence[SoundClass]) -> dict[str, list[str]]:
        cfg = self.config
        live = [c for c in classes if c.status != "dropped"]
        # Signatures already attached to the class records win.
        if all(c.visual_signature for c in live):
            return {c.id: list(c.visual_signature) for c in live}
        if not cfg.embeddings_path or not cfg.visual_labels_path:
            raise MissingUpstream(
                "classes lack visual signatures and no embeddings/visual labels configured"
            )
        table = signature_matcher.EmbeddingTable.load(cfg.embeddings_path)
        visual_labels = [
            line.strip()
            for line in Path(cfg.visual_labels_path).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        overrides = {}
        if cfg.overrides_path:
            overrides = json.loads(Path(cfg.overrides_path).read_text(encoding="utf-8"))
        sound_labels = [c.display_label for c in live]
        S, embedded_sound = signature_matcher.embed_labels(sound_labels, table)
        O, embedded_visual = signature_matcher.embed_labels(visual_labels, table)
        affinity = signature_matcher.affinity_matrix(S, O, embedded_sound, embedded_visual)
        signatures = {}
        for cls in live:
            if cls.display_label not in embedded_sound:
                override = overrides.get(cls.display_label)
                if override is None:
                    log.warning("class %s cannot be embedded and has no override", cls.id)
                    continue
                signatures[cls.id] = [override]
                continue
            signatures[cls.id] = signature_matcher.top_k_signature(
                affinity, cls.display_label, k=cfg.signature_k, keyword_overrides=overrides
            )
            cls.visual_signature = signatures[cls.id][:20]
        return signatures

    def _stage3(self) -> StageReport:
        cfg = self.config
        classes = self._classes(3)
        clips = self._clips(2)
        if not cfg.audio_scores_path:
            raise MissingUpstream("no audio-score manifest configured")
        scores = audio_stage.load_gate_scores(cfg.audio_scores_path)
        live = [c for c in classes if c.status != "dropped"]
        policies = audio_stage.policies_for_classes(live, threshold=cfg.audio_threshold)
        videos_path = self.manifests / "videos.stage1.jsonl"
        videos = load_manifest(videos_path, "videos") if videos_path.exists() else None
        result = audio_stage.run_audio_stage(
            clips,
            scores,
            policies,
            classes=live,
            videos=videos,
            min_clips=cfg.min_clips,
            min_videos=cfg.min_videos,
            on_missing=cfg.on_missing_scores,
        )
        save_manifest(sorted(result.clips, key=lambda c: (c.class_id, c.clip_id)),
                      self.manifests / "clips.stage3.jsonl")
        save_manifest(sorted(classes, key=lambda c: c.id), self.manifests / "classes.stage3.jsonl")
        return result.report

    def _stage4(self) -> StageReport:
        cfg = self.config
        classes = self._classes(4)
        clips = self._clips(3)
        if not cfg.audio_features_path or not cfg.visual_features_path:
            raise MissingUpstream("stage 4 needs audio and visual feature manifests")
        audio_features = load_feature_manifest(cfg.audio_features_path)
        visual_features = load_feature_manifest(cfg.visual_features_path)

        # The review round is sampled once and persisted before anything else,
        # so `curator serve` can pick it up; a round already decided through
        # the service (or a previous run) is reused as-is.
        tasks_path = self.review_dir / "round1.tasks.jsonl"
        if tasks_path.exists():
            tasks = _load_tasks(tasks_path)
        else:
            tasks = noise_filter.build_review_round(clips, n=cfg.review_sample, seed=cfg.seed)
            self.review_dir.mkdir(parents=True, exist_ok=True)
            save_manifest(tasks, tasks_path)

        verdicts = None
        truth = None
        if cfg.verdicts_path and Path(cfg.verdicts_path).exists():
            verdicts = _load_verdicts(cfg.verdicts_path)
        elif cfg.truth_path:
            truth = json.loads(Path(cfg.truth_path).read_text(encoding="utf-8"))

        trainer = noise_filter.default_trainer(TrainConfig(max_epochs=40, seed=cfg.seed))
        try:
            result = noise_filter.run_noise_filter_stage(
                clips,
                audio_features,
                visual_features,
                trainer,
                tasks=tasks,
                verdicts=verdicts,
                truth=truth,
                review_sample=cfg.review_sample,
                review_min_fraction=cfg.review_min_fraction,
                top_k_keep=cfg.top_k_keep,
                mining_tau=cfg.mining_tau,
                mining_k=cfg.mining_k,
                dedup_threshold=cfg.dedup_threshold,
                seed=cfg.seed,
            )
        except noise_filter.UndecidedTasks as exc:
            pending = sum(1 for t in tasks if t.verdict == "pending")
            raise PendingReview(
                f"{pending} review verdicts outstanding at {tasks_path}; "
                f"run `curator serve` to collect them, then rerun stage 4"
            ) from exc
        save_manifest(result.tasks, tasks_path)
        for name, bucket in (("easy", result.easy), ("hard", result.hard),
                             ("recovered", result.recovered), ("rejected", result.rejected)):
            save_manifest(sorted(bucket, key=lambda c: (c.class_id, c.clip_id)),
                          self.manifests / f"clips.stage4.{name}.jsonl")

        # Minimum-video rule applies at this boundary too.
        final = result.final
        videos_per_class: dict[str, set[str]] = {}
        for clip in final:
            videos_per_class.setdefault(clip.class_id, set()).add(clip.video_id)
        starved = {cid for cid, vids in videos_per_class.items()
                   if len(vids) < cfg.min_videos}
        if starved:
            final = [c for c in final if c.class_id not in starved]
        for cls in classes:
            if cls.status == "dropped":
                continue
            if not result.retention.get(cls.id, False) or cls.id in starved:
                cls.advance_status("dropped")
            else:
                cls.advance_status("retained")
        save_manifest(final, self.manifests / "clips.stage4.jsonl")
        save_manifest(sorted(classes, key=lambda c: c.id), self.manifests / "classes.stage4.jsonl")
        return StageReport(
            stage=4,
            classes_remaining=len({c.class_id for c in final}),
            videos_remaining=len({c.video_id for c in final}),
            clips_remaining=len(final),
        )


def run_pipeline(config: PipelineConfig, stages: Sequence[int] = (1, 2, 3, 4)) -> RunState:
    """Execute the requested stages in order; see PipelineRun for layout."""
    return PipelineRun(config).run(stages)


def _load_verdicts(path: str | Path) -> dict[str, str]:
    verdicts = {}
    with open(Path(path), encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            verdicts[obj["task_id"]] = obj["verdict"]
    return verdicts


def _load_tasks(path: Path) -> list:
    tasks = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                tasks.append(noise_filter.ReviewTask.from_json(json.loads(line)))
    return tasks


def make_splits(
    clips: Sequence[ClipRecord],
    config: PipelineConfig,
    seed: int | None = None,
) -> list[ClipRecord]:
    """Assign train/val/test splits per class, video-disjoint.

    Each class gets exactly test_per_class test clips and val_per_class val
    clips, remainder train; all clips of a video land in the same split. A
    class too small to fill both held-out splits plus at least one train clip
    is dropped with a warning (its clips stay unassigned).
    """
    if seed is None:
        seed = config.seed
    needed = config.test_per_class + config.val_per_class + 1
    by_class: dict[str, dict[str, list[ClipRecord]]] = {}
    for clip in clips:
        by_class.setdefault(clip.class_id, {}).setdefault(clip.video_id, []).append(clip)

    out: list[ClipRecord] = []
    for class_id in sorted(by_class):
        groups = by_class[class_id]
        total = sum(len(v) for v in groups.values())
        if total < needed:
            log.warning("class %s has %d clips (< %d); left unassigned",
                        class_id, total, needed)
            out.extend(_unassign(groups))
            continue
        video_ids = sorted(groups)
        rng = np.random.default_rng([seed, zlib.crc32(class_id.encode("utf-8"))])
        order = [video_ids[i] for i in rng.permutation(len(video_ids))]
        try:
            test_vids, order = _take_exact(order, groups, config.test_per_class)
            val_vids, order = _take_exact(order, groups, config.val_per_class)
        except ValueError as exc:
            log.warning("class %s: %s; left unassigned", class_id, exc)
            out.extend(_unassign(groups))
            continue
        assignment = {}
        for vid in test_vids:
            assignment[vid] = "test"
        for vid in val_vids:
            assignment[vid] = "val"
        for vid in order:
            assignment[vid] = "train"
        for vid in sorted(groups):
            for clip in groups[vid]:
                clip.split = assignment[vid]
                out.append(clip)
    return sorted(out, key=lambda c: (c.class_id, c.clip_id))


def _unassign(groups: dict[str, list[ClipRecord]]) -> list[ClipRecord]:
    clips = [c for vids in groups.values() for c in vids]
    for clip in clips:
        clip.split = "unassigned"
    return clips


def _take_exact(order: list[str], groups: dict[str, list[ClipRecord]], target: int):
    """Greedily pick videos whose clip counts sum exactly to target.

    Clips-per-video is 1 or 2, so when the greedy scan strands one remaining
    slot it swaps a selected single for an unselected pair (or fails if the
    parity is genuinely unreachable).
    """
    chosen: list[str] = []
    rest: list[str] = []
    remaining = target
    for vid in order:
        size = len(groups[vid])
        if size <= remaining:
            chosen.append(vid)
            remaining -= size
        else:
            rest.append(vid)
    if remaining > 0:
        single = next((v for v in chosen if len(groups[v]) == 1), None)
        pair = next((v for v in rest if len(groups[v]) == remaining + 1), None)
        if single is not None and pair is not None:
            chosen.remove(single)
            rest.append(single)
            chosen.append(pair)
            rest.remove(pair)
            remaining = 0
    if remaining > 0:
        raise ValueError(f"cannot select exactly {target} clips from video groups")
    return chosen, rest
