"""Command-line surface: one subcommand per pipeline capability."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import audio_stage, metrics, noise_filter, query_expansion, signature_matcher, visual_stage
from .baseline_classifier import TrainConfig, load_feature_manifest
from .config import PipelineConfig
from .corpus import load_manifest, save_manifest
from .dsp import crop_audio, read_wav, save_spectrogram, stft_spectrogram
from .pipeline import make_splits, run_pipeline
from .review_service import serve_review


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_help()
        return 2
    return args.func(args) or 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="curator",
                                     description="Audio-visual dataset curation pipeline")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("expand", help="Stage 1: expand class labels into query variants")
    p.add_argument("--classes", required=True)
    p.add_argument("--lexicon", action="append", default=[])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("match", help="Stage 2: compute visual signatures from embeddings")
    p.add_argument("--sound-classes", required=True)
    p.add_argument("--visual-classes", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--overrides")
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("visual", help="Stage 2: gate frames and carve clips")
    p.add_argument("--videos", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--signatures", required=True)
    p.add_argument("--threshold", type=float, default=0.2)
    p.add_argument("--min-videos", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_visual)

    p = sub.add_parser("audio", help="Stage 3: reject speech/music-dominated clips")
    p.add_argument("--clips", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--policies", help="JSON class_id -> {reject_speech, reject_music}")
    p.add_argument("--classes", help="classes manifest for policy derivation")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--min-clips", type=int, default=200)
    p.add_argument("--on-missing", choices=("keep", "drop"), default="drop")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_audio)

    p = sub.add_parser("filter", help="Stage 4: ensemble filtering, mining, dedup")
    p.add_argument("--clips", required=True)
    p.add_argument("--features", required=True, help="classifier feature manifest")
    p.add_argument("--visual-features", help="retrieval feature manifest (defaults to --features)")
    p.add_argument("--truth", help="clip_id -> class map for auto-review")
    p.add_argument("--verdicts", help="decided review tasks (JSONL)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tau", type=float, default=0.7)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("spectrogram", help="WAV to log-magnitude STFT matrix")
    p.add_argument("--in", dest="wav", required=True)
    p.add_argument("--seconds", type=float, help="random crop length (omit for full clip)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--target-frames", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_spectrogram)

    p = sub.add_parser("eval", help="score manifests to mAP/AUC/d-prime/top-k report")
    p.add_argument("--predictions", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run", help="execute pipeline stages from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--stages", default="1-4", help="e.g. 2 or 1-3 or 1,2,4")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("split", help="assign video-disjoint train/val/test splits")
    p.add_argument("--clips", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("serve", help="run the human review service")
    p.add_argument("--config", required=True)
    p.add_argument("--bind", default="127.0.0.1:8080")
    p.add_argument("--ui-dir")
    p.set_defaults(func=cmd_serve)
    return parser


def cmd_expand(args) -> int:
    classes = load_manifest(args.classes, "classes")
    lexicons = [query_expansion.Lexicon.load(p) for p in args.lexicon]
    variants = []
    for cls in sorted(classes, key=lambda c: c.id):
        variants.extend(query_expansion.expand_queries(cls, lexicons))
    count = query_expansion.emit_query_manifest(variants, args.out)
    print(f"wrote {count} query variants to {args.out}")
    return 0


def cmd_match(args) -> int:
    classes = load_manifest(args.sound_classes, "classes")
    visual_labels = [
        line.strip() for line in Path(args.visual_classes).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    table = signature_matcher.EmbeddingTable.load(args.embeddings)
    overrides = {}
    if args.overrides:
        overrides = json.loads(Path(args.overrides).read_text(encoding="utf-8"))
    sound_labels = [c.display_label for c in classes]
    S, embedded_sound = signature_matcher.embed_labels(sound_labels, table)
    O, embedded_visual = signature_matcher.embed_labels(visual_labels, table)
    affinity = signature_matcher.affinity_matrix(S, O, embedded_sound, embedded_visual)
    signatures = {}
    for cls in classes:
        if cls.display_label in embedded_sound:
            signatures[cls.id] = signature_matcher.top_k_signature(
                affinity, cls.display_label, k=args.k, keyword_overrides=overrides
            )
        elif cls.display_label in overrides:
            signatures[cls.id] = [overrides[cls.display_label]]
        else:
            print(f"warning: {cls.id} cannot be embedded and has no override", file=sys.stderr)
    Path(args.out).write_text(json.dumps(signatures, indent=2, sort_keys=True), encoding="utf-8")
    print(f"wrote {len(signatures)} signatures to {args.out}")
    return 0


def cmd_visual(args) -> int:
    videos = load_manifest(args.videos, "videos")
    frames = visual_stage.load_frame_scores(args.scores)
    signatures = json.loads(Path(args.signatures).read_text(encoding="utf-8"))
    cfg = visual_stage.VisualGateConfig(confidence_threshold=args.threshold)
    clips, report = visual_stage.run_visual_stage(
        videos, frames, signatures, cfg, min_videos=args.min_videos
    )
    save_manifest(sorted(clips, key=lambda c: (c.class_id, c.clip_id)), args.out)
    print(json.dumps(report.to_json()))
    return 0


def cmd_audio(args) -> int:
    clips = load_manifest(args.clips, "clips")
    scores = audio_stage.load_gate_scores(args.scores)
    if args.classes:
        classes = load_manifest(args.classes, "classes")
        policies = audio_stage.policies_for_classes(classes, threshold=args.threshold)
    elif args.policies:
        raw = json.loads(Path(args.policies).read_text(encoding="utf-8"))
        policies = {
            cid: audio_stage.RejectionPolicy(class_id=cid, threshold=args.threshold, **flags)
            for cid, flags in raw.items()
        }
    else:
        print("error: provide --classes or --policies", file=sys.stderr)
        return 2
    result = audio_stage.run_audio_stage(
        clips, scores, policies, min_clips=args.min_clips, on_missing=args.on_missing
    )
    save_manifest(sorted(result.clips, key=lambda c: (c.class_id, c.clip_id)), args.out)
    print(json.dumps(result.report.to_json()))
    if result.missing_scores:
        print(f"warning: {len(result.missing_scores)} clips lacked scores", file=sys.stderr)
    return 0


def cmd_filter(args) -> int:
    clips = load_manifest(args.clips, "clips")
    audio_features = load_feature_manifest(args.features)
    visual_features = (
        load_feature_manifest(args.visual_features) if args.visual_features else audio_features
    )
    truth = None
    verdicts = None
    if args.verdicts:
        verdicts = {}
        with open(args.verdicts, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    obj = json.loads(line)
                    verdicts[obj["task_id"]] = obj["verdict"]
    elif args.truth:
        truth = json.loads(Path(args.truth).read_text(encoding="utf-8"))
    trainer = noise_filter.default_trainer(TrainConfig(max_epochs=40, seed=args.seed))
    result = noise_filter.run_noise_filter_stage(
        clips, audio_features, visual_features, trainer,
        verdicts=verdicts, truth=truth, mining_tau=args.tau, seed=args.seed,
    )
    out = Path(args.out_dir)
    for name, bucket in (("easy", result.easy), ("hard", result.hard),
                         ("recovered", result.recovered), ("rejected", result.rejected)):
        save_manifest(sorted(bucket, key=lambda c: (c.class_id, c.clip_id)),
                      out / f"{name}.jsonl")
    save_manifest(result.final, out / "final.jsonl")
    print(json.dumps(result.report.to_json()))
    return 0


def cmd_spectrogram(args) -> int:
    buffer = read_wav(args.wav)
    if args.seconds is not None:
        buffer = crop_audio(buffer, args.seconds, mode="random", seed=args.seed)
    target = args.target_frames
    if target is None and args.seconds is not None:
        target = int(args.seconds * 100)
    spec = stft_spectrogram(buffer, target_frames=target)
    save_spectrogram(spec, args.out)
    rows, cols = spec.shape
    print(f"wrote {rows}x{cols} spectrogram to {args.out}")
    return 0


def cmd_eval(args) -> int:
    predictions = metrics.load_predictions(args.predictions)
    truth = metrics.load_truth(args.truth)
    report = metrics.evaluate(predictions, truth)
    report.save(args.out)
    summary = {k: report.to_json()[k] for k in ("map", "auc", "d_prime", "top1", "top5")}
    print(json.dumps(summary))
    return 0


def cmd_run(args) -> int:
    from .pipeline import PendingReview

    config = PipelineConfig.load(args.config)
    stages = _parse_stages(args.stages)
    try:
        state = run_pipeline(config, stages)
    except PendingReview as exc:
        print(f"review pending: {exc}", file=sys.stderr)
        return 3
    for report in sorted(state.stage_reports, key=lambda r: r.stage):
        print(json.dumps(report.to_json()))
    return 0


def cmd_split(args) -> int:
    clips = load_manifest(args.clips, "clips")
    config = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    assigned = make_splits(clips, config, seed=args.seed)
    save_manifest(assigned, args.out)
    counts: dict[str, int] = {}
    for clip in assigned:
        counts[clip.split] = counts.get(clip.split, 0) + 1
    print(json.dumps(counts, sort_keys=True))
    return 0


def cmd_serve(args) -> int:
    config = PipelineConfig.load(args.config)
    workdir = Path(config.workdir)
    tasks_path = workdir / "review" / "round1.tasks.jsonl"
    if not tasks_path.exists():
        print(f"error: no pending review round at {tasks_path}", file=sys.stderr)
        return 1
    serve_review(
        tasks_path,
        bind=args.bind,
        media_dir=config.media_dir or None,
        run_state_path=workdir / "run_state.json",
        ui_dir=args.ui_dir,
        lease_timeout_s=config.lease_timeout_s,
        min_fraction=config.review_min_fraction,
    )
    return 0


def _parse_stages(spec: str) -> list[int]:
    stages: set[int] = set()
    for part in spec.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            stages.update(range(int(lo), int(hi) + 1))
        elif part:
            stages.add(int(part))
    return sorted(stages)


if __name__ == "__main__":
    raise SystemExit(main())
