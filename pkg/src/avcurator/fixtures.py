"""Deterministic synthetic corpus for desk-scale end-to-end runs.

The generator plants a known fraction of label noise and separable synthetic
features, so the full cascade can run in seconds and its behavior can be
checked against ground truth: most planted noise must be filtered out, clean
clips with messy audio must be mined back through their visual features, and
everything must reproduce bit-for-bit from the seed.

Per class the corpus holds 135 videos: 5 fail the visual gate, 10 fail the
audio gate, and 120 clips survive to the noise-filter stage, of which 30%
carry a wrong label. Clean clips split into easy ones (clear audio), hard
ones (audio mixed with three confuser classes, recognizable visuals) and a
few very hard ones (same mixed audio, degraded visuals) that can only be
recovered by the final retrieval pass. A few duplicate pairs exercise
deduplication.
"""
from __future__ import annotations

import json
import zlib
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .corpus import SoundClass, VideoRecord, save_manifest
from .query_expansion import Lexicon
from .signature_matcher import EmbeddingTable

CLASS_DEFS = [
    ("dog_barking", "dog barking", "animals", "dog"),
    ("cat_meowing", "cat meowing", "animals", "cat"),
    ("playing_violin", "playing violin", "music", "violin"),
    ("playing_piano", "playing piano", "music", "piano"),
    ("helicopter_flying", "helicopter flying", "vehicle", "helicopter"),
    ("waterfall_burbling", "waterfall burbling", "nature", "waterfall"),
    ("typing_keyboard", "typing on computer keyboard", "home", "keyboard"),
    ("basketball_bounce", "basketball bounce", "sports", "basketball"),
    ("baby_crying", "baby crying", "people", "baby"),
    ("hammering_nails", "hammering nails", "tools", "hammer"),
]
DISTRACTOR_LABELS = [
    "bird", "boat", "car", "flower", "guitar",
    "horse", "house", "phone", "table", "tree",
]

N_ACCEPTED = 120          # clips entering the noise-filter stage, per class
N_NOISY = 36              # 30% planted label noise
N_HARD = 8                # clean, mixed audio, good visuals
N_VERY_HARD = 4           # clean, mixed audio, degraded visuals
N_AUDIO_REJECT = 10       # fail the speech/music gate
N_VISUAL_FAIL = 5         # videos whose frames never clear the visual gate
N_DUP_PAIRS = 3           # identical visual features within a class

AUDIO_DIM = 24
VISUAL_DIM = 64
EMBED_DIM = 32
VIDEO_DURATION = 60.0
CLIP_START = 15.0


def fixture_config(root: str | Path, seed: int = 7) -> PipelineConfig:
    """Config matching the generated corpus layout under `root`."""
    root = Path(root)
    inputs = root / "inputs"
    return PipelineConfig(
        seed=seed,
        min_videos=50,
        min_clips=100,
        signature_k=5,
        workdir=str(root / "run"),
        classes_path=str(inputs / "classes.jsonl"),
        videos_path=str(inputs / "videos.jsonl"),
        lexicon_paths=[str(inputs / "synonyms.json"), str(inputs / "spanish.json")],
        embeddings_path=str(inputs / "embeddings.txt"),
        overrides_path=str(inputs / "overrides.json"),
        visual_labels_path=str(inputs / "visual_labels.txt"),
        frame_scores_path=str(inputs / "frame_scores.jsonl"),
        audio_scores_path=str(inputs / "audio_scores.jsonl"),
        audio_features_path=str(inputs / "audio_features.jsonl"),
        visual_features_path=str(inputs / "visual_features.jsonl"),
        truth_path=str(inputs / "truth.json"),
    )


def generate_fixture(root: str | Path, seed: int = 7) -> PipelineConfig:
    """Write the complete synthetic corpus under `root`/inputs and return the
    config pointing at it."""
    root = Path(root)
    inputs = root / "inputs"
    inputs.mkdir(parents=True, exist_ok=True)
    class_ids = [cid for cid, _, _, _ in CLASS_DEFS]

    classes = [
        SoundClass(id=cid, display_label=label, group=group)
        for cid, label, group, _ in CLASS_DEFS
    ]
    save_manifest(classes, inputs / "classes.jsonl")

    Lexicon(
        kind="synonym",
        entries={"dog barking": ["dog woofing"], "waterfall burbling": ["cascade rushing"]},
    ).save(inputs / "synonyms.json")
    Lexicon(
        kind="translation",
        language="es",
        entries={"dog barking": ["perro ladrando"], "playing violin": ["tocar violin"]},
    ).save(inputs / "spanish.json")

    _write_embeddings(inputs / "embeddings.txt", seed)
    (inputs / "visual_labels.txt").write_text(
        "\n".join([visual for _, _, _, visual in CLASS_DEFS] + DISTRACTOR_LABELS) + "\n",
        encoding="utf-8",
    )
    # "hammering nails" has no in-vocabulary token, so it must go through the
    # keyword-override fallback rather than the embedding route.
    (inputs / "overrides.json").write_text(
        json.dumps({"playing violin": "violin", "hammering nails": "hammer"}, indent=2),
        encoding="utf-8",
    )

    videos: list[VideoRecord] = []
    frame_lines: list[str] = []
    audio_score_lines: list[str] = []
    audio_features: dict[str, np.ndarray] = {}
    visual_features: dict[str, np.ndarray] = {}
    truth: dict[str, str] = {}

    for k, (cid, label, group, visual) in enumerate(CLASS_DEFS):
        rng = np.random.default_rng([seed, 1000, zlib.crc32(cid.encode())])
        roles = _assign_roles(rng)
        music_class = group == "music"
        for i in range(N_ACCEPTED + N_AUDIO_REJECT + N_VISUAL_FAIL):
            video_id = f"v_{cid}_{i:03d}"
            videos.append(VideoRecord(video_id=video_id, duration=VIDEO_DURATION,
                                      class_id=cid, query_used=label))
            clip_id = f"{video_id}:{round(CLIP_START * 1000)}"
            visual_fail = i >= N_ACCEPTED + N_AUDIO_REJECT

            peak = 0.15 if visual_fail else 0.9
            for j, t in enumerate((20.0, 21.0, 22.0)):
                frame_lines.append(json.dumps({
                    "video_id": video_id, "time": t,
                    "scores": {visual: round(peak * (1.0 - 0.1 * j), 4)},
                }, sort_keys=True))
            if visual_fail:
                continue

            audio_reject = i >= N_ACCEPTED
            if audio_reject:
                idx = i - N_ACCEPTED
                if not music_class and idx >= 7:
                    gate = {"speech": 0.1, "music": 0.8, "other": 0.2}
                else:
                    gate = {"speech": 0.8, "music": 0.1, "other": 0.2}
            elif music_class:
                gate = {"speech": 0.1, "music": 0.6, "other": 0.3}
            else:
                gate = {"speech": 0.1, "music": 0.05, "other": 0.3}
            audio_score_lines.append(json.dumps({"clip_id": clip_id, **gate}, sort_keys=True))

            role = roles[i] if i < N_ACCEPTED else "clean"
            if role == "noisy":
                true_class = class_ids[(k + 1 + roles["noisy_targets"][i]) % len(class_ids)]
            else:
                true_class = cid
            truth[clip_id] = true_class

            t_idx = class_ids.index(true_class)
            confusers = [(k + 1) % 10, (k + 2) % 10, (k + 3) % 10]
            audio_features[clip_id] = _audio_feature(rng, t_idx, role, confusers)
            visual_features[clip_id] = _visual_feature(rng, t_idx, role)

        # Plant duplicate visual features among clean easy clips.
        for d in range(N_DUP_PAIRS):
            a = f"v_{cid}_{100 + d:03d}:{round(CLIP_START * 1000)}"
            b = f"v_{cid}_{110 + d:03d}:{round(CLIP_START * 1000)}"
            if a in visual_features and b in visual_features:
                visual_features[b] = visual_features[a].copy()

    save_manifest(videos, inputs / "videos.jsonl")
    (inputs / "frame_scores.jsonl").write_text("\n".join(frame_lines) + "\n", encoding="utf-8")
    (inputs / "audio_scores.jsonl").write_text(
        "\n".join(audio_score_lines) + "\n", encoding="utf-8"
    )
    _write_features(audio_features, inputs / "audio_features.jsonl")
    _write_features(visual_features, inputs / "visual_features.jsonl")
    (inputs / "truth.json").write_text(
        json.dumps(truth, indent=0, sort_keys=True), encoding="utf-8"
    )

    config = fixture_config(root, seed=seed)
    config.save(root / "config.toml")
    return config


def _assign_roles(rng: np.random.Generator) -> dict:
    """Role per accepted-clip index: 36 noisy, 8 hard, 4 very_hard, rest clean.

    Roles are spread over the index range by a seeded permutation so review
    sampling sees a representative mix. Clean clips keep indexes 100..115
    reserved for the planted duplicates (duplicates must be clean)."""
    reserved = set(range(100, 100 + N_DUP_PAIRS)) | set(range(110, 110 + N_DUP_PAIRS))
    assignable = [i for i in range(N_ACCEPTED) if i not in reserved]
    order = [assignable[j] for j in rng.permutation(len(assignable))]
    roles: dict = {i: "clean" for i in range(N_ACCEPTED)}
    cursor = 0
    for count, name in ((N_NOISY, "noisy"), (N_HARD, "hard"), (N_VERY_HARD, "very_hard")):
        for i in order[cursor:cursor + count]:
            roles[i] = name
        cursor += count
    noisy_targets = {}
    j = 0
    for i in range(N_ACCEPTED):
        if roles[i] == "noisy":
            noisy_targets[i] = j % 9
            j += 1
    roles["noisy_targets"] = noisy_targets
    return roles


def _audio_feature(rng, true_idx: int, role: str, confusers: list[int]) -> np.ndarray:
    base = np.zeros(AUDIO_DIM)
    if role in ("hard", "very_hard"):
        base[true_idx] = 0.15
        for weight, j in zip((0.60, 0.55, 0.50), confusers):
            base[j] = weight
    else:
        base[true_idx] = 1.0
    return base + 0.08 * rng.standard_normal(AUDIO_DIM)


def _visual_feature(rng, true_idx: int, role: str) -> np.ndarray:
    # Mislabeled clips carry no coherent visual pattern (the false positives
    # are not from any one category), so they cannot seed visual retrieval.
    if role == "noisy":
        vec = rng.standard_normal(VISUAL_DIM)
        return vec / np.linalg.norm(vec)
    base = np.zeros(VISUAL_DIM)
    base[true_idx] = 1.0
    sigma = 0.3 if role == "very_hard" else 0.05
    vec = base + sigma * rng.standard_normal(VISUAL_DIM)
    return vec / np.linalg.norm(vec)


def _write_embeddings(path: Path, seed: int):
    """One orthogonal basis direction per concept; label tokens outside this
    vocabulary are deliberately out of vocabulary."""
    tokens = [visual for _, _, _, visual in CLASS_DEFS] + DISTRACTOR_LABELS
    vectors = {}
    for idx, token in enumerate(tokens):
        vec = np.zeros(EMBED_DIM)
        vec[idx] = 1.0
        vectors[token] = vec
    EmbeddingTable(dimension=EMBED_DIM, vectors=vectors).save(path)


def _write_features(features: dict[str, np.ndarray], path: Path):
    with open(path, "w", encoding="utf-8") as fh:
        for clip_id in sorted(features):
            vec = [round(float(x), 10) for x in features[clip_id]]
            fh.write(json.dumps({"clip_id": clip_id, "vector": vec}) + "\n")


def load_truth(root: str | Path) -> dict[str, str]:
    return json.loads((Path(root) / "inputs" / "truth.json").read_text(encoding="utf-8"))
