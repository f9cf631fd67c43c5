"""Stage 4: human spot-check retention plus iterative noise filtering.

The stage runs in five steps. A seeded sample of clips per class is reviewed
by humans and classes with too few correct verdicts are discarded. Remaining
clips are filtered by a two-split ensemble of held-out classifiers with a
top-3 keep rule, rejected clips get a second chance through visual retrieval
against the kept positives, a final classifier trained on everything kept so
far retrieves once more, and near-duplicates are collapsed.
"""
from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .baseline_classifier import LinearSoftmaxModel, TrainConfig, top_k, train
from .corpus import ClipRecord, StageReport

log = logging.getLogger(__name__)

# A trainer closes over everything but the data: (features, labels, class_ids,
# seed) -> model exposing .predict(features) -> softmax score rows.
Trainer = Callable[[np.ndarray, Sequence[str], Sequence[str], int], LinearSoftmaxModel]


class UndecidedTasks(ValueError):
    """Retention was requested while some review verdicts are still pending."""


@dataclass
class ReviewTask:
    task_id: str
    class_id: str
    clip_id: str
    verdict: str = "pending"  # pending | correct | incorrect
    reviewer: str = ""
    decided_at: float | None = None

    def decide(self, verdict: str, reviewer: str, decided_at: float = 0.0):
        if self.verdict != "pending":
            raise ValueError(f"task {self.task_id} already decided: {self.verdict}")
        if verdict not in ("correct", "incorrect"):
            raise ValueError(f"verdict must be correct|incorrect, got {verdict!r}")
        self.verdict = verdict
        self.reviewer = reviewer
        self.decided_at = decided_at

    def to_json(self) -> dict:
        return {
            "task_id": self.task_id,
            "class_id": self.class_id,
            "clip_id": self.clip_id,
            "verdict": self.verdict,
            "reviewer": self.reviewer,
            "decided_at": self.decided_at,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ReviewTask":
        return cls(
            task_id=obj["task_id"],
            class_id=obj["class_id"],
            clip_id=obj["clip_id"],
            verdict=obj.get("verdict", "pending"),
            reviewer=obj.get("reviewer", ""),
            decided_at=obj.get("decided_at"),
        )


@dataclass
class EnsemblePrediction:
    clip_id: str
    fold_scores: list[np.ndarray]
    mean_scores: np.ndarray
    top3: list[str]

    def __post_init__(self):
        if len(self.fold_scores) != 2:
            raise ValueError("each clip must carry exactly 2 held-out score vectors")


@dataclass
class EnsembleAudit:
    """Bookkeeping proving every score was produced out-of-fold."""

    training_sets: dict[tuple[int, int], set[str]] = field(default_factory=dict)
    scored_by: dict[str, list[tuple[int, int]]] = field(default_factory=dict)

    def record_training(self, split: int, fold: int, clip_ids: Sequence[str]):
        self.training_sets[(split, fold)] = set(clip_ids)

    def record_scoring(self, clip_id: str, split: int, fold: int):
        if clip_id in self.training_sets.get((split, fold), ()):
            raise AssertionError(
                f"hygiene violation: {clip_id} scored by fold ({split}, {fold}) that trained on it"
            )
        self.scored_by.setdefault(clip_id, []).append((split, fold))

    def verify(self):
        for clip_id, folds in self.scored_by.items():
            for key in folds:
                if clip_id in self.training_sets.get(key, ()):
                    raise AssertionError(f"hygiene violation for {clip_id} in fold {key}")


def _class_rng(seed: int, class_id: str, salt: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, salt, zlib.crc32(class_id.encode("utf-8"))])


def sample_for_review(
    clips: Sequence[ClipRecord],
    class_id: str,
    n: int = 20,
    seed: int = 0,
) -> list[ReviewTask]:
    """Uniformly sample min(n, class size) clips of one class for human review."""
    members = sorted((c for c in clips if c.class_id == class_id), key=lambda c: c.clip_id)
    if not members:
        raise ValueError(f"class {class_id!r} has no clips to sample")
    rng = _class_rng(seed, class_id)
    chosen = rng.choice(len(members), size=min(n, len(members)), replace=False)
    tasks = []
    for i in sorted(chosen.tolist()):
        clip = members[i]
        tasks.append(
            ReviewTask(
                task_id=f"{class_id}::{clip.clip_id}",
                class_id=class_id,
                clip_id=clip.clip_id,
            )
        )
    return tasks


def build_review_round(
    clips: Sequence[ClipRecord], n: int = 20, seed: int = 0
) -> list[ReviewTask]:
    """One round: a seeded sample of n pending tasks per class, every class."""
    tasks: list[ReviewTask] = []
    for class_id in sorted({c.class_id for c in clips}):
        tasks.extend(sample_for_review(clips, class_id, n=n, seed=seed))
    return tasks


def apply_review_retention(
    tasks: Sequence[ReviewTask], min_fraction: float = 0.5
) -> dict[str, bool]:
    """Per-class keep/drop from decided review tasks.

    A class is kept iff correct/decided >= min_fraction ("at least half" is
    inclusive). Raises UndecidedTasks when any verdict is still pending.
    """
    pending = [t.task_id for t in tasks if t.verdict == "pending"]
    if pending:
        raise UndecidedTasks(f"{len(pending)} tasks undecided: {pending[:5]}...")
    by_class: dict[str, list[ReviewTask]] = {}
    for task in tasks:
        by_class.setdefault(task.class_id, []).append(task)
    decisions = {}
    for class_id, group in by_class.items():
        correct = sum(1 for t in group if t.verdict == "correct")
        decisions[class_id] = correct / len(group) >= min_fraction
    return decisions


def default_trainer(cfg: TrainConfig | None = None) -> Trainer:
    """Wrap baseline train() so the noise filter can inject fold seeds."""
    base = cfg or TrainConfig()

    def _train(X, labels, class_ids, seed):
        fold_cfg = TrainConfig(
            learning_rate=base.learning_rate,
            plateau_factor=base.plateau_factor,
            plateau_patience=base.plateau_patience,
            max_epochs=base.max_epochs,
            batch_size=base.batch_size,
            val_fraction=base.val_fraction,
            beta1=base.beta1,
            beta2=base.beta2,
            epsilon=base.epsilon,
            seed=seed,
        )
        return train(X, labels, fold_cfg, class_ids=class_ids)

    return _train


def two_split_ensemble_filter(
    clips: Sequence[ClipRecord],
    features: Mapping[str, np.ndarray],
    trainer: Trainer,
    seed: int = 0,
    top_k_keep: int = 3,
) -> tuple[list[ClipRecord], list[ClipRecord], dict[str, EnsemblePrediction], EnsembleAudit]:
    """Two independent seeded half-splits; every clip is scored only by models
    that never saw it.

    Within one split each class's clips are halved; a model trained on one
    half scores the other, in both directions, so each split contributes one
    held-out score vector per clip and the two splits together give two. A
    clip is an easy positive iff its own class label lands in the top
    `top_k_keep` of the mean vector.
    """
    class_ids = sorted({c.class_id for c in clips})
    by_class: dict[str, list[ClipRecord]] = {cid: [] for cid in class_ids}
    for clip in clips:
        by_class[clip.class_id].append(clip)
    for group in by_class.values():
        group.sort(key=lambda c: c.clip_id)

    splittable = {cid for cid, group in by_class.items() if len(group) >= 2}
    passthrough = [c for cid in class_ids if cid not in splittable for c in by_class[cid]]
    if passthrough:
        log.warning(
            "%d clips in classes too small to split pass through to rejected", len(passthrough)
        )
    live_classes = sorted(splittable)
    if len(live_classes) < 2:
        raise ValueError("need at least 2 splittable classes for the ensemble")

    pool = [c for cid in live_classes for c in by_class[cid]]
    missing = [c.clip_id for c in pool if c.clip_id not in features]
    if missing:
        raise KeyError(f"clips missing classifier features: {missing[:5]}...")

    fold_vectors: dict[str, list[np.ndarray]] = {c.clip_id: [] for c in pool}
    audit = EnsembleAudit()
    for split in (0, 1):
        halves: tuple[list[ClipRecord], list[ClipRecord]] = ([], [])
        for cid in live_classes:
            group = by_class[cid]
            order = _class_rng(seed, cid, salt=split + 1).permutation(len(group))
            mid = len(group) // 2
            halves[0].extend(group[i] for i in order[:mid])
            halves[1].extend(group[i] for i in order[mid:])
        for fold in (0, 1):
            train_half = sorted(halves[fold], key=lambda c: c.clip_id)
            score_half = sorted(halves[1 - fold], key=lambda c: c.clip_id)
            X = np.vstack([features[c.clip_id] for c in train_half])
            labels = [c.class_id for c in train_half]
            model = trainer(X, labels, live_classes, int(np.random.default_rng(
                [seed, 10 + split, fold]).integers(0, 2**31)))
            audit.record_training(split, fold, [c.clip_id for c in train_half])
            scores = model.predict(np.vstack([features[c.clip_id] for c in score_half]))
            for clip, row in zip(score_half, scores):
                audit.record_scoring(clip.clip_id, split, fold)
                fold_vectors[clip.clip_id].append(np.asarray(row, dtype=np.float64))

    easy: list[ClipRecord] = []
    rejected: list[ClipRecord] = list(passthrough)
    predictions: dict[str, EnsemblePrediction] = {}
    for clip in pool:
        vectors = fold_vectors[clip.clip_id]
        if len(vectors) != 2:
            raise AssertionError(f"clip {clip.clip_id} accrued {len(vectors)} fold scores")
        mean = (vectors[0] + vectors[1]) / 2.0
        top3 = top_k(mean, live_classes, min(top_k_keep, len(live_classes)))
        predictions[clip.clip_id] = EnsemblePrediction(clip.clip_id, vectors, mean, top3)
        if clip.class_id in top3:
            clip.provenance.add("ensemble_easy")
            easy.append(clip)
        else:
            rejected.append(clip)
    return easy, rejected, predictions, audit


def mine_hard_positives(
    easy_positives: Sequence[ClipRecord],
    rejected: Sequence[ClipRecord],
    features: Mapping[str, np.ndarray],
    tau: float = 0.7,
    k: int = 5,
) -> tuple[list[ClipRecord], list[ClipRecord]]:
    """Visual retrieval of hard positives from the rejected pool.

    A rejected clip is mined when its max cosine similarity to the k nearest
    easy positives of its own class reaches tau. Returns (hard, still_rejected);
    clips without a feature vector are skipped with a warning and stay rejected.
    """
    positives_by_class: dict[str, list[np.ndarray]] = {}
    for clip in easy_positives:
        vec = features.get(clip.clip_id)
        if vec is None:
            log.warning("easy positive %s has no visual feature", clip.clip_id)
            continue
        positives_by_class.setdefault(clip.class_id, []).append(_unit(vec))

    hard: list[ClipRecord] = []
    still_rejected: list[ClipRecord] = []
    for clip in rejected:
        vec = features.get(clip.clip_id)
        anchors = positives_by_class.get(clip.class_id)
        if vec is None:
            log.warning("rejected clip %s has no visual feature; skipped", clip.clip_id)
            still_rejected.append(clip)
            continue
        if not anchors:
            still_rejected.append(clip)
            continue
        sims = np.array([float(np.dot(_unit(vec), a)) for a in anchors])
        nearest = np.sort(sims)[::-1][: min(k, len(sims))]
        if nearest.max() >= tau:
            clip.provenance.add("mined_hard")
            hard.append(clip)
        else:
            still_rejected.append(clip)
    return hard, still_rejected


def final_retrieval(
    kept: Sequence[ClipRecord],
    rejected: Sequence[ClipRecord],
    features: Mapping[str, np.ndarray],
    trainer: Trainer,
    seed: int = 0,
    top_k_keep: int = 3,
) -> tuple[list[ClipRecord], list[ClipRecord]]:
    """Train once on all kept (easy plus hard) clips and rescore the rejected
    pool; a clip whose class lands in the top-3 is recovered.

    Returns (recovered, still_rejected).
    """
    class_ids = sorted({c.class_id for c in kept})
    if len(class_ids) < 2:
        log.warning("final retrieval skipped: fewer than 2 trainable classes")
        return [], list(rejected)
    training = sorted(kept, key=lambda c: c.clip_id)
    X = np.vstack([features[c.clip_id] for c in training])
    labels = [c.class_id for c in training]
    model = trainer(X, labels, class_ids, int(np.random.default_rng([seed, 99]).integers(0, 2**31)))

    recovered: list[ClipRecord] = []
    still_rejected: list[ClipRecord] = []
    for clip in sorted(rejected, key=lambda c: c.clip_id):
        vec = features.get(clip.clip_id)
        if vec is None or clip.class_id not in class_ids:
            still_rejected.append(clip)
            continue
        scores = model.predict(vec)
        if clip.class_id in top_k(scores, class_ids, min(top_k_keep, len(class_ids))):
            clip.provenance.add("final_retrieved")
            recovered.append(clip)
        else:
            still_rejected.append(clip)
    return recovered, still_rejected


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def deduplicate(
    clips: Sequence[ClipRecord],
    features: Mapping[str, np.ndarray],
    sim_threshold: float = 0.99,
) -> list[ClipRecord]:
    """Collapse near-duplicates within each class.

    Clips form connected components under cosine similarity >= threshold; the
    lowest clip_id survives per component, so the result is independent of
    input order. Clips without a feature are treated as unique.
    """
    by_class: dict[str, list[ClipRecord]] = {}
    for clip in clips:
        by_class.setdefault(clip.class_id, []).append(clip)

    survivors: list[ClipRecord] = []
    for class_id in sorted(by_class):
        group = sorted(by_class[class_id], key=lambda c: c.clip_id)
        featured = [c for c in group if c.clip_id in features]
        survivors.extend(c for c in group if c.clip_id not in features)
        if not featured:
            continue
        vectors = np.vstack([_unit(features[c.clip_id]) for c in featured])
        sims = vectors @ vectors.T
        uf = _UnionFind(len(featured))
        for i in range(len(featured)):
            for j in range(i + 1, len(featured)):
                if sims[i, j] >= sim_threshold:
                    uf.union(i, j)
        roots: dict[int, ClipRecord] = {}
        for i, clip in enumerate(featured):
            root = uf.find(i)
            if root not in roots or clip.clip_id < roots[root].clip_id:
                roots[root] = clip
        survivors.extend(roots.values())
    return sorted(survivors, key=lambda c: (c.class_id, c.clip_id))


def _unit(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        raise ValueError("zero feature vector cannot be normalized")
    if abs(norm - 1.0) > 1e-6:
        vec = vec / norm
    return vec


@dataclass
class NoiseFilterResult:
    easy: list[ClipRecord]
    hard: list[ClipRecord]
    recovered: list[ClipRecord]
    rejected: list[ClipRecord]
    final: list[ClipRecord]
    retention: dict[str, bool]
    tasks: list[ReviewTask]
    predictions: dict[str, EnsemblePrediction]
    audit: EnsembleAudit
    report: StageReport

    def partition_ok(self, inputs: Sequence[ClipRecord]) -> bool:
        buckets = [c.clip_id for c in self.easy + self.hard + self.recovered + self.rejected]
        return sorted(buckets) == sorted(c.clip_id for c in inputs)


def run_noise_filter_stage(
    clips: Sequence[ClipRecord],
    audio_features: Mapping[str, np.ndarray],
    visual_features: Mapping[str, np.ndarray],
    trainer: Trainer,
    *,
    tasks: Sequence[ReviewTask] | None = None,
    verdicts: Mapping[str, str] | None = None,
    truth: Mapping[str, str] | None = None,
    review_sample: int = 20,
    review_min_fraction: float = 0.5,
    top_k_keep: int = 3,
    mining_tau: float = 0.7,
    mining_k: int = 5,
    dedup_threshold: float = 0.99,
    seed: int = 0,
) -> NoiseFilterResult:
    """Run the complete stage: review, ensemble, mining, retrieval, dedup.

    The review round is `tasks` when given (e.g. a round already decided
    through the HTTP service), otherwise freshly sampled. Pending tasks are
    decided from `verdicts` (task_id -> correct|incorrect) or simulated from
    `truth` (clip_id -> true class, the desk-scale path); with neither source
    the stage stops with UndecidedTasks. easy/hard/recovered/rejected
    partition the input exactly; `final` is the deduplicated union of the
    three kept buckets.
    """
    clips = list(clips)

    if tasks is None:
        tasks = build_review_round(clips, n=review_sample, seed=seed)
    tasks = list(tasks)
    for task in tasks:
        if task.verdict != "pending":
            continue
        if verdicts is not None:
            task.decide(verdicts[task.task_id], reviewer="manifest", decided_at=0.0)
        elif truth is not None:
            verdict = "correct" if truth.get(task.clip_id) == task.class_id else "incorrect"
            task.decide(verdict, reviewer="auto", decided_at=0.0)
        else:
            raise UndecidedTasks(
                "review round has pending tasks and no verdict source was given"
            )
    retention = apply_review_retention(tasks, min_fraction=review_min_fraction)
    retained_classes = {cid for cid, keep in retention.items() if keep}
    surviving = []
    rejected_seed: list[ClipRecord] = []
    for clip in clips:
        if clip.class_id in retained_classes:
            clip.provenance.add("review_pass")
            surviving.append(clip)
        else:
            rejected_seed.append(clip)

    easy, rejected, predictions, audit = two_split_ensemble_filter(
        surviving, audio_features, trainer, seed=seed, top_k_keep=top_k_keep
    )
    audit.verify()

    hard, rejected = mine_hard_positives(
        easy, rejected, visual_features, tau=mining_tau, k=mining_k
    )
    recovered, rejected = final_retrieval(
        easy + hard, rejected, audio_features, trainer, seed=seed, top_k_keep=top_k_keep
    )
    rejected = rejected + rejected_seed

    final = deduplicate(easy + hard + recovered, visual_features, sim_threshold=dedup_threshold)
    report = StageReport(
        stage=4,
        classes_remaining=len({c.class_id for c in final}),
        videos_remaining=len({c.video_id for c in final}),
        clips_remaining=len(final),
    )
    return NoiseFilterResult(
        easy=easy,
        hard=hard,
        recovered=recovered,
        rejected=sorted(rejected, key=lambda c: (c.class_id, c.clip_id)),
        final=final,
        retention=retention,
        tasks=tasks,
        predictions=predictions,
        audit=audit,
        report=report,
    )


def label_purity(clips: Sequence[ClipRecord], truth: Mapping[str, str]) -> float:
    """Fraction of clips whose planted label matches their assigned class."""
    if not clips:
        raise ValueError("purity of an empty clip set is undefined")
    hits = sum(1 for c in clips if truth.get(c.clip_id) == c.class_id)
    return hits / len(clips)
