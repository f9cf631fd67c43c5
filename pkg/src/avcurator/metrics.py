"""Evaluation stack: per-class AP and AUC, macro mAP/AUC, d-prime, top-k.

Average precision ranks by descending score with ties kept in input order;
AUC follows the Mann-Whitney convention with half credit for ties; d-prime
maps an AUC through the probit, sqrt(2) * inverse-normal-CDF(auc). Aggregates
are macro (unweighted class) means.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtri

from .baseline_classifier import top_k


def average_precision(scores: Sequence[float], labels: Sequence[int]) -> float:
    """AP = mean over positive ranks of precision at that rank.

    Ranking is by descending score, ties resolved stably by input order.
    Raises when there is no positive label.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have equal length")
    if not np.any(labels == 1):
        raise ValueError("average precision undefined without positives")
    order = np.argsort(-scores, kind="stable")
    ranked = labels[order]
    cum_pos = np.cumsum(ranked)
    ranks = np.arange(1, len(ranked) + 1)
    precisions = cum_pos[ranked == 1] / ranks[ranked == 1]
    return float(precisions.mean())


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 * P(tie).

    Computed from midranks, which is exactly the pair-counting value.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative")
    ranks = _midranks(scores)
    rank_sum = float(ranks[labels == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _midranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def d_prime(auc: float) -> float:
    """Equivalent class separation in standard-deviation units.

    d' = sqrt(2) * probit(auc). Chance (0.5) maps to 0; perfect separation
    returns an explicit +/- infinity marker.
    """
    if not 0.0 <= auc <= 1.0:
        raise ValueError(f"auc must be in [0, 1], got {auc}")
    if auc == 0.0:
        return float("-inf")
    if auc == 1.0:
        return float("inf")
    return float(math.sqrt(2.0) * ndtri(auc))


def top_k_accuracy(
    predictions: Mapping[str, Mapping[str, float]],
    truth: Mapping[str, str],
    k: int,
) -> float:
    """Fraction of clips whose true class appears in the top-k of its scores."""
    if not predictions:
        raise ValueError("no predictions given")
    hits = 0
    for clip_id, scores in predictions.items():
        if clip_id not in truth:
            raise KeyError(f"clip {clip_id!r} has no truth label")
        class_ids = sorted(scores)
        vector = np.array([scores[c] for c in class_ids])
        if truth[clip_id] in top_k(vector, class_ids, min(k, len(class_ids))):
            hits += 1
    missing = set(truth) - set(predictions)
    if missing:
        raise KeyError(f"clips missing predictions: {sorted(missing)[:5]}")
    return hits / len(predictions)


@dataclass
class EvalReport:
    per_class: dict[str, dict]
    map: float | None
    auc: float | None
    d_prime: float | None
    top1: float
    top5: float
    num_classes: int
    num_clips: int

    def to_json(self) -> dict:
        return {
            "per_class": self.per_class,
            "map": self.map,
            "auc": self.auc,
            "d_prime": self.d_prime,
            "top1": self.top1,
            "top5": self.top5,
            "num_classes": self.num_classes,
            "num_clips": self.num_clips,
        }

    def save(self, path: str | Path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True),
                              encoding="utf-8")


def evaluate(
    predictions: Mapping[str, Mapping[str, float]],
    truth: Mapping[str, str],
) -> EvalReport:
    """One-vs-rest evaluation over all clips.

    Per-class AP/AUC require at least one positive (and for AUC, one
    negative); classes without are excluded from macro means and reported
    with their support. d-prime is derived from the macro AUC.
    """
    if not predictions:
        raise ValueError("no predictions to evaluate")
    clip_ids = sorted(predictions)
    universe = sorted(next(iter(predictions.values())))
    for clip_id in clip_ids:
        if sorted(predictions[clip_id]) != universe:
            raise ValueError(f"inconsistent class universe at clip {clip_id!r}")
        if clip_id not in truth:
            raise KeyError(f"clip {clip_id!r} has no truth label")
    unknown = set(truth.values()) - set(universe)
    if unknown:
        raise ValueError(f"truth labels outside the class universe: {sorted(unknown)}")

    per_class: dict[str, dict] = {}
    aps, aucs = [], []
    for class_id in universe:
        scores = [predictions[c][class_id] for c in clip_ids]
        labels = [1 if truth[c] == class_id else 0 for c in clip_ids]
        support = sum(labels)
        entry: dict = {"support": support, "ap": None, "auc": None}
        if support > 0:
            entry["ap"] = average_precision(scores, labels)
            aps.append(entry["ap"])
            if support < len(labels):
                entry["auc"] = roc_auc(scores, labels)
                aucs.append(entry["auc"])
        per_class[class_id] = entry

    macro_map = float(np.mean(aps)) if aps else None
    macro_auc = float(np.mean(aucs)) if aucs else None
    dp = d_prime(macro_auc) if macro_auc is not None else None
    return EvalReport(
        per_class=per_class,
        map=macro_map,
        auc=macro_auc,
        d_prime=dp,
        top1=top_k_accuracy(predictions, truth, 1),
        top5=top_k_accuracy(predictions, truth, min(5, len(universe))),
        num_classes=len(universe),
        num_clips=len(clip_ids),
    )


def load_predictions(path: str | Path) -> dict[str, dict[str, float]]:
    """Read a prediction manifest: JSON lines {"clip_id", "scores": {class: p}}."""
    predictions: dict[str, dict[str, float]] = {}
    with open(Path(path), encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            predictions[obj["clip_id"]] = {k: float(v) for k, v in obj["scores"].items()}
    return predictions


def load_truth(path: str | Path) -> dict[str, str]:
    """Truth is either a JSON object {clip_id: class_id} or JSON lines with
    {"clip_id", "class_id"} records."""
    text = Path(path).read_text(encoding="utf-8").strip()
    try:
        obj = json.loads(text)
        if isinstance(obj, dict) and "clip_id" not in obj:
            return {str(k): str(v) for k, v in obj.items()}
    except json.JSONDecodeError:
        pass
    truth = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        obj = json.loads(line)
        truth[obj["clip_id"]] = obj["class_id"]
    return truth
