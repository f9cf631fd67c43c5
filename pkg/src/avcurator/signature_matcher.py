"""Stage 2 matching: map sound classes to visual signatures.

Sound and visual labels are embedded as normalized mean word vectors; the
similarity product of the two stacked matrices gives a cosine affinity matrix
from which each class's top-k visual labels are read. Exact keyword matches
(e.g. a class name that contains a visual label verbatim) can be pinned first
through an override map.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import ManifestError


class AllTokensOutOfVocabulary(KeyError):
    """No token of the phrase exists in the embedding table; the caller must
    fall back to keyword matching for this label."""


@dataclass
class EmbeddingTable:
    """Token -> vector map with a fixed dimension."""

    dimension: int = 512
    vectors: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for token, vec in self.vectors.items():
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (self.dimension,):
                raise ValueError(
                    f"vector for {token!r} has shape {vec.shape}, expected ({self.dimension},)"
                )
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"vector for {token!r} contains NaN/Inf")
            self.vectors[token] = vec

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingTable":
        """Read the text format: a "COUNT DIM" header then one
        "token v1 v2 ... vD" line per token."""
        path = Path(path)
        if not path.exists():
            raise ManifestError(f"embedding file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().split()
            if len(header) != 2:
                raise ManifestError("embedding header must be 'COUNT DIM'", line=1)
            count, dim = int(header[0]), int(header[1])
            vectors: dict[str, np.ndarray] = {}
            for lineno, line in enumerate(fh, start=2):
                parts = line.rstrip("\n").split(" ")
                if len(parts) != dim + 1:
                    raise ManifestError(
                        f"expected {dim + 1} fields, got {len(parts)}", line=lineno
                    )
                vectors[parts[0]] = np.array([float(x) for x in parts[1:]], dtype=np.float64)
        if len(vectors) != count:
            raise ManifestError(f"header declares {count} tokens, found {len(vectors)}")
        return cls(dimension=dim, vectors=vectors)

    def save(self, path: str | Path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{len(self.vectors)} {self.dimension}\n")
            for token in sorted(self.vectors):
                values = " ".join(repr(float(x)) for x in self.vectors[token])
                fh.write(f"{token} {values}\n")


@dataclass
class AffinityMatrix:
    """Cosine similarities between sound labels (rows) and visual labels (columns)."""

    sound_labels: list[str]
    visual_labels: list[str]
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        expected = (len(self.sound_labels), len(self.visual_labels))
        if self.values.shape != expected:
            raise ValueError(f"affinity shape {self.values.shape} != {expected}")
        if self.values.size and (self.values.min() < -1 - 1e-12 or self.values.max() > 1 + 1e-12):
            raise ValueError("affinity entries must be cosine similarities in [-1, 1]")

    def row(self, sound_label: str) -> np.ndarray:
        try:
            i = self.sound_labels.index(sound_label)
        except ValueError:
            raise KeyError(f"unknown sound label {sound_label!r}") from None
        return self.values[i]


def embed_label(label: str, table: EmbeddingTable) -> np.ndarray:
    """Embed a phrase as the L2-normalized mean of its in-vocabulary token vectors.

    Tokens are lowercased and split on whitespace; out-of-vocabulary tokens are
    skipped. Raises AllTokensOutOfVocabulary when nothing remains.
    """
    if not label:
        raise ValueError("label must be non-empty")
    tokens = label.lower().split()
    hits = [table.vectors[t] for t in tokens if t in table.vectors]
    if not hits:
        raise AllTokensOutOfVocabulary(label)
    mean = np.mean(hits, axis=0)
    norm = np.linalg.norm(mean)
    if norm == 0.0:
        raise ValueError(f"token vectors for {label!r} average to the zero vector")
    return mean / norm


def embed_labels(labels: list[str], table: EmbeddingTable) -> tuple[np.ndarray, list[str]]:
    """Stack embeddings for the labels that can be embedded.

    Returns (matrix, embedded_labels); labels whose tokens are all
    out-of-vocabulary are skipped.
    """
    rows, kept = [], []
    for label in labels:
        try:
            rows.append(embed_label(label, table))
        except AllTokensOutOfVocabulary:
            continue
        kept.append(label)
    matrix = np.vstack(rows) if rows else np.zeros((0, table.dimension))
    return matrix, kept


def affinity_matrix(
    sound_vecs: np.ndarray,
    visual_vecs: np.ndarray,
    sound_labels: list[str],
    visual_labels: list[str],
) -> AffinityMatrix:
    """Similarity product of row-normalized embedding matrices.

    Because rows are unit-norm the product entries are exactly the pairwise
    cosine similarities.
    """
    sound_vecs = np.asarray(sound_vecs, dtype=np.float64)
    visual_vecs = np.asarray(visual_vecs, dtype=np.float64)
    if sound_vecs.shape[1] != visual_vecs.shape[1]:
        raise ValueError(
            f"dimension mismatch: {sound_vecs.shape[1]} vs {visual_vecs.shape[1]}"
        )
    values = sound_vecs @ visual_vecs.T
    # Guard against |cos| drifting past 1 by accumulated rounding.
    np.clip(values, -1.0, 1.0, out=values)
    return AffinityMatrix(list(sound_labels), list(visual_labels), values)


def top_k_signature(
    affinity: AffinityMatrix,
    sound_label: str,
    k: int = 20,
    keyword_overrides: dict[str, str] | None = None,
) -> list[str]:
    """Select a class's visual signature: the override label first when one
    exists, then visual labels by descending affinity (ties lexicographic)."""
    n_cols = len(affinity.visual_labels)
    if k > n_cols:
        k = n_cols
    if k < 1:
        raise ValueError("k must be >= 1")
    row = affinity.row(sound_label)
    order = sorted(range(n_cols), key=lambda j: (-row[j], affinity.visual_labels[j]))

    signature: list[str] = []
    overrides = keyword_overrides or {}
    pinned = overrides.get(sound_label)
    if pinned is not None:
        if pinned not in affinity.visual_labels:
            raise KeyError(f"override {pinned!r} is not a known visual label")
        signature.append(pinned)
    for j in order:
        if len(signature) >= k:
            break
        label = affinity.visual_labels[j]
        if label not in signature:
            signature.append(label)
    return signature


def propose_keyword_overrides(
    sound_labels: list[str], visual_labels: list[str]
) -> dict[str, str]:
    """Auto-propose exact keyword matches (longest visual label that appears
    as a whole-word substring of the sound label). The result is meant to be
    reviewed and edited by hand before use."""
    proposals: dict[str, str] = {}
    by_length = sorted(visual_labels, key=lambda v: (-len(v), v))
    for sound in sound_labels:
        words = set(sound.lower().split())
        for visual in by_length:
            v_words = visual.lower().split()
            if all(w in words for w in v_words):
                proposals[sound] = visual
                break
    return proposals
