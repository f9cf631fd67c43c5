"""Trainable linear-softmax classifier over pooled spectrogram features.

This is the pluggable classifier slot used by the audio gate and the noise
filter: a cross-entropy model trained with an adaptive per-parameter step
size and a reduce-on-plateau learning-rate schedule. Deep CNN scores plug
into the same seam through score manifests instead; nothing downstream cares
which produced the scores.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass
class FeatureVector:
    clip_id: str
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("feature values must be a 1-D vector")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"non-finite feature values for {self.clip_id!r}")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    plateau_factor: float = 0.1
    plateau_patience: int = 5
    max_epochs: int = 100
    batch_size: int = 64
    val_fraction: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0.0 < self.plateau_factor < 1.0:
            raise ValueError("plateau_factor must be in (0, 1)")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in [0, 1)")


@dataclass
class LinearSoftmaxModel:
    weights: np.ndarray            # (num_classes, feature_dim)
    bias: np.ndarray               # (num_classes,)
    class_ids: list[str]
    train_log: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.shape[0] != len(self.class_ids) or self.bias.shape != (len(self.class_ids),):
            raise ValueError("weights/bias shapes inconsistent with class_ids")

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[1]

    def predict(self, features: np.ndarray) -> np.ndarray:
        """Softmax scores, one row per input row; rows sum to 1."""
        features = np.asarray(features, dtype=np.float64)
        single = features.ndim == 1
        if single:
            features = features[None, :]
        if features.shape[1] != self.feature_dim:
            raise ValueError(
                f"feature dimension {features.shape[1]} != model dimension {self.feature_dim}"
            )
        probs = softmax(features @ self.weights.T + self.bias)
        return probs[0] if single else probs

    def save(self, path: str | Path):
        payload = {
            "class_ids": self.class_ids,
            "feature_dim": self.feature_dim,
            "weights": self.weights.ravel().tolist(),
            "bias": self.bias.tolist(),
            "train_log": self.train_log,
        }
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(payload), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "LinearSoftmaxModel":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        dim = int(obj["feature_dim"])
        weights = np.asarray(obj["weights"], dtype=np.float64).reshape(-1, dim)
        return cls(
            weights=weights,
            bias=np.asarray(obj["bias"], dtype=np.float64),
            class_ids=list(obj["class_ids"]),
            train_log=obj.get("train_log", {}),
        )


def softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def cross_entropy_loss_and_grad(
    weights: np.ndarray,
    bias: np.ndarray,
    features: np.ndarray,
    labels: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy over a batch plus analytic gradients.

    labels are integer class indices. The gradient is (p - onehot) averaged
    over the batch, the textbook softmax cross-entropy derivative.
    """
    n = features.shape[0]
    probs = softmax(features @ weights.T + bias)
    eps = np.finfo(np.float64).tiny
    loss = -np.mean(np.log(probs[np.arange(n), labels] + eps))
    delta = probs.copy()
    delta[np.arange(n), labels] -= 1.0
    delta /= n
    grad_w = delta.T @ features
    grad_b = delta.sum(axis=0)
    return float(loss), grad_w, grad_b


def train(
    features: np.ndarray,
    labels: Sequence[str],
    cfg: TrainConfig,
    class_ids: Sequence[str] | None = None,
) -> LinearSoftmaxModel:
    """Fit the linear softmax model with Adam and reduce-on-plateau.

    The learning rate is multiplied by plateau_factor whenever the monitored
    loss (validation loss when a validation split exists, else training loss)
    fails to improve for plateau_patience consecutive epochs. Initialization,
    batching and the validation split are all driven by cfg.seed, so identical
    inputs give bitwise-identical weights.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("features must be a 2-D array (n_examples, dim)")
    if not np.all(np.isfinite(X)):
        raise ValueError("features contain NaN/Inf")
    labels = list(labels)
    if len(labels) != X.shape[0]:
        raise ValueError("labels length must match feature rows")
    if class_ids is None:
        class_ids = sorted(set(labels))
    else:
        class_ids = list(class_ids)
        missing = set(labels) - set(class_ids)
        if missing:
            raise ValueError(f"labels not in class_ids: {sorted(missing)}")
    if len(class_ids) < 2:
        raise ValueError("need at least 2 classes to train")
    index = {cid: i for i, cid in enumerate(class_ids)}
    y = np.array([index[l] for l in labels], dtype=np.int64)

    rng = np.random.default_rng(cfg.seed)
    n, dim = X.shape
    n_classes = len(class_ids)

    perm = rng.permutation(n)
    n_val = int(round(n * cfg.val_fraction))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    if len(train_idx) == 0 or len(set(y[train_idx].tolist())) < 2:
        # Validation split would starve training; fall back to train-loss plateau.
        train_idx, val_idx = perm, perm[:0]
    Xtr, ytr = X[train_idx], y[train_idx]
    Xval, yval = X[val_idx], y[val_idx]

    W = rng.normal(0.0, 0.01, size=(n_classes, dim))
    b = np.zeros(n_classes)
    mW = np.zeros_like(W); vW = np.zeros_like(W)
    mb = np.zeros_like(b); vb = np.zeros_like(b)

    lr = cfg.learning_rate
    best = np.inf
    stale = 0
    step = 0
    epochs_log = []
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(Xtr))
        for lo in range(0, len(order), cfg.batch_size):
            batch = order[lo:lo + cfg.batch_size]
            _, gW, gb = cross_entropy_loss_and_grad(W, b, Xtr[batch], ytr[batch])
            step += 1
            mW = cfg.beta1 * mW + (1 - cfg.beta1) * gW
            vW = cfg.beta2 * vW + (1 - cfg.beta2) * gW * gW
            mb = cfg.beta1 * mb + (1 - cfg.beta1) * gb
            vb = cfg.beta2 * vb + (1 - cfg.beta2) * gb * gb
            c1 = 1 - cfg.beta1 ** step
            c2 = 1 - cfg.beta2 ** step
            W = W - lr * (mW / c1) / (np.sqrt(vW / c2) + cfg.epsilon)
            b = b - lr * (mb / c1) / (np.sqrt(vb / c2) + cfg.epsilon)

        train_loss, _, _ = cross_entropy_loss_and_grad(W, b, Xtr, ytr)
        if len(Xval):
            val_loss, _, _ = cross_entropy_loss_and_grad(W, b, Xval, yval)
            monitored = val_loss
        else:
            val_loss = None
            monitored = train_loss

        reduced = False
        if monitored < best:
            best = monitored
            stale = 0
        else:
            stale += 1
            if stale >= cfg.plateau_patience:
                lr *= cfg.plateau_factor
                stale = 0
                reduced = True
        epochs_log.append(
            {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss,
             "lr": lr, "lr_reduced": reduced}
        )

    return LinearSoftmaxModel(
        weights=W,
        bias=b,
        class_ids=list(class_ids),
        train_log={
            "final_train_loss": epochs_log[-1]["train_loss"] if epochs_log else None,
            "final_val_loss": epochs_log[-1]["val_loss"] if epochs_log else None,
            "epochs": epochs_log,
        },
    )


def top_k(scores: np.ndarray, class_ids: Sequence[str], k: int) -> list[str]:
    """Top-k class ids by descending score; exact ties break lexicographically."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (len(class_ids),):
        raise ValueError("scores length must match class_ids")
    if not 1 <= k <= len(class_ids):
        raise ValueError(f"k must be in 1..{len(class_ids)}, got {k}")
    order = sorted(range(len(class_ids)), key=lambda i: (-scores[i], class_ids[i]))
    return [class_ids[i] for i in order[:k]]


def pool_spectrogram(values: np.ndarray) -> np.ndarray:
    """Time-invariant summary of a (bins x frames) log spectrogram: per-bin
    mean concatenated with per-bin standard deviation."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError("spectrogram must be 2-D (bins x frames)")
    return np.concatenate([values.mean(axis=1), values.std(axis=1)])


def load_feature_manifest(path: str | Path) -> dict[str, np.ndarray]:
    """Read a JSON-lines feature manifest {"clip_id", "vector": [floats]}."""
    path = Path(path)
    features: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            fv = FeatureVector(obj["clip_id"], np.asarray(obj["vector"], dtype=np.float64))
            features[fv.clip_id] = fv.values
    return features


def save_feature_manifest(features: dict[str, np.ndarray], path: str | Path) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for clip_id in sorted(features):
            vec = np.asarray(features[clip_id], dtype=np.float64)
            fh.write(json.dumps({"clip_id": clip_id, "vector": vec.tolist()}) + "\n")
            count += 1
    return count
