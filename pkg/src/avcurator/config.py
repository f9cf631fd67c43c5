"""Pipeline configuration: every scalar knob of the cascade in one place.

Configs round-trip through a canonical TOML-style text form; the digest of
that text identifies a run, so resuming with a changed config is detected.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib


@dataclass
class PipelineConfig:
    # thresholds
    visual_threshold: float = 0.2
    audio_threshold: float = 0.5
    review_min_fraction: float = 0.5
    dedup_threshold: float = 0.99
    mining_tau: float = 0.7
    # counts
    frames_per_video: int = 10
    max_clips_per_video: int = 2
    review_sample: int = 20
    min_videos: int = 100
    min_clips: int = 200
    top_k_keep: int = 3
    signature_k: int = 20
    mining_k: int = 5
    # splits
    test_per_class: int = 50
    val_per_class: int = 20
    # misc
    seed: int = 0
    clip_half_width: float = 5.0
    on_missing_scores: str = "drop"
    lease_timeout_s: float = 600.0
    # paths (empty string = unset); workdir holds manifests/, reports/, review/
    workdir: str = "run"
    classes_path: str = ""
    videos_path: str = ""
    lexicon_paths: list[str] = field(default_factory=list)
    embeddings_path: str = ""
    overrides_path: str = ""
    visual_labels_path: str = ""
    frame_scores_path: str = ""
    audio_scores_path: str = ""
    audio_features_path: str = ""
    visual_features_path: str = ""
    truth_path: str = ""
    verdicts_path: str = ""
    media_dir: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("visual_threshold", "audio_threshold"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must be in (0, 1), got {value}")
        for name in ("review_min_fraction", "dedup_threshold", "mining_tau"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {value}")
        for name in ("frames_per_video", "max_clips_per_video", "review_sample",
                     "top_k_keep", "signature_k", "mining_k", "test_per_class",
                     "val_per_class"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("min_videos", "min_clips"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.clip_half_width <= 0:
            raise ValueError("clip_half_width must be > 0")
        if self.on_missing_scores not in ("keep", "drop"):
            raise ValueError("on_missing_scores must be 'keep' or 'drop'")
        if self.lease_timeout_s <= 0:
            raise ValueError("lease_timeout_s must be > 0")

    def to_text(self) -> str:
        """Canonical key = value form, one field per line in declaration order."""
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            lines.append(f"{f.name} = {_toml_value(value)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PipelineConfig":
        data = tomllib.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def save(self, path: str | Path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(value, list):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise TypeError(f"unsupported config value type {type(value)!r}")
