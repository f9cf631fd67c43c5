"""Stage 1: turn class labels into search-query variants.

A label expands into its base form, a verb+ing phrasing when the label leads
with a known sound verb, plus synonym and translation variants drawn from
offline lexicon files. Everything is deterministic so query manifests are
reproducible.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .corpus import ManifestError, SoundClass

LEXICON_KINDS = ("translation", "synonym")


@dataclass(frozen=True)
class QueryVariant:
    class_id: str
    text: str
    kind: str  # base | verb_ing | translation | synonym
    language: str = "en"

    def __post_init__(self):
        if not self.text:
            raise ValueError("query text must be non-empty")
        if self.kind == "translation" and self.language == "en":
            raise ValueError("translation variants must carry a non-English language tag")

    def to_json(self) -> dict:
        return {
            "class_id": self.class_id,
            "text": self.text,
            "kind": self.kind,
            "language": self.language,
        }


@dataclass
class Lexicon:
    """Offline phrase map used for synonym or translation expansion."""

    entries: dict[str, list[str]]
    kind: str
    language: str | None = None

    def __post_init__(self):
        if self.kind not in LEXICON_KINDS:
            raise ValueError(f"lexicon kind must be one of {LEXICON_KINDS}, got {self.kind!r}")
        if self.kind == "translation" and not self.language:
            raise ValueError("translation lexicons must declare a target language")
        for source, targets in self.entries.items():
            if not source:
                raise ValueError("lexicon source phrases must be non-empty")
            for target in targets:
                if not target:
                    raise ValueError(f"empty target phrase under {source!r}")
                if self.kind == "synonym" and target.lower() == source.lower():
                    raise ValueError(f"synonym entry maps {source!r} to itself")

    @classmethod
    def load(cls, path: str | Path) -> "Lexicon":
        """Load a lexicon file: {"kind": ..., "language": ..., "entries": {src: [tgt, ...]}}."""
        path = Path(path)
        if not path.exists():
            raise ManifestError(f"lexicon not found: {path}")
        obj = json.loads(path.read_text(encoding="utf-8"))
        return cls(
            entries={k: list(v) for k, v in obj.get("entries", {}).items()},
            kind=obj["kind"],
            language=obj.get("language"),
        )

    def save(self, path: str | Path):
        payload = {"kind": self.kind, "language": self.language, "entries": self.entries}
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")


def _load_verb_table() -> dict[str, str]:
    data = resources.files("avcurator.data").joinpath("verbs.json").read_text(encoding="utf-8")
    return json.loads(data)["verbs"]


_VERB_TABLE = _load_verb_table()


def verb_ing_form(label: str, verb_table: dict[str, str] | None = None) -> str | None:
    """Return the "<verb-ing> <object>" phrasing, or None when the label
    does not start with a known base-form verb followed by an object."""
    table = _VERB_TABLE if verb_table is None else verb_table
    parts = label.split()
    if len(parts) < 2:
        return None
    ing = table.get(parts[0].lower())
    if ing is None:
        return None
    return " ".join([ing] + parts[1:])


def expand_queries(sound_class: SoundClass, lexicons: list[Lexicon]) -> list[QueryVariant]:
    """Expand one class label into deduplicated query variants.

    Output order is base, verb_ing, synonyms, translations, with each sub-list
    sorted lexicographically; duplicates are removed case-insensitively, first
    occurrence wins.
    """
    label = sound_class.display_label
    if not label:
        raise ValueError(f"class {sound_class.id} has an empty display_label")

    variants: list[QueryVariant] = [QueryVariant(sound_class.id, label, "base")]

    ing = verb_ing_form(label)
    if ing is not None:
        variants.append(QueryVariant(sound_class.id, ing, "verb_ing"))

    synonyms: list[QueryVariant] = []
    translations: list[QueryVariant] = []
    for lexicon in lexicons:
        targets: list[str] = []
        for source, phrases in lexicon.entries.items():
            if source.lower() == label.lower():
                targets.extend(phrases)
        if lexicon.kind == "synonym":
            synonyms.extend(QueryVariant(sound_class.id, t, "synonym") for t in sorted(targets))
        else:
            translations.extend(
                QueryVariant(sound_class.id, t, "translation", language=lexicon.language)
                for t in sorted(targets)
            )
    translations.sort(key=lambda v: (v.text, v.language))
    synonyms.sort(key=lambda v: v.text)
    variants.extend(synonyms)
    variants.extend(translations)

    deduped: list[QueryVariant] = []
    seen: set[str] = set()
    for variant in variants:
        key = variant.text.lower()
        if key in seen:
            continue
        seen.add(key)
        deduped.append(variant)
    return deduped


def emit_query_manifest(variants: list[QueryVariant], path: str | Path) -> int:
    """Write one JSON line per variant, deduplicating case-insensitively per
    (class_id, text); returns the number of lines written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    seen: set[tuple[str, str]] = set()
    lines = []
    for variant in variants:
        key = (variant.class_id, variant.text.lower())
        if key in seen:
            continue
        seen.add(key)
        lines.append(json.dumps(variant.to_json(), sort_keys=True))
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return len(lines)
