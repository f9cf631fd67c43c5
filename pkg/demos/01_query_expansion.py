"""
Turning class labels into search queries
=========================================

Stage 1 of the curation cascade never talks to a search engine directly; it
emits a manifest of query variants per class. Three transforms widen the net:
verb+ing phrasing, offline synonym lexicons, and offline translation lexicons.
"""
from avcurator.corpus import SoundClass
from avcurator.query_expansion import Lexicon, expand_queries

# A couple of taxonomy leaves. Labels that already read as "<verb-ing> ..."
# keep only their base form; labels starting with a base-form sound verb
# gain the -ing variant.
classes = [
    SoundClass(id="bells", display_label="ring church bells", group="others"),
    SoundClass(id="steam", display_label="steam hissing", group="home"),
    SoundClass(id="guitar", display_label="play electric guitar", group="music"),
]

# Lexicons are plain JSON files in production; built inline here.
synonyms = Lexicon(
    kind="synonym",
    entries={"steam hissing": ["water boiling", "liquid boiling"]},
)
spanish = Lexicon(
    kind="translation",
    language="es",
    entries={
        "ring church bells": ["tocar campanas de iglesia"],
        "play electric guitar": ["tocar guitarra electrica"],
    },
)

for sound_class in classes:
    variants = expand_queries(sound_class, [synonyms, spanish])
    print(f"\n{sound_class.display_label!r} expands to {len(variants)} queries:")
    for v in variants:
        print(f"  [{v.kind:11s}] ({v.language}) {v.text}")

# Determinism matters: the manifest is part of a resumable pipeline run, so
# expanding twice must give the same list.
again = expand_queries(classes[0], [synonyms, spanish])
assert [v.text for v in again] == [v.text for v in expand_queries(classes[0], [synonyms, spanish])]
print("\nexpansion is deterministic: OK")
