import pytest

from avcurator.corpus import SoundClass
from avcurator.query_expansion import (
    Lexicon,
    QueryVariant,
    emit_query_manifest,
    expand_queries,
    verb_ing_form,
)


def cls(label, cid="c0"):
    return SoundClass(id=cid, display_label=label, group="others")


SYNONYMS = Lexicon(kind="synonym",
                   entries={"steam hissing": ["water boiling", "liquid boiling"]})
SPANISH = Lexicon(kind="translation", language="es",
                  entries={"ring church bells": ["tocar campanas de iglesia"]})


class TestVerbInflection:
    @pytest.mark.parametrize("label,expected", [
        ("ring church bells", "ringing church bells"),
        ("play electric guitar", "playing electric guitar"),
        ("tap dance", "tapping dance"),
        ("drive tractor", "driving tractor"),
        ("row boat", "rowing boat"),
    ])
    def test_known_verbs(self, label, expected):
        assert verb_ing_form(label) == expected

    def test_non_verb_first_token(self):
        assert verb_ing_form("steam hissing") is None

    def test_single_word_label(self):
        assert verb_ing_form("thunder") is None

    def test_ing_form_is_not_a_base_verb(self):
        assert verb_ing_form("playing violin") is None


class TestExpandQueries:
    def test_ring_church_bells_no_lexicons(self):
        variants = expand_queries(cls("ring church bells"), [])
        assert [(v.kind, v.text) for v in variants] == [
            ("base", "ring church bells"),
            ("verb_ing", "ringing church bells"),
        ]

    def test_steam_hissing_with_synonyms(self):
        variants = expand_queries(cls("steam hissing"), [SYNONYMS])
        assert len(variants) == 3
        assert variants[0].text == "steam hissing"
        assert [v.text for v in variants[1:]] == ["liquid boiling", "water boiling"]
        assert all(v.kind == "synonym" for v in variants[1:])

    def test_already_ing_label_yields_base_only(self):
        variants = expand_queries(cls("howling wind"), [])
        assert len(variants) == 1
        assert variants[0].kind == "base"

    def test_translation_language_tagged(self):
        variants = expand_queries(cls("ring church bells"), [SPANISH])
        translated = [v for v in variants if v.kind == "translation"]
        assert len(translated) == 1
        assert translated[0].language == "es"

    def test_case_insensitive_dedup_keeps_first(self):
        lex = Lexicon(
            kind="synonym",
            entries={"ring church bells": ["Ringing Church Bells", "chiming bells"]},
        )
        variants = expand_queries(cls("ring church bells"), [lex])
        texts = [v.text.lower() for v in variants]
        assert texts.count("ringing church bells") == 1
        assert variants[1].kind == "verb_ing"  # collision resolved in favor of earlier kind
        assert "chiming bells" in texts

    def test_deterministic_order(self):
        lexicons = [SPANISH, SYNONYMS]
        a = expand_queries(cls("ring church bells"), lexicons)
        b = expand_queries(cls("ring church bells"), list(reversed(lexicons)))
        assert [v.text for v in a] == [v.text for v in b]

    def test_base_always_present_verbatim(self):
        for label in ("ring church bells", "steam hissing", "Thunder"):
            variants = expand_queries(cls(label), [SYNONYMS])
            assert variants[0].text == label

    def test_idempotent_expansion_adds_nothing_new(self):
        lexicons = [SYNONYMS, SPANISH]
        for label in ("ring church bells", "steam hissing"):
            original = {v.text.lower() for v in expand_queries(cls(label), lexicons)}
            for text in sorted(original):
                again = {v.text.lower() for v in expand_queries(cls(text), lexicons)}
                assert again <= original

    def test_output_bounded_by_lexicon_matches(self):
        variants = expand_queries(cls("steam hissing"), [SYNONYMS, SPANISH])
        assert len(variants) <= 1 + 1 + 2 + 0


class TestLexicon:
    def test_synonym_self_map_rejected(self):
        with pytest.raises(ValueError, match="itself"):
            Lexicon(kind="synonym", entries={"rain": ["Rain"]})

    def test_translation_requires_language(self):
        with pytest.raises(ValueError, match="language"):
            Lexicon(kind="translation", entries={"a": ["b"]})

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "lex.json"
        SYNONYMS.save(path)
        loaded = Lexicon.load(path)
        assert loaded.kind == "synonym"
        assert loaded.entries == SYNONYMS.entries


class TestEmitManifest:
    def test_counts_lines(self, tmp_path):
        variants = expand_queries(cls("steam hissing"), [SYNONYMS])
        path = tmp_path / "queries.jsonl"
        assert emit_query_manifest(variants, path) == 3
        assert len(path.read_text().splitlines()) == 3

    def test_empty_list(self, tmp_path):
        path = tmp_path / "queries.jsonl"
        assert emit_query_manifest([], path) == 0
        assert path.read_text() == ""

    def test_duplicates_removed_before_write(self, tmp_path):
        v = QueryVariant("c0", "dog barking", "base")
        dup = QueryVariant("c0", "Dog Barking", "synonym")
        other = QueryVariant("c1", "dog barking", "base")  # different class kept
        path = tmp_path / "queries.jsonl"
        assert emit_query_manifest([v, dup, other], path) == 2
