import json
import random
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from slm_resilience.wordlists import (
    SHIPPED_LANGUAGES,
    BadCharset,
    BelowMinimum,
    Duplicate,
    WordExhaustedError,
    WordList,
    WordListFormatError,
    load_shipped,
    load_word_list,
    load_word_list_file,
    select_word,
    serialize_word_list,
    validate_word_list,
)

FIXTURES = Path(__file__).parent / "fixtures"


class TestLoad:
    def test_minimal(self):
        wl = load_word_list('{"language": "pt", "words": ["gato", "casa", "sol"]}')
        assert wl.language == "pt"
        assert wl.words_by_length == {3: ("sol",), 4: ("gato", "casa")}

    def test_invalid_encoding(self):
        with pytest.raises(WordListFormatError):
            load_word_list(b'{"language": "pt", "words": ["\xff\xfe"]}')

    def test_empty_words(self):
        wl = load_word_list('{"language": "pt", "words": []}')
        assert wl.words == []
        assert validate_word_list(wl) != []

    @pytest.mark.parametrize("doc", [
        "[]", "{}", '{"language": "pt"}', '{"language": "", "words": []}',
        '{"language": "pt", "words": [1]}', "not json",
    ])
    def test_bad_shape(self, doc):
        with pytest.raises(WordListFormatError):
            load_word_list(doc)

    @pytest.mark.parametrize("lang", SHIPPED_LANGUAGES)
    def test_shipped_lists_are_valid(self, lang):
        wl = load_shipped(lang)
        assert wl.language == lang
        assert validate_word_list(wl) == []
        for length, bucket in wl.words_by_length.items():
            assert all(len(w) == length for w in bucket)

    def test_unknown_shipped(self):
        with pytest.raises(WordListFormatError):
            load_shipped("xx")


class TestValidate:
    def test_duplicate(self):
        wl = WordList.from_words("pt", ["casa", "casa"])
        assert validate_word_list(wl, {4: 1}) == [Duplicate("casa")]

    def test_below_minimum(self):
        wl = WordList.from_words("pt", ["casa", "gato"])
        assert validate_word_list(wl, {4: 5}) == [BelowMinimum(4, 2, 5)]

    def test_bad_charset(self):
        wl = WordList.from_words("pt", ["maçã"])
        assert validate_word_list(wl, {4: 1}) == [BadCharset("maçã")]

    def test_duplicate_after_normalization(self):
        wl = WordList.from_words("pt", ["Casa", "casa "])
        assert validate_word_list(wl, {4: 1}) == [Duplicate("casa")]

    def test_int_minimum_covers_default_lengths(self):
        wl = WordList.from_words("pt", ["ab"])
        got = validate_word_list(wl, 1)
        assert {(v.length, v.actual) for v in got} == {(4, 0), (5, 0), (6, 0)}

    @pytest.mark.parametrize("name,kind", [
        ("words_duplicate.json", Duplicate),
        ("words_accented.json", BadCharset),
        ("words_underpopulated.json", BelowMinimum),
    ])
    def test_fixture_files(self, name, kind):
        violations = validate_word_list(load_word_list_file(FIXTURES / name))
        assert [type(v) for v in violations] == [kind]


class TestSelect:
    def test_single_candidate(self):
        wl = WordList.from_words("pt", ["gato"])
        sel = select_word(wl, 4, set(), random.Random(0))
        assert (sel.word, sel.length, sel.remaining_in_bucket) == ("gato", 4, 0)

    def test_exhausted(self):
        wl = WordList.from_words("pt", ["gato"])
        with pytest.raises(WordExhaustedError):
            select_word(wl, 4, {"gato"}, random.Random(0))

    def test_missing_bucket(self):
        with pytest.raises(KeyError):
            select_word(WordList.from_words("pt", ["gato"]), 5, set(), random.Random(0))

    def test_deterministic(self):
        wl = load_shipped("pt")
        picks = {select_word(wl, 5, set(), random.Random(11)).word for _ in range(5)}
        assert len(picks) == 1


@given(st.integers(0, 2**32), st.sets(st.sampled_from(load_shipped("en").bucket(5)), max_size=14))
def test_select_never_returns_excluded(seed, exclusions):
    sel = select_word(load_shipped("en"), 5, exclusions, random.Random(seed))
    assert sel.word not in exclusions
    assert sel.remaining_in_bucket == len(load_shipped("en").bucket(5)) - len(exclusions) - 1


@given(st.sets(st.text(alphabet="abcdefghijklmnopqrstuvwxyz", min_size=1, max_size=9), max_size=30),
       st.sampled_from(["pt", "en", "es", "it"]))
def test_round_trip(words, lang):
    wl = WordList.from_words(lang, sorted(words))
    assert load_word_list(serialize_word_list(wl)) == wl


def test_fourth_language_from_data_only():
    wl = load_word_list_file(FIXTURES / "words_it.json")
    assert wl.language == "it"
    assert validate_word_list(wl) == []
    assert json.loads((FIXTURES / "words_it.json").read_text())["language"] == "it"
