"""Curated word lists: loading, CI-style validation and no-repeat selection.

On disk a list is a UTF-8 JSON document ``{"language": "pt", "words": [...]}``.
Buckets by word length are derived at load time.
"""
from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Collection, Mapping

from .validator import normalize_word

DEFAULT_MIN_PER_LENGTH = 10
DEFAULT_REQUIRED_LENGTHS = (4, 5, 6)
SHIPPED_LANGUAGES = ("pt", "en", "es")

_CHARSET = re.compile(r"[a-z]+")


class WordListFormatError(ValueError):
    pass


class WordExhaustedError(LookupError):
    """No unexcluded word is left in the requested bucket."""


@dataclass(frozen=True)
class WordList:
    language: str
    words_by_length: Mapping[int, tuple[str, ...]]

    def __post_init__(self):
        buckets = {int(k): tuple(v) for k, v in sorted(self.words_by_length.items())}
        object.__setattr__(self, "words_by_length", buckets)

    @property
    def words(self) -> list[str]:
        return [w for _, bucket in sorted(self.words_by_length.items()) for w in bucket]

    def bucket(self, length: int) -> tuple[str, ...]:
        return self.words_by_length.get(length, ())

    @classmethod
    def from_words(cls, language: str, words: list[str]) -> WordList:
        buckets: dict[int, list[str]] = {}
        for w in words:
            w = w.strip().lower()
            buckets.setdefault(len(w), []).append(w)
        return cls(language, {k: tuple(v) for k, v in buckets.items()})


@dataclass(frozen=True)
class Duplicate:
    word: str

    def __str__(self) -> str:
        return f"Duplicate: {self.word}"


@dataclass(frozen=True)
class BelowMinimum:
    length: int
    actual: int
    required: int

    def __str__(self) -> str:
        return f"BelowMinimum: length {self.length} has {self.actual} words, requires {self.required}"


@dataclass(frozen=True)
class BadCharset:
    word: str

    def __str__(self) -> str:
        return f"BadCharset: {self.word}"


ListViolation = Duplicate | BelowMinimum | BadCharset


@dataclass(frozen=True)
class WordSelection:
    word: str
    length: int
    remaining_in_bucket: int


def load_word_list(data: bytes | str) -> WordList:
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise WordListFormatError(f"word list is not valid UTF-8: {exc}") from None
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise WordListFormatError(f"word list is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise WordListFormatError("word list must be a JSON object")
    language, words = doc.get("language"), doc.get("words")
    if not isinstance(language, str) or not language:
        raise WordListFormatError("'language' must be a non-empty string")
    if not isinstance(words, list) or not all(isinstance(w, str) for w in words):
        raise WordListFormatError("'words' must be an array of strings")
    return WordList.from_words(language, words)


def load_word_list_file(path: str | Path) -> WordList:
    return load_word_list(Path(path).read_bytes())


def serialize_word_list(wordlist: WordList) -> bytes:
    doc = {"language": wordlist.language, "words": wordlist.words}
    return json.dumps(doc, ensure_ascii=False, indent=2).encode("utf-8")


def load_shipped(language: str) -> WordList:
    ref = resources.files("slm_resilience") / "data" / f"words_{language}.json"
    try:
        return load_word_list(ref.read_bytes())
    except FileNotFoundError:
        raise WordListFormatError(f"no shipped word list for {language!r}") from None


def validate_word_list(
    wordlist: WordList,
    min_per_length: Mapping[int, int] | int = DEFAULT_MIN_PER_LENGTH,
) -> list[ListViolation]:
    """Report bad charset, duplicates and under-populated buckets.

    An integer minimum applies to every present bucket and to the default
    level lengths (4, 5, 6).
    """
    violations: list[ListViolation] = []
    seen: set[str] = set()
    for word in wordlist.words:
        if not _CHARSET.fullmatch(word):
            violations.append(BadCharset(word))
        key = normalize_word(word)
        if key in seen:
            violations.append(Duplicate(word))
        seen.add(key)

    if isinstance(min_per_length, int):
        lengths = set(wordlist.words_by_length) | set(DEFAULT_REQUIRED_LENGTHS)
        required = {n: min_per_length for n in lengths}
    else:
        required = dict(min_per_length)
    for length in sorted(required):
        actual = len(wordlist.bucket(length))
        if actual < required[length]:
            violations.append(BelowMinimum(length, actual, required[length]))
    return violations


def select_word(
    wordlist: WordList,
    length: int,
    exclusions: Collection[str],
    rng: random.Random,
) -> WordSelection:
    if length not in wordlist.words_by_length:
        raise KeyError(f"no bucket for length {length} in {wordlist.language!r} list")
    candidates = [w for w in wordlist.bucket(length) if normalize_word(w) not in exclusions]
    if not candidates:
        raise WordExhaustedError(
            f"all {length}-letter {wordlist.language!r} words are excluded"
        )
    word = rng.choice(candidates)
    return WordSelection(word, length, len(candidates) - 1)
