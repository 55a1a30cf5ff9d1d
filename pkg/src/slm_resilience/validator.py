"""Constraint rule sets for parsed puzzles and typed rejection reasons."""
from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from .parser import ParsedPuzzle

# Latin-1 Supplement and Latin Extended-A letters folded to ASCII (lowercase side).
_FOLD_GROUPS = {
    "a": "àáâãäåāăą",
    "c": "çćĉċč",
    "d": "ďđð",
    "e": "èéêëēĕėęě",
    "g": "ĝğġģ",
    "h": "ĥħ",
    "i": "ìíîïĩīĭįı",
    "j": "ĵ",
    "k": "ķĸ",
    "l": "ĺļľŀł",
    "n": "ñńņňŉŋ",
    "o": "òóôõöøōŏő",
    "r": "ŕŗř",
    "s": "śŝşš",
    "t": "ţťŧ",
    "u": "ùúûüũūŭůűų",
    "w": "ŵ",
    "y": "ýÿŷ",
    "z": "źżž",
    "ae": "æ",
    "oe": "œ",
    "ss": "ß",
    "th": "þ",
}
FOLD_TABLE: dict[int, str] = {
    ord(ch): ascii_ for ascii_, chars in _FOLD_GROUPS.items() for ch in chars
}
_COMBINING = re.compile("[\u0300-\u036f]")
_ASCII_LOWER = re.compile(r"[a-z]+")


class SchemaVariant(Enum):
    FULL_PUZZLE_DAY1 = "FullPuzzleDay1"
    CORE_PUZZLE_DAY2 = "CorePuzzleDay2"
    WORD_AND_HINTS_DAY3 = "WordAndHintsDay3"
    HINTS_ONLY_DAY5 = "HintsOnlyDay5"

    @property
    def field_count(self) -> int:
        return _SCHEMA_INFO[self][0]

    @property
    def hint_range(self) -> tuple[int, int | None]:
        return _SCHEMA_INFO[self][1]

    @property
    def required_keys(self) -> tuple[str, ...]:
        return _SCHEMA_INFO[self][2]

    @property
    def emitted_fields(self) -> tuple[str, ...]:
        """Top-level fields a compliant model response carries, in order."""
        return _SCHEMA_INFO[self][3]

    @property
    def prompt_hint_count(self) -> int:
        return 5 if self is SchemaVariant.FULL_PUZZLE_DAY1 else 3

    @property
    def hint_only(self) -> bool:
        return self is SchemaVariant.HINTS_ONLY_DAY5

    @property
    def has_category(self) -> bool:
        return "category" in self.required_keys

    @classmethod
    def from_name(cls, name: str) -> SchemaVariant:
        for member in cls:
            if name in (member.value, member.name):
                return member
        raise ValueError(f"unknown schema variant {name!r}")


_PUZZLE_KEYS = ("word", "category", "difficulty", "hints")
_SCHEMA_INFO = {
    SchemaVariant.FULL_PUZZLE_DAY1: (
        7, (5, 5), _PUZZLE_KEYS,
        ("word", "category", "difficulty", "rarity", "language", "definition", "hints"),
    ),
    SchemaVariant.CORE_PUZZLE_DAY2: (
        5, (2, 5), _PUZZLE_KEYS,
        ("word", "category", "difficulty", "rarity", "hints"),
    ),
    SchemaVariant.WORD_AND_HINTS_DAY3: (2, (3, None), ("word", "hints"), ("word", "hints")),
    SchemaVariant.HINTS_ONLY_DAY5: (1, (3, None), ("hints",), ("hints",)),
}


class FailureKind(str, Enum):
    WORD_LENGTH = "WordLength"
    WORD_CHARSET = "WordCharset"
    WORD_REPEATED = "WordRepeated"
    HINT_COUNT = "HintCount"
    HINT_CONTAINS_WORD = "HintContainsWord"
    EMPTY_CATEGORY = "EmptyCategory"
    EMPTY_HINT = "EmptyHint"

    @property
    def is_word_failure(self) -> bool:
        return self in _WORD_KINDS


_WORD_KINDS = {FailureKind.WORD_LENGTH, FailureKind.WORD_CHARSET, FailureKind.WORD_REPEATED}


@dataclass(frozen=True)
class ValidationFailure:
    kind: FailureKind
    message: str
    actual: int | None = None
    min: int | None = None
    max: int | None = None
    hint_index: int | None = None


def normalize_word(word: str) -> str:
    """Lowercase, trim and fold Latin diacritics to ASCII ("maçã" -> "maca")."""
    w = unicodedata.normalize("NFC", word.strip().lower())
    return _COMBINING.sub("", w.translate(FOLD_TABLE))


def is_repeat(word: str, exclusion: Iterable[str]) -> bool:
    return normalize_word(word) in exclusion


@dataclass(frozen=True)
class ValidationRuleSet:
    word_min_len: int
    word_max_len: int
    schema: SchemaVariant = SchemaVariant.WORD_AND_HINTS_DAY3
    exclusion: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if not 1 <= self.word_min_len <= self.word_max_len:
            raise ValueError(
                f"invalid word length range {self.word_min_len}..{self.word_max_len}"
            )
        object.__setattr__(
            self, "exclusion", frozenset(normalize_word(w) for w in self.exclusion)
        )

    def with_exclusion(self, words: Iterable[str]) -> ValidationRuleSet:
        return ValidationRuleSet(self.word_min_len, self.word_max_len, self.schema, frozenset(words))

    def length_text(self) -> str:
        if self.word_min_len == self.word_max_len:
            return str(self.word_min_len)
        return f"{self.word_min_len}-{self.word_max_len}"


def _word_length_failure(actual: int, rules: ValidationRuleSet) -> ValidationFailure:
    return ValidationFailure(
        FailureKind.WORD_LENGTH,
        f"word has {actual} letters but we asked for {rules.length_text()}",
        actual=actual, min=rules.word_min_len, max=rules.word_max_len,
    )


def validate(puzzle: ParsedPuzzle, rules: ValidationRuleSet) -> list[ValidationFailure]:
    """Collect every rule violation; an empty list means the puzzle is accepted.

    Failures come back in rule-declaration order. For the hint-only schema the
    word is supplied by the caller, so word rules and the category rule are
    skipped; the hint-contains-word rule still applies when a word is set.
    """
    schema = rules.schema
    failures: list[ValidationFailure] = []
    word = puzzle.word or ""

    if not schema.hint_only:
        n = len(word)
        if not rules.word_min_len <= n <= rules.word_max_len:
            failures.append(_word_length_failure(n, rules))
        if not _ASCII_LOWER.fullmatch(word):
            failures.append(ValidationFailure(
                FailureKind.WORD_CHARSET,
                f'word "{word}" must use only lowercase letters a-z with no accents',
            ))
        if word and is_repeat(word, rules.exclusion):
            failures.append(ValidationFailure(
                FailureKind.WORD_REPEATED, f'word "{word}" was already used',
            ))

    lo, hi = schema.hint_range
    count = len(puzzle.hints)
    if count < lo or (hi is not None and count > hi):
        wanted = f"exactly {lo}" if lo == hi else (f"at least {lo}" if hi is None else f"{lo}-{hi}")
        failures.append(ValidationFailure(
            FailureKind.HINT_COUNT,
            f"got {count} hints but we asked for {wanted}",
            actual=count, min=lo, max=hi,
        ))

    target = normalize_word(word) if word else ""
    if target:
        for i, hint in enumerate(puzzle.hints):
            if target in normalize_word(hint):
                failures.append(ValidationFailure(
                    FailureKind.HINT_CONTAINS_WORD,
                    f'hint {i + 1} contains the word "{word}"',
                    hint_index=i,
                ))

    if schema.has_category and not (puzzle.category or "").strip():
        failures.append(ValidationFailure(FailureKind.EMPTY_CATEGORY, "category is empty"))

    for i, hint in enumerate(puzzle.hints):
        if not hint.strip():
            failures.append(ValidationFailure(
                FailureKind.EMPTY_HINT, f"hint {i + 1} is empty", hint_index=i,
            ))
    return failures
