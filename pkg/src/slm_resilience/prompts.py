"""Prompt templates for each rewrite generation, retries and hint-only requests."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping

from .validator import (
    FailureKind,
    SchemaVariant,
    ValidationFailure,
    ValidationRuleSet,
    normalize_word,
)

LANGUAGE_NAMES: Mapping[str, str] = {
    "pt": "Brazilian Portuguese",
    "en": "English",
    "es": "Spanish",
}


class UnknownLanguageError(ValueError):
    pass


def language_name(code: str, extra: Mapping[str, str] | None = None) -> str:
    """Full display name for a language code.

    ``extra`` holds names registered by configuration for languages added as
    data only; the shipped map always takes precedence.
    """
    if code in LANGUAGE_NAMES:
        return LANGUAGE_NAMES[code]
    if extra and code in extra:
        return extra[code]
    raise UnknownLanguageError(f"unknown language code {code!r}")


@dataclass(frozen=True)
class LanguageSpec:
    code: str
    display_name: str

    @classmethod
    def from_code(cls, code: str, extra: Mapping[str, str] | None = None) -> LanguageSpec:
        return cls(code, language_name(code, extra))


class RewriteGeneration(Enum):
    DAY1 = "Day1"
    DAY2 = "Day2"
    DAY3_HARDENED = "Day3Hardened"
    DAY4_LANGUAGE_NAMES = "Day4LanguageNames"
    DAY5_HINT_ONLY = "Day5HintOnly"

    @classmethod
    def from_name(cls, name: str) -> RewriteGeneration:
        for member in cls:
            if name in (member.value, member.name):
                return member
        raise ValueError(f"unknown prompt generation {name!r}")


_ORDER = list(RewriteGeneration)


@dataclass(frozen=True)
class PromptPair:
    system: str
    user: str
    generation: RewriteGeneration

    def __len__(self) -> int:
        return len(self.system) + len(self.user)


def exclusion_clause(words: Iterable[str]) -> str:
    """'Do NOT use any of these words: ...' or '' when nothing is excluded."""
    unique = sorted({normalize_word(w) for w in words if w.strip()})
    if not unique:
        return ""
    return "Do NOT use any of these words: " + ", ".join(unique) + "."


def _join(lines: Iterable[str]) -> str:
    return "\n".join(line for line in lines if line)


def _english_list(items: list[str]) -> str:
    if len(items) <= 1:
        return "".join(items)
    if len(items) == 2:
        return f"{items[0]} and {items[1]}"
    return ", ".join(items[:-1]) + f", and {items[-1]}"


def _schema_line(schema: SchemaVariant) -> str:
    parts = []
    for key in schema.required_keys:
        kind = {"difficulty": "number", "hints": "[...]"}.get(key, '"string"')
        parts.append(f'"{key}": {kind}')
    return "Schema: {" + ", ".join(parts) + "}"


_DAY1_SYSTEM = (
    "You are a word generator for a guessing game.\n"
    "Always respond using the provided function.\n"
    "Never add text outside the function call."
)

_ESTUFA_EXAMPLE = 'A word like "estufa" has 6 letters and would be REJECTED.'


def build_puzzle_prompt(
    rules: ValidationRuleSet,
    lang: LanguageSpec,
    exclusions: Iterable[str],
    generation: RewriteGeneration,
) -> PromptPair:
    if generation is RewriteGeneration.DAY5_HINT_ONLY:
        raise ValueError("hint-only prompts are built with build_hint_prompt")
    stage = _ORDER.index(generation)
    schema = rules.schema
    lo, hi = rules.word_min_len, rules.word_max_len
    n_hints = schema.prompt_hint_count
    language = lang.display_name if stage >= _ORDER.index(RewriteGeneration.DAY4_LANGUAGE_NAMES) else lang.code
    excluded = exclusion_clause(exclusions)

    if generation is RewriteGeneration.DAY1:
        user = _join([
            "Return ONLY valid JSON, no extra text.",
            _schema_line(schema),
            "Rules:",
            f"- The word MUST be a common noun in {language}, {lo}-{hi} letters",
            "- No proper nouns, no accents, lowercase only",
            f"- {n_hints} progressive hints: from vaguest to most specific",
            "- Hints MUST NOT contain the word",
            excluded,
        ])
        return PromptPair(_DAY1_SYSTEM, user, generation)

    keys = ", ".join(f'"{k}"' for k in schema.required_keys)
    valued = [k for k in schema.required_keys if k != "difficulty"]
    system_lines = [
        "You are a word generator for a word game.",
        "Always respond with ONLY a JSON object.",
        "No markdown, no code fences, no explanation.",
        f"The JSON keys MUST be in English: {keys}.",
        f"The values for {_english_list(valued)} must be in the requested language.",
        f"Output language for values: {language}",
    ]
    if generation is RewriteGeneration.DAY2:
        system_lines += [
            f"CRITICAL: The word MUST have exactly {lo} to {hi} letters.",
            "Count the letters carefully.",
            "Words with fewer or more letters will be rejected.",
        ]
    else:
        system_lines += [
            "CRITICAL RULE 1: Word length.",
            f"The word MUST have {lo} to {hi} letters.",
            "Count every letter before answering.",
            _ESTUFA_EXAMPLE,
            "CRITICAL RULE 2: Hints.",
            "NEVER include the word itself inside any hint.",
        ]
    user_lines = [
        _schema_line(schema),
        f"Generate 1 puzzle with {n_hints} hints.",
        f"The word MUST be a common noun in {language}.",
    ]
    if generation is RewriteGeneration.DAY4_LANGUAGE_NAMES:
        user_lines.append(f"All values MUST be written in {language}.")
    user_lines.append(excluded)
    return PromptPair(_join(system_lines), _join(user_lines), generation)


def hint_system_prompt(lang: LanguageSpec) -> str:
    name = lang.display_name
    return _join([
        f"You write short, clear word-game hints in {name}.",
        "Rules:",
        f"- ALL hints MUST be written in {name}.",
        "  Never write hints in English or any other language.",
        "- Do NOT include the word in any hint.",
        "- Each hint should be one short sentence.",
        "- Return ONLY a JSON object:",
        '  {"hints": ["hint1", "hint2", "hint3"]}',
    ])


def build_hint_prompt(word: str, lang: LanguageSpec) -> PromptPair:
    if not word or not word.strip():
        raise ValueError("word must be non-empty")
    name = lang.display_name
    user = _join([
        f"Write 3 hints for this word IN {name}.",
        "Do NOT write hints in English unless the language is English.",
        f'Word: "{word.strip()}"',
    ])
    return PromptPair(hint_system_prompt(lang), user, RewriteGeneration.DAY5_HINT_ONLY)


def _length_rule(rules: ValidationRuleSet) -> str:
    return f"The word MUST have {rules.word_min_len}-{rules.word_max_len} letters."


def _restatement(failure: ValidationFailure, rules: ValidationRuleSet) -> list[str]:
    kind = failure.kind
    if kind is FailureKind.WORD_LENGTH:
        return [_length_rule(rules)]
    if kind is FailureKind.WORD_CHARSET:
        return ["Use only lowercase letters a-z, with no accents."]
    if kind is FailureKind.WORD_REPEATED:
        return ["Every word must be new; do not repeat earlier words."]
    if kind is FailureKind.HINT_CONTAINS_WORD:
        return ["NEVER include the word itself inside any hint."]
    if kind is FailureKind.HINT_COUNT:
        lo, hi = rules.schema.hint_range
        return [f"Write exactly {lo} hints." if lo == hi else f"Write at least {lo} hints."]
    if kind is FailureKind.EMPTY_CATEGORY:
        return ["The category MUST NOT be empty."]
    return ["Every hint MUST be one non-empty sentence."]


def build_retry_prompt(failure: ValidationFailure, rules: ValidationRuleSet) -> str:
    closing = (
        "Try again with a DIFFERENT word."
        if failure.kind.is_word_failure
        else "Try again with DIFFERENT hints."
    )
    return _join([
        f"Your previous response was rejected: {failure.message}.",
        *_restatement(failure, rules),
        closing,
        exclusion_clause(rules.exclusion),
    ])


def build_format_retry_prompt(rules: ValidationRuleSet) -> str:
    """Retry text after a response no parsing layer could read."""
    keys = ", ".join(f'"{k}"' for k in rules.schema.required_keys)
    return _join([
        "Your previous response was invalid: it could not be read as JSON.",
        f"Return ONLY a JSON object with the keys {keys}.",
        "No markdown, no code fences, no explanation.",
        exclusion_clause(rules.exclusion),
    ])


def build_blind_retry_prompt(standard_user_prompt: str) -> str:
    return "Your previous response was invalid.\n" + standard_user_prompt


def build_simplified_prompt(rules: ValidationRuleSet, lang: LanguageSpec) -> PromptPair:
    n_hints = rules.schema.prompt_hint_count
    system = "Reply with ONLY a JSON object."
    user = _join([
        f"Give one common noun in {lang.display_name} with "
        f"{rules.word_min_len} to {rules.word_max_len} letters, and {n_hints} short hints.",
        '{"word": "...", "hints": ["...", "...", "..."]}',
        exclusion_clause(rules.exclusion),
    ])
    return PromptPair(system, user, RewriteGeneration.DAY4_LANGUAGE_NAMES)
