"""Defensive parsing of structured puzzle/hint payloads from small-model output.

Layers run in a fixed order and the first one that recovers a payload wins:

    sanitize -> strip fences -> direct decode -> regex extraction
    (decode, then structural, on the extracted object) -> structural parse

For the hint-only schema the multi-language hint-key search, pipe-delimited
and numbered-list readers are added after direct decode fails.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:
    from .validator import SchemaVariant

REPLACEMENT_CHAR = "\ufffd"

# Applied verbatim: handles at most one level of nested braces.
JSON_OBJECT_PATTERN = re.compile(r"\{[^{}]*(?:\{[^{}]*\}[^{}]*)*\}")

HINT_KEYS = frozenset({"hints", "dicas", "pistas", "clues", "indices", "consejos"})

_TRIPLE_FENCE = re.compile(r"\A```[\w+.\-]*[ \t]*\r?\n(.*)```\Z", re.DOTALL)
_TRIPLE_FENCE_INLINE = re.compile(r"\A```(.*)```\Z", re.DOTALL)
_NUMBERED_LINE = re.compile(r"^\s*\d+[.)]\s+(.*\S)\s*$", re.MULTILINE)

STRUCTURAL_WORD_MIN = 2
STRUCTURAL_WORD_MAX = 9


class Strategy(str, Enum):
    DIRECT_DECODE = "DirectDecode"
    FENCE_STRIPPED = "FenceStripped"
    REGEX_EXTRACTED = "RegexExtracted"
    STRUCTURAL = "Structural"
    HINT_KEY_SEARCH = "HintKeySearch"
    PIPE_DELIMITED = "PipeDelimited"
    NUMBERED_LIST = "NumberedList"


@dataclass(frozen=True)
class RawModelOutput:
    text: str
    session_id: str = ""
    turn_index: int = 0
    latency_ms: int = 0


@dataclass
class ParsedPuzzle:
    word: str | None = None
    hints: list[str] = field(default_factory=list)
    category: str | None = None
    difficulty: int | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "word": self.word,
            "hints": list(self.hints),
            "category": self.category,
            "difficulty": self.difficulty,
        }


@dataclass(frozen=True)
class ParseOutcome:
    payload: ParsedPuzzle
    strategy: Strategy
    sanitized: bool = False


@dataclass(frozen=True)
class LayerResult:
    layer: str
    reason: str


class DecodeError(ValueError):
    """Canonical decoding did not produce the schema's required fields."""


class ParseFailure(ValueError):
    """Every parsing layer declined. ``layers`` lists why, in pipeline order."""

    def __init__(self, layers: list[LayerResult]):
        self.layers = layers
        detail = "; ".join(f"{r.layer}: {r.reason}" for r in layers)
        super().__init__(f"no parsing layer succeeded ({detail})")


def sanitize_utf8(text: str) -> str:
    return text.replace(REPLACEMENT_CHAR, "")


def _strip_once(text: str) -> str | None:
    t = text.strip()
    if len(t) >= 6 and t.startswith("```") and t.endswith("```"):
        m = _TRIPLE_FENCE.match(t) or _TRIPLE_FENCE_INLINE.match(t)
        if m and "```" not in m.group(1):
            return m.group(1).strip()
    if len(t) >= 2 and t[0] == "`" and t[-1] == "`" and "`" not in t[1:-1]:
        return t[1:-1].strip()
    return None


def strip_code_fences(text: str) -> str:
    """Unwrap a whole-string code fence (```tag ... ``` or `...`).

    Nested wrappers are peeled until none is left, so the function is
    idempotent. Text that is not wrapped comes back unchanged, untrimmed.
    """
    inner = _strip_once(text)
    if inner is None:
        return text
    while True:
        nxt = _strip_once(inner)
        if nxt is None:
            return inner
        inner = nxt


def _load_pairs(text: str) -> Any:
    """json.loads that keeps objects as ordered (key, value) pair lists."""
    return json.loads(text, object_pairs_hook=_Pairs)


class _Pairs(list):
    """Marker type for decoded objects; preserves textual key order and duplicates."""


def _try_load_object(text: str) -> _Pairs | None:
    try:
        obj = _load_pairs(text.strip())
    except (ValueError, RecursionError):
        return None
    return obj if isinstance(obj, _Pairs) else None


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _clean_hints(values: list[Any]) -> list[str]:
    out = []
    for v in values:
        if isinstance(v, str):
            v = v.strip()
            if v:
                out.append(v)
    return out


def _clean_word(value: str) -> str | None:
    w = value.strip().lower()
    if not w or any(ch.isspace() for ch in w):
        return None
    return w


def direct_decode(text: str, schema: SchemaVariant) -> ParsedPuzzle:
    """Decode ``text`` by canonical English keys; raise DecodeError otherwise."""
    obj = _try_load_object(text)
    if obj is None:
        raise DecodeError("not a single well-formed JSON object")
    fields: dict[str, Any] = {}
    for key, value in obj:
        fields.setdefault(key, value)
    missing = [k for k in schema.required_keys if k not in fields]
    if missing:
        raise DecodeError(f"missing canonical keys: {', '.join(missing)}")

    puzzle = ParsedPuzzle()
    if "hints" in fields:
        hints = fields["hints"]
        if not isinstance(hints, list) or not all(isinstance(h, str) for h in hints):
            raise DecodeError("'hints' is not an array of strings")
        puzzle.hints = _clean_hints(hints)
    if "word" in fields:
        if not isinstance(fields["word"], str):
            raise DecodeError("'word' is not a string")
        word = _clean_word(fields["word"])
        if word is None:
            raise DecodeError("'word' is empty or contains whitespace")
        puzzle.word = word
    if "category" in fields:
        if not isinstance(fields["category"], str):
            raise DecodeError("'category' is not a string")
        puzzle.category = fields["category"].strip()
    if "difficulty" in fields:
        if not _is_int(fields["difficulty"]):
            raise DecodeError("'difficulty' is not an integer")
        puzzle.difficulty = fields["difficulty"]
    return puzzle


def regex_extract_json(text: str) -> str | None:
    m = JSON_OBJECT_PATTERN.search(text)
    return m.group(0) if m else None


def structural_parse(text: str) -> ParsedPuzzle | None:
    """Assign fields by value shape, ignoring key names.

    A string array is hints (a later array replaces an earlier one), the first
    integer is the difficulty, the first 2-9 character string without spaces
    is the word and the first other string is the category.
    """
    obj = _try_load_object(text)
    if obj is None:
        return None
    word = category = difficulty = hints = None
    for _, value in obj:
        if isinstance(value, list):
            hints = _clean_hints(value)
        elif _is_int(value):
            if difficulty is None:
                difficulty = value
        elif isinstance(value, str):
            candidate = _clean_word(value)
            if (
                word is None
                and candidate is not None
                and STRUCTURAL_WORD_MIN <= len(candidate) <= STRUCTURAL_WORD_MAX
            ):
                word = candidate
            elif category is None:
                category = value.strip()
    if word is not None and hints is not None and len(hints) >= 2:
        return ParsedPuzzle(word=word, hints=hints, category=category, difficulty=difficulty)
    return None


def parse_hints_multilang(text: str) -> list[str] | None:
    obj = _try_load_object(text)
    if obj is None:
        return None
    for key, value in obj:
        if key.lower() in HINT_KEYS and isinstance(value, list):
            return _clean_hints(value)
    return None


def parse_pipe_delimited(text: str) -> list[str] | None:
    t = text.strip()
    if "|" not in t or "{" in t or "}" in t:
        return None
    parts = [p.strip() for p in t.split("|")]
    parts = [p for p in parts if p]
    return parts if len(parts) >= 2 else None


def parse_numbered_list(text: str) -> list[str] | None:
    items = [m.group(1).strip() for m in _NUMBERED_LINE.finditer(text)]
    items = [i for i in items if i]
    return items if len(items) >= 2 else None


def parse(raw: RawModelOutput | str, schema: SchemaVariant, defensive: bool = True) -> ParseOutcome:
    """Run the layered pipeline and return the first layer that succeeds.

    With ``defensive=False`` only canonical decoding of the untouched text is
    attempted. Raises ParseFailure listing every layer's reason otherwise.
    """
    text = raw.text if isinstance(raw, RawModelOutput) else raw
    layers: list[LayerResult] = []

    if not defensive:
        try:
            return ParseOutcome(direct_decode(text, schema), Strategy.DIRECT_DECODE)
        except DecodeError as exc:
            raise ParseFailure([LayerResult(Strategy.DIRECT_DECODE.value, str(exc))]) from None

    clean = sanitize_utf8(text)
    sanitized = clean != text
    body = strip_code_fences(clean)
    fenced = body != clean

    def done(payload: ParsedPuzzle, strategy: Strategy) -> ParseOutcome:
        return ParseOutcome(payload, strategy, sanitized)

    direct_tag = Strategy.FENCE_STRIPPED if fenced else Strategy.DIRECT_DECODE
    try:
        return done(direct_decode(body, schema), direct_tag)
    except DecodeError as exc:
        layers.append(LayerResult(direct_tag.value, str(exc)))

    hint_only = schema.hint_only
    if hint_only:
        hints = parse_hints_multilang(body)
        if hints is not None:
            return done(ParsedPuzzle(hints=hints), Strategy.HINT_KEY_SEARCH)
        layers.append(LayerResult(Strategy.HINT_KEY_SEARCH.value, "no recognised hint key"))

    extracted = regex_extract_json(body)
    if extracted is None:
        layers.append(LayerResult(Strategy.REGEX_EXTRACTED.value, "no braced object found"))
    else:
        try:
            return done(direct_decode(extracted, schema), Strategy.REGEX_EXTRACTED)
        except DecodeError as exc:
            layers.append(LayerResult(Strategy.REGEX_EXTRACTED.value, str(exc)))
        if hint_only:
            hints = parse_hints_multilang(extracted)
            if hints is not None:
                return done(ParsedPuzzle(hints=hints), Strategy.HINT_KEY_SEARCH)
        found = structural_parse(extracted)
        if found is not None:
            return done(found, Strategy.STRUCTURAL)
        layers.append(LayerResult(Strategy.STRUCTURAL.value, "extracted object has no word + 2 hints"))

    if hint_only:
        hints = parse_pipe_delimited(body)
        if hints is not None:
            return done(ParsedPuzzle(hints=hints), Strategy.PIPE_DELIMITED)
        layers.append(LayerResult(Strategy.PIPE_DELIMITED.value, "not a pipe-delimited list"))
        hints = parse_numbered_list(body)
        if hints is not None:
            return done(ParsedPuzzle(hints=hints), Strategy.NUMBERED_LIST)
        layers.append(LayerResult(Strategy.NUMBERED_LIST.value, "fewer than 2 numbered lines"))

    found = structural_parse(body)
    if found is not None:
        return done(found, Strategy.STRUCTURAL)
    layers.append(LayerResult(Strategy.STRUCTURAL.value, "text is not an object with word + 2 hints"))
    raise ParseFailure(layers)


def is_well_formed(text: str) -> bool:
    """True when the sanitized, unfenced text decodes as one JSON object."""
    return _try_load_object(strip_code_fences(sanitize_utf8(text))) is not None
