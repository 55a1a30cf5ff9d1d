"""Batch generation: contextual retry, session rotation, schema/mode selection
and the deterministic hint fallback.

Progress is reported in-process through a ``(done, total)`` callback; there
is no background job machinery.
"""
from __future__ import annotations

import random
from collections.abc import Callable, Iterable, Iterator, MutableSet
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

from .engine import (
    EngineNotReadyError,
    GenerationIntent,
    ModelEngine,
    SessionHandle,
    open_session,
)
from .parser import ParseFailure, Strategy, is_well_formed, parse
from .prompts import (
    LanguageSpec,
    RewriteGeneration,
    build_blind_retry_prompt,
    build_format_retry_prompt,
    build_hint_prompt,
    build_puzzle_prompt,
    build_retry_prompt,
    build_simplified_prompt,
    hint_system_prompt,
)
from .validator import (
    FailureKind,
    SchemaVariant,
    ValidationFailure,
    ValidationRuleSet,
    normalize_word,
    validate,
)
from .wordlists import WordExhaustedError, WordList, select_word

DEFAULT_LEVELS: tuple[tuple[int, int], ...] = ((4, 5), (5, 10), (6, 10))
SESSION_ROTATION = 5
MAX_ATTEMPTS_PER_ITEM = 3
REPLENISHMENT_THRESHOLD = 10

__all__ = [
    "DEFAULT_LEVELS", "SESSION_ROTATION", "MAX_ATTEMPTS_PER_ITEM", "REPLENISHMENT_THRESHOLD",
    "GenerationMode", "PuzzleSource", "GenerationConfig", "Puzzle", "GenerationReport",
    "ItemFailure", "WordExhaustedError", "InMemoryWordStore", "FileWordStore",
    "fallback_hints", "replenishment_gate", "chunk_sizes", "generate_one", "generate_batch",
]


class GenerationMode(Enum):
    LLM_FULL_PUZZLE = "LlmFullPuzzle"
    LLM_WORD_AND_HINTS = "LlmWordAndHints"
    CURATED_WORD_LLM_HINTS = "CuratedWordLlmHints"

    @property
    def default_schema(self) -> SchemaVariant:
        return {
            GenerationMode.LLM_FULL_PUZZLE: SchemaVariant.FULL_PUZZLE_DAY1,
            GenerationMode.LLM_WORD_AND_HINTS: SchemaVariant.WORD_AND_HINTS_DAY3,
            GenerationMode.CURATED_WORD_LLM_HINTS: SchemaVariant.HINTS_ONLY_DAY5,
        }[self]

    @classmethod
    def from_name(cls, name: str) -> GenerationMode:
        for member in cls:
            if name in (member.value, member.name):
                return member
        raise ValueError(f"unknown generation mode {name!r}")


class PuzzleSource(Enum):
    MODEL = "Model"
    MODEL_RETRIED = "ModelRetried"
    FALLBACK = "Fallback"


@dataclass(frozen=True)
class GenerationConfig:
    mode: GenerationMode = GenerationMode.CURATED_WORD_LLM_HINTS
    schema: SchemaVariant | None = None
    levels: tuple[tuple[int, int], ...] = DEFAULT_LEVELS
    # None disables rotation: the whole batch runs in one session.
    session_rotation: int | None = SESSION_ROTATION
    max_attempts_per_item: int = MAX_ATTEMPTS_PER_ITEM
    language: LanguageSpec = field(default_factory=lambda: LanguageSpec.from_code("pt"))
    seed: int = 0
    prompt_generation: RewriteGeneration = RewriteGeneration.DAY4_LANGUAGE_NAMES
    defensive_parsing: bool = True
    contextual_retry: bool = True
    fallback: bool = True

    def __post_init__(self):
        if self.schema is None:
            object.__setattr__(self, "schema", self.mode.default_schema)
        if self.session_rotation is not None and self.session_rotation < 1:
            raise ValueError("session_rotation must be positive (or None to disable)")
        if self.max_attempts_per_item < 1:
            raise ValueError("max_attempts_per_item must be positive")
        if not self.levels:
            raise ValueError("levels must not be empty")
        if self.mode is GenerationMode.CURATED_WORD_LLM_HINTS and not self.schema.hint_only:
            raise ValueError("curated mode uses the hint-only schema")
        if self.mode is not GenerationMode.CURATED_WORD_LLM_HINTS and self.schema.hint_only:
            raise ValueError("hint-only schema requires curated mode")

    @property
    def curated(self) -> bool:
        return self.mode is GenerationMode.CURATED_WORD_LLM_HINTS

    def level(self, cycle: int) -> tuple[int, int]:
        """(word_length, batch_size) for a cycle; the last level repeats."""
        return self.levels[min(max(cycle, 0), len(self.levels) - 1)]


@dataclass(frozen=True)
class Puzzle:
    word: str
    hints: tuple[str, ...]
    source: PuzzleSource


def _zero_counts(keys: Iterable[str]) -> dict[str, int]:
    return {k: 0 for k in keys}


@dataclass
class GenerationReport:
    requested: int = 0
    produced: int = 0
    attempts_total: int = 0
    parse_strategy_counts: dict[str, int] = field(
        default_factory=lambda: _zero_counts(s.value for s in Strategy))
    violation_counts: dict[str, int] = field(
        default_factory=lambda: _zero_counts(k.value for k in FailureKind))
    fallback_used: int = 0
    sessions_opened: int = 0
    simulated_latency_ms: int = 0
    per_field_success_estimate: float = 0.0
    items_attempted: int = 0
    items_failed: int = 0
    outputs_total: int = 0
    well_formed_outputs: int = 0
    parse_failures: int = 0
    source_counts: dict[str, int] = field(
        default_factory=lambda: _zero_counts(s.value for s in PuzzleSource))
    duplicate_hint_items: int = 0
    word_length_mismatches: int = 0
    rejected_word_reemissions: int = 0
    max_session_turns: int = 0
    chunk_sizes: list[int] = field(default_factory=list)

    def finish(self) -> GenerationReport:
        self.per_field_success_estimate = (
            self.well_formed_outputs / self.outputs_total if self.outputs_total else 0.0
        )
        return self

    def merge(self, other: GenerationReport) -> GenerationReport:
        """Sum two reports (order-independent apart from chunk_sizes)."""
        out = GenerationReport()
        for name, value in vars(self).items():
            theirs = getattr(other, name)
            if isinstance(value, dict):
                setattr(out, name, {k: value.get(k, 0) + theirs.get(k, 0) for k in value | theirs})
            elif name == "chunk_sizes":
                out.chunk_sizes = value + theirs
            elif name == "max_session_turns":
                out.max_session_turns = max(value, theirs)
            elif name != "per_field_success_estimate":
                setattr(out, name, value + theirs)
        return out.finish()

    def to_dict(self) -> dict[str, Any]:
        return {name: (dict(v) if isinstance(v, dict) else list(v) if isinstance(v, list) else v)
                for name, v in vars(self).items()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> GenerationReport:
        return cls(**data)


class ItemFailure(RuntimeError):
    """Every attempt for one item was rejected."""

    def __init__(self, attempts: int, reasons: list[str]):
        self.attempts = attempts
        self.reasons = reasons
        super().__init__(f"item failed after {attempts} attempts: {'; '.join(reasons)}")


class InMemoryWordStore(MutableSet):
    """Used-word store kept in memory; words are stored normalized."""

    def __init__(self, words: Iterable[str] = ()):
        self._words: set[str] = {normalize_word(w) for w in words}

    def __contains__(self, word: object) -> bool:
        return isinstance(word, str) and normalize_word(word) in self._words

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self._words))

    def __len__(self) -> int:
        return len(self._words)

    def add(self, word: str) -> None:
        self._words.add(normalize_word(word))

    def discard(self, word: str) -> None:
        self._words.discard(normalize_word(word))


class FileWordStore(InMemoryWordStore):
    """Used-word store backed by a line-per-word text file (appended on add)."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        lines = self.path.read_text(encoding="utf-8").splitlines() if self.path.exists() else []
        super().__init__(line for line in lines if line.strip())

    def add(self, word: str) -> None:
        if word in self:
            return
        super().add(word)
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(normalize_word(word) + "\n")

    def discard(self, word: str) -> None:
        super().discard(word)
        self.path.write_text("".join(w + "\n" for w in self), encoding="utf-8")


_FALLBACK_TEMPLATES = {
    "pt": ("E algo que as pessoas conhecem", "Pode ser encontrado no dia a dia", "Tem {n} letras"),
    "es": ("Es algo que la gente conoce", "Se puede encontrar en el dia a dia", "Tiene {n} letras"),
    "en": ("It is something people know", "It can be found in everyday life", "It has {n} letters"),
}


def fallback_hints(word: str, language: str) -> list[str]:
    """Template hints that need no model; only the word's length is used."""
    if not word:
        raise ValueError("word must be non-empty")
    first, second, third = _FALLBACK_TEMPLATES.get(language, _FALLBACK_TEMPLATES["en"])
    return [first, second, third.format(n=len(word))]


def replenishment_gate(unplayed: int, threshold: int = REPLENISHMENT_THRESHOLD) -> bool:
    """True when enough unplayed puzzles exist and generation should be skipped."""
    if unplayed < 0 or threshold <= 0:
        raise ValueError("unplayed must be >= 0 and threshold > 0")
    return unplayed >= threshold


def chunk_sizes(count: int, rotation: int | None) -> list[int]:
    size = rotation or count
    out = []
    remaining = count
    while remaining > 0:
        out.append(min(remaining, size))
        remaining -= out[-1]
    return out


@dataclass
class _BatchState:
    """Mutable per-batch bookkeeping shared by generate_one calls."""

    exclusions: set[str] = field(default_factory=set)
    rejected_local: set[str] = field(default_factory=set)
    report: GenerationReport = field(default_factory=GenerationReport)


def _system_prompt(config: GenerationConfig, rules: ValidationRuleSet) -> str:
    if config.curated:
        return hint_system_prompt(config.language)
    return build_puzzle_prompt(rules, config.language, (), config.prompt_generation).system


def generate_one(
    session: SessionHandle,
    config: GenerationConfig,
    rules: ValidationRuleSet,
    target_word: str | None,
    rejected_local: set[str],
    engine: ModelEngine,
    used: Iterable[str] = (),
    report: GenerationReport | None = None,
) -> Puzzle:
    """Produce one validated puzzle within ``session`` or raise ItemFailure.

    Attempt 1 sends the standard prompt. With contextual retry on, attempt 2
    carries the concrete rejection reason and later attempts the simplified
    prompt, each listing every excluded and locally rejected word; with it
    off, the standard prompt is resent with no failure detail.
    """
    if config.curated and not target_word:
        raise ValueError("curated mode needs a target word")
    report = report if report is not None else GenerationReport()
    used = {normalize_word(w) for w in used}
    lang = config.language
    reasons: list[str] = []
    seen_rejected: set[str] = set()
    last_failure: ValidationFailure | None = None
    last_unreadable = False

    for attempt in range(1, config.max_attempts_per_item + 1):
        excluded = used | rejected_local if config.contextual_retry else set(used)
        attempt_rules = rules.with_exclusion(excluded)
        prompt_exclusions = () if config.curated else excluded
        if config.curated:
            standard = build_hint_prompt(target_word, lang).user
        else:
            standard = build_puzzle_prompt(
                attempt_rules, lang, prompt_exclusions, config.prompt_generation).user

        if attempt == 1:
            prompt = standard
        elif not config.contextual_retry:
            prompt = build_blind_retry_prompt(standard)
        else:
            if attempt == 2:
                prompt = (
                    build_format_retry_prompt(attempt_rules) if last_unreadable
                    else build_retry_prompt(last_failure, attempt_rules)
                )
            elif config.curated:
                prompt = standard
            else:
                prompt = build_simplified_prompt(attempt_rules, lang).user
            engine.apply_retry_feedback(session, None if last_unreadable else last_failure.kind)

        intent = GenerationIntent(
            schema=rules.schema,
            language=lang.code,
            word_min_len=rules.word_min_len,
            word_max_len=rules.word_max_len,
            target_word=target_word,
            exclusions=frozenset(prompt_exclusions),
        )
        raw = engine.generate(session, prompt, intent)
        report.attempts_total += 1
        report.outputs_total += 1
        report.simulated_latency_ms += raw.latency_ms
        report.well_formed_outputs += is_well_formed(raw.text)
        report.max_session_turns = max(report.max_session_turns, session.turns_used)

        try:
            outcome = parse(raw, rules.schema, defensive=config.defensive_parsing)
        except ParseFailure as exc:
            report.parse_failures += 1
            reasons.append(f"attempt {attempt}: unreadable ({exc.layers[-1].reason})")
            last_unreadable = True
            continue
        last_unreadable = False
        report.parse_strategy_counts[outcome.strategy.value] += 1
        payload = outcome.payload
        if config.curated:
            payload.word = target_word
        elif payload.word and normalize_word(payload.word) in seen_rejected:
            report.rejected_word_reemissions += 1

        failures = validate(payload, attempt_rules)
        if not failures:
            source = PuzzleSource.MODEL if attempt == 1 else PuzzleSource.MODEL_RETRIED
            return Puzzle(payload.word, tuple(payload.hints), source)

        for f in failures:
            report.violation_counts[f.kind.value] += 1
        last_failure = failures[0]
        reasons.append(f"attempt {attempt}: {last_failure.message}")
        if not config.curated and payload.word:
            key = normalize_word(payload.word)
            seen_rejected.add(key)
            if config.contextual_retry:
                rejected_local.add(key)

    raise ItemFailure(config.max_attempts_per_item, reasons)


ProgressCallback = Callable[[int, int], None]


def generate_batch(
    count: int,
    config: GenerationConfig,
    engine: ModelEngine,
    words: WordList | None,
    used_words: MutableSet[str],
    progress: ProgressCallback | None = None,
    cycle: int = 0,
) -> tuple[list[Puzzle], GenerationReport]:
    """Generate ``count`` puzzles for one level, rotating sessions.

    Work is split into chunks of ``session_rotation`` items, each run in a
    freshly opened session that is closed before the next one opens. In
    curated mode an item whose attempts all fail gets fallback hints; legacy
    modes skip it. ``progress(done, count)`` fires after every item, skipped
    or not.
    """
    if not engine.is_ready():
        raise EngineNotReadyError("engine must be initialized before generating")
    if count < 0:
        raise ValueError("count must be non-negative")
    if config.curated and words is None:
        raise ValueError("curated mode needs a word list")

    word_length, _ = config.level(cycle)
    rules = ValidationRuleSet(word_length, word_length, config.schema)
    rng = random.Random(config.seed * 1_000_003 + cycle)
    state = _BatchState()
    state.report.requested = count
    state.exclusions = {normalize_word(w) for w in used_words}
    puzzles: list[Puzzle] = []
    done = 0
    seen_hint_sets: set[frozenset[str]] = set()
    report = state.report

    for size in chunk_sizes(count, config.session_rotation):
        report.chunk_sizes.append(size)
        targets: list[str | None] = []
        for _ in range(size):
            if config.curated:
                pick = select_word(words, word_length, state.exclusions, rng)
                state.exclusions.add(normalize_word(pick.word))
                targets.append(pick.word)
            else:
                targets.append(None)

        with open_session(engine, _system_prompt(config, rules)) as session:
            report.sessions_opened += 1
            for target in targets:
                report.items_attempted += 1
                try:
                    puzzle = generate_one(
                        session, config, rules, target, state.rejected_local,
                        engine, state.exclusions, report,
                    )
                except ItemFailure:
                    report.items_failed += 1
                    if not (config.curated and config.fallback):
                        done += 1
                        if progress is not None:
                            progress(done, count)
                        continue
                    puzzle = Puzzle(target, tuple(fallback_hints(target, config.language.code)),
                                    PuzzleSource.FALLBACK)
                    report.fallback_used += 1

                key = normalize_word(puzzle.word)
                state.exclusions.add(key)
                used_words.add(puzzle.word)
                hint_set = frozenset(normalize_word(h) for h in puzzle.hints)
                if hint_set in seen_hint_sets:
                    report.duplicate_hint_items += 1
                seen_hint_sets.add(hint_set)
                if len(puzzle.word) != word_length:
                    report.word_length_mismatches += 1
                report.source_counts[puzzle.source.value] += 1
                puzzles.append(puzzle)
                report.produced += 1
                done += 1
                if progress is not None:
                    progress(done, count)

    return puzzles, report.finish()
