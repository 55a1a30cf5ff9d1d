"""Seeded fault-injecting stand-in for an on-device model.

Each generate call builds a compliant response for the request and then
applies every fault independently with its (degradation- and
retry-adjusted) probability. The random stream is owned by the engine, so a
given seed and call sequence reproduce the same text byte for byte.
"""
from __future__ import annotations

import json
import random
import re
import string
import threading
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Any, Mapping

from .engine import (
    EngineBusyError,
    EngineNotReadyError,
    GenerationIntent,
    SessionClosedError,
    SessionHandle,
)
from .parser import REPLACEMENT_CHAR, RawModelOutput
from .prompts import LANGUAGE_NAMES
from .validator import FailureKind, normalize_word
from .wordlists import WordList, WordListFormatError, load_shipped

_PROBABILITY_FIELDS = (
    "p_code_fence",
    "p_key_translation",
    "p_utf8_corruption",
    "p_word_length_violation",
    "p_hint_contains_word",
    "p_language_drift",
    "p_repeat_word",
    "degradation_increment",
    "p_field_malformed",
)

# Same draw order on every call keeps fault decisions independent of each other.
_DRAWS = (
    "forced_repeat", "repeat", "length", "drift", "hint_repeat",
    "contains", "keys", "utf8", "fence",
)

KEY_TRANSLATIONS: Mapping[str, Mapping[str, str]] = {
    "pt": {"word": "palabra", "hints": "dicas", "category": "categoria", "difficulty": "dificuldade"},
    "es": {"word": "palabra", "hints": "pistas", "category": "categoria", "difficulty": "dificultad"},
}

_FEEDBACK_TARGETS: Mapping[FailureKind | None, tuple[str, ...]] = {
    FailureKind.WORD_LENGTH: ("p_word_length_violation",),
    FailureKind.WORD_CHARSET: ("p_utf8_corruption",),
    FailureKind.WORD_REPEATED: ("p_repeat_word",),
    FailureKind.HINT_CONTAINS_WORD: ("p_hint_contains_word",),
    FailureKind.HINT_COUNT: (),
    FailureKind.EMPTY_CATEGORY: (),
    FailureKind.EMPTY_HINT: (),
    None: ("p_code_fence", "p_key_translation", "p_field_malformed"),
}

_TOKEN = re.compile(r"\w+|[^\w\s]")


@dataclass(frozen=True)
class FaultProfile:
    p_code_fence: float = 0.25
    p_key_translation: float = 0.17
    p_utf8_corruption: float = 0.03
    p_word_length_violation: float = 0.4
    p_hint_contains_word: float = 0.1
    p_language_drift: float = 0.1
    p_repeat_word: float = 0.6
    degradation_onset_turn: int = 3
    degradation_increment: float = 0.1
    p_field_malformed: float = 0.0
    retry_compliance_factor: float = 0.5
    per_token_latency_ms: float = 0.0

    def __post_init__(self):
        for name in _PROBABILITY_FIELDS:
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} is not a probability")
        if self.degradation_onset_turn < 1:
            raise ValueError("degradation_onset_turn must be >= 1")
        if not 0.0 < self.retry_compliance_factor <= 1.0:
            raise ValueError("retry_compliance_factor must be in (0, 1]")
        if self.per_token_latency_ms < 0:
            raise ValueError("per_token_latency_ms must be non-negative")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base: FaultProfile | None = None) -> FaultProfile:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown fault profile keys: {', '.join(sorted(unknown))}")
        return replace(base or cls(), **data)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


class ModelPreset(Enum):
    COMPACT_LIKE = "CompactLike"
    PREMIUM_LIKE = "PremiumLike"
    PERFECT = "Perfect"
    HOSTILE = "Hostile"

    @property
    def profile(self) -> FaultProfile:
        return PRESETS[self]

    @classmethod
    def from_name(cls, name: str) -> ModelPreset:
        for member in cls:
            if name in (member.value, member.name):
                return member
        raise ValueError(f"unknown model preset {name!r}")


PRESETS: Mapping[ModelPreset, FaultProfile] = {
    # ~35 tok/s decode on a mid-range phone CPU; degradation after ~3 turns.
    ModelPreset.COMPACT_LIKE: FaultProfile(
        degradation_onset_turn=3, degradation_increment=0.15,
        p_field_malformed=0.05, per_token_latency_ms=28.6,
    ),
    # ~30 tok/s; better instruction following, degradation after ~5 turns.
    ModelPreset.PREMIUM_LIKE: FaultProfile(
        p_code_fence=0.1, p_key_translation=0.05, p_utf8_corruption=0.01,
        p_word_length_violation=0.15, p_hint_contains_word=0.05, p_language_drift=0.05,
        degradation_onset_turn=5, degradation_increment=0.1,
        p_field_malformed=0.02, per_token_latency_ms=33.3,
    ),
    ModelPreset.PERFECT: FaultProfile(
        p_code_fence=0.0, p_key_translation=0.0, p_utf8_corruption=0.0,
        p_word_length_violation=0.0, p_hint_contains_word=0.0, p_language_drift=0.0,
        p_repeat_word=0.0, degradation_onset_turn=1, degradation_increment=0.0,
        p_field_malformed=0.0, retry_compliance_factor=1.0,
    ),
    ModelPreset.HOSTILE: FaultProfile(
        p_code_fence=1.0, p_key_translation=1.0, p_utf8_corruption=1.0,
        p_word_length_violation=1.0, p_hint_contains_word=1.0, p_language_drift=1.0,
        p_repeat_word=1.0, degradation_onset_turn=1, degradation_increment=1.0,
        p_field_malformed=1.0, retry_compliance_factor=1.0, per_token_latency_ms=28.6,
    ),
}


def field_success_probability(p: float, n: int) -> float:
    """Chance that all ``n`` independently corruptible fields come out intact."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p={p} is not a probability")
    if n < 0:
        raise ValueError("field count must be non-negative")
    return (1.0 - p) ** n


@lru_cache(maxsize=1)
def _hint_pools() -> dict[str, Any]:
    ref = resources.files("slm_resilience") / "data" / "hint_pools.json"
    return json.loads(ref.read_text(encoding="utf-8"))


@dataclass
class _SessionState:
    handle: SessionHandle
    history: list[str] = field(default_factory=list)
    last_hints: list[str] | None = None
    last_word: str | None = None
    scaled: tuple[str, ...] = ()
    forced_repeat: str | None = None


def _render(value: Any, malformed: bool) -> str:
    if not malformed:
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, list):
        return "[" + ", ".join(str(v) for v in value) + "]"
    if isinstance(value, int):
        return f"{value}/5"
    token = str(value)
    try:
        json.loads(token)
    except ValueError:
        return token
    return token + "?"


class SimulatedEngine:
    """Mock model engine with one exclusive session and scripted fault rates."""

    def __init__(
        self,
        profile: FaultProfile | ModelPreset | None = None,
        seed: int = 0,
        vocab: Mapping[str, WordList] | None = None,
        ready: bool = True,
    ):
        if isinstance(profile, ModelPreset):
            profile = profile.profile
        self.profile = profile or FaultProfile()
        self._rng = random.Random(seed)
        self._vocab: dict[str, WordList] = dict(vocab or {})
        self._ready = ready
        self._active: _SessionState | None = None
        self._lock = threading.Lock()
        self._opened = 0
        self.total_latency_ms = 0
        self.calls = 0

    def is_ready(self) -> bool:
        return self._ready

    def initialize(self) -> None:
        self._ready = True

    def create_session(self, system_prompt: str) -> SessionHandle:
        if not self._lock.acquire(blocking=False):
            raise EngineBusyError("engine is serving another call")
        try:
            if not self._ready:
                raise EngineNotReadyError("engine is not initialized")
            if self._active is not None:
                raise EngineBusyError(f"session {self._active.handle.id} is still open")
            self._opened += 1
            handle = SessionHandle(id=f"s{self._opened}", system_prompt=system_prompt)
            self._active = _SessionState(handle)
            return handle
        finally:
            self._lock.release()

    def close_session(self, session: SessionHandle) -> None:
        session.closed = True
        if self._active is not None and self._active.handle is session:
            self._active = None

    def _state(self, session: SessionHandle) -> _SessionState:
        if session.closed or self._active is None or self._active.handle is not session:
            raise SessionClosedError(f"session {session.id} is closed")
        return self._active

    def apply_retry_feedback(
        self,
        session: SessionHandle,
        failure_kind: FailureKind | None,
        has_exclusion_clause: bool = True,
    ) -> None:
        """Make the next call more compliant on the failure just reported.

        ``failure_kind=None`` stands for an unreadable response. Without an
        exclusion clause the model may echo the word it was just told was
        wrong, at the unscaled repeat rate.
        """
        state = self._state(session)
        state.scaled = _FEEDBACK_TARGETS[failure_kind]
        state.forced_repeat = None if has_exclusion_clause else state.last_word

    def effective_probabilities(self, session: SessionHandle) -> dict[str, float]:
        """Fault rates that apply to the session's next generate call."""
        state = self._state(session)
        return self._effective(state, session.turns_used + 1)

    def _effective(self, state: _SessionState, turn: int) -> dict[str, float]:
        prof = self.profile
        probs = {name: getattr(prof, name) for name in _PROBABILITY_FIELDS}
        del probs["degradation_increment"]
        steps = max(0, turn - prof.degradation_onset_turn)
        extra = prof.degradation_increment * steps
        probs["p_repeat_word"] = min(1.0, prof.p_repeat_word + extra)
        probs["p_hint_repeat"] = min(1.0, extra)
        for name in state.scaled:
            probs[name] *= prof.retry_compliance_factor
        return probs

    def generate(
        self, session: SessionHandle, user_prompt: str, intent: GenerationIntent
    ) -> RawModelOutput:
        if not self._lock.acquire(blocking=False):
            raise EngineBusyError("a generate call is already in flight")
        try:
            return self._generate(self._state(session), intent)
        finally:
            self._lock.release()

    def _generate(self, state: _SessionState, intent: GenerationIntent) -> RawModelOutput:
        session = state.handle
        rng = self._rng
        probs = self._effective(state, session.turns_used + 1)
        u = {name: rng.random() for name in _DRAWS}
        emitted = intent.schema.emitted_fields
        field_u = [rng.random() for _ in emitted]
        pools = _hint_pools()
        pool = pools.get(intent.language, pools["en"])

        if intent.hint_only:
            word = intent.target_word or ""
        else:
            word = None
            if state.forced_repeat and u["forced_repeat"] < self.profile.p_repeat_word:
                word = state.forced_repeat
            elif u["repeat"] < probs["p_repeat_word"]:
                seen = [w for w in dict.fromkeys(state.history) if normalize_word(w) not in intent.exclusions]
                if seen:
                    word = rng.choice(seen)
            if word is None:
                if u["length"] < probs["p_word_length_violation"]:
                    word = self._wrong_length_word(intent)
                else:
                    word = self._compliant_word(intent)

        n_hints = intent.schema.prompt_hint_count
        if u["hint_repeat"] < probs["p_hint_repeat"] and state.last_hints:
            hints = list(state.last_hints)
        else:
            hint_pool = pools["en"] if u["drift"] < probs["p_language_drift"] else pool
            hints = self._compliant_hints(hint_pool, word, n_hints)
        if word and u["contains"] < probs["p_hint_contains_word"]:
            i = rng.randrange(len(hints))
            hints[i] = rng.choice(pool["leak"]).format(word=word)

        values: dict[str, Any] = {
            "word": word,
            "category": rng.choice(pool["categories"]),
            "difficulty": rng.randint(1, 5),
            "rarity": "common",
            "language": LANGUAGE_NAMES.get(intent.language, intent.language),
            "definition": pool["definition"],
            "hints": list(hints),
        }
        if u["utf8"] < probs["p_utf8_corruption"]:
            if intent.hint_only:
                values["hints"][0] = self._corrupt(values["hints"][0])
            else:
                values["word"] = self._corrupt(word)

        key_map = KEY_TRANSLATIONS.get(intent.language, {}) if u["keys"] < probs["p_key_translation"] else {}
        parts = [
            f'"{key_map.get(name, name)}": {_render(values[name], uf < probs["p_field_malformed"])}'
            for name, uf in zip(emitted, field_u)
        ]
        text = "{" + ", ".join(parts) + "}"
        if u["fence"] < probs["p_code_fence"]:
            text = "```json\n" + text + "\n```"

        if not intent.hint_only:
            state.history.append(word)
        state.last_word = word
        state.last_hints = hints
        state.scaled = ()
        state.forced_repeat = None
        turn = session.turns_used
        session.turns_used += 1
        latency = round(len(_TOKEN.findall(text)) * self.profile.per_token_latency_ms)
        self.total_latency_ms += latency
        self.calls += 1
        return RawModelOutput(text, session.id, turn, latency)

    def _corrupt(self, text: str) -> str:
        pos = self._rng.randrange(1, len(text)) if len(text) >= 2 else len(text)
        return text[:pos] + REPLACEMENT_CHAR + text[pos:]

    def _wordlist(self, language: str) -> WordList:
        if language not in self._vocab:
            try:
                self._vocab[language] = load_shipped(language)
            except WordListFormatError:
                self._vocab[language] = self._wordlist("en") if language != "en" else WordList("en", {})
        return self._vocab[language]

    def _synth_word(self, length: int, exclusions: frozenset[str]) -> str:
        while True:
            w = "".join(self._rng.choice(string.ascii_lowercase) for _ in range(length))
            if w not in exclusions:
                return w

    def _pick(self, lengths: list[int], intent: GenerationIntent) -> str:
        wl = self._wordlist(intent.language)
        candidates = [
            w for n in lengths for w in wl.bucket(n)
            if normalize_word(w) not in intent.exclusions
        ]
        if candidates:
            return self._rng.choice(candidates)
        return self._synth_word(self._rng.choice(lengths), intent.exclusions)

    def _compliant_word(self, intent: GenerationIntent) -> str:
        return self._pick(list(range(intent.word_min_len, intent.word_max_len + 1)), intent)

    def _wrong_length_word(self, intent: GenerationIntent) -> str:
        lo, hi = intent.word_min_len, intent.word_max_len
        lengths = [n for n in (lo - 2, lo - 1, hi + 1, hi + 2) if n >= 2]
        n = self._rng.choice(lengths)
        return self._pick([n], intent)

    def _compliant_hints(self, pool: Mapping[str, Any], word: str | None, n: int) -> list[str]:
        key = normalize_word(word) if word else ""
        usable = [h for h in pool["hints"] if not key or key not in normalize_word(h)]
        if len(usable) >= n:
            return self._rng.sample(usable, n)
        return usable + [f"#{i + 1}" for i in range(n - len(usable))]
