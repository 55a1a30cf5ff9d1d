"""The model-engine contract the orchestrator drives.

An engine holds at most one open session and serves one generate call at a
time. A second open request fails immediately instead of waiting.
"""
from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterator, Protocol

from .parser import RawModelOutput
from .validator import FailureKind, SchemaVariant


class EngineError(RuntimeError):
    pass


class EngineBusyError(EngineError):
    """A session is already open (or a generate call is in flight)."""


class SessionClosedError(EngineError):
    pass


class EngineNotReadyError(EngineError):
    pass


@dataclass
class SessionHandle:
    id: str
    system_prompt: str
    turns_used: int = 0
    closed: bool = False


@dataclass(frozen=True)
class GenerationIntent:
    """Ground truth the caller knows about the request it just prompted for.

    ``exclusions`` mirrors the exclusion clause rendered into the prompt; an
    empty set means the prompt carried no clause.
    """

    schema: SchemaVariant
    language: str
    word_min_len: int = 4
    word_max_len: int = 4
    target_word: str | None = None
    exclusions: frozenset[str] = field(default_factory=frozenset)

    @property
    def hint_only(self) -> bool:
        return self.schema.hint_only

    @property
    def has_exclusion_clause(self) -> bool:
        return bool(self.exclusions)


class ModelEngine(Protocol):
    def is_ready(self) -> bool: ...

    def create_session(self, system_prompt: str) -> SessionHandle: ...

    def close_session(self, session: SessionHandle) -> None: ...

    def generate(
        self, session: SessionHandle, user_prompt: str, intent: GenerationIntent
    ) -> RawModelOutput: ...

    def apply_retry_feedback(
        self,
        session: SessionHandle,
        failure_kind: FailureKind | None,
        has_exclusion_clause: bool = True,
    ) -> None: ...


@contextmanager
def open_session(engine: ModelEngine, system_prompt: str) -> Iterator[SessionHandle]:
    session = engine.create_session(system_prompt)
    try:
        yield session
    finally:
        engine.close_session(session)
