import json
import math
import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slm_resilience.engine import (
    EngineBusyError,
    EngineNotReadyError,
    GenerationIntent,
    SessionClosedError,
    open_session,
)
from slm_resilience.parser import ParseFailure, is_well_formed, parse
from slm_resilience.simulator import (
    PRESETS,
    FaultProfile,
    ModelPreset,
    SimulatedEngine,
    _hint_pools,
    field_success_probability,
)
from slm_resilience.validator import FailureKind, SchemaVariant, ValidationRuleSet, validate

DAY3 = SchemaVariant.WORD_AND_HINTS_DAY3
DAY5 = SchemaVariant.HINTS_ONLY_DAY5
PERFECT = PRESETS[ModelPreset.PERFECT]


def only(**kw) -> FaultProfile:
    return FaultProfile.from_dict(kw, PERFECT)


def word_intent(lang="pt", lo=4, hi=4, exclusions=frozenset()):
    return GenerationIntent(DAY3, lang, lo, hi, exclusions=frozenset(exclusions))


def hint_intent(word="gato", lang="pt"):
    return GenerationIntent(DAY5, lang, len(word), len(word), target_word=word)


class TestProfiles:
    def test_defaults(self):
        p = FaultProfile()
        assert (p.p_code_fence, p.p_key_translation, p.p_utf8_corruption) == (0.25, 0.17, 0.03)
        assert p.p_word_length_violation == 0.4
        assert p.retry_compliance_factor == 0.5
        assert p.p_repeat_word == 0.6

    def test_presets(self):
        assert PRESETS[ModelPreset.COMPACT_LIKE].degradation_onset_turn == 3
        assert PRESETS[ModelPreset.PREMIUM_LIKE].degradation_onset_turn == 5
        hostile = PRESETS[ModelPreset.HOSTILE]
        for name in ("p_code_fence", "p_key_translation", "p_utf8_corruption",
                     "p_word_length_violation", "p_hint_contains_word", "p_language_drift",
                     "p_repeat_word", "p_field_malformed"):
            assert getattr(PERFECT, name) == 0.0
            assert getattr(hostile, name) == 1.0

    @pytest.mark.parametrize("bad", [
        {"p_code_fence": 1.5}, {"p_field_malformed": -0.1}, {"degradation_onset_turn": 0},
        {"retry_compliance_factor": 0.0}, {"per_token_latency_ms": -1},
    ])
    def test_rejects_bad_values(self, bad):
        with pytest.raises(ValueError):
            FaultProfile.from_dict(bad)

    def test_unknown_key(self):
        with pytest.raises(ValueError):
            FaultProfile.from_dict({"p_typo": 0.1})

    def test_round_trip(self):
        p = PRESETS[ModelPreset.COMPACT_LIKE]
        assert FaultProfile.from_dict(p.to_dict()) == p

    def test_preset_names(self):
        assert ModelPreset.from_name("CompactLike") is ModelPreset.COMPACT_LIKE
        with pytest.raises(ValueError):
            ModelPreset.from_name("Huge")


class TestFieldSuccess:
    def test_seven_fields(self):
        assert field_success_probability(0.15, 7) == pytest.approx(0.3206, abs=5e-5)

    def test_two_fields(self):
        assert field_success_probability(0.15, 2) == pytest.approx(0.7225)

    def test_empty_schema(self):
        assert field_success_probability(0.15, 0) == 1.0

    def test_bad_probability(self):
        with pytest.raises(ValueError):
            field_success_probability(1.2, 2)


class TestSessions:
    def test_open_close_open(self):
        engine = SimulatedEngine(PERFECT)
        s = engine.create_session("sys")
        assert s.turns_used == 0 and not s.closed
        engine.close_session(s)
        assert s.closed
        assert engine.create_session("sys").id != s.id

    def test_double_open_is_busy(self):
        engine = SimulatedEngine(PERFECT)
        engine.create_session("sys")
        with pytest.raises(EngineBusyError):
            engine.create_session("sys")

    def test_generate_after_close(self):
        engine = SimulatedEngine(PERFECT)
        s = engine.create_session("sys")
        engine.close_session(s)
        with pytest.raises(SessionClosedError):
            engine.generate(s, "prompt", word_intent())

    def test_not_ready(self):
        engine = SimulatedEngine(PERFECT, ready=False)
        with pytest.raises(EngineNotReadyError):
            engine.create_session("sys")
        engine.initialize()
        assert engine.is_ready()

    def test_context_manager_closes_on_error(self):
        engine = SimulatedEngine(PERFECT)
        with pytest.raises(RuntimeError):
            with open_session(engine, "sys") as s:
                raise RuntimeError("boom")
        assert s.closed
        engine.create_session("sys")

    def test_turns_increment(self):
        engine = SimulatedEngine(PERFECT)
        with open_session(engine, "sys") as s:
            outs = [engine.generate(s, "p", word_intent()) for _ in range(4)]
        assert [o.turn_index for o in outs] == [0, 1, 2, 3]
        assert s.turns_used == 4
        assert {o.session_id for o in outs} == {s.id}


class TestGenerate:
    def test_perfect_hint_only(self):
        engine = SimulatedEngine(ModelPreset.PERFECT, seed=1)
        with open_session(engine, "sys") as s:
            out = engine.generate(s, "p", hint_intent())
        doc = json.loads(out.text)
        assert list(doc) == ["hints"]
        assert len(doc["hints"]) == 3
        assert set(doc["hints"]) <= set(_hint_pools()["pt"]["hints"])
        assert not out.text.startswith("`")

    def test_fence(self):
        engine = SimulatedEngine(only(p_code_fence=1.0), seed=2)
        with open_session(engine, "sys") as s:
            out = engine.generate(s, "p", word_intent())
        assert out.text.startswith("```json\n") and out.text.endswith("\n```")
        inner = json.loads(out.text[len("```json\n"):-len("\n```")])
        assert list(inner) == ["word", "hints"]

    def test_key_translation_pt(self):
        engine = SimulatedEngine(only(p_key_translation=1.0), seed=3)
        with open_session(engine, "sys") as s:
            doc = json.loads(engine.generate(s, "p", word_intent()).text)
        assert list(doc) == ["palabra", "dicas"]

    def test_key_translation_es(self):
        engine = SimulatedEngine(only(p_key_translation=1.0), seed=3)
        with open_session(engine, "sys") as s:
            doc = json.loads(engine.generate(s, "p", word_intent("es")).text)
        assert list(doc) == ["palabra", "pistas"]

    def test_utf8_corruption_hits_word(self):
        engine = SimulatedEngine(only(p_utf8_corruption=1.0), seed=4)
        with open_session(engine, "sys") as s:
            out = engine.generate(s, "p", word_intent())
        assert "\ufffd" in json.loads(out.text)["word"]
        assert parse(out, DAY3).sanitized

    def test_word_length_violation_off_by_one_or_two(self):
        engine = SimulatedEngine(only(p_word_length_violation=1.0), seed=5)
        with open_session(engine, "sys") as s:
            for _ in range(20):
                word = json.loads(engine.generate(s, "p", word_intent(lo=5, hi=5)).text)["word"]
                assert abs(len(word) - 5) in (1, 2)

    def test_hint_contains_word(self):
        engine = SimulatedEngine(only(p_hint_contains_word=1.0), seed=6)
        with open_session(engine, "sys") as s:
            out = engine.generate(s, "p", hint_intent("gato"))
        payload = parse(out, DAY5).payload
        payload.word = "gato"
        kinds = [f.kind for f in validate(payload, ValidationRuleSet(4, 4, DAY5))]
        assert FailureKind.HINT_CONTAINS_WORD in kinds

    def test_language_drift(self):
        engine = SimulatedEngine(only(p_language_drift=1.0), seed=7)
        with open_session(engine, "sys") as s:
            hints = json.loads(engine.generate(s, "p", hint_intent("gato", "pt")).text)["hints"]
        assert set(hints) <= set(_hint_pools()["en"]["hints"])

    def test_malformed_rendering(self):
        engine = SimulatedEngine(only(p_field_malformed=1.0), seed=8)
        with open_session(engine, "sys") as s:
            out = engine.generate(s, "p", GenerationIntent(
                SchemaVariant.FULL_PUZZLE_DAY1, "en", 4, 4))
        assert re.search(r'"difficulty": [1-5]/5', out.text)
        assert '"word": "' not in out.text
        assert not is_well_formed(out.text)

    def test_latency_is_token_count(self):
        engine = SimulatedEngine(only(per_token_latency_ms=10.0), seed=9)
        with open_session(engine, "sys") as s:
            out = engine.generate(s, "p", word_intent())
        tokens = re.findall(r"\w+|[^\w\s]", out.text)
        assert out.latency_ms == len(tokens) * 10
        assert engine.total_latency_ms == out.latency_ms

    def test_repeat_respects_exclusions(self):
        engine = SimulatedEngine(only(p_repeat_word=1.0), seed=10)
        with open_session(engine, "sys") as s:
            first = json.loads(engine.generate(s, "p", word_intent()).text)["word"]
            again = json.loads(engine.generate(s, "p", word_intent()).text)["word"]
            fresh = json.loads(engine.generate(s, "p", word_intent(exclusions={first})).text)["word"]
        assert again == first
        assert fresh != first


class TestRetryFeedback:
    def test_scales_named_kind_for_next_call_only(self):
        engine = SimulatedEngine(FaultProfile(p_word_length_violation=0.4, retry_compliance_factor=0.5))
        with open_session(engine, "sys") as s:
            engine.apply_retry_feedback(s, FailureKind.WORD_LENGTH)
            assert engine.effective_probabilities(s)["p_word_length_violation"] == pytest.approx(0.2)
            engine.generate(s, "p", word_intent())
            assert engine.effective_probabilities(s)["p_word_length_violation"] == pytest.approx(0.4)

    def test_factor_one_is_noop(self):
        engine = SimulatedEngine(FaultProfile(retry_compliance_factor=1.0))
        with open_session(engine, "sys") as s:
            before = engine.effective_probabilities(s)
            engine.apply_retry_feedback(s, FailureKind.WORD_LENGTH)
            assert engine.effective_probabilities(s) == before

    def test_zero_stays_zero(self):
        engine = SimulatedEngine(PERFECT)
        with open_session(engine, "sys") as s:
            engine.apply_retry_feedback(s, FailureKind.HINT_CONTAINS_WORD)
            assert engine.effective_probabilities(s)["p_hint_contains_word"] == 0.0

    def test_format_feedback(self):
        engine = SimulatedEngine(FaultProfile(p_code_fence=0.4))
        with open_session(engine, "sys") as s:
            engine.apply_retry_feedback(s, None)
            assert engine.effective_probabilities(s)["p_code_fence"] == pytest.approx(0.2)

    def test_no_exclusion_clause_repeats_rejected_word(self):
        engine = SimulatedEngine(only(p_repeat_word=1.0, p_word_length_violation=1.0), seed=3)
        with open_session(engine, "sys") as s:
            rejected = json.loads(engine.generate(s, "p", word_intent()).text)["word"]
            engine.apply_retry_feedback(s, FailureKind.WORD_LENGTH, has_exclusion_clause=False)
            again = json.loads(engine.generate(s, "p", word_intent()).text)["word"]
        assert again == rejected


class TestDegradation:
    def test_onset_and_monotone(self):
        prof = FaultProfile(p_repeat_word=0.1, degradation_onset_turn=3, degradation_increment=0.15)
        engine = SimulatedEngine(prof)
        seen = []
        with open_session(engine, "sys") as s:
            for _ in range(12):
                seen.append(engine.effective_probabilities(s)["p_repeat_word"])
                engine.generate(s, "p", word_intent())
        assert seen[:3] == [0.1, 0.1, 0.1]
        assert seen[3] == pytest.approx(0.25)
        assert all(a <= b for a, b in zip(seen, seen[1:]))
        assert seen[-1] == 1.0

    def test_fresh_session_resets(self):
        engine = SimulatedEngine(PRESETS[ModelPreset.COMPACT_LIKE])
        with open_session(engine, "sys") as s:
            base = engine.effective_probabilities(s)
            for _ in range(6):
                engine.generate(s, "p", word_intent())
            engine.apply_retry_feedback(s, FailureKind.WORD_LENGTH)
            assert engine.effective_probabilities(s) != base
        with open_session(engine, "sys") as s:
            assert engine.effective_probabilities(s) == base


def _transcript(seed, profile, intents):
    engine = SimulatedEngine(profile, seed=seed)
    with open_session(engine, "sys") as s:
        return [engine.generate(s, "p", i).text for i in intents]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**63), st.sampled_from(list(ModelPreset)))
def test_deterministic(seed, preset):
    intents = [word_intent(), hint_intent(), word_intent("en", 5, 5)] * 3
    assert _transcript(seed, preset.profile, intents) == _transcript(seed, preset.profile, intents)


@pytest.mark.parametrize("schema", [SchemaVariant.FULL_PUZZLE_DAY1, DAY3])
def test_field_independence_within_three_se(schema):
    p, trials = 0.15, 10_000
    engine = SimulatedEngine(only(p_field_malformed=p), seed=2024)
    ok = 0
    for _ in range(trials):
        with open_session(engine, "sys") as s:
            ok += is_well_formed(engine.generate(s, "p", GenerationIntent(schema, "en", 4, 4)).text)
    mean = field_success_probability(p, schema.field_count)
    se = math.sqrt(mean * (1 - mean) / trials)
    assert abs(ok / trials - mean) <= 3 * se


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from([DAY3, DAY5, SchemaVariant.FULL_PUZZLE_DAY1]))
def test_hostile_never_accepted(seed, schema):
    engine = SimulatedEngine(ModelPreset.HOSTILE, seed=seed)
    rules = ValidationRuleSet(4, 4, schema)
    with open_session(engine, "sys") as s:
        for _ in range(5):
            intent = hint_intent() if schema.hint_only else GenerationIntent(schema, "pt", 4, 4)
            out = engine.generate(s, "p", intent)
            try:
                payload = parse(out, schema).payload
            except ParseFailure:
                continue
            if schema.hint_only:
                payload.word = "gato"
            assert validate(payload, rules)
