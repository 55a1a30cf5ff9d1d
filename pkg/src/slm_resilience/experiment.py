"""Seeded Monte-Carlo experiments over the simulator and report emission."""
from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache, reduce
from pathlib import Path
from typing import Any, Mapping

from .orchestrator import (
    DEFAULT_LEVELS,
    GenerationConfig,
    GenerationMode,
    GenerationReport,
    InMemoryWordStore,
    generate_batch,
)
from .prompts import LanguageSpec, RewriteGeneration, UnknownLanguageError
from .simulator import FaultProfile, ModelPreset, SimulatedEngine, field_success_probability
from .validator import FailureKind, SchemaVariant
from .wordlists import (
    DEFAULT_MIN_PER_LENGTH,
    WordList,
    WordListFormatError,
    load_shipped,
    load_word_list_file,
    validate_word_list,
)

_MASK64 = (1 << 64) - 1
TOGGLES = ("defensive_parsing", "contextual_retry", "session_rotation", "fallback")
REPORT_FORMATS = ("json", "csv")


class ConfigError(ValueError):
    pass


class WordListError(ValueError):
    pass


def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def trial_seed(seed: int, trial_index: int) -> int:
    return splitmix64((seed + trial_index) & _MASK64)


@dataclass
class ExperimentConfig:
    trials: int = 1
    seed: int = 0
    preset: str | None = None
    profile: dict[str, Any] = field(default_factory=dict)
    mode: str = GenerationMode.CURATED_WORD_LLM_HINTS.value
    schema: str | None = None
    prompt_generation: str = RewriteGeneration.DAY4_LANGUAGE_NAMES.value
    toggles: dict[str, bool] = field(default_factory=dict)
    batch_size: int | None = None
    levels: list[list[int]] | None = None
    cycle: int = 0
    session_rotation: int = 5
    max_attempts_per_item: int = 3
    language: str = "pt"
    language_names: dict[str, str] = field(default_factory=dict)
    wordlist_paths: dict[str, str] = field(default_factory=dict)
    min_words_per_length: int = DEFAULT_MIN_PER_LENGTH
    output_path: str | None = None
    format: str = "json"
    workers: int = 1

    def __post_init__(self):
        if not isinstance(self.trials, int) or self.trials < 1:
            raise ConfigError("trials must be a positive integer")
        unknown = set(self.toggles) - set(TOGGLES)
        if unknown:
            raise ConfigError(f"unknown toggles: {', '.join(sorted(unknown))}")
        self.toggles = {name: bool(self.toggles.get(name, True)) for name in TOGGLES}
        if self.format not in REPORT_FORMATS:
            raise ConfigError(f"format must be one of {REPORT_FORMATS}")
        if self.batch_size is not None and self.batch_size < 0:
            raise ConfigError("batch_size must be non-negative")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        try:
            self.fault_profile()
            self.generation_config(self.seed)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ExperimentConfig:
        if not isinstance(data, Mapping):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_file(cls, path: str | Path) -> ExperimentConfig:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(data)

    def echo(self) -> dict[str, Any]:
        """Settings that determine results; output location and workers are left out."""
        d = asdict(self)
        for key in ("output_path", "format", "workers"):
            d.pop(key)
        return d

    def fault_profile(self) -> FaultProfile:
        base = ModelPreset.from_name(self.preset).profile if self.preset else FaultProfile()
        return FaultProfile.from_dict(self.profile, base)

    def generation_config(self, seed: int) -> GenerationConfig:
        mode = GenerationMode.from_name(self.mode)
        try:
            language = LanguageSpec.from_code(self.language, self.language_names)
        except UnknownLanguageError as exc:
            raise ConfigError(str(exc)) from None
        levels = tuple(tuple(level) for level in self.levels) if self.levels else DEFAULT_LEVELS
        return GenerationConfig(
            mode=mode,
            schema=SchemaVariant.from_name(self.schema) if self.schema else None,
            levels=levels,
            session_rotation=self.session_rotation if self.toggles["session_rotation"] else None,
            max_attempts_per_item=self.max_attempts_per_item,
            language=language,
            seed=seed,
            prompt_generation=RewriteGeneration.from_name(self.prompt_generation),
            defensive_parsing=self.toggles["defensive_parsing"],
            contextual_retry=self.toggles["contextual_retry"],
            fallback=self.toggles["fallback"],
        )

    def count(self) -> int:
        if self.batch_size is not None:
            return self.batch_size
        return self.generation_config(self.seed).level(self.cycle)[1]


@dataclass
class ExperimentReport:
    config: dict[str, Any]
    aggregate: GenerationReport
    rates: dict[str, float]
    trials: list[dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": self.config,
            "aggregate": self.aggregate.to_dict(),
            "rates": dict(self.rates),
            "trials": [dict(t) for t in self.trials],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ExperimentReport:
        return cls(
            config=dict(data["config"]),
            aggregate=GenerationReport.from_dict(dict(data["aggregate"])),
            rates=dict(data["rates"]),
            trials=[dict(t) for t in data["trials"]],
        )


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def derived_rates(report: GenerationReport, predicted_field_success: float) -> dict[str, float]:
    """Rates computed only from the report's tallies (plus the analytic prediction)."""
    parsed = report.outputs_total - report.parse_failures
    return {
        "parse_success_rate": _ratio(parsed, report.outputs_total),
        "end_to_end_success_rate": _ratio(report.produced, report.requested),
        "word_length_violation_rate": _ratio(
            report.violation_counts.get(FailureKind.WORD_LENGTH.value, 0), report.attempts_total),
        "duplicate_hint_rate": _ratio(report.duplicate_hint_items, report.produced),
        "fallback_rate": _ratio(report.fallback_used, report.produced),
        "mean_attempts_per_item": _ratio(report.attempts_total, report.items_attempted),
        "predicted_field_success": predicted_field_success,
        "observed_field_success": _ratio(report.well_formed_outputs, report.outputs_total),
    }


@lru_cache(maxsize=32)
def _load_checked(language: str, path: str | None, minimum: int) -> WordList:
    try:
        wordlist = load_word_list_file(path) if path else load_shipped(language)
    except (OSError, WordListFormatError) as exc:
        raise WordListError(f"cannot load word list for {language!r}: {exc}") from None
    violations = validate_word_list(wordlist, minimum)
    if violations:
        detail = "; ".join(str(v) for v in violations)
        raise WordListError(f"word list for {language!r} is invalid: {detail}")
    return wordlist


def load_wordlist(config: ExperimentConfig) -> WordList:
    return _load_checked(
        config.language, config.wordlist_paths.get(config.language), config.min_words_per_length
    )


def run_trial(config: ExperimentConfig, index: int) -> GenerationReport:
    seed = trial_seed(config.seed, index)
    words = load_wordlist(config)
    engine = SimulatedEngine(config.fault_profile(), seed=seed, vocab={config.language: words})
    gen = config.generation_config(seed)
    _, report = generate_batch(
        config.count(), gen, engine, words, InMemoryWordStore(), cycle=config.cycle
    )
    return report


def _trial_row(index: int, seed: int, report: GenerationReport, predicted: float) -> dict[str, Any]:
    row: dict[str, Any] = {"trial": index, "seed": seed}
    for name in ("requested", "produced", "attempts_total", "fallback_used",
                 "sessions_opened", "simulated_latency_ms"):
        row[name] = getattr(report, name)
    row.update(derived_rates(report, predicted))
    return row


def run_experiment(config: ExperimentConfig, write: bool = True) -> ExperimentReport:
    """Run ``config.trials`` independent seeded batches and aggregate them.

    Trial ``i`` is seeded from ``splitmix64(seed + i)``. Results do not depend
    on ``workers``: per-trial reports are combined in trial order either way.
    """
    load_wordlist(config)
    indices = range(config.trials)
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            reports = list(pool.map(run_trial, [config] * config.trials, indices,
                                    chunksize=max(1, config.trials // (4 * config.workers))))
    else:
        reports = [run_trial(config, i) for i in indices]

    profile = config.fault_profile()
    schema = config.generation_config(config.seed).schema
    predicted = field_success_probability(profile.p_field_malformed, schema.field_count)
    aggregate = reduce(GenerationReport.merge, reports)
    report = ExperimentReport(
        config=config.echo(),
        aggregate=aggregate,
        rates=derived_rates(aggregate, predicted),
        trials=[_trial_row(i, trial_seed(config.seed, i), r, predicted) for i, r in enumerate(reports)],
    )
    if write and config.output_path:
        emit_report(report, config.format, config.output_path)
    return report


def render_report(report: ExperimentReport, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2) + "\n"
    if fmt != "csv":
        raise ValueError(f"unknown report format {fmt!r}")
    rows = list(report.trials)
    summary: dict[str, Any] = {"trial": "summary", "seed": report.config.get("seed", "")}
    for name in ("requested", "produced", "attempts_total", "fallback_used",
                 "sessions_opened", "simulated_latency_ms"):
        summary[name] = getattr(report.aggregate, name)
    summary.update(report.rates)
    columns = list(summary)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    writer.writerow(summary)
    return buf.getvalue()


def emit_report(report: ExperimentReport, fmt: str, path: str | Path) -> None:
    """Write the report; OSError propagates for unwritable paths."""
    Path(path).write_text(render_report(report, fmt), encoding="utf-8")


def load_report(path: str | Path) -> ExperimentReport:
    return ExperimentReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
