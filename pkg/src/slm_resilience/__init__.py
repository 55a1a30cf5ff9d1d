"""Defensive parsing, validation and retry orchestration for small on-device language models."""
from .parser import ParseFailure, ParsedPuzzle, RawModelOutput, Strategy, parse
from .validator import FailureKind, SchemaVariant, ValidationFailure, ValidationRuleSet, validate
from .simulator import FaultProfile, ModelPreset, SimulatedEngine
from .orchestrator import GenerationConfig, GenerationMode, GenerationReport, generate_batch

__all__ = [
    "FailureKind", "FaultProfile", "GenerationConfig", "GenerationMode", "GenerationReport",
    "ModelPreset", "ParseFailure", "ParsedPuzzle", "RawModelOutput", "SchemaVariant",
    "SimulatedEngine", "Strategy", "ValidationFailure", "ValidationRuleSet",
    "generate_batch", "parse", "validate",
]
__version__ = "0.1.0"
