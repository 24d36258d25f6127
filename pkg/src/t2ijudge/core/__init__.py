"""Core record model: types, validation, and canonical serialization."""

from .io import (
    RecordParseError,
    deserialize_record,
    iter_records,
    pretty_record,
    read_records,
    serialize_record,
    write_records,
)
from .types import (
    SCHEMA_VERSION,
    SCORE_MAX,
    SCORE_MIN,
    Answer,
    AttributePair,
    Dimension,
    DimensionSummary,
    Entity,
    EntityCaption,
    EvaluationRecord,
    ExtractionResult,
    GeneratorId,
    ImageRef,
    PromptSource,
    Provenance,
    Question,
    QuestionKind,
    QuestionVerdict,
    RecordFailure,
    Relationship,
    TextPrompt,
    canonical_name,
)
from .validate import Violation, validate_dataset, validate_extraction, validate_record

__all__ = [
    "SCHEMA_VERSION",
    "SCORE_MAX",
    "SCORE_MIN",
    "Answer",
    "AttributePair",
    "Dimension",
    "DimensionSummary",
    "Entity",
    "EntityCaption",
    "EvaluationRecord",
    "ExtractionResult",
    "GeneratorId",
    "ImageRef",
    "PromptSource",
    "Provenance",
    "Question",
    "QuestionKind",
    "QuestionVerdict",
    "RecordFailure",
    "RecordParseError",
    "Relationship",
    "TextPrompt",
    "Violation",
    "canonical_name",
    "deserialize_record",
    "iter_records",
    "pretty_record",
    "read_records",
    "serialize_record",
    "validate_dataset",
    "validate_extraction",
    "validate_record",
    "write_records",
]
