"""Domain types for staged text-to-image evaluation.

The types here mirror the three evaluation stages: structured extraction
from the text prompt, question answering against the image, and judged
scoring of those answers.  Everything is a plain dataclass with a
``to_dict``/``from_dict`` pair; validation lives in
:mod:`t2ijudge.core.validate` and reports violations as data instead of
raising.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Optional

SCHEMA_VERSION = 1

# Attribute types that describe placement rather than the entity itself.
# Extraction is expected to drop these; validation flags them.
POSITIONAL_ATTRIBUTE_TYPES = frozenset(
    {"position", "orientation", "location", "distance", "direction"}
)

SCORE_MIN = 0
SCORE_MAX = 10


def canonical_name(name: str) -> str:
    """Normalize an entity name for matching: trim and casefold."""
    return " ".join(name.split()).casefold()


class PromptSource(str, enum.Enum):
    COCO = "coco"
    LLM_GENERATED = "llm_generated"
    OTHER = "other"


class GeneratorId(str, enum.Enum):
    SD15 = "sd15"
    SDXL = "sdxl"
    SD3 = "sd3"
    OTHER = "other"
    UNKNOWN = "unknown"


class QuestionKind(str, enum.Enum):
    APPEARANCE = "appearance"
    INTRINSIC = "intrinsic"
    RELATIONSHIP = "relationship"


class Dimension(str, enum.Enum):
    APPEARANCE = "appearance"
    INTRINSIC = "intrinsic"
    RELATIONSHIP = "relationship"
    OVERALL = "overall"


@dataclass
class TextPrompt:
    id: str
    text: str
    source: PromptSource = PromptSource.OTHER

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "text": self.text, "source": self.source.value}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TextPrompt":
        return cls(id=d["id"], text=d["text"], source=PromptSource(d["source"]))


@dataclass
class ImageRef:
    id: str
    uri: str
    generator: GeneratorId = GeneratorId.UNKNOWN

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "uri": self.uri, "generator": self.generator.value}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ImageRef":
        return cls(id=d["id"], uri=d["uri"], generator=GeneratorId(d["generator"]))


@dataclass
class AttributePair:
    attr_type: str
    value: str

    def to_dict(self) -> dict[str, Any]:
        return {"attr_type": self.attr_type, "value": self.value}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AttributePair":
        return cls(attr_type=d["attr_type"], value=d["value"])


@dataclass
class Entity:
    name: str
    attributes: list[AttributePair] = field(default_factory=list)

    def attribute(self, attr_type: str) -> Optional[AttributePair]:
        for pair in self.attributes:
            if pair.attr_type == attr_type:
                return pair
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "attributes": [a.to_dict() for a in self.attributes],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Entity":
        return cls(
            name=d["name"],
            attributes=[AttributePair.from_dict(a) for a in d["attributes"]],
        )


@dataclass
class Relationship:
    rel_type: str
    entities_involved: list[str]
    value: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "rel_type": self.rel_type,
            "entities_involved": list(self.entities_involved),
            "value": self.value,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Relationship":
        return cls(
            rel_type=d["rel_type"],
            entities_involved=list(d["entities_involved"]),
            value=d["value"],
        )


@dataclass
class Question:
    qid: str
    kind: QuestionKind
    text: str
    subject_entities: list[str]

    def to_dict(self) -> dict[str, Any]:
        return {
            "qid": self.qid,
            "kind": self.kind.value,
            "text": self.text,
            "subject_entities": list(self.subject_entities),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Question":
        return cls(
            qid=d["qid"],
            kind=QuestionKind(d["kind"]),
            text=d["text"],
            subject_entities=list(d["subject_entities"]),
        )


@dataclass
class ExtractionResult:
    """Stage-one output: entities, relationships, and the question set."""

    entities: list[Entity] = field(default_factory=list)
    relationships: list[Relationship] = field(default_factory=list)
    questions: list[Question] = field(default_factory=list)

    def questions_of(self, kind: QuestionKind) -> list[Question]:
        return [q for q in self.questions if q.kind is kind]

    def entity(self, name: str) -> Optional[Entity]:
        wanted = canonical_name(name)
        for ent in self.entities:
            if canonical_name(ent.name) == wanted:
                return ent
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "entities": [e.to_dict() for e in self.entities],
            "relationships": [r.to_dict() for r in self.relationships],
            "questions": [q.to_dict() for q in self.questions],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExtractionResult":
        return cls(
            entities=[Entity.from_dict(e) for e in d["entities"]],
            relationships=[Relationship.from_dict(r) for r in d["relationships"]],
            questions=[Question.from_dict(q) for q in d["questions"]],
        )


@dataclass
class EntityCaption:
    entity: str
    caption: str

    def to_dict(self) -> dict[str, Any]:
        return {"entity": self.entity, "caption": self.caption}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EntityCaption":
        return cls(entity=d["entity"], caption=d["caption"])


@dataclass
class Answer:
    """Stage-two output for one question.

    Appearance questions are judged directly from the image, so their
    answers carry an explanation-style text plus a 0-10 score; intrinsic
    and relationship answers are free text and leave ``score`` unset.
    """

    qid: str
    text: str
    score: Optional[int] = None

    def to_dict(self) -> dict[str, Any]:
        return {"qid": self.qid, "text": self.text, "score": self.score}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Answer":
        return cls(qid=d["qid"], text=d["text"], score=d["score"])


@dataclass
class QuestionVerdict:
    """Stage-three judgement for one question."""

    qid: str
    answer: str
    explanation: str
    score: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "qid": self.qid,
            "answer": self.answer,
            "explanation": self.explanation,
            "score": self.score,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "QuestionVerdict":
        return cls(
            qid=d["qid"],
            answer=d["answer"],
            explanation=d["explanation"],
            score=d["score"],
        )


@dataclass
class DimensionSummary:
    dimension: Dimension
    explanation: str
    score: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "dimension": self.dimension.value,
            "explanation": self.explanation,
            "score": self.score,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DimensionSummary":
        return cls(
            dimension=Dimension(d["dimension"]),
            explanation=d["explanation"],
            score=d["score"],
        )


@dataclass
class RecordFailure:
    """Marks a record whose evaluation did not complete normally."""

    stage: str
    kind: str
    detail: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {"stage": self.stage, "kind": self.kind, "detail": self.detail}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RecordFailure":
        return cls(stage=d["stage"], kind=d["kind"], detail=d["detail"])


@dataclass
class Provenance:
    evaluator: str = ""
    started_at: Optional[str] = None
    finished_at: Optional[str] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "evaluator": self.evaluator,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Provenance":
        return cls(
            evaluator=d["evaluator"],
            started_at=d["started_at"],
            finished_at=d["finished_at"],
        )


@dataclass
class EvaluationRecord:
    """One evaluated text-image pair across all completed stages.

    Stage completion is inferred from content: ``extraction`` set means
    stage one ran, ``answers``/``captions`` mean stage two ran, and a
    non-empty ``summaries`` means stage three completed.
    """

    prompt: TextPrompt
    image: ImageRef
    extraction: Optional[ExtractionResult] = None
    captions: list[EntityCaption] = field(default_factory=list)
    answers: list[Answer] = field(default_factory=list)
    verdicts: list[QuestionVerdict] = field(default_factory=list)
    summaries: list[DimensionSummary] = field(default_factory=list)
    raw_transcripts: dict[str, str] = field(default_factory=dict)
    provenance: Provenance = field(default_factory=Provenance)
    failure: Optional[RecordFailure] = None

    @property
    def record_id(self) -> str:
        return f"{self.prompt.id}:{self.image.id}"

    def summary(self, dimension: Dimension) -> Optional[DimensionSummary]:
        for s in self.summaries:
            if s.dimension is dimension:
                return s
        return None

    @property
    def overall_score(self) -> Optional[int]:
        s = self.summary(Dimension.OVERALL)
        return None if s is None else s.score

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "prompt": self.prompt.to_dict(),
            "image": self.image.to_dict(),
            "extraction": self.extraction.to_dict() if self.extraction else None,
            "captions": [c.to_dict() for c in self.captions],
            "answers": [a.to_dict() for a in self.answers],
            "verdicts": [v.to_dict() for v in self.verdicts],
            "summaries": [s.to_dict() for s in self.summaries],
            "raw_transcripts": dict(self.raw_transcripts),
            "provenance": self.provenance.to_dict(),
            "failure": self.failure.to_dict() if self.failure else None,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EvaluationRecord":
        return cls(
            prompt=TextPrompt.from_dict(d["prompt"]),
            image=ImageRef.from_dict(d["image"]),
            extraction=(
                ExtractionResult.from_dict(d["extraction"])
                if d["extraction"] is not None
                else None
            ),
            captions=[EntityCaption.from_dict(c) for c in d["captions"]],
            answers=[Answer.from_dict(a) for a in d["answers"]],
            verdicts=[QuestionVerdict.from_dict(v) for v in d["verdicts"]],
            summaries=[DimensionSummary.from_dict(s) for s in d["summaries"]],
            raw_transcripts=dict(d["raw_transcripts"]),
            provenance=Provenance.from_dict(d["provenance"]),
            failure=(
                RecordFailure.from_dict(d["failure"])
                if d["failure"] is not None
                else None
            ),
        )
