"""Record validation.

``validate_record`` inspects an :class:`EvaluationRecord` and returns a
list of violations as plain data.  A record is only held to the
invariants of the stages it actually completed, so a partially
evaluated record (say, extraction only) with a sound extraction yields
an empty report.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .types import (
    Dimension,
    EvaluationRecord,
    ExtractionResult,
    POSITIONAL_ATTRIBUTE_TYPES,
    QuestionKind,
    SCORE_MAX,
    SCORE_MIN,
    canonical_name,
)


@dataclass
class Violation:
    field: str
    message: str

    def __str__(self) -> str:  # pragma: no cover - convenience only
        return f"{self.field}: {self.message}"


def _check_score(out: list[Violation], field: str, score: object) -> None:
    if not isinstance(score, int) or isinstance(score, bool):
        out.append(Violation(field, f"score must be an integer, got {score!r}"))
    elif not SCORE_MIN <= score <= SCORE_MAX:
        out.append(
            Violation(field, f"score {score} outside [{SCORE_MIN}, {SCORE_MAX}]")
        )


def validate_extraction(extraction: ExtractionResult) -> list[Violation]:
    out: list[Violation] = []
    names = [canonical_name(e.name) for e in extraction.entities]
    name_set = set(names)

    for dup, count in Counter(names).items():
        if count > 1:
            out.append(
                Violation("extraction.entities", f"duplicate entity name '{dup}'")
            )

    for ent in extraction.entities:
        prefix = f"extraction.entities[{ent.name}]"
        if not ent.name.strip():
            out.append(Violation(prefix, "entity name is empty"))
        seen_types = Counter(a.attr_type for a in ent.attributes)
        for attr_type, count in seen_types.items():
            if count > 1:
                out.append(
                    Violation(prefix, f"duplicate attribute type '{attr_type}'")
                )
            if attr_type in POSITIONAL_ATTRIBUTE_TYPES:
                out.append(
                    Violation(
                        prefix,
                        f"positional attribute type '{attr_type}' must be excluded",
                    )
                )
        existence = ent.attribute("existence")
        if existence is None or existence.value != "yes":
            out.append(Violation(prefix, "missing attribute 'existence: yes'"))
        if ent.attribute("quantity") is None:
            out.append(Violation(prefix, "missing 'quantity' attribute"))

    for i, rel in enumerate(extraction.relationships):
        prefix = f"extraction.relationships[{i}]"
        if len(rel.entities_involved) < 2:
            out.append(Violation(prefix, "fewer than two entities involved"))
        for name in rel.entities_involved:
            if canonical_name(name) not in name_set:
                out.append(Violation(prefix, f"unknown entity '{name}'"))

    qids = Counter(q.qid for q in extraction.questions)
    for qid, count in qids.items():
        if count > 1:
            out.append(Violation("extraction.questions", f"duplicate qid '{qid}'"))

    appearance_by_entity: Counter[str] = Counter()
    intrinsic_count = 0
    relationship_count = 0
    for q in extraction.questions:
        prefix = f"extraction.questions[{q.qid}]"
        if not q.text.strip():
            out.append(Violation(prefix, "question text is empty"))
        if q.kind in (QuestionKind.APPEARANCE, QuestionKind.INTRINSIC):
            if len(q.subject_entities) != 1:
                out.append(
                    Violation(prefix, "must reference exactly one entity")
                )
        else:
            if len(q.subject_entities) < 2:
                out.append(Violation(prefix, "must reference at least two entities"))
        for name in q.subject_entities:
            if canonical_name(name) not in name_set:
                out.append(Violation(prefix, f"unknown entity '{name}'"))
        if q.kind is QuestionKind.APPEARANCE and q.subject_entities:
            appearance_by_entity[canonical_name(q.subject_entities[0])] += 1
        elif q.kind is QuestionKind.INTRINSIC:
            intrinsic_count += 1
        elif q.kind is QuestionKind.RELATIONSHIP:
            relationship_count += 1

    for ent in extraction.entities:
        n = appearance_by_entity.get(canonical_name(ent.name), 0)
        if n != 1:
            out.append(
                Violation(
                    "extraction.questions",
                    f"entity '{ent.name}' has {n} appearance questions, expected 1",
                )
            )
    total_pairs = sum(len(e.attributes) for e in extraction.entities)
    if intrinsic_count != total_pairs:
        out.append(
            Violation(
                "extraction.questions",
                f"{intrinsic_count} intrinsic questions for {total_pairs} "
                "attribute pairs",
            )
        )
    if relationship_count != len(extraction.relationships):
        out.append(
            Violation(
                "extraction.questions",
                f"{relationship_count} relationship questions for "
                f"{len(extraction.relationships)} relationships",
            )
        )
    return out


def validate_record(record: EvaluationRecord) -> list[Violation]:
    """Check every invariant of the record's completed stages.

    Returns an empty list iff the record is internally consistent.
    Records marked with a failure are only held to local bounds (scores
    in range), not to cross-stage coverage.
    """
    out: list[Violation] = []

    if not record.prompt.id.strip():
        out.append(Violation("prompt.id", "empty id"))
    if not record.prompt.text.strip():
        out.append(Violation("prompt.text", "empty prompt text"))
    if not record.image.id.strip():
        out.append(Violation("image.id", "empty id"))
    if not record.image.uri.strip():
        out.append(Violation("image.uri", "empty uri"))

    if record.extraction is not None:
        out.extend(validate_extraction(record.extraction))

    question_by_qid = (
        {q.qid: q for q in record.extraction.questions} if record.extraction else {}
    )

    for i, answer in enumerate(record.answers):
        prefix = f"answers[{i}]"
        question = question_by_qid.get(answer.qid)
        if record.extraction is not None and question is None:
            out.append(Violation(prefix, f"unknown qid '{answer.qid}'"))
        if answer.score is not None:
            _check_score(out, prefix, answer.score)
            if question is not None and question.kind is not QuestionKind.APPEARANCE:
                out.append(
                    Violation(prefix, "only appearance answers carry a score")
                )
        elif question is not None and question.kind is QuestionKind.APPEARANCE:
            out.append(Violation(prefix, "appearance answer missing its score"))
        if not answer.text.strip() and (
            question is None or question.kind is not QuestionKind.APPEARANCE
        ):
            out.append(Violation(prefix, "empty answer text"))

    for i, verdict in enumerate(record.verdicts):
        prefix = f"verdicts[{i}]"
        _check_score(out, prefix, verdict.score)
        question = question_by_qid.get(verdict.qid)
        if record.extraction is not None and question is None:
            out.append(Violation(prefix, f"unknown qid '{verdict.qid}'"))
        if (
            question is not None
            and question.kind is not QuestionKind.APPEARANCE
            and not verdict.answer.strip()
        ):
            out.append(
                Violation(prefix, "empty answer allowed only for appearance")
            )

    dim_counts = Counter(s.dimension for s in record.summaries)
    for dim, count in dim_counts.items():
        if count > 1:
            out.append(
                Violation("summaries", f"duplicate summary for '{dim.value}'")
            )
    for i, s in enumerate(record.summaries):
        _check_score(out, f"summaries[{i}]", s.score)

    stage3_complete = bool(record.summaries) and record.failure is None
    if stage3_complete:
        for dim in Dimension:
            if dim_counts.get(dim, 0) == 0:
                out.append(Violation("summaries", f"missing '{dim.value}' summary"))
        if record.extraction is not None:
            verdict_qids = Counter(v.qid for v in record.verdicts)
            for qid, count in verdict_qids.items():
                if count > 1:
                    out.append(Violation("verdicts", f"duplicate qid '{qid}'"))
            missing = sorted(set(question_by_qid) - set(verdict_qids))
            if missing:
                out.append(
                    Violation(
                        "verdicts",
                        "no verdict for question(s): " + ", ".join(missing),
                    )
                )

    stage2_complete = bool(record.answers) and record.failure is None
    if stage2_complete and record.extraction is not None:
        answered = {a.qid for a in record.answers}
        missing = sorted(set(question_by_qid) - answered)
        if missing:
            out.append(
                Violation(
                    "answers", "no answer for question(s): " + ", ".join(missing)
                )
            )

    return out


def validate_dataset(records: list[EvaluationRecord]) -> list[Violation]:
    """Dataset-level checks: per-record validity plus id uniqueness."""
    out: list[Violation] = []
    seen: Counter[str] = Counter(r.record_id for r in records)
    for rid, count in sorted(seen.items()):
        if count > 1:
            out.append(Violation("dataset", f"duplicate record id '{rid}'"))
    for i, record in enumerate(records):
        for violation in validate_record(record):
            out.append(
                Violation(f"records[{i}].{violation.field}", violation.message)
            )
    return out
