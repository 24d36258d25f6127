"""Canonical renderers for the markdown documents the stages exchange.

These are the exact inverses of the stage parsers for well-formed
values: ``parse_extraction(render_extraction_doc(x))`` recovers ``x``.
The renderers refuse values that cannot survive the round trip (embedded
newlines, colons inside attribute types, unstripped whitespace).
"""

from __future__ import annotations

from typing import Iterable, Mapping, Sequence

from ..core import (
    Answer,
    Dimension,
    DimensionSummary,
    EntityCaption,
    ExtractionResult,
    Question,
    QuestionKind,
    QuestionVerdict,
)

_SUMMARY_LABELS = {
    Dimension.APPEARANCE: "Appearance Quality Summary",
    Dimension.INTRINSIC: "Intrinsic Attribute Consistency Summary",
    Dimension.RELATIONSHIP: "Relationship Attribute Consistency Summary",
    Dimension.OVERALL: "Overall Score",
}


class RenderError(ValueError):
    """The value cannot be rendered without losing information."""


def _check_text(value: str, what: str, allow_colon: bool = True) -> str:
    if not isinstance(value, str) or not value.strip():
        raise RenderError(f"{what} is empty")
    if value != value.strip():
        raise RenderError(f"{what} has leading/trailing whitespace: {value!r}")
    if "\n" in value or "\r" in value:
        raise RenderError(f"{what} contains a newline: {value!r}")
    if not allow_colon and ":" in value:
        raise RenderError(f"{what} contains a colon: {value!r}")
    return value


def _check_name(value: str, what: str) -> str:
    _check_text(value, what)
    if "," in value:
        raise RenderError(f"{what} contains a comma: {value!r}")
    return value


def render_structure_info(extraction: ExtractionResult) -> str:
    lines = ["# Structure Information", "## Intrinsic Attributes"]
    for ent in extraction.entities:
        lines.append(f"### {_check_name(ent.name, 'entity name')}")
        for i, attr in enumerate(ent.attributes, start=1):
            attr_type = _check_text(attr.attr_type, "attribute type", allow_colon=False)
            value = _check_text(attr.value, "attribute value")
            lines.append(f"- attribute {i}: {attr_type}: {value}")
        lines.append("")
    lines.append("## Relationship Attributes")
    for rel in extraction.relationships:
        lines.append(f"### {_check_text(rel.rel_type, 'relationship type')}")
        involved = ", ".join(_check_name(n, "entity name") for n in rel.entities_involved)
        lines.append(f"- entities involved: {involved}")
        lines.append(f"- value: {_check_text(rel.value, 'relationship value')}")
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


def _grouped_by_subject(questions: Sequence[Question]) -> list[tuple[str, list[Question]]]:
    """Consecutive runs of questions sharing a subject entity."""
    groups: list[tuple[str, list[Question]]] = []
    for q in questions:
        subject = q.subject_entities[0]
        if groups and groups[-1][0] == subject:
            groups[-1][1].append(q)
        else:
            groups.append((subject, [q]))
    return groups


def render_questions_block(extraction: ExtractionResult) -> str:
    lines = ["# Questions", "## Appearance Quality Questions"]
    for subject, group in _grouped_by_subject(extraction.questions_of(QuestionKind.APPEARANCE)):
        lines.append(f"### {_check_name(subject, 'entity name')}")
        for q in group:
            lines.append(f"- question: {_check_text(q.text, 'question text')}")
        lines.append("")
    lines.append("## Intrinsic Attribute Consistency Questions")
    for subject, group in _grouped_by_subject(extraction.questions_of(QuestionKind.INTRINSIC)):
        lines.append(f"### {_check_name(subject, 'entity name')}")
        for i, q in enumerate(group, start=1):
            lines.append(f"- question {i}: {_check_text(q.text, 'question text')}")
        lines.append("")
    lines.append("## Relationship Attribute Consistency Questions")
    for i, q in enumerate(extraction.questions_of(QuestionKind.RELATIONSHIP), start=1):
        lines.append(f"- question {i}: {_check_text(q.text, 'question text')}")
        involved = ", ".join(_check_name(n, "entity name") for n in q.subject_entities)
        lines.append(f"  - entities: {involved}")
    return "\n".join(lines).rstrip() + "\n"


def render_extraction_doc(extraction: ExtractionResult) -> str:
    """Full stage-one document: structure information plus questions."""
    return render_structure_info(extraction) + "\n" + render_questions_block(extraction)


def render_caption_doc(captions: Iterable[EntityCaption]) -> str:
    lines = ["# Image Caption"]
    for cap in captions:
        lines.append(f"## {_check_name(cap.entity, 'entity name')}")
        lines.append(f"- caption: {_check_text(cap.caption, 'caption')}")
    return "\n".join(lines) + "\n"


def render_answers_doc(
    questions: Sequence[Question], answers: Mapping[str, Answer]
) -> str:
    """Stage-two answer document for the given questions.

    Appearance entries carry explanation + score (the answer text is
    the explanation); intrinsic and relationship entries carry a free
    text answer.
    """
    def answer_for(q: Question) -> Answer:
        if q.qid not in answers:
            raise RenderError(f"no answer provided for question '{q.qid}'")
        return answers[q.qid]

    lines = ["# Answers", "## Appearance Quality Questions"]
    appearance = [q for q in questions if q.kind is QuestionKind.APPEARANCE]
    for subject, group in _grouped_by_subject(appearance):
        lines.append(f"### {_check_name(subject, 'entity name')}")
        for q in group:
            ans = answer_for(q)
            if ans.score is None:
                raise RenderError(f"appearance answer '{q.qid}' has no score")
            lines.append(f"- question: {_check_text(q.text, 'question text')}")
            lines.append(f"  - explanation: {_check_text(ans.text, 'explanation')}")
            lines.append(f"  - score: {ans.score}")
        lines.append("")
    lines.append("## Intrinsic Attribute Consistency Questions")
    intrinsic = [q for q in questions if q.kind is QuestionKind.INTRINSIC]
    for subject, group in _grouped_by_subject(intrinsic):
        lines.append(f"### {_check_name(subject, 'entity name')}")
        for i, q in enumerate(group, start=1):
            ans = answer_for(q)
            lines.append(f"- question {i}: {_check_text(q.text, 'question text')}")
            lines.append(f"  - answer: {_check_text(ans.text, 'answer')}")
        lines.append("")
    lines.append("## Relationship Attribute Consistency Questions")
    relationship = [q for q in questions if q.kind is QuestionKind.RELATIONSHIP]
    for i, q in enumerate(relationship, start=1):
        ans = answer_for(q)
        involved = ", ".join(_check_name(n, "entity name") for n in q.subject_entities)
        lines.append(f"- question {i}: {_check_text(q.text, 'question text')}")
        lines.append(f"  - entities: {involved}")
        lines.append(f"  - answer: {_check_text(ans.text, 'answer')}")
    return "\n".join(lines).rstrip() + "\n"


def render_answer_stage_doc(
    questions: Sequence[Question],
    captions: Iterable[EntityCaption],
    answers: Mapping[str, Answer],
) -> str:
    """Complete stage-two transcript: captions followed by answers."""
    return render_caption_doc(captions) + "\n" + render_answers_doc(questions, answers)


def render_summaries_block(summaries: Sequence[DimensionSummary]) -> list[str]:
    by_dim = {s.dimension: s for s in summaries}
    if len(by_dim) != len(list(summaries)):
        raise RenderError("duplicate dimension in summaries")
    missing = [d.value for d in Dimension if d not in by_dim]
    if missing:
        raise RenderError(f"missing summaries for: {', '.join(missing)}")
    lines = ["## Overall Evaluation"]
    for dim in Dimension:
        s = by_dim[dim]
        lines.append(f"- {_SUMMARY_LABELS[dim]}:")
        lines.append(f"  - explanation: {_check_text(s.explanation, 'explanation')}")
        lines.append(f"  - score: {s.score}")
    return lines


def render_evaluation_doc(
    questions: Sequence[Question],
    verdicts: Mapping[str, QuestionVerdict],
    summaries: Sequence[DimensionSummary],
) -> str:
    """Stage-three transcript: per-question judgements plus summaries."""
    def verdict_for(q: Question) -> QuestionVerdict:
        if q.qid not in verdicts:
            raise RenderError(f"no verdict provided for question '{q.qid}'")
        return verdicts[q.qid]

    lines = ["# Evaluation", "## Appearance Quality Answers"]
    appearance = [q for q in questions if q.kind is QuestionKind.APPEARANCE]
    for subject, group in _grouped_by_subject(appearance):
        lines.append(f"### {_check_name(subject, 'entity name')}")
        for q in group:
            v = verdict_for(q)
            lines.append(f"- question: {_check_text(q.text, 'question text')}")
            lines.append(f"  - explanation: {_check_text(v.explanation, 'explanation')}")
            lines.append(f"  - score: {v.score}")
        lines.append("")
    lines.append("## Intrinsic Attribute Consistency Answers")
    intrinsic = [q for q in questions if q.kind is QuestionKind.INTRINSIC]
    for subject, group in _grouped_by_subject(intrinsic):
        lines.append(f"### {_check_name(subject, 'entity name')}")
        for i, q in enumerate(group, start=1):
            v = verdict_for(q)
            lines.append(f"- question {i}: {_check_text(q.text, 'question text')}")
            lines.append(f"  - answer: {_check_text(v.answer, 'answer')}")
            lines.append(f"  - explanation: {_check_text(v.explanation, 'explanation')}")
            lines.append(f"  - score: {v.score}")
        lines.append("")
    lines.append("## Relationship Attribute Consistency Answers")
    relationship = [q for q in questions if q.kind is QuestionKind.RELATIONSHIP]
    for i, q in enumerate(relationship, start=1):
        v = verdict_for(q)
        involved = ", ".join(_check_name(n, "entity name") for n in q.subject_entities)
        lines.append(f"- question {i}: {_check_text(q.text, 'question text')}")
        lines.append(f"  - entities: {involved}")
        lines.append(f"  - answer: {_check_text(v.answer, 'answer')}")
        lines.append(f"  - explanation: {_check_text(v.explanation, 'explanation')}")
        lines.append(f"  - score: {v.score}")
    lines.append("")
    lines.extend(render_summaries_block(summaries))
    return "\n".join(lines).rstrip() + "\n"


def render_direct_scores_doc(
    questions: Sequence[Question], verdicts: Mapping[str, QuestionVerdict]
) -> str:
    """Answer-stage variant where every question is scored directly.

    Used by the pipeline variant that skips free-text answering: each
    entry carries an explanation and a 0-10 score, appearance-style.
    """
    lines = ["# Answers", "## Appearance Quality Questions"]
    appearance = [q for q in questions if q.kind is QuestionKind.APPEARANCE]
    for subject, group in _grouped_by_subject(appearance):
        lines.append(f"### {_check_name(subject, 'entity name')}")
        for q in group:
            v = verdicts[q.qid]
            lines.append(f"- question: {_check_text(q.text, 'question text')}")
            lines.append(f"  - explanation: {_check_text(v.explanation, 'explanation')}")
            lines.append(f"  - score: {v.score}")
        lines.append("")
    lines.append("## Intrinsic Attribute Consistency Questions")
    intrinsic = [q for q in questions if q.kind is QuestionKind.INTRINSIC]
    for subject, group in _grouped_by_subject(intrinsic):
        lines.append(f"### {_check_name(subject, 'entity name')}")
        for i, q in enumerate(group, start=1):
            v = verdicts[q.qid]
            lines.append(f"- question {i}: {_check_text(q.text, 'question text')}")
            lines.append(f"  - explanation: {_check_text(v.explanation, 'explanation')}")
            lines.append(f"  - score: {v.score}")
        lines.append("")
    lines.append("## Relationship Attribute Consistency Questions")
    relationship = [q for q in questions if q.kind is QuestionKind.RELATIONSHIP]
    for i, q in enumerate(relationship, start=1):
        v = verdicts[q.qid]
        involved = ", ".join(_check_name(n, "entity name") for n in q.subject_entities)
        lines.append(f"- question {i}: {_check_text(q.text, 'question text')}")
        lines.append(f"  - entities: {involved}")
        lines.append(f"  - explanation: {_check_text(v.explanation, 'explanation')}")
        lines.append(f"  - score: {v.score}")
    return "\n".join(lines).rstrip() + "\n"


def render_summaries_doc(summaries: Sequence[DimensionSummary]) -> str:
    """Stage-three variant transcript holding only the four summaries."""
    return "\n".join(["# Evaluation"] + render_summaries_block(summaries)) + "\n"
