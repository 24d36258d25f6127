"""Parser for stage-three transcripts (per-question judgements + summaries)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..core import Dimension, DimensionSummary, Question, QuestionKind, QuestionVerdict
from .common import (
    FailureKind,
    Line,
    ParseOutcome,
    detect_failure,
    find_section,
    normalize_title,
    parse_score,
    split_label,
    split_sections,
    tokenize,
)
from .extraction import fold_text_lines, total_parser
from .items import collect_items, match_items, require_field, require_score

SECTION_TITLES = {
    QuestionKind.APPEARANCE: "Appearance Quality Answers",
    QuestionKind.INTRINSIC: "Intrinsic Attribute Consistency Answers",
    QuestionKind.RELATIONSHIP: "Relationship Attribute Consistency Answers",
}

SUMMARY_LABELS = {
    "appearance quality summary": Dimension.APPEARANCE,
    "intrinsic attribute consistency summary": Dimension.INTRINSIC,
    "relationship attribute consistency summary": Dimension.RELATIONSHIP,
    "overall score": Dimension.OVERALL,
}


@dataclass
class EvaluationSet:
    """Parsed stage-three output: one verdict per question + 4 summaries."""

    verdicts: list[QuestionVerdict] = field(default_factory=list)
    summaries: list[DimensionSummary] = field(default_factory=list)

    def summary(self, dimension: Dimension) -> Optional[DimensionSummary]:
        for s in self.summaries:
            if s.dimension is dimension:
                return s
        return None


def parse_summaries_block(
    body: list[Line],
    absence: list[str],
    malformed: list[str],
    warnings: list[str],
) -> list[DimensionSummary]:
    """Parse the four labelled summaries of an Overall Evaluation section."""
    entries: dict[Dimension, dict[str, tuple[str, int]]] = {}
    current: Optional[dict[str, tuple[str, int]]] = None
    for line in body:
        if line.kind != "bullet":
            warnings.append(f"line {line.num}: unexpected {line.kind} in summaries")
            continue
        label, value = split_label(line.text)
        if label is None:
            # tolerate a summary label without its trailing colon
            dim = SUMMARY_LABELS.get(normalize_title(value))
            value = ""
        else:
            dim = SUMMARY_LABELS.get(normalize_title(label))
        if dim is not None:
            if dim in entries:
                malformed.append(f"line {line.num}: duplicate summary '{dim.value}'")
                current = None
                continue
            entries[dim] = {}
            current = entries[dim]
            if value:
                warnings.append(f"line {line.num}: inline value on summary label")
        elif label in ("explanation", "score"):
            if current is None:
                warnings.append(f"line {line.num}: '{label}' outside a summary")
            elif label in current:
                warnings.append(f"line {line.num}: duplicate '{label}' in summary")
            else:
                current[label] = (value, line.num)
        else:
            warnings.append(f"line {line.num}: unexpected summary bullet {line.text!r}")

    summaries: list[DimensionSummary] = []
    for dim in Dimension:
        if dim not in entries:
            absence.append(f"missing summary: {dim.value}")
            continue
        fields = entries[dim]
        if "explanation" not in fields:
            absence.append(f"summary '{dim.value}' missing explanation")
            continue
        if "score" not in fields:
            absence.append(f"summary '{dim.value}' missing score")
            continue
        raw_score, line_num = fields["score"]
        score, error = parse_score(raw_score, line_num)
        if error is not None:
            malformed.append(f"summary '{dim.value}': {error}")
            continue
        summaries.append(
            DimensionSummary(dimension=dim, explanation=fields["explanation"][0], score=score)
        )
    return summaries


@total_parser
def parse_evaluation(
    raw: str, questions: list[Question]
) -> ParseOutcome[EvaluationSet]:
    """Parse a stage-three transcript against the expected question set.

    Every question needs a judged entry (appearance: explanation+score;
    intrinsic/relationship: answer+explanation+score), and the Overall
    Evaluation section must provide all four dimension summaries.
    """
    degenerate = detect_failure(raw)
    if degenerate is not None:
        return ParseOutcome(failure=degenerate)

    warnings: list[str] = []
    absence: list[str] = []
    malformed: list[str] = []
    lines = fold_text_lines(tokenize(raw), warnings)
    _, h1s = split_sections(lines, "h1")
    evaluation_body = find_section(h1s, "Evaluation")
    if evaluation_body is None:
        return ParseOutcome.fail(
            FailureKind.CONTENT_ABSENCE, ["missing section: # Evaluation"], warnings
        )

    _, h2s = split_sections(evaluation_body, "h2")
    by_qid: dict[str, QuestionVerdict] = {}
    for kind in QuestionKind:
        expected = [q for q in questions if q.kind is kind]
        section = find_section(h2s, SECTION_TITLES[kind])
        if section is None:
            if expected:
                absence.append(f"missing section: ## {SECTION_TITLES[kind]}")
            continue
        grouped = kind is not QuestionKind.RELATIONSHIP
        items = collect_items(section, grouped_by_entity=grouped, warnings=warnings)
        section_name = f"{kind.value} judgements"
        for question, item in match_items(items, expected, section_name, absence, warnings):
            explanation = require_field(question, item, "explanation", section_name, absence)
            score = require_score(question, item, section_name, absence, malformed)
            if kind is QuestionKind.APPEARANCE:
                answer: Optional[str] = ""
            else:
                answer = require_field(question, item, "answer", section_name, absence)
            if explanation is not None and score is not None and answer is not None:
                by_qid[question.qid] = QuestionVerdict(
                    qid=question.qid, answer=answer, explanation=explanation, score=score
                )

    overall_body = find_section(h2s, "Overall Evaluation")
    summaries: list[DimensionSummary] = []
    if overall_body is None:
        absence.append("missing section: ## Overall Evaluation")
    else:
        summaries = parse_summaries_block(overall_body, absence, malformed, warnings)

    if absence:
        return ParseOutcome.fail(FailureKind.CONTENT_ABSENCE, absence, warnings)
    if malformed:
        return ParseOutcome.fail(FailureKind.MALFORMED, malformed, warnings)
    verdicts = [by_qid[q.qid] for q in questions]
    return ParseOutcome.success(
        EvaluationSet(verdicts=verdicts, summaries=summaries), warnings
    )


@total_parser
def parse_summaries_doc(raw: str) -> ParseOutcome[list[DimensionSummary]]:
    """Parse a summaries-only transcript (direct-scoring variant stage three)."""
    degenerate = detect_failure(raw)
    if degenerate is not None:
        return ParseOutcome(failure=degenerate)

    warnings: list[str] = []
    absence: list[str] = []
    malformed: list[str] = []
    lines = fold_text_lines(tokenize(raw), warnings)
    _, h2s = split_sections(lines, "h2")
    overall_body = find_section(h2s, "Overall Evaluation")
    if overall_body is None:
        return ParseOutcome.fail(
            FailureKind.CONTENT_ABSENCE,
            ["missing section: ## Overall Evaluation"],
            warnings,
        )
    summaries = parse_summaries_block(overall_body, absence, malformed, warnings)
    if absence:
        return ParseOutcome.fail(FailureKind.CONTENT_ABSENCE, absence, warnings)
    if malformed:
        return ParseOutcome.fail(FailureKind.MALFORMED, malformed, warnings)
    return ParseOutcome.success(summaries, warnings)
