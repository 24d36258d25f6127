"""Parser for stage-two transcripts (image captions + answers)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..core import Answer, EntityCaption, Question, QuestionKind, QuestionVerdict
from .common import (
    FailureKind,
    ParseOutcome,
    detect_failure,
    find_section,
    split_label,
    split_sections,
    tokenize,
)
from .extraction import fold_text_lines, total_parser
from .items import collect_items, match_items, require_field, require_score

SECTION_TITLES = {
    QuestionKind.APPEARANCE: "Appearance Quality Questions",
    QuestionKind.INTRINSIC: "Intrinsic Attribute Consistency Questions",
    QuestionKind.RELATIONSHIP: "Relationship Attribute Consistency Questions",
}


@dataclass
class AnswerSet:
    """Parsed stage-two output, with answers in expected-question order."""

    captions: list[EntityCaption] = field(default_factory=list)
    answers: list[Answer] = field(default_factory=list)

    def by_qid(self) -> dict[str, Answer]:
        return {a.qid: a for a in self.answers}


def _parse_captions(body, warnings: list[str]) -> list[EntityCaption]:
    captions: list[EntityCaption] = []
    _, blocks = split_sections(body, "h2")
    for heading, block in blocks:
        caption: Optional[str] = None
        for line in block:
            if line.kind != "bullet":
                continue
            label, value = split_label(line.text)
            if label == "caption":
                caption = value
            else:
                warnings.append(f"line {line.num}: unexpected caption field {label!r}")
        if caption is None:
            warnings.append(f"caption entry '{heading.text}' has no caption text")
            continue
        captions.append(EntityCaption(entity=heading.text, caption=caption))
    return captions


def _split_answer_sections(
    answers_body, questions: list[Question], absence: list[str]
):
    """Locate the three per-kind subsections, requiring only non-empty kinds."""
    _, h2s = split_sections(answers_body, "h2")
    out = {}
    for kind in QuestionKind:
        section = find_section(h2s, SECTION_TITLES[kind])
        expected = [q for q in questions if q.kind is kind]
        if section is None and expected:
            absence.append(f"missing section: ## {SECTION_TITLES[kind]}")
        out[kind] = (section or [], expected)
    return out


@total_parser
def parse_answers(
    raw: str, questions: list[Question], require_captions: bool = True
) -> ParseOutcome[AnswerSet]:
    """Parse a stage-two transcript against the expected question set.

    Appearance entries must carry explanation + bare-integer score;
    intrinsic and relationship entries must carry an answer.  Expected
    questions are matched by section + ordinal; a shortfall is content
    absence, a bad score is malformation.
    """
    degenerate = detect_failure(raw)
    if degenerate is not None:
        return ParseOutcome(failure=degenerate)

    warnings: list[str] = []
    absence: list[str] = []
    malformed: list[str] = []
    lines = fold_text_lines(tokenize(raw), warnings)
    _, h1s = split_sections(lines, "h1")

    caption_body = find_section(h1s, "Image Caption")
    captions: list[EntityCaption] = []
    if caption_body is None:
        if require_captions:
            absence.append("missing section: # Image Caption")
    else:
        captions = _parse_captions(caption_body, warnings)

    answers_body = find_section(h1s, "Answers")
    if answers_body is None:
        absence.append("missing section: # Answers")
        return ParseOutcome.fail(FailureKind.CONTENT_ABSENCE, absence, warnings)

    sections = _split_answer_sections(answers_body, questions, absence)
    by_qid: dict[str, Answer] = {}

    body, expected = sections[QuestionKind.APPEARANCE]
    items = collect_items(body, grouped_by_entity=True, warnings=warnings)
    for question, item in match_items(items, expected, "appearance answers", absence, warnings):
        explanation = require_field(question, item, "explanation", "appearance answers", absence)
        score = require_score(question, item, "appearance answers", absence, malformed)
        if explanation is not None and score is not None:
            by_qid[question.qid] = Answer(qid=question.qid, text=explanation, score=score)

    body, expected = sections[QuestionKind.INTRINSIC]
    items = collect_items(body, grouped_by_entity=True, warnings=warnings)
    for question, item in match_items(items, expected, "intrinsic answers", absence, warnings):
        answer = require_field(question, item, "answer", "intrinsic answers", absence)
        if answer is not None:
            by_qid[question.qid] = Answer(qid=question.qid, text=answer)

    body, expected = sections[QuestionKind.RELATIONSHIP]
    items = collect_items(body, grouped_by_entity=False, warnings=warnings)
    for question, item in match_items(items, expected, "relationship answers", absence, warnings):
        answer = require_field(question, item, "answer", "relationship answers", absence)
        if answer is not None:
            by_qid[question.qid] = Answer(qid=question.qid, text=answer)

    if absence:
        return ParseOutcome.fail(FailureKind.CONTENT_ABSENCE, absence, warnings)
    if malformed:
        return ParseOutcome.fail(FailureKind.MALFORMED, malformed, warnings)
    ordered = [by_qid[q.qid] for q in questions]
    return ParseOutcome.success(AnswerSet(captions=captions, answers=ordered), warnings)


@total_parser
def parse_direct_scores(
    raw: str, questions: list[Question]
) -> ParseOutcome[list[QuestionVerdict]]:
    """Parse the direct-scoring variant: every question judged in stage two.

    Each entry carries explanation + score; no captions section and no
    free-text answers.
    """
    degenerate = detect_failure(raw)
    if degenerate is not None:
        return ParseOutcome(failure=degenerate)

    warnings: list[str] = []
    absence: list[str] = []
    malformed: list[str] = []
    lines = fold_text_lines(tokenize(raw), warnings)
    _, h1s = split_sections(lines, "h1")
    answers_body = find_section(h1s, "Answers")
    if answers_body is None:
        return ParseOutcome.fail(
            FailureKind.CONTENT_ABSENCE, ["missing section: # Answers"], warnings
        )

    sections = _split_answer_sections(answers_body, questions, absence)
    by_qid: dict[str, QuestionVerdict] = {}
    for kind in QuestionKind:
        body, expected = sections[kind]
        grouped = kind is not QuestionKind.RELATIONSHIP
        items = collect_items(body, grouped_by_entity=grouped, warnings=warnings)
        section_name = f"{kind.value} scores"
        for question, item in match_items(items, expected, section_name, absence, warnings):
            explanation = require_field(question, item, "explanation", section_name, absence)
            score = require_score(question, item, section_name, absence, malformed)
            if explanation is not None and score is not None:
                by_qid[question.qid] = QuestionVerdict(
                    qid=question.qid, answer="", explanation=explanation, score=score
                )

    if absence:
        return ParseOutcome.fail(FailureKind.CONTENT_ABSENCE, absence, warnings)
    if malformed:
        return ParseOutcome.fail(FailureKind.MALFORMED, malformed, warnings)
    return ParseOutcome.success([by_qid[q.qid] for q in questions], warnings)
