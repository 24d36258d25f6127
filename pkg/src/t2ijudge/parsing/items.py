"""Question-item extraction shared by the answer- and evaluation-stage parsers.

Both stages list per-question entries in three sections (appearance,
intrinsic, relationship).  An entry opens with a "question"/"question N"
bullet and collects labelled sub-bullets (answer, explanation, score,
entities).  Matching back to the expected questions is positional:
section + ordinal.  Header or question-text mismatches only warn; a
shortfall of entries is content absence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..core import Question, canonical_name
from .common import (
    Line,
    is_question_label,
    normalize_line,
    parse_score,
    split_label,
    split_sections,
)


@dataclass
class QuestionItem:
    line_num: int
    text: str
    block_subject: Optional[str] = None
    fields: dict[str, str] = field(default_factory=dict)
    field_lines: dict[str, int] = field(default_factory=dict)


def collect_items(
    body: list[Line],
    grouped_by_entity: bool,
    warnings: list[str],
    known_fields: tuple[str, ...] = ("answer", "explanation", "score", "entities"),
) -> list[QuestionItem]:
    """Walk one section and return its question items in document order."""
    items: list[QuestionItem] = []

    def walk(lines: list[Line], subject: Optional[str]) -> None:
        for line in lines:
            if line.kind != "bullet":
                warnings.append(f"line {line.num}: unexpected {line.kind} inside section")
                continue
            label, value = split_label(line.text)
            if is_question_label(label):
                items.append(QuestionItem(line.num, value, subject))
            elif label in known_fields:
                if not items:
                    warnings.append(f"line {line.num}: '{label}' before any question")
                elif label in items[-1].fields:
                    warnings.append(f"line {line.num}: duplicate '{label}' field")
                else:
                    items[-1].fields[label] = value
                    items[-1].field_lines[label] = line.num
            else:
                warnings.append(f"line {line.num}: unexpected bullet {line.text!r}")

    if grouped_by_entity:
        preamble, blocks = split_sections(body, "h3")
        for stray in preamble:
            if stray.kind == "bullet":
                warnings.append(f"line {stray.num}: bullet before first entity heading")
        for heading, block in blocks:
            walk(block, heading.text)
    else:
        walk(body, None)
    return items


def match_items(
    items: list[QuestionItem],
    expected: list[Question],
    section_name: str,
    absence: list[str],
    warnings: list[str],
) -> list[tuple[Question, QuestionItem]]:
    """Pair expected questions with items by ordinal position."""
    if len(items) < len(expected):
        missing = ", ".join(q.qid for q in expected[len(items) :])
        absence.append(
            f"{section_name}: {len(items)} entries for {len(expected)} expected "
            f"questions (missing {missing})"
        )
    elif len(items) > len(expected):
        warnings.append(
            f"{section_name}: ignoring {len(items) - len(expected)} extra entries"
        )
    pairs = list(zip(expected, items))
    for question, item in pairs:
        if normalize_line(item.text) != normalize_line(question.text):
            warnings.append(
                f"line {item.line_num}: question text differs from expected "
                f"'{question.qid}'"
            )
        if item.block_subject is not None and question.subject_entities:
            if canonical_name(item.block_subject) != canonical_name(
                question.subject_entities[0]
            ):
                warnings.append(
                    f"line {item.line_num}: entity heading '{item.block_subject}' "
                    f"differs from expected '{question.subject_entities[0]}'"
                )
    return pairs


def require_field(
    question: Question,
    item: QuestionItem,
    name: str,
    section_name: str,
    absence: list[str],
) -> Optional[str]:
    if name not in item.fields:
        absence.append(f"{section_name}: '{question.qid}' missing '{name}'")
        return None
    return item.fields[name]


def require_score(
    question: Question,
    item: QuestionItem,
    section_name: str,
    absence: list[str],
    malformed: list[str],
) -> Optional[int]:
    raw = require_field(question, item, "score", section_name, absence)
    if raw is None:
        return None
    score, error = parse_score(raw, item.field_lines["score"])
    if error is not None:
        malformed.append(f"{section_name}: '{question.qid}': {error}")
        return None
    return score
