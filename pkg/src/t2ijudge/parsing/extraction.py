"""Parser for stage-one transcripts (structure information + questions)."""

from __future__ import annotations

import functools
from typing import Callable, Optional, TypeVar

from ..core import (
    AttributePair,
    Entity,
    ExtractionResult,
    Question,
    QuestionKind,
    Relationship,
    canonical_name,
    validate_extraction,
)
from .common import (
    FailureKind,
    Line,
    ParseOutcome,
    detect_failure,
    find_section,
    is_attribute_label,
    is_question_label,
    split_label,
    split_sections,
    tokenize,
)

T = TypeVar("T")

QID_PREFIX = {
    QuestionKind.APPEARANCE: "qa",
    QuestionKind.INTRINSIC: "qi",
    QuestionKind.RELATIONSHIP: "qr",
}


def total_parser(fn: Callable[..., ParseOutcome[T]]) -> Callable[..., ParseOutcome[T]]:
    """Guarantee totality: unexpected errors become malformed outcomes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except Exception as exc:  # noqa: BLE001 - totality net
            return ParseOutcome.fail(
                FailureKind.MALFORMED, [f"internal parser error: {exc!r}"]
            )

    return wrapper


def fold_text_lines(lines: list[Line], warnings: list[str]) -> list[Line]:
    """Fold wrapped prose lines into the preceding bullet."""
    out: list[Line] = []
    for line in lines:
        if line.kind == "text":
            if out and out[-1].kind == "bullet":
                prev = out[-1]
                out[-1] = Line(
                    prev.num, prev.indent, "bullet", prev.text + " " + line.text, prev.raw
                )
                warnings.append(
                    f"line {line.num}: folded wrapped text into previous bullet"
                )
            else:
                warnings.append(f"line {line.num}: ignored free text outside a bullet")
            continue
        out.append(line)
    return out


def resolve_entity_name(name: str, known: list[str]) -> str:
    """Map a header/entity mention onto the known spelling if one matches."""
    wanted = canonical_name(name)
    for candidate in known:
        if canonical_name(candidate) == wanted:
            return candidate
    return name.strip()


def resolve_entity_list(value: str, known: list[str]) -> list[str]:
    """Split an entity list that may be comma- or space-separated.

    Without commas, multi-word entity names are recovered by greedy
    segmentation against the known names; if that fails each token is
    taken as a name.
    """
    if "," in value:
        parts = [p.strip() for p in value.split(",") if p.strip()]
        return [resolve_entity_name(p, known) for p in parts]
    tokens = value.split()
    if known and tokens:
        by_tokens = {tuple(name.casefold().split()): name for name in known}
        longest = max(len(k) for k in by_tokens)
        parts: list[str] = []
        i = 0
        while i < len(tokens):
            for width in range(min(longest, len(tokens) - i), 0, -1):
                key = tuple(t.casefold() for t in tokens[i : i + width])
                if key in by_tokens:
                    parts.append(by_tokens[key])
                    i += width
                    break
            else:
                parts = []
                break
        if parts:
            return parts
    return tokens


def _parse_entities(
    body: list[Line],
    absence: list[str],
    malformed: list[str],
    warnings: list[str],
) -> list[Entity]:
    entities: list[Entity] = []
    preamble, blocks = split_sections(body, "h3")
    for stray in preamble:
        warnings.append(f"line {stray.num}: content before first entity heading")
    for heading, block in blocks:
        attrs: list[AttributePair] = []
        for line in block:
            if line.kind != "bullet":
                warnings.append(f"line {line.num}: unexpected {line.kind} in entity block")
                continue
            label, value = split_label(line.text)
            if label is None:
                malformed.append(
                    f"line {line.num}: attribute line has no 'type: value' form"
                )
                continue
            if is_attribute_label(label):
                inner_type, sep, inner_value = value.partition(":")
                if not sep or not inner_value.strip() or not inner_type.strip():
                    malformed.append(
                        f"line {line.num}: attribute entry missing a value"
                    )
                    continue
                attrs.append(
                    AttributePair(inner_type.strip().casefold(), inner_value.strip())
                )
            else:
                # "- color: black" without the "attribute N" label
                warnings.append(f"line {line.num}: attribute without ordinal label")
                attrs.append(AttributePair(label, value))
        entities.append(Entity(name=heading.text, attributes=attrs))
    return entities


def _parse_relationships(
    body: list[Line],
    known: list[str],
    absence: list[str],
    warnings: list[str],
) -> list[Relationship]:
    relationships: list[Relationship] = []
    _, blocks = split_sections(body, "h3")
    for heading, block in blocks:
        involved: Optional[list[str]] = None
        value: Optional[str] = None
        for line in block:
            if line.kind != "bullet":
                continue
            label, text = split_label(line.text)
            if label == "entities involved":
                involved = resolve_entity_list(text, known)
            elif label == "value":
                value = text
            else:
                warnings.append(f"line {line.num}: unknown relationship field {label!r}")
        if involved is None:
            absence.append(f"relationship '{heading.text}' missing 'entities involved'")
            continue
        if value is None:
            absence.append(f"relationship '{heading.text}' missing 'value'")
            continue
        relationships.append(
            Relationship(rel_type=heading.text, entities_involved=involved, value=value)
        )
    return relationships


def _parse_entity_questions(
    body: list[Line],
    kind: QuestionKind,
    known: list[str],
    warnings: list[str],
) -> list[tuple[str, str]]:
    """Questions grouped under entity headings -> [(subject, text)]."""
    found: list[tuple[str, str]] = []
    _, blocks = split_sections(body, "h3")
    for heading, block in blocks:
        subject = resolve_entity_name(heading.text, known)
        for line in block:
            if line.kind != "bullet":
                continue
            label, text = split_label(line.text)
            if is_question_label(label):
                found.append((subject, text))
            else:
                warnings.append(
                    f"line {line.num}: unexpected bullet in {kind.value} questions"
                )
    return found


def _parse_relationship_questions(
    body: list[Line],
    known: list[str],
    absence: list[str],
    warnings: list[str],
) -> list[tuple[list[str], str]]:
    found: list[tuple[Optional[list[str]], str]] = []
    for line in body:
        if line.kind != "bullet":
            continue
        label, text = split_label(line.text)
        if is_question_label(label):
            found.append((None, text))
        elif label == "entities":
            if not found:
                warnings.append(f"line {line.num}: entity list before any question")
            elif found[-1][0] is not None:
                warnings.append(f"line {line.num}: duplicate entity list")
            else:
                found[-1] = (resolve_entity_list(text, known), found[-1][1])
        else:
            warnings.append(f"line {line.num}: unexpected bullet in relationship questions")
    complete: list[tuple[list[str], str]] = []
    for i, (entities, text) in enumerate(found, start=1):
        if entities is None:
            absence.append(f"relationship question {i} missing its entity list")
        else:
            complete.append((entities, text))
    return complete


def _build_questions(
    appearance: list[tuple[str, str]],
    intrinsic: list[tuple[str, str]],
    relationship: list[tuple[list[str], str]],
) -> list[Question]:
    questions: list[Question] = []
    for i, (subject, text) in enumerate(appearance, start=1):
        questions.append(Question(f"qa-{i}", QuestionKind.APPEARANCE, text, [subject]))
    for i, (subject, text) in enumerate(intrinsic, start=1):
        questions.append(Question(f"qi-{i}", QuestionKind.INTRINSIC, text, [subject]))
    for i, (entities, text) in enumerate(relationship, start=1):
        questions.append(Question(f"qr-{i}", QuestionKind.RELATIONSHIP, text, entities))
    return questions


@total_parser
def parse_extraction(raw: str) -> ParseOutcome[ExtractionResult]:
    """Parse a stage-one transcript into an ExtractionResult.

    Top-level sections are located by name, so their relative order
    does not matter.  Core invariant violations (missing appearance
    question, question/attribute count mismatches, unknown entities)
    downgrade the outcome to a content_absence failure.
    """
    degenerate = detect_failure(raw)
    if degenerate is not None:
        return ParseOutcome(failure=degenerate)

    warnings: list[str] = []
    absence: list[str] = []
    malformed: list[str] = []
    lines = fold_text_lines(tokenize(raw), warnings)
    _, h1s = split_sections(lines, "h1")

    structure = find_section(h1s, "Structure Information")
    questions_body = find_section(h1s, "Questions")
    if structure is None:
        absence.append("missing section: # Structure Information")
    if questions_body is None:
        absence.append("missing section: # Questions")
    if absence:
        return ParseOutcome.fail(FailureKind.CONTENT_ABSENCE, absence, warnings)

    _, structure_h2 = split_sections(structure, "h2")
    intrinsic_body = find_section(structure_h2, "Intrinsic Attributes")
    relationship_body = find_section(structure_h2, "Relationship Attributes")
    if intrinsic_body is None:
        absence.append("missing section: ## Intrinsic Attributes")
    if relationship_body is None:
        absence.append("missing section: ## Relationship Attributes")
    if absence:
        return ParseOutcome.fail(FailureKind.CONTENT_ABSENCE, absence, warnings)

    entities = _parse_entities(intrinsic_body, absence, malformed, warnings)
    known = [e.name for e in entities]
    relationships = _parse_relationships(relationship_body, known, absence, warnings)

    _, question_h2 = split_sections(questions_body, "h2")
    appearance_body = find_section(question_h2, "Appearance Quality Questions")
    intrinsic_q_body = find_section(question_h2, "Intrinsic Attribute Consistency Questions")
    relationship_q_body = find_section(
        question_h2, "Relationship Attribute Consistency Questions"
    )
    for name, section in (
        ("## Appearance Quality Questions", appearance_body),
        ("## Intrinsic Attribute Consistency Questions", intrinsic_q_body),
        ("## Relationship Attribute Consistency Questions", relationship_q_body),
    ):
        if section is None:
            absence.append(f"missing section: {name}")
    if absence:
        return ParseOutcome.fail(FailureKind.CONTENT_ABSENCE, absence, warnings)

    appearance = _parse_entity_questions(
        appearance_body, QuestionKind.APPEARANCE, known, warnings
    )
    intrinsic = _parse_entity_questions(
        intrinsic_q_body, QuestionKind.INTRINSIC, known, warnings
    )
    relationship = _parse_relationship_questions(
        relationship_q_body, known, absence, warnings
    )

    result = ExtractionResult(
        entities=entities,
        relationships=relationships,
        questions=_build_questions(appearance, intrinsic, relationship),
    )
    absence.extend(str(v) for v in validate_extraction(result))
    if absence:
        return ParseOutcome.fail(FailureKind.CONTENT_ABSENCE, absence, warnings)
    if malformed:
        return ParseOutcome.fail(FailureKind.MALFORMED, malformed, warnings)
    return ParseOutcome.success(result, warnings)


@total_parser
def parse_questions_doc(raw: str) -> ParseOutcome[list[Question]]:
    """Parse a questions-only transcript (extraction-free variant).

    No entity list exists to validate against, so subjects are taken
    verbatim from the headings; only structural completeness is checked.
    """
    degenerate = detect_failure(raw)
    if degenerate is not None:
        return ParseOutcome(failure=degenerate)

    warnings: list[str] = []
    absence: list[str] = []
    lines = fold_text_lines(tokenize(raw), warnings)
    _, h1s = split_sections(lines, "h1")
    questions_body = find_section(h1s, "Questions")
    if questions_body is None:
        return ParseOutcome.fail(
            FailureKind.CONTENT_ABSENCE, ["missing section: # Questions"], warnings
        )

    _, question_h2 = split_sections(questions_body, "h2")
    appearance_body = find_section(question_h2, "Appearance Quality Questions")
    intrinsic_q_body = find_section(question_h2, "Intrinsic Attribute Consistency Questions")
    relationship_q_body = find_section(
        question_h2, "Relationship Attribute Consistency Questions"
    )
    for name, section in (
        ("## Appearance Quality Questions", appearance_body),
        ("## Intrinsic Attribute Consistency Questions", intrinsic_q_body),
        ("## Relationship Attribute Consistency Questions", relationship_q_body),
    ):
        if section is None:
            absence.append(f"missing section: {name}")
    if absence:
        return ParseOutcome.fail(FailureKind.CONTENT_ABSENCE, absence, warnings)

    appearance = _parse_entity_questions(appearance_body, QuestionKind.APPEARANCE, [], warnings)
    intrinsic = _parse_entity_questions(intrinsic_q_body, QuestionKind.INTRINSIC, [], warnings)
    relationship = _parse_relationship_questions(relationship_q_body, [], absence, warnings)

    seen_subjects: dict[str, int] = {}
    for subject, _ in appearance:
        seen_subjects[canonical_name(subject)] = seen_subjects.get(canonical_name(subject), 0) + 1
    for subject, count in seen_subjects.items():
        if count != 1:
            absence.append(f"entity '{subject}' has {count} appearance questions, expected 1")
    for i, (entities, _) in enumerate(relationship, start=1):
        if len(entities) < 2:
            absence.append(f"relationship question {i} names fewer than two entities")
    if not appearance:
        absence.append("no appearance questions found")
    if absence:
        return ParseOutcome.fail(FailureKind.CONTENT_ABSENCE, absence, warnings)
    return ParseOutcome.success(
        _build_questions(appearance, intrinsic, relationship), warnings
    )
