"""Shared machinery for parsing judge transcripts.

All stage parsers are total: any input string yields either a parsed
value or a classified failure (refusal, content_absence, repetition,
malformed), never an exception.  Blank lines and ``//`` comment lines
are skipped everywhere.  When several failure modes apply, the most
diagnostic one wins: repetition > refusal > content_absence > malformed.
"""

from __future__ import annotations

import enum
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Generic, Optional, TypeVar

T = TypeVar("T")

# Thresholds for degenerate-output detection.  A transcript is
# repetition-degenerate if one normalized line occurs this many times in
# a row, or if the duplicate-line ratio exceeds DUPLICATE_RATIO over at
# least MIN_LINES_FOR_RATIO non-empty lines.
CONSECUTIVE_REPEATS = 3
DUPLICATE_RATIO = 0.5
MIN_LINES_FOR_RATIO = 20

REFUSAL_PATTERNS = [
    r"\bi['’]?m sorry\b",
    r"\bi am sorry\b",
    r"\bi apolog(?:ise|ize)\b",
    r"\bi can\s?not\b",
    r"\bi can['’]t\b",
    r"\b(?:cannot|can['’]t|unable to|not able to) (?:assist|help|comply|fulfill|fulfil|provide|extract|answer|evaluate|process|complete|do)\b",
    r"\bas an ai\b",
    r"\bagainst (?:my|our) (?:guidelines|policy|policies|programming)\b",
    r"\bi (?:will not|won['’]t|refuse to|must decline|have to decline|must refuse)\b",
    r"\bno puedo\b",
]
_REFUSAL_RE = [re.compile(p) for p in REFUSAL_PATTERNS]


class FailureKind(str, enum.Enum):
    REFUSAL = "refusal"
    CONTENT_ABSENCE = "content_absence"
    REPETITION = "repetition"
    MALFORMED = "malformed"


@dataclass
class OutputFailure:
    kind: FailureKind
    evidence: list[str] = field(default_factory=list)


@dataclass
class ParseOutcome(Generic[T]):
    """Result of parsing one transcript: a value or a classified failure."""

    value: Optional[T] = None
    failure: Optional[OutputFailure] = None
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.failure is None

    @classmethod
    def success(cls, value: T, warnings: Optional[list[str]] = None) -> "ParseOutcome[T]":
        return cls(value=value, warnings=warnings or [])

    @classmethod
    def fail(
        cls,
        kind: FailureKind,
        evidence: list[str],
        warnings: Optional[list[str]] = None,
    ) -> "ParseOutcome[T]":
        return cls(
            failure=OutputFailure(kind=kind, evidence=evidence),
            warnings=warnings or [],
        )


def normalize_line(line: str) -> str:
    return " ".join(line.split()).casefold()


def normalize_title(text: str) -> str:
    return normalize_line(text).rstrip(":")


def detect_failure(raw: str) -> Optional[OutputFailure]:
    """Classify degenerate output before structural parsing.

    Returns a repetition failure for looping output, a refusal failure
    for refusal prose without any template headers, and None otherwise.
    Absence and malformation are left to the stage parsers, which know
    what content to expect.
    """
    lines = [normalize_line(l) for l in raw.splitlines() if l.strip()]

    run_line, run_len = None, 0
    for line in lines:
        if line == run_line:
            run_len += 1
            if run_len >= CONSECUTIVE_REPEATS:
                return OutputFailure(
                    FailureKind.REPETITION,
                    [f"line repeated {run_len}x consecutively: {line!r}"],
                )
        else:
            run_line, run_len = line, 1

    if len(lines) >= MIN_LINES_FOR_RATIO:
        counts = Counter(lines)
        dup_ratio = 1.0 - len(counts) / len(lines)
        if dup_ratio > DUPLICATE_RATIO:
            top, n = counts.most_common(1)[0]
            return OutputFailure(
                FailureKind.REPETITION,
                [
                    f"duplicate-line ratio {dup_ratio:.2f} over {len(lines)} lines",
                    f"most frequent ({n}x): {top!r}",
                ],
            )

    has_headers = any(l.lstrip().startswith("#") for l in raw.splitlines())
    if not has_headers:
        text = normalize_line(raw)
        for pattern in _REFUSAL_RE:
            m = pattern.search(text)
            if m:
                return OutputFailure(
                    FailureKind.REFUSAL, [f"matched refusal phrase: {m.group(0)!r}"]
                )
    return None


@dataclass
class Line:
    num: int
    indent: int
    kind: str  # "h1" | "h2" | "h3" | "bullet" | "text"
    text: str
    raw: str


_HEADING_RE = re.compile(r"^(#{1,6})\s*(.*)$")
_BULLET_RE = re.compile(r"^[-*]\s+(.*)$")


def tokenize(raw: str) -> list[Line]:
    """Split a transcript into structural lines.

    Blank lines and ``// comment`` lines are dropped.  Anything that is
    not a heading or bullet comes back as kind "text" so callers can
    fold wrapped prose into the preceding bullet.
    """
    out: list[Line] = []
    for num, raw_line in enumerate(raw.splitlines(), start=1):
        stripped = raw_line.strip()
        if not stripped or stripped.startswith("//"):
            continue
        indent = len(raw_line) - len(raw_line.lstrip())
        m = _HEADING_RE.match(stripped)
        if m:
            level = min(len(m.group(1)), 3)
            out.append(Line(num, indent, f"h{level}", m.group(2).strip(), raw_line))
            continue
        m = _BULLET_RE.match(stripped)
        if m:
            out.append(Line(num, indent, "bullet", m.group(1).strip(), raw_line))
            continue
        out.append(Line(num, indent, "text", stripped, raw_line))
    return out


def split_label(body: str) -> tuple[Optional[str], str]:
    """Split a bullet body at its first colon into (label, value)."""
    i = body.find(":")
    if i < 0:
        return None, body.strip()
    return body[:i].strip().casefold(), body[i + 1 :].strip()


def split_sections(
    lines: list[Line], level: str
) -> tuple[list[Line], list[tuple[Line, list[Line]]]]:
    """Group lines into (preamble, [(heading, body), ...]) at one level."""
    preamble: list[Line] = []
    sections: list[tuple[Line, list[Line]]] = []
    current: Optional[list[Line]] = None
    for line in lines:
        if line.kind == level:
            current = []
            sections.append((line, current))
        elif current is None:
            preamble.append(line)
        else:
            current.append(line)
    return preamble, sections


def find_section(
    sections: list[tuple[Line, list[Line]]], title: str
) -> Optional[list[Line]]:
    wanted = normalize_title(title)
    for heading, body in sections:
        if normalize_title(heading.text) == wanted:
            return body
    return None


_INT_RE = re.compile(r"-?\d+")


def parse_score(value: str, line_num: int) -> tuple[Optional[int], Optional[str]]:
    """Parse a bare-integer score in [0, 10]; (score, error) style result.

    Anything that is not a plain integer token — "8/10", "8.5", "nine",
    an empty string — is rejected, as are integers outside the range.
    """
    token = value.strip()
    if not _INT_RE.fullmatch(token):
        return None, f"line {line_num}: score is not a bare integer: {value!r}"
    score = int(token)
    if not 0 <= score <= 10:
        return None, f"line {line_num}: score {score} outside [0, 10]"
    return score, None


_QUESTION_LABEL_RE = re.compile(r"^question(?:\s+\d+)?$")
_ATTRIBUTE_LABEL_RE = re.compile(r"^attribute(?:\s+\d+)?$")


def is_question_label(label: Optional[str]) -> bool:
    return label is not None and bool(_QUESTION_LABEL_RE.fullmatch(label))


def is_attribute_label(label: Optional[str]) -> bool:
    return label is not None and bool(_ATTRIBUTE_LABEL_RE.fullmatch(label))
