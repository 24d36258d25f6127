"""Canonical serialization for evaluation records.

A dataset file is UTF-8 JSON Lines: one record per line with sorted
keys and compact separators, so equal records always serialize to equal
bytes.  ``pretty_record`` is the indented single-record form for humans.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator, Union

from .types import SCHEMA_VERSION, EvaluationRecord


class RecordParseError(ValueError):
    """Raised when record JSON is malformed or structurally wrong.

    ``line`` is the 1-based line number within a dataset file, or 0 for
    a standalone document.
    """

    def __init__(self, message: str, line: int = 0):
        self.line = line
        where = f"line {line}: " if line else ""
        super().__init__(f"{where}{message}")


_RECORD_KEYS = frozenset(
    {
        "schema_version",
        "prompt",
        "image",
        "extraction",
        "captions",
        "answers",
        "verdicts",
        "summaries",
        "raw_transcripts",
        "provenance",
        "failure",
    }
)


def serialize_record(record: EvaluationRecord) -> str:
    """One-line canonical JSON for a record (no trailing newline)."""
    return json.dumps(
        record.to_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False
    )


def pretty_record(record: EvaluationRecord) -> str:
    return json.dumps(record.to_dict(), sort_keys=True, indent=2, ensure_ascii=False)


def deserialize_record(text: str, line: int = 0) -> EvaluationRecord:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RecordParseError(
            f"invalid JSON at column {exc.colno}: {exc.msg}", line
        ) from exc
    if not isinstance(doc, dict):
        raise RecordParseError("record document must be a JSON object", line)
    unknown = sorted(set(doc) - _RECORD_KEYS)
    if unknown:
        raise RecordParseError(f"unknown field(s): {', '.join(unknown)}", line)
    missing = sorted(_RECORD_KEYS - set(doc))
    if missing:
        raise RecordParseError(f"missing field(s): {', '.join(missing)}", line)
    if doc["schema_version"] != SCHEMA_VERSION:
        raise RecordParseError(
            f"unsupported schema_version {doc['schema_version']!r}, "
            f"expected {SCHEMA_VERSION}",
            line,
        )
    try:
        return EvaluationRecord.from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise RecordParseError(f"bad record structure: {exc}", line) from exc


def write_records(path: Union[str, Path], records: Iterable[EvaluationRecord]) -> int:
    """Write a dataset file; returns the number of records written."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(serialize_record(record))
            fh.write("\n")
            count += 1
    return count


def iter_records(path: Union[str, Path]) -> Iterator[EvaluationRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            yield deserialize_record(raw, line=lineno)


def read_records(path: Union[str, Path]) -> list[EvaluationRecord]:
    return list(iter_records(path))
