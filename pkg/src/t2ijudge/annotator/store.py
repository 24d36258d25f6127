"""File-backed annotation state.

The store is an append-only event log (one JSON line per accepted
event) plus in-memory state rebuilt by replay on open.  Items advance
through three steps per annotator; a submitted step is never edited in
place, corrections append a new revision.  Every annotator sees every
item, in a shuffled order seeded by the annotator id, so the log is
the single source of truth and exports are a pure function of it.
"""

from __future__ import annotations

import enum
import hashlib
import json
import random
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..core import (
    Answer,
    Dimension,
    EntityCaption,
    DimensionSummary,
    EvaluationRecord,
    ExtractionResult,
    ImageRef,
    Provenance,
    QuestionVerdict,
    TextPrompt,
    Violation,
    iter_records,
    validate_extraction,
    validate_record,
)

PAYLOAD_VERSION = 1


class StoreError(ValueError):
    pass


class ConflictError(StoreError):
    """Submission raced another revision of the same step."""


class ValidationFailure(StoreError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        head = "; ".join(str(v) for v in violations[:3])
        super().__init__(f"{len(violations)} violation(s): {head}")


class Step(str, enum.Enum):
    EXTRACTION = "extraction"
    ANSWERS = "answers"
    SCORING = "scoring"
    DONE = "done"


STEP_ORDER = (Step.EXTRACTION, Step.ANSWERS, Step.SCORING)


@dataclass
class BenchmarkItem:
    item_id: str
    prompt: TextPrompt
    image: ImageRef
    prefill: Optional[ExtractionResult] = None


@dataclass
class StepSubmission:
    revision: int
    payload: dict


@dataclass
class ItemState:
    item_id: str
    steps: dict[Step, list[StepSubmission]] = field(default_factory=dict)

    @property
    def current_step(self) -> Step:
        for step in STEP_ORDER:
            if not self.steps.get(step):
                return step
        return Step.DONE

    def latest(self, step: Step) -> Optional[dict]:
        revisions = self.steps.get(step)
        return revisions[-1].payload if revisions else None

    def revision_count(self, step: Step) -> int:
        return len(self.steps.get(step, []))


def load_benchmark(path: Path) -> list[BenchmarkItem]:
    """Benchmark items from a dataset file; any present extraction
    becomes the machine prefill."""
    items = []
    seen = set()
    for record in iter_records(path):
        item_id = record.record_id
        if item_id in seen:
            raise StoreError(f"duplicate benchmark item '{item_id}'")
        seen.add(item_id)
        items.append(
            BenchmarkItem(
                item_id=item_id,
                prompt=record.prompt,
                image=record.image,
                prefill=record.extraction,
            )
        )
    if not items:
        raise StoreError(f"no benchmark items in {path}")
    return items


def _annotator_seed(annotator_id: str) -> int:
    digest = hashlib.sha256(annotator_id.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _question_ids(extraction: ExtractionResult) -> list[str]:
    return [q.qid for q in extraction.questions]


class AnnotationStore:
    """Annotation state over a fixed benchmark, persisted to one file."""

    def __init__(self, benchmark: list[BenchmarkItem], root: Path, prefill: bool = True):
        if not benchmark:
            raise StoreError("benchmark must be nonempty")
        ids = [item.item_id for item in benchmark]
        if len(set(ids)) != len(ids):
            raise StoreError("benchmark item ids must be unique")
        self.benchmark = list(benchmark)
        self.prefill_enabled = prefill
        self._items = {item.item_id: item for item in benchmark}
        self._root = Path(root)
        self._root.mkdir(parents=True, exist_ok=True)
        self._log_path = self._root / "events.jsonl"
        self._lock = threading.Lock()
        # annotator_id -> item_id -> ItemState
        self._state: dict[str, dict[str, ItemState]] = {}
        self._replay()
        self._log = self._log_path.open("a", encoding="utf-8")

    def close(self) -> None:
        self._log.close()

    def __enter__(self) -> "AnnotationStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- persistence ---------------------------------------------------

    def _replay(self) -> None:
        if not self._log_path.exists():
            return
        with self._log_path.open("r", encoding="utf-8") as fh:
            for raw in fh:
                raw = raw.strip()
                if not raw:
                    continue
                try:
                    event = json.loads(raw)
                except json.JSONDecodeError:
                    break  # truncated tail of an interrupted write
                self._apply(event)

    def _append(self, event: dict) -> None:
        self._log.write(json.dumps(event, sort_keys=True, separators=(",", ":")))
        self._log.write("\n")
        self._log.flush()

    def _apply(self, event: dict) -> None:
        kind = event["kind"]
        if kind == "session":
            self._state.setdefault(event["annotator_id"], {})
        elif kind == "step":
            per_item = self._state.setdefault(event["annotator_id"], {})
            state = per_item.setdefault(event["item_id"], ItemState(event["item_id"]))
            step = Step(event["step"])
            state.steps.setdefault(step, []).append(
                StepSubmission(revision=event["revision"], payload=event["payload"])
            )
        else:
            raise StoreError(f"unknown event kind '{kind}'")

    # -- sessions ------------------------------------------------------

    def item_order(self, annotator_id: str) -> list[str]:
        """Fixed per-annotator presentation order over all items."""
        order = [item.item_id for item in self.benchmark]
        random.Random(_annotator_seed(annotator_id)).shuffle(order)
        return order

    def create_session(self, annotator_id: str) -> dict:
        """Idempotent: an existing annotator resumes their session."""
        if not annotator_id or not annotator_id.strip():
            raise StoreError("annotator_id must be nonempty")
        with self._lock:
            if annotator_id not in self._state:
                self._append({"kind": "session", "annotator_id": annotator_id})
                self._state[annotator_id] = {}
        return self.progress(annotator_id)

    def annotators(self) -> list[str]:
        return sorted(self._state)

    def _item_state(self, annotator_id: str, item_id: str) -> ItemState:
        if annotator_id not in self._state:
            raise StoreError(f"no session for annotator '{annotator_id}'")
        if item_id not in self._items:
            raise StoreError(f"unknown item '{item_id}'")
        return self._state[annotator_id].setdefault(item_id, ItemState(item_id))

    def progress(self, annotator_id: str) -> dict:
        if annotator_id not in self._state:
            raise StoreError(f"no session for annotator '{annotator_id}'")
        per_item = self._state[annotator_id]
        steps = {}
        done = 0
        for item_id in self.item_order(annotator_id):
            state = per_item.get(item_id)
            current = state.current_step if state else Step.EXTRACTION
            steps[item_id] = current.value
            if current is Step.DONE:
                done += 1
        return {
            "annotator_id": annotator_id,
            "total": len(self.benchmark),
            "done": done,
            "items": steps,
        }

    def next_item(self, annotator_id: str) -> Optional[dict]:
        """First unfinished item in this annotator's order, with the
        context the UI needs: pair, prefill, step, prior payloads."""
        if annotator_id not in self._state:
            raise StoreError(f"no session for annotator '{annotator_id}'")
        per_item = self._state[annotator_id]
        for item_id in self.item_order(annotator_id):
            state = per_item.get(item_id)
            current = state.current_step if state else Step.EXTRACTION
            if current is Step.DONE:
                continue
            item = self._items[item_id]
            view = {
                "item_id": item_id,
                "prompt": item.prompt.to_dict(),
                "image": item.image.to_dict(),
                "current_step": current.value,
                "revisions": {
                    step.value: (state.revision_count(step) if state else 0)
                    for step in STEP_ORDER
                },
                "prior": {
                    step.value: state.latest(step)
                    for step in STEP_ORDER
                    if state and state.latest(step) is not None
                },
            }
            if self.prefill_enabled and item.prefill is not None:
                view["prefill"] = item.prefill.to_dict()
            return view
        return None

    # -- step submission -----------------------------------------------

    def submit_step(
        self,
        annotator_id: str,
        item_id: str,
        step: Step,
        payload: dict,
        expected_revision: int = 0,
    ) -> dict:
        """Validate and append one step revision.

        ``expected_revision`` is the count of revisions the caller has
        seen; a mismatch means another submission landed first and the
        caller must re-read (double-submits surface here as conflicts).
        """
        if step is Step.DONE:
            raise StoreError("'done' is not a submittable step")
        with self._lock:
            state = self._item_state(annotator_id, item_id)
            current = state.current_step
            if STEP_ORDER.index(step) > (
                len(STEP_ORDER) if current is Step.DONE else STEP_ORDER.index(current)
            ):
                raise ValidationFailure(
                    [Violation("step", f"step '{step.value}' not reached, item is at '{current.value}'")]
                )
            if state.revision_count(step) != expected_revision:
                raise ConflictError(
                    f"step '{step.value}' of '{item_id}' is at revision "
                    f"{state.revision_count(step)}, caller expected {expected_revision}"
                )
            violations = self._validate_step(state, step, payload)
            if violations:
                raise ValidationFailure(violations)
            event = {
                "kind": "step",
                "annotator_id": annotator_id,
                "item_id": item_id,
                "step": step.value,
                "revision": expected_revision + 1,
                "payload": payload,
            }
            self._append(event)
            self._apply(event)
            return {
                "item_id": item_id,
                "step": step.value,
                "revision": expected_revision + 1,
                "current_step": state.current_step.value,
            }

    def _validate_step(self, state: ItemState, step: Step, payload: dict) -> list[Violation]:
        out: list[Violation] = []
        if not isinstance(payload, dict):
            return [Violation("payload", "must be an object")]
        if payload.get("schema_version") != PAYLOAD_VERSION:
            return [Violation("schema_version", f"must be {PAYLOAD_VERSION}")]
        try:
            if step is Step.EXTRACTION:
                out.extend(self._check_extraction(state, payload))
            elif step is Step.ANSWERS:
                out.extend(self._check_answers(state, payload))
            else:
                out.extend(self._check_scoring(state, payload))
        except (KeyError, TypeError, ValueError) as exc:
            out.append(Violation("payload", f"malformed: {exc}"))
        return out

    def _current_extraction(self, state: ItemState) -> Optional[ExtractionResult]:
        doc = state.latest(Step.EXTRACTION)
        if doc is None:
            return None
        return ExtractionResult.from_dict(doc["extraction"])

    def _check_extraction(self, state: ItemState, payload: dict) -> list[Violation]:
        if "extraction" not in payload:
            return [Violation("extraction", "missing")]
        extraction = ExtractionResult.from_dict(payload["extraction"])
        out = validate_extraction(extraction)
        if out:
            return out
        # a correction must not orphan later steps
        new_qids = set(_question_ids(extraction))
        answers_doc = state.latest(Step.ANSWERS)
        if answers_doc is not None:
            answered = {a["qid"] for a in answers_doc["answers"]}
            if answered != new_qids:
                out.append(
                    Violation(
                        "extraction.questions",
                        "correction would break the submitted answers; revise those too",
                    )
                )
        scoring_doc = state.latest(Step.SCORING)
        if scoring_doc is not None:
            judged = {v["qid"] for v in scoring_doc["verdicts"]}
            if judged != new_qids:
                out.append(
                    Violation(
                        "extraction.questions",
                        "correction would break the submitted scoring; revise that too",
                    )
                )
        return out

    def _check_answers(self, state: ItemState, payload: dict) -> list[Violation]:
        extraction = self._current_extraction(state)
        if extraction is None:
            return [Violation("step", "extraction step not submitted yet")]
        if "answers" not in payload:
            return [Violation("answers", "missing")]
        out: list[Violation] = []
        answers = [Answer.from_dict(a) for a in payload["answers"]]
        for caption_doc in payload.get("captions", []):
            caption = EntityCaption.from_dict(caption_doc)
            if extraction.entity(caption.entity) is None:
                out.append(
                    Violation("captions", f"caption for unknown entity '{caption.entity}'")
                )
        expected = _question_ids(extraction)
        got = [a.qid for a in answers]
        if sorted(got) != sorted(expected):
            out.append(
                Violation(
                    "answers",
                    f"must cover the question set exactly; expected {sorted(expected)}, got {sorted(got)}",
                )
            )
        for answer in answers:
            if not answer.text.strip():
                out.append(Violation(f"answers.{answer.qid}", "answer text is empty"))
            if answer.score is not None and not 0 <= answer.score <= 10:
                out.append(Violation(f"answers.{answer.qid}", "score out of range 0-10"))
        return out

    def _check_scoring(self, state: ItemState, payload: dict) -> list[Violation]:
        extraction = self._current_extraction(state)
        if extraction is None:
            return [Violation("step", "extraction step not submitted yet")]
        out: list[Violation] = []
        if "verdicts" not in payload:
            out.append(Violation("verdicts", "missing"))
        if "summaries" not in payload:
            out.append(Violation("summaries", "missing"))
        if out:
            return out
        verdicts = [QuestionVerdict.from_dict(v) for v in payload["verdicts"]]
        summaries = [DimensionSummary.from_dict(s) for s in payload["summaries"]]
        expected = _question_ids(extraction)
        got = [v.qid for v in verdicts]
        if sorted(got) != sorted(expected):
            out.append(
                Violation(
                    "verdicts",
                    f"must cover the question set exactly; expected {sorted(expected)}, got {sorted(got)}",
                )
            )
        for verdict in verdicts:
            if not 0 <= verdict.score <= 10:
                out.append(Violation(f"verdicts.{verdict.qid}", "score out of range 0-10"))
            if not verdict.explanation.strip():
                out.append(Violation(f"verdicts.{verdict.qid}", "explanation is empty"))
        dims = [s.dimension for s in summaries]
        if len(dims) != len(set(dims)) or set(dims) != set(Dimension):
            out.append(Violation("summaries", "must contain each dimension exactly once"))
        for summary in summaries:
            if not 0 <= summary.score <= 10:
                out.append(Violation(f"summaries.{summary.dimension.value}", "score out of range 0-10"))
        return out

    # -- export ----------------------------------------------------------

    def _record_for(self, annotator_id: str, state: ItemState) -> EvaluationRecord:
        item = self._items[state.item_id]
        extraction_doc = state.latest(Step.EXTRACTION)
        answers_doc = state.latest(Step.ANSWERS)
        scoring_doc = state.latest(Step.SCORING)
        assert extraction_doc and answers_doc and scoring_doc
        record = EvaluationRecord(
            prompt=item.prompt,
            image=item.image,
            extraction=ExtractionResult.from_dict(extraction_doc["extraction"]),
            captions=[EntityCaption.from_dict(c) for c in answers_doc.get("captions", [])],
            answers=[Answer.from_dict(a) for a in answers_doc["answers"]],
            verdicts=[QuestionVerdict.from_dict(v) for v in scoring_doc["verdicts"]],
            summaries=[DimensionSummary.from_dict(s) for s in scoring_doc["summaries"]],
            provenance=Provenance(evaluator=annotator_id),
        )
        violations = validate_record(record)
        if violations:
            raise ValidationFailure(violations)
        return record

    def export_records(self, annotator_id: Optional[str] = None) -> dict[str, list[EvaluationRecord]]:
        """Completed items as records, keyed by annotator, in benchmark
        order.  Deterministic: a pure function of the stored state."""
        wanted = [annotator_id] if annotator_id is not None else self.annotators()
        out: dict[str, list[EvaluationRecord]] = {}
        with self._lock:
            for aid in wanted:
                if aid not in self._state:
                    raise StoreError(f"no session for annotator '{aid}'")
                records = []
                per_item = self._state[aid]
                for item in self.benchmark:
                    state = per_item.get(item.item_id)
                    if state is not None and state.current_step is Step.DONE:
                        records.append(self._record_for(aid, state))
                out[aid] = records
        return out
