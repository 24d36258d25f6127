"""Three-stage evaluation orchestration for one text-image pair.

The full pipeline renders the extraction prompt, forwards the parsed
questions (and only the questions) to the image-answering stage, and
judges the answers against the structured ground truth in a text-only
scoring stage.  Ablation variants reshape this flow; ``merged_cag_es``
deliberately shows the judge the ground truth and the image at once and
exists purely for comparison runs.

Information flow rules enforced here: the stage-two request never
contains the source prompt text, and only stages that look at the image
carry an attachment.
"""

from __future__ import annotations

import enum
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from datetime import datetime, timezone
from os import cpu_count
from pathlib import Path
from typing import Callable, Optional, Sequence

from .client import ChatClient, ChatMessage, ClientError, EndpointConfig, UsageTotals
from .core import (
    Dimension,
    DimensionSummary,
    EvaluationRecord,
    ExtractionResult,
    ImageRef,
    Provenance,
    Question,
    QuestionVerdict,
    RecordFailure,
    RecordParseError,
    TextPrompt,
    deserialize_record,
    serialize_record,
    write_records,
)
from .parsing import (
    ParseOutcome,
    parse_answers,
    parse_direct_scores,
    parse_evaluation,
    parse_extraction,
    parse_questions_doc,
    parse_summaries_doc,
    render_questions_block,
    render_structure_info,
)
from .prompts import (
    render_answering,
    render_answering_direct,
    render_direct_scoring,
    render_extraction,
    render_merged,
    render_questions_only,
    render_scoring,
    render_summaries_only,
)


class Variant(str, enum.Enum):
    FULL = "full"
    NO_EXTRACTION = "no_extraction"
    NO_CAPTIONING = "no_captioning"
    NO_ANSWERING = "no_answering"
    MERGED_CAG_ES = "merged_cag_es"


class FailurePolicy(str, enum.Enum):
    SKIP_RECORD = "skip_record"
    ZERO_SCORE = "zero_score"
    HALT = "halt"


class PipelineError(RuntimeError):
    pass


@dataclass
class PipelineConfig:
    endpoint: EndpointConfig
    variant: Variant = Variant.FULL
    retry_on_parse_failure: int = 2
    failure_policy: FailurePolicy = FailurePolicy.SKIP_RECORD
    reference_image: Optional[ImageRef] = None
    prompt_dir: Optional[Path] = None
    evaluator: str = ""
    # off by default so identical inputs yield identical output bytes
    record_timestamps: bool = False

    def validate(self) -> None:
        self.endpoint.validate()
        if self.retry_on_parse_failure < 0:
            raise ValueError("retry_on_parse_failure must be >= 0")


class _StageFailure(Exception):
    def __init__(self, stage: str, kind: str, detail: str):
        super().__init__(f"{stage}: {kind}: {detail}")
        self.stage = stage
        self.kind = kind
        self.detail = detail


# below this length a prompt is too generic for substring checks to mean anything
_GUARD_MIN_CHARS = 20


def _guard_stage_two(prompt: TextPrompt, rendered_text: str) -> None:
    if len(prompt.text) >= _GUARD_MIN_CHARS and prompt.text in rendered_text:
        raise PipelineError(
            "stage-two prompt would leak the source text; refusing to send"
        )


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _run_stage(
    client: ChatClient,
    config: PipelineConfig,
    stage: str,
    text: str,
    images: Sequence[ImageRef],
    parse: Callable[[str], ParseOutcome],
):
    """Call the endpoint, parse, retry on parse failure; return (value, raw)."""
    messages = [ChatMessage(role="user", text=text, images=list(images))]
    last: Optional[ParseOutcome] = None
    for _ in range(config.retry_on_parse_failure + 1):
        try:
            raw = client.chat(messages)
        except ClientError as exc:
            raise _StageFailure(stage, "transport", str(exc)) from exc
        outcome = parse(raw)
        if outcome.ok:
            return outcome.value, raw
        last = outcome
    assert last is not None and last.failure is not None
    raise _StageFailure(stage, last.failure.kind.value, "; ".join(last.failure.evidence))


def _zero_summaries(stage: str) -> list[DimensionSummary]:
    note = f"zeroed after {stage} failure"
    return [DimensionSummary(dimension=d, explanation=note, score=0) for d in Dimension]


def evaluate_pair(
    config: PipelineConfig,
    prompt: TextPrompt,
    image: ImageRef,
    client: Optional[ChatClient] = None,
) -> EvaluationRecord:
    """Run the configured variant over one pair and assemble the record.

    Parse failures surviving the per-stage retries are resolved per
    ``config.failure_policy``; transport errors are treated the same
    way, tagged with the failing stage.
    """
    config.validate()
    own_client = client is None
    if client is None:
        client = ChatClient(config.endpoint)
    try:
        return _evaluate(config, prompt, image, client)
    finally:
        if own_client:
            client.close()


def _evaluate(
    config: PipelineConfig,
    prompt: TextPrompt,
    image: ImageRef,
    client: ChatClient,
) -> EvaluationRecord:
    started = _now() if config.record_timestamps else None
    transcripts: dict[str, str] = {}
    extraction: Optional[ExtractionResult] = None
    questions: list[Question] = []
    record = EvaluationRecord(prompt=prompt, image=image)

    def finish(failure: Optional[RecordFailure]) -> EvaluationRecord:
        record.raw_transcripts = transcripts
        record.failure = failure
        record.provenance = Provenance(
            evaluator=config.evaluator or config.endpoint.model_name,
            started_at=started,
            finished_at=_now() if config.record_timestamps else None,
        )
        return record

    try:
        if config.variant is Variant.NO_EXTRACTION:
            questions, raw = _run_stage(
                client, config, "questions",
                render_questions_only(prompt.text, config.prompt_dir), [],
                parse_questions_doc,
            )
            transcripts["questions"] = raw
        else:
            extraction, raw = _run_stage(
                client, config, "extraction",
                render_extraction(prompt.text, config.prompt_dir), [],
                parse_extraction,
            )
            questions = extraction.questions
            record.extraction = extraction
            transcripts["extraction"] = raw

        questions_doc = render_questions_block(
            extraction if extraction is not None else ExtractionResult(questions=questions)
        )
        if extraction is not None:
            structure_info = render_structure_info(extraction)
        else:
            structure_info = "# Text Prompt\n" + prompt.text

        if config.variant in (Variant.FULL, Variant.NO_EXTRACTION, Variant.NO_CAPTIONING):
            if config.variant is Variant.NO_CAPTIONING:
                rendered = render_answering_direct(questions_doc, image, config.prompt_dir)
                require_captions = False
            else:
                rendered = render_answering(
                    questions_doc, image, config.reference_image, config.prompt_dir
                )
                require_captions = True
            _guard_stage_two(prompt, rendered.text)
            answer_set, raw = _run_stage(
                client, config, "answering", rendered.text, rendered.attachments,
                lambda r: parse_answers(r, questions, require_captions=require_captions),
            )
            record.captions = answer_set.captions
            record.answers = answer_set.answers
            transcripts["answering"] = raw

            evaluation, raw = _run_stage(
                client, config, "scoring",
                render_scoring(raw, structure_info, config.prompt_dir), [],
                lambda r: parse_evaluation(r, questions),
            )
            record.verdicts = evaluation.verdicts
            record.summaries = evaluation.summaries
            transcripts["scoring"] = raw

        elif config.variant is Variant.NO_ANSWERING:
            rendered = render_direct_scoring(
                questions_doc, structure_info, image, config.prompt_dir
            )
            _guard_stage_two(prompt, rendered.text)
            verdicts, raw = _run_stage(
                client, config, "direct_scoring", rendered.text, rendered.attachments,
                lambda r: parse_direct_scores(r, questions),
            )
            record.verdicts = verdicts
            transcripts["direct_scoring"] = raw

            summaries, raw = _run_stage(
                client, config, "summaries",
                render_summaries_only(raw, config.prompt_dir), [],
                parse_summaries_doc,
            )
            record.summaries = summaries
            transcripts["summaries"] = raw

        else:  # merged_cag_es
            rendered = render_merged(questions_doc, structure_info, image, config.prompt_dir)
            _guard_stage_two(prompt, rendered.text)
            evaluation, raw = _run_stage(
                client, config, "merged", rendered.text, rendered.attachments,
                lambda r: parse_evaluation(r, questions),
            )
            record.verdicts = evaluation.verdicts
            record.summaries = evaluation.summaries
            transcripts["merged"] = raw

    except _StageFailure as exc:
        if config.failure_policy is FailurePolicy.HALT:
            raise PipelineError(str(exc)) from exc
        failure = RecordFailure(stage=exc.stage, kind=exc.kind, detail=exc.detail)
        if config.failure_policy is FailurePolicy.ZERO_SCORE:
            record.verdicts = [
                QuestionVerdict(qid=q.qid, answer="", explanation="zeroed", score=0)
                for q in questions
            ]
            record.summaries = _zero_summaries(exc.stage)
        return finish(failure)

    return finish(None)


@dataclass
class RunReport:
    total: int
    ok: int
    failures: dict[str, int] = field(default_factory=dict)
    usage: UsageTotals = field(default_factory=UsageTotals)

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "ok": self.ok,
            "failures": dict(sorted(self.failures.items())),
            "usage": self.usage.__dict__,
        }

    def format_lines(self) -> list[str]:
        lines = [f"pairs: {self.total}", f"ok: {self.ok}"]
        for kind in ("refusal", "content_absence", "repetition", "malformed", "transport"):
            lines.append(f"{kind}: {self.failures.get(kind, 0)}")
        lines.append(
            f"requests: {self.usage.request_count} "
            f"(retries {self.usage.retries}, "
            f"tokens {self.usage.input_tokens}+{self.usage.output_tokens}, "
            f"cost {self.usage.estimated_cost:.4f})"
        )
        return lines


def evaluate_batch(
    config: PipelineConfig,
    pairs: Sequence[tuple[TextPrompt, ImageRef]],
    out_path: Path,
    parallelism: Optional[int] = None,
    checkpoint_path: Optional[Path] = None,
    client: Optional[ChatClient] = None,
) -> tuple[list[EvaluationRecord], RunReport]:
    """Evaluate pairs concurrently; write records in input order.

    Each finished record is appended to the checkpoint file immediately,
    so a killed run resumes where it stopped: pairs whose record id is
    already in the checkpoint are not re-evaluated.  The final dataset
    file is rewritten from scratch in input order, which makes its
    contents independent of completion order.
    """
    config.validate()
    if not pairs:
        raise PipelineError("no pairs to evaluate")
    out_path = Path(out_path)
    checkpoint_path = checkpoint_path or out_path.with_suffix(out_path.suffix + ".ckpt")

    ids = [f"{prompt.id}:{image.id}" for prompt, image in pairs]
    if len(set(ids)) != len(ids):
        raise PipelineError("duplicate record ids in pair list")

    done: dict[str, EvaluationRecord] = {}
    if checkpoint_path.exists():
        with checkpoint_path.open("r", encoding="utf-8") as ckpt:
            for line in ckpt:
                if not line.strip():
                    continue
                try:
                    existing = deserialize_record(line)
                except RecordParseError:
                    break  # truncated tail of a killed run; recompute from here
                done[existing.record_id] = existing

    pending = [
        (rid, prompt, image)
        for rid, (prompt, image) in zip(ids, pairs)
        if rid not in done
    ]

    own_client = client is None
    if client is None:
        client = ChatClient(config.endpoint)
    if parallelism is None:
        parallelism = max(1, min(cpu_count() or 1, config.endpoint.max_concurrency))

    checkpoint_lock = threading.Lock()
    try:
        if pending:
            with checkpoint_path.open("a", encoding="utf-8") as ckpt, ThreadPoolExecutor(
                max_workers=parallelism
            ) as pool:
                futures = {
                    pool.submit(evaluate_pair, config, prompt, image, client): rid
                    for rid, prompt, image in pending
                }
                try:
                    for future in as_completed(futures):
                        rid = futures[future]
                        rec = future.result()
                        with checkpoint_lock:
                            ckpt.write(serialize_record(rec) + "\n")
                            ckpt.flush()
                        done[rid] = rec
                except PipelineError:
                    pool.shutdown(wait=False, cancel_futures=True)
                    raise
    finally:
        if own_client:
            client.close()

    records = [done[rid] for rid in ids]
    write_records(out_path, records)

    failures: dict[str, int] = {}
    ok = 0
    for rec in records:
        if rec.failure is None:
            ok += 1
        else:
            failures[rec.failure.kind] = failures.get(rec.failure.kind, 0) + 1
    report = RunReport(
        total=len(records), ok=ok, failures=failures, usage=client.ledger.snapshot()
    )
    return records, report
