"""Training-set construction from completed evaluation records.

One record expands into 3N+3 conversation samples across six kinds:
whole-record extraction+captioning, per-question answering, per-question
explanation, per-question scoring, and the two summary kinds.  Scored
kinds carry a score bin so the set can be rebalanced: each nonempty
0-10 bin is brought to the third quartile of the nonempty bin counts by
whole-copy replication plus seeded random top-up or downsampling.
Coarse kinds are then replicated to keep pace with the per-question
kinds.  Everything downstream of a seed is deterministic.
"""

from __future__ import annotations

import enum
import json
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

from .core import (
    Dimension,
    EvaluationRecord,
    ExtractionResult,
    QuestionKind,
    SCORE_MAX,
    SCORE_MIN,
    validate_record,
)
from .parsing import (
    render_answers_doc,
    render_caption_doc,
    render_direct_scores_doc,
    render_extraction_doc,
    render_questions_block,
)
from .prompts import render_answering, render_extraction


class DatasetError(ValueError):
    pass


class SubTaskKind(str, enum.Enum):
    EXTRACTION = "extraction"
    ANSWER = "answer"
    EXPLANATION = "explanation"
    SCORING = "scoring"
    SUMMARY_EXPLANATION = "summary_explanation"
    SUMMARY_SCORING = "summary_scoring"


COARSE_KINDS = (
    SubTaskKind.EXTRACTION,
    SubTaskKind.SUMMARY_EXPLANATION,
    SubTaskKind.SUMMARY_SCORING,
)
SCORED_KINDS = (SubTaskKind.ANSWER, SubTaskKind.SCORING, SubTaskKind.SUMMARY_SCORING)


@dataclass
class Turn:
    role: str
    content: str
    image: Optional[str] = None  # attachment uri

    def to_dict(self) -> dict:
        out: dict = {"role": self.role, "content": self.content}
        if self.image is not None:
            out["image"] = self.image
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "Turn":
        return cls(role=raw["role"], content=raw["content"], image=raw.get("image"))


@dataclass
class SubTaskSample:
    kind: SubTaskKind
    turns: list[Turn]
    target_text: str
    source_record_id: str
    score_bin: Optional[int] = None

    def attachment_count(self) -> int:
        return sum(1 for turn in self.turns if turn.image is not None)

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "kind": self.kind.value,
            "turns": [t.to_dict() for t in self.turns],
            "target_text": self.target_text,
            "source_record_id": self.source_record_id,
            "score_bin": self.score_bin,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SubTaskSample":
        known = {"schema_version", "kind", "turns", "target_text", "source_record_id", "score_bin"}
        unknown = set(raw) - known
        if unknown:
            raise DatasetError(f"unknown sample field(s): {', '.join(sorted(unknown))}")
        return cls(
            kind=SubTaskKind(raw["kind"]),
            turns=[Turn.from_dict(t) for t in raw["turns"]],
            target_text=raw["target_text"],
            source_record_id=raw["source_record_id"],
            score_bin=raw.get("score_bin"),
        )


def write_samples(path: Path, samples: Iterable[SubTaskSample]) -> int:
    count = 0
    with Path(path).open("w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(
                json.dumps(sample.to_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
            )
            fh.write("\n")
            count += 1
    return count


def read_samples(path: Path) -> list[SubTaskSample]:
    samples = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_num, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                samples.append(SubTaskSample.from_dict(json.loads(line)))
            except (ValueError, KeyError) as exc:
                raise DatasetError(f"{path}:{line_num}: bad sample: {exc}") from exc
    return samples


def sample_generator(rng_seed: int, weights: dict) -> Iterator[str]:
    """Infinite deterministic stream of generator ids drawn by weight."""
    if not weights:
        raise DatasetError("weights must be nonempty")
    items = sorted((str(k), float(v)) for k, v in weights.items())
    for name, weight in items:
        if weight < 0:
            raise DatasetError(f"negative weight for '{name}'")
    total = sum(w for _, w in items)
    if abs(total - 1.0) > 1e-9:
        raise DatasetError(f"weights sum to {total}, expected 1")
    names = [name for name, _ in items]
    cumulative = []
    acc = 0.0
    for _, weight in items:
        acc += weight
        cumulative.append(acc)
    rng = random.Random(rng_seed)
    while True:
        yield rng.choices(names, cum_weights=cumulative, k=1)[0]


_EXPLANATION_PROMPT = """Judge how well the answer matches the text prompt for the question below, and reply with a short explanation only.

# Text Prompt
{text}

# Question
{question}

# Answer
{answer}
"""

_SCORING_PROMPT = """Judge how well the answer matches the text prompt for the question below, given the explanation.
Provide only one line as the output: the score as an integer value from 0 to 10.

# Text Prompt
{text}

# Question
{question}

# Answer
{answer}

# Explanation
{explanation}
"""

_SUMMARY_EXPLANATION_PROMPT = """Summarize the scored answers below into a short overall explanation of how well the image matches the text prompt. Reply with the explanation only.

{scored_answers}
"""

_SUMMARY_SCORING_PROMPT = """Summarize the scored answers below into one overall score.
Provide only one line as the output: the score as an integer value from 0 to 10.

{scored_answers}

# Overall Explanation
{explanation}
"""


def _require_complete(record: EvaluationRecord) -> None:
    if record.failure is not None:
        raise DatasetError(f"record {record.record_id} carries a failure")
    if record.extraction is None:
        raise DatasetError(f"record {record.record_id} has no extraction")
    if not record.extraction.questions:
        raise DatasetError(f"record {record.record_id} has no questions")
    answered = {a.qid for a in record.answers}
    judged = {v.qid for v in record.verdicts}
    expected = {q.qid for q in record.extraction.questions}
    if answered != expected or judged != expected:
        raise DatasetError(f"record {record.record_id} does not cover its questions")
    if {s.dimension for s in record.summaries} != set(Dimension):
        raise DatasetError(f"record {record.record_id} lacks the four summaries")
    violations = validate_record(record)
    if violations:
        first = violations[0]
        raise DatasetError(
            f"record {record.record_id} is invalid: {first.field}: {first.message}"
        )


def expand_to_subtasks(
    record: EvaluationRecord, prompt_dir: Optional[Path] = None
) -> list[SubTaskSample]:
    """Expand one complete record into its 3N+3 conversation samples."""
    _require_complete(record)
    extraction = record.extraction
    assert extraction is not None
    questions = extraction.questions
    answers = {a.qid: a for a in record.answers}
    verdicts = {v.qid: v for v in record.verdicts}
    overall = record.summary(Dimension.OVERALL)
    assert overall is not None
    rid = record.record_id
    samples: list[SubTaskSample] = []

    # whole-record extraction + captioning, conditioned on prompt and image
    extraction_target = render_extraction_doc(extraction)
    if record.captions:
        extraction_target += "\n" + render_caption_doc(record.captions)
    samples.append(
        SubTaskSample(
            kind=SubTaskKind.EXTRACTION,
            turns=[
                Turn(
                    role="user",
                    content=render_extraction(record.prompt.text, prompt_dir),
                    image=record.image.uri,
                )
            ],
            target_text=extraction_target,
            source_record_id=rid,
        )
    )

    # per-question answering, image attached, prompt text withheld
    for question in questions:
        answer = answers[question.qid]
        question_doc = render_questions_block(ExtractionResult(questions=[question]))
        rendered = render_answering(question_doc, record.image, config_dir=prompt_dir)
        samples.append(
            SubTaskSample(
                kind=SubTaskKind.ANSWER,
                turns=[Turn(role="user", content=rendered.text, image=record.image.uri)],
                target_text=render_answers_doc([question], {question.qid: answer}),
                source_record_id=rid,
                score_bin=answer.score if question.kind is QuestionKind.APPEARANCE else None,
            )
        )

    # per-question explanation, text only, no score in the target
    for question in questions:
        verdict = verdicts[question.qid]
        answer_text = answers[question.qid].text
        samples.append(
            SubTaskSample(
                kind=SubTaskKind.EXPLANATION,
                turns=[
                    Turn(
                        role="user",
                        content=_EXPLANATION_PROMPT.format(
                            text=record.prompt.text,
                            question=question.text,
                            answer=answer_text,
                        ),
                    )
                ],
                target_text=verdict.explanation,
                source_record_id=rid,
            )
        )

    # per-question scoring, conditioned on the explanation
    for question in questions:
        verdict = verdicts[question.qid]
        samples.append(
            SubTaskSample(
                kind=SubTaskKind.SCORING,
                turns=[
                    Turn(
                        role="user",
                        content=_SCORING_PROMPT.format(
                            text=record.prompt.text,
                            question=question.text,
                            answer=answers[question.qid].text,
                            explanation=verdict.explanation,
                        ),
                    )
                ],
                target_text=str(verdict.score),
                source_record_id=rid,
                score_bin=verdict.score,
            )
        )

    scored_answers = render_direct_scores_doc(questions, verdicts)
    samples.append(
        SubTaskSample(
            kind=SubTaskKind.SUMMARY_EXPLANATION,
            turns=[
                Turn(
                    role="user",
                    content=_SUMMARY_EXPLANATION_PROMPT.format(scored_answers=scored_answers),
                )
            ],
            target_text=overall.explanation,
            source_record_id=rid,
        )
    )
    samples.append(
        SubTaskSample(
            kind=SubTaskKind.SUMMARY_SCORING,
            turns=[
                Turn(
                    role="user",
                    content=_SUMMARY_SCORING_PROMPT.format(
                        scored_answers=scored_answers, explanation=overall.explanation
                    ),
                )
            ],
            target_text=str(overall.score),
            source_record_id=rid,
            score_bin=overall.score,
        )
    )
    return samples


def expand_records(
    records: Iterable[EvaluationRecord], prompt_dir: Optional[Path] = None
) -> list[SubTaskSample]:
    samples: list[SubTaskSample] = []
    for record in records:
        samples.extend(expand_to_subtasks(record, prompt_dir))
    return samples


def _round_half_up(value: Fraction) -> int:
    return int(math.floor(value + Fraction(1, 2)))


def q3_of(counts: Sequence[int]) -> int:
    """Third quartile of the counts: linear interpolation at 0.75*(n-1)
    over the ascending sort, rounded half-up."""
    if not counts:
        raise DatasetError("no counts to take a quartile of")
    ordered = sorted(counts)
    if len(ordered) == 1:
        return ordered[0]
    pos = Fraction(3 * (len(ordered) - 1), 4)
    lo = int(pos)
    frac = pos - lo
    value = Fraction(ordered[lo])
    if frac:
        value += (ordered[lo + 1] - ordered[lo]) * frac
    return _round_half_up(value)


@dataclass
class BinAction:
    bin: int
    count: int
    replicate: int  # whole copies of the bin
    sample: int  # random draws without replacement added on top

    @property
    def result(self) -> int:
        return self.replicate * self.count + self.sample


@dataclass
class RebalancePlan:
    bin_counts_before: list[int]
    target_per_bin: int
    actions: list[BinAction] = field(default_factory=list)

    def format_lines(self) -> list[str]:
        lines = [f"target per bin: {self.target_per_bin}"]
        for action in self.actions:
            lines.append(
                f"bin {action.bin:>2}: {action.count} -> {action.result} "
                f"({action.replicate} copies + {action.sample} sampled)"
            )
        return lines


def plan_score_rebalance(samples: Sequence[SubTaskSample]) -> RebalancePlan:
    """Plan bin-by-bin actions that equalize nonempty score bins at Q3."""
    bins = [0] * (SCORE_MAX - SCORE_MIN + 1)
    for sample in samples:
        if sample.score_bin is None:
            raise DatasetError("plan_score_rebalance needs score_bin on every sample")
        if not SCORE_MIN <= sample.score_bin <= SCORE_MAX:
            raise DatasetError(f"score_bin {sample.score_bin} out of range")
        bins[sample.score_bin] += 1
    nonempty = [c for c in bins if c > 0]
    if not nonempty:
        raise DatasetError("all score bins are empty")
    target = q3_of(nonempty)
    actions = []
    for score, count in enumerate(bins):
        if count == 0:
            continue
        if count <= target:
            replicate = target // count
            sample_n = target - replicate * count
        else:
            replicate = 0
            sample_n = target
        actions.append(BinAction(bin=score, count=count, replicate=replicate, sample=sample_n))
    return RebalancePlan(bin_counts_before=bins, target_per_bin=target, actions=actions)


def apply_rebalance(
    samples: Sequence[SubTaskSample], plan: RebalancePlan, rng_seed: int
) -> list[SubTaskSample]:
    """Execute a plan; deterministic for a fixed seed.

    Output groups bins in ascending score order; within a bin, whole
    copies come first, then the random draws in input order.
    """
    by_bin: dict[int, list[SubTaskSample]] = {}
    for sample in samples:
        if sample.score_bin is None:
            raise DatasetError("apply_rebalance needs score_bin on every sample")
        by_bin.setdefault(sample.score_bin, []).append(sample)
    actual = [len(by_bin.get(score, [])) for score in range(SCORE_MIN, SCORE_MAX + 1)]
    if actual != plan.bin_counts_before:
        raise DatasetError("plan does not match the sample population")

    rng = random.Random(rng_seed)
    out: list[SubTaskSample] = []
    for action in plan.actions:
        pool = by_bin[action.bin]
        for _ in range(action.replicate):
            out.extend(pool)
        if action.sample:
            picked = sorted(rng.sample(range(len(pool)), action.sample))
            out.extend(pool[i] for i in picked)
    return out


def subtask_replication_factor(samples: Sequence[SubTaskSample]) -> int:
    """Half-up-rounded mean question count per source record.

    The per-question kinds outnumber the whole-record kinds by exactly
    this ratio, so coarse kinds are replicated by it.
    """
    per_record: dict[str, int] = {}
    for sample in samples:
        if sample.kind is SubTaskKind.ANSWER:
            per_record[sample.source_record_id] = per_record.get(sample.source_record_id, 0) + 1
    if not per_record:
        return 1
    mean = Fraction(sum(per_record.values()), len(per_record))
    return max(1, _round_half_up(mean))


def rebalance_subtasks(
    samples: Sequence[SubTaskSample], factor: Optional[int] = None
) -> list[SubTaskSample]:
    """Replicate coarse kinds by the (given or computed) factor."""
    r = factor if factor is not None else subtask_replication_factor(samples)
    if r < 1:
        raise DatasetError("replication factor must be >= 1")
    out: list[SubTaskSample] = []
    for sample in samples:
        copies = r if sample.kind in COARSE_KINDS else 1
        out.extend([sample] * copies)
    return out


def rebalance_dataset(
    samples: Sequence[SubTaskSample], rng_seed: int
) -> tuple[list[SubTaskSample], dict[str, RebalancePlan]]:
    """Score-rebalance each scored population, then replicate coarse kinds.

    Scored populations are handled separately (per-question answer
    scores, per-question judgement scores, overall scores) since their
    distributions differ.  Unscored samples pass through untouched.
    The sub-task replication factor is computed before rebalancing so
    it reflects the source corpus, not the resampled one.
    """
    factor = subtask_replication_factor(samples)
    plans: dict[str, RebalancePlan] = {}
    out: list[SubTaskSample] = []
    for sample in samples:
        if sample.score_bin is None:
            out.append(sample)
    for kind in SCORED_KINDS:
        population = [s for s in samples if s.kind is kind and s.score_bin is not None]
        if not population:
            continue
        plan = plan_score_rebalance(population)
        plans[kind.value] = plan
        out.extend(apply_rebalance(population, plan, rng_seed))
    return rebalance_subtasks(out, factor), plans


@dataclass
class DatasetStats:
    pairs: int = 0
    failed_records: int = 0
    entities: int = 0
    relationships: int = 0
    questions_by_kind: dict[str, int] = field(default_factory=dict)
    overall_histogram: list[int] = field(default_factory=lambda: [0] * 11)
    samples_by_kind: dict[str, int] = field(default_factory=dict)
    bin_histograms: dict[str, list[int]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "pairs": self.pairs,
            "failed_records": self.failed_records,
            "entities": self.entities,
            "relationships": self.relationships,
            "questions_by_kind": dict(sorted(self.questions_by_kind.items())),
            "overall_histogram": self.overall_histogram,
            "samples_by_kind": dict(sorted(self.samples_by_kind.items())),
            "bin_histograms": {k: v for k, v in sorted(self.bin_histograms.items())},
        }

    def format_lines(self) -> list[str]:
        lines = [
            f"pairs: {self.pairs}",
            f"failed records: {self.failed_records}",
            f"entities: {self.entities}",
            f"relationships: {self.relationships}",
        ]
        for kind in QuestionKind:
            lines.append(f"{kind.value} questions: {self.questions_by_kind.get(kind.value, 0)}")
        if any(self.overall_histogram):
            lines.append("overall scores: " + " ".join(str(c) for c in self.overall_histogram))
        if self.samples_by_kind:
            lines.append("samples:")
            for kind in SubTaskKind:
                if kind.value in self.samples_by_kind:
                    lines.append(f"  {kind.value}: {self.samples_by_kind[kind.value]}")
        for name, histogram in sorted(self.bin_histograms.items()):
            lines.append(f"{name} bins: " + " ".join(str(c) for c in histogram))
        return lines


def dataset_stats(
    records: Optional[Iterable[EvaluationRecord]] = None,
    samples: Optional[Iterable[SubTaskSample]] = None,
) -> DatasetStats:
    """Exact counts over records and/or expanded samples."""
    stats = DatasetStats()
    for record in records or []:
        stats.pairs += 1
        if record.failure is not None:
            stats.failed_records += 1
            continue
        if record.extraction is not None:
            stats.entities += len(record.extraction.entities)
            stats.relationships += len(record.extraction.relationships)
            for question in record.extraction.questions:
                key = question.kind.value
                stats.questions_by_kind[key] = stats.questions_by_kind.get(key, 0) + 1
        overall = record.summary(Dimension.OVERALL)
        if overall is not None:
            stats.overall_histogram[overall.score] += 1
    for sample in samples or []:
        key = sample.kind.value
        stats.samples_by_kind[key] = stats.samples_by_kind.get(key, 0) + 1
        if sample.score_bin is not None:
            histogram = stats.bin_histograms.setdefault(key, [0] * 11)
            histogram[sample.score_bin] += 1
    return stats


def export_conversations(
    samples: Sequence[SubTaskSample],
    path: Path,
    format_version: int = 1,
    shuffle_seed: Optional[int] = None,
) -> int:
    """Write samples as chat-format training conversations (JSONL).

    Each line holds: format_version, kind, source_record_id, score_bin,
    and messages, where the final message is the assistant target and
    user messages may carry an image uri.  Ordering is input order, or
    a seeded shuffle when ``shuffle_seed`` is given.
    """
    if format_version != 1:
        raise DatasetError(f"unknown export format version {format_version}")
    ordered = list(samples)
    if shuffle_seed is not None:
        random.Random(shuffle_seed).shuffle(ordered)
    count = 0
    with Path(path).open("w", encoding="utf-8") as fh:
        for sample in ordered:
            messages = [t.to_dict() for t in sample.turns]
            messages.append({"role": "assistant", "content": sample.target_text})
            line = {
                "format_version": format_version,
                "kind": sample.kind.value,
                "source_record_id": sample.source_record_id,
                "score_bin": sample.score_bin,
                "messages": messages,
            }
            fh.write(json.dumps(line, sort_keys=True, separators=(",", ":"), ensure_ascii=False))
            fh.write("\n")
            count += 1
    return count
