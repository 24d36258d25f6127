"""Meta-evaluation: rank correlations against human annotations.

Spearman is computed as the Pearson correlation of midranks and Kendall
is the tie-adjusted tau-b.  Both reduce to exact integer arithmetic
(doubled midranks are always integers; pair counts are integers), so
boundary cases like identical or exactly reversed vectors come out as
exactly +/-1.0.

Also home to the subjective explanation-quality evaluation, which asks
a judge endpoint to rate generated explanations 0-5 against references
and averages the replies.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from statistics import fmean
from typing import Optional, Sequence

from .prompts import render_subjective


class CorrelationError(ValueError):
    """Undefined correlation: length mismatch, too short, or constant input."""


def _check_vectors(xs: Sequence[float], ys: Sequence[float]) -> None:
    if len(xs) != len(ys):
        raise CorrelationError(f"length mismatch: {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        raise CorrelationError("need at least two observations")
    if all(x == xs[0] for x in xs):
        raise CorrelationError("first vector is constant; correlation undefined")
    if all(y == ys[0] for y in ys):
        raise CorrelationError("second vector is constant; correlation undefined")


def _doubled_midranks(xs: Sequence[float]) -> list[int]:
    """Midranks scaled by 2 so ties stay in integer arithmetic."""
    n = len(xs)
    order = sorted(range(n), key=lambda i: xs[i])
    out = [0] * n
    i = 0
    while i < n:
        j = i
        while j + 1 < n and xs[order[j + 1]] == xs[order[i]]:
            j += 1
        doubled = (i + 1) + (j + 1)  # first + last 1-based position
        for k in range(i, j + 1):
            out[order[k]] = doubled
        i = j + 1
    return out


def _ratio(numerator: int, denom_sq: int) -> float:
    """numerator / sqrt(denom_sq) with an exact path for perfect squares."""
    root = math.isqrt(denom_sq)
    if root * root == denom_sq:
        return numerator / root
    return float(numerator) / math.sqrt(denom_sq)


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Spearman rank correlation with midrank tie handling."""
    _check_vectors(xs, ys)
    n = len(xs)
    dx = _doubled_midranks(xs)
    dy = _doubled_midranks(ys)
    sx = sum(dx)
    sy = sum(dy)
    sxx = sum(a * a for a in dx)
    syy = sum(b * b for b in dy)
    sxy = sum(a * b for a, b in zip(dx, dy))
    num = n * sxy - sx * sy
    den_x = n * sxx - sx * sx
    den_y = n * syy - sy * sy
    return _ratio(num, den_x * den_y)


def _count_inversions(values: list[int]) -> int:
    """Number of strictly decreasing pairs, by merge sort."""
    if len(values) < 2:
        return 0
    mid = len(values) // 2
    left = values[:mid]
    right = values[mid:]
    count = _count_inversions(left) + _count_inversions(right)
    merged = []
    i = j = 0
    while i < len(left) and j < len(right):
        if left[i] <= right[j]:
            merged.append(left[i])
            i += 1
        else:
            count += len(left) - i
            merged.append(right[j])
            j += 1
    merged.extend(left[i:])
    merged.extend(right[j:])
    values[:] = merged
    return count


def _tie_pair_count(values: Sequence[float]) -> int:
    counts: dict[float, int] = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    return sum(c * (c - 1) // 2 for c in counts.values())


def kendall(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Kendall tau-b via sort-and-count (O(n log n) discordance counting)."""
    _check_vectors(xs, ys)
    n = len(xs)
    n0 = n * (n - 1) // 2
    order = sorted(range(n), key=lambda i: (xs[i], ys[i]))
    sorted_x = [xs[i] for i in order]
    sorted_pairs = [(xs[i], ys[i]) for i in order]

    # rank the permuted y values so the merge sort runs on integers
    y_perm = [ys[i] for i in order]
    rank_of = {v: r for r, v in enumerate(sorted(set(y_perm)))}
    discordant = _count_inversions([rank_of[v] for v in y_perm])

    tie_x = _tie_pair_count(sorted_x)
    tie_y = _tie_pair_count(ys)
    tie_xy = _tie_pair_count(sorted_pairs)  # type: ignore[arg-type]
    concordant = n0 - tie_x - tie_y + tie_xy - discordant
    return _ratio(concordant - discordant, (n0 - tie_x) * (n0 - tie_y))


@dataclass
class SeriesTies:
    n: int
    distinct: int

    @property
    def tie_fraction(self) -> float:
        return 1.0 - self.distinct / self.n if self.n else 0.0


@dataclass
class AnnotatorScores:
    annotator_id: str
    scores: dict[str, float]


@dataclass
class CorrelationEntry:
    name: str
    spearman: float
    kendall: float


@dataclass
class CorrelationReport:
    n_items: int
    dropped: int
    per_annotator: list[CorrelationEntry]
    average: CorrelationEntry
    average_mode: str
    ties: dict[str, SeriesTies] = field(default_factory=dict)
    upper_bound: Optional[list[CorrelationEntry]] = None

    def to_dict(self) -> dict:
        return {
            "n_items": self.n_items,
            "dropped": self.dropped,
            "average_mode": self.average_mode,
            "per_annotator": [e.__dict__ for e in self.per_annotator],
            "average": self.average.__dict__,
            "ties": {k: {"n": t.n, "distinct": t.distinct} for k, t in self.ties.items()},
            "upper_bound": (
                [e.__dict__ for e in self.upper_bound] if self.upper_bound else None
            ),
        }


def correlation_report(
    model_scores: dict[str, float],
    annotators: list[AnnotatorScores],
    average_mode: str = "mean_scores",
    upper_bound: bool = False,
) -> CorrelationReport:
    """Correlate model scores with each annotator and with their average.

    Items are aligned by record id with inner-join semantics: ids
    missing from the model or any annotator are dropped (and counted).
    ``average_mode`` selects how the human average column is built:
    "mean_scores" correlates against per-item mean annotator scores,
    "mean_correlations" averages the per-annotator correlations.
    With ``upper_bound`` each annotator is also correlated against the
    mean of the remaining annotators.
    """
    if not annotators:
        raise CorrelationError("need at least one annotator")
    ids = [a.annotator_id for a in annotators]
    if len(set(ids)) != len(ids):
        raise CorrelationError("annotator ids must be distinct")
    if average_mode not in ("mean_scores", "mean_correlations"):
        raise CorrelationError(f"unknown average_mode '{average_mode}'")

    joined = set(model_scores)
    universe = set(model_scores)
    for annotator in annotators:
        joined &= set(annotator.scores)
        universe |= set(annotator.scores)
    join_order = sorted(joined)
    dropped = len(universe) - len(join_order)
    if len(join_order) < 2:
        raise CorrelationError(f"only {len(join_order)} shared items after join")

    model_vec = [model_scores[i] for i in join_order]
    vectors = {a.annotator_id: [a.scores[i] for i in join_order] for a in annotators}

    def ties_of(values: Sequence[float]) -> SeriesTies:
        return SeriesTies(n=len(values), distinct=len(set(values)))

    ties = {"model": ties_of(model_vec)}
    per_annotator = []
    for annotator in annotators:
        vec = vectors[annotator.annotator_id]
        ties[annotator.annotator_id] = ties_of(vec)
        per_annotator.append(
            CorrelationEntry(
                name=annotator.annotator_id,
                spearman=spearman(model_vec, vec),
                kendall=kendall(model_vec, vec),
            )
        )

    if average_mode == "mean_scores":
        avg_vec = [
            fmean(vectors[a.annotator_id][i] for a in annotators)
            for i in range(len(join_order))
        ]
        average = CorrelationEntry(
            name="manual_avg",
            spearman=spearman(model_vec, avg_vec),
            kendall=kendall(model_vec, avg_vec),
        )
    else:
        average = CorrelationEntry(
            name="manual_avg",
            spearman=fmean(e.spearman for e in per_annotator),
            kendall=fmean(e.kendall for e in per_annotator),
        )

    bounds: Optional[list[CorrelationEntry]] = None
    if upper_bound:
        if len(annotators) < 2:
            raise CorrelationError("upper bound needs at least two annotators")
        bounds = []
        for annotator in annotators:
            rest = [a for a in annotators if a.annotator_id != annotator.annotator_id]
            rest_vec = [
                fmean(vectors[a.annotator_id][i] for a in rest)
                for i in range(len(join_order))
            ]
            own = vectors[annotator.annotator_id]
            bounds.append(
                CorrelationEntry(
                    name=annotator.annotator_id,
                    spearman=spearman(own, rest_vec),
                    kendall=kendall(own, rest_vec),
                )
            )

    return CorrelationReport(
        n_items=len(join_order),
        dropped=dropped,
        per_annotator=per_annotator,
        average=average,
        average_mode=average_mode,
        ties=ties,
        upper_bound=bounds,
    )


@dataclass
class SubjectiveItem:
    generated_explanation: str
    reference_explanation: str
    question: Optional[str] = None


@dataclass
class SubjectiveResult:
    scores: list[Optional[int]]
    mean: float
    failures: int


class SubjectiveEvalError(RuntimeError):
    pass


_BARE_INT = re.compile(r"-?\d+")


def parse_subjective_reply(raw: str) -> Optional[int]:
    """A valid judge reply is one line holding a bare integer in [0, 5]."""
    token = raw.strip()
    if not _BARE_INT.fullmatch(token):
        return None
    score = int(token)
    if not 0 <= score <= 5:
        return None
    return score


def subjective_eval(
    client,
    items: list[SubjectiveItem],
    kind: str = "fine",
    retries: int = 2,
) -> SubjectiveResult:
    """Judge explanation quality 0-5 per item and average the scores.

    ``client`` needs a ``chat(messages) -> str`` method.  Replies that
    are not bare integers are retried up to ``retries`` times and then
    excluded from the mean (counted in ``failures``).
    """
    scores: list[Optional[int]] = []
    failures = 0
    for item in items:
        prompt = render_subjective(
            kind,
            generated_explanation=item.generated_explanation,
            reference_explanation=item.reference_explanation,
            question=item.question if kind == "fine" else None,
        )
        score: Optional[int] = None
        for _ in range(retries + 1):
            reply = client.chat([{"role": "user", "content": prompt}])
            score = parse_subjective_reply(reply)
            if score is not None:
                break
        if score is None:
            failures += 1
        scores.append(score)
    valid = [s for s in scores if s is not None]
    if not valid:
        raise SubjectiveEvalError("no item produced a valid integer score")
    return SubjectiveResult(scores=scores, mean=fmean(valid), failures=failures)


def overall_scores(records) -> dict[str, float]:
    """record_id -> overall summary score, skipping incomplete records."""
    out: dict[str, float] = {}
    for record in records:
        score = record.overall_score
        if score is not None and record.failure is None:
            out[record.record_id] = float(score)
    return out
