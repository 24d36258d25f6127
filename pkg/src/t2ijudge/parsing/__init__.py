"""Strict template parsing for judge transcripts, with failure taxonomy."""

from .answers import AnswerSet, parse_answers, parse_direct_scores
from .common import (
    CONSECUTIVE_REPEATS,
    DUPLICATE_RATIO,
    MIN_LINES_FOR_RATIO,
    FailureKind,
    OutputFailure,
    ParseOutcome,
    detect_failure,
)
from .evaluation import EvaluationSet, parse_evaluation, parse_summaries_doc
from .extraction import parse_extraction, parse_questions_doc
from .render import (
    RenderError,
    render_answer_stage_doc,
    render_answers_doc,
    render_caption_doc,
    render_direct_scores_doc,
    render_evaluation_doc,
    render_extraction_doc,
    render_questions_block,
    render_structure_info,
    render_summaries_doc,
)

__all__ = [
    "AnswerSet",
    "CONSECUTIVE_REPEATS",
    "DUPLICATE_RATIO",
    "EvaluationSet",
    "FailureKind",
    "MIN_LINES_FOR_RATIO",
    "OutputFailure",
    "ParseOutcome",
    "RenderError",
    "detect_failure",
    "parse_answers",
    "parse_direct_scores",
    "parse_evaluation",
    "parse_extraction",
    "parse_questions_doc",
    "parse_summaries_doc",
    "render_answer_stage_doc",
    "render_answers_doc",
    "render_caption_doc",
    "render_direct_scores_doc",
    "render_evaluation_doc",
    "render_extraction_doc",
    "render_questions_block",
    "render_structure_info",
    "render_summaries_doc",
]
