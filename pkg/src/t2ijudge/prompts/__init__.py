"""Prompt templates for the three evaluation stages and subjective judging.

Templates ship as package resources and can be overridden per template
by dropping a file with the same name into a config directory.
Rendering substitutes the named placeholders in a single pass, so brace
characters inside user-supplied text are carried through verbatim and
can never be re-interpreted as placeholders.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Union

from ..core import ImageRef

TEMPLATE_PLACEHOLDERS: dict[str, tuple[str, ...]] = {
    "extraction": ("text_prompt",),
    "answering": ("questions",),
    "scoring": ("answer", "structure_info"),
    "subjective_fine": ("question", "gt_exp", "ref_exp"),
    "subjective_coarse": ("ref_exp", "gt_exp"),
    # ablation-variant templates (see pipeline variants)
    "questions_only": ("text_prompt",),
    "answering_direct": ("questions",),
    "direct_scoring": ("questions", "structure_info"),
    "summaries_only": ("scored_answers",),
    "merged": ("questions", "structure_info"),
}

TEMPLATE_IDS = tuple(TEMPLATE_PLACEHOLDERS)


class PromptError(ValueError):
    """Bad rendering input: unknown template, empty or missing value."""


def load_template(template_id: str, config_dir: Union[str, Path, None] = None) -> str:
    """Return template text, preferring an override file in config_dir."""
    if template_id not in TEMPLATE_PLACEHOLDERS:
        raise PromptError(f"unknown template id '{template_id}'")
    filename = f"{template_id}.md"
    if config_dir is not None:
        override = Path(config_dir) / filename
        if override.is_file():
            return override.read_text(encoding="utf-8")
    return (
        resources.files("t2ijudge.prompts")
        .joinpath("resources", filename)
        .read_text(encoding="utf-8")
    )


def render_template(
    template_id: str,
    values: dict[str, str],
    config_dir: Union[str, Path, None] = None,
) -> str:
    """Fill a template's placeholders and return the prompt text.

    Every placeholder must be supplied and non-empty.  Substitution is a
    single pass over the template, so placeholder-shaped text inside a
    value is never expanded again.
    """
    names = TEMPLATE_PLACEHOLDERS[template_id] if template_id in TEMPLATE_PLACEHOLDERS else None
    if names is None:
        raise PromptError(f"unknown template id '{template_id}'")
    extra = sorted(set(values) - set(names))
    if extra:
        raise PromptError(f"unexpected value(s) for {template_id}: {', '.join(extra)}")
    for name in names:
        if name not in values:
            raise PromptError(f"missing value for placeholder '{name}'")
        if not str(values[name]).strip():
            raise PromptError(f"empty value for placeholder '{name}'")

    template = load_template(template_id, config_dir)
    pattern = re.compile(r"\{(" + "|".join(re.escape(n) for n in names) + r")\}")
    rendered, count = pattern.subn(lambda m: str(values[m.group(1)]), template)
    if count < len(names):
        raise PromptError(
            f"template '{template_id}' is missing placeholder(s); "
            f"substituted {count} of {len(names)}"
        )
    return rendered


@dataclass
class RenderedPrompt:
    text: str
    attachments: list[ImageRef] = field(default_factory=list)


def _check_image(image: ImageRef) -> None:
    uri = image.uri
    if uri.startswith(("http://", "https://", "data:")):
        return
    path = Path(uri)
    if not path.is_file():
        raise PromptError(f"image uri not resolvable: '{uri}'")


def render_extraction(
    text_prompt: str, config_dir: Union[str, Path, None] = None
) -> str:
    """Stage-one prompt: structured extraction from the text prompt."""
    return render_template("extraction", {"text_prompt": text_prompt}, config_dir)


def render_answering(
    questions: str,
    image: ImageRef,
    reference_image: Optional[ImageRef] = None,
    config_dir: Union[str, Path, None] = None,
) -> RenderedPrompt:
    """Stage-two prompt: answer the question block from the image alone.

    The returned attachment list is ordered target first, then the
    optional reference image.  The text prompt of the evaluated pair
    must never appear here.
    """
    _check_image(image)
    attachments = [image]
    if reference_image is not None:
        _check_image(reference_image)
        attachments.append(reference_image)
    text = render_template("answering", {"questions": questions}, config_dir)
    return RenderedPrompt(text=text, attachments=attachments)


def render_scoring(
    answer: str, structure_info: str, config_dir: Union[str, Path, None] = None
) -> str:
    """Stage-three prompt: judge answers against the structured ground truth."""
    return render_template(
        "scoring", {"answer": answer, "structure_info": structure_info}, config_dir
    )


def render_questions_only(
    text_prompt: str, config_dir: Union[str, Path, None] = None
) -> str:
    """Stage-one ablation prompt: questions straight from the text."""
    return render_template("questions_only", {"text_prompt": text_prompt}, config_dir)


def render_answering_direct(
    questions: str, image: ImageRef, config_dir: Union[str, Path, None] = None
) -> RenderedPrompt:
    """Stage-two ablation prompt: answers without the caption step."""
    _check_image(image)
    text = render_template("answering_direct", {"questions": questions}, config_dir)
    return RenderedPrompt(text=text, attachments=[image])


def render_direct_scoring(
    questions: str,
    structure_info: str,
    image: ImageRef,
    config_dir: Union[str, Path, None] = None,
) -> RenderedPrompt:
    """Ablation prompt scoring questions from the image in one step."""
    _check_image(image)
    text = render_template(
        "direct_scoring",
        {"questions": questions, "structure_info": structure_info},
        config_dir,
    )
    return RenderedPrompt(text=text, attachments=[image])


def render_summaries_only(
    scored_answers: str, config_dir: Union[str, Path, None] = None
) -> str:
    """Ablation prompt condensing scored answers into the four summaries."""
    return render_template("summaries_only", {"scored_answers": scored_answers}, config_dir)


def render_merged(
    questions: str,
    structure_info: str,
    image: ImageRef,
    config_dir: Union[str, Path, None] = None,
) -> RenderedPrompt:
    """Single-call prompt combining answering and scoring.

    This is the information-leaking configuration: the judge sees the
    ground truth and the image at once.  Kept only as an ablation.
    """
    _check_image(image)
    text = render_template(
        "merged",
        {"questions": questions, "structure_info": structure_info},
        config_dir,
    )
    return RenderedPrompt(text=text, attachments=[image])


def render_subjective(
    kind: str,
    generated_explanation: str,
    reference_explanation: str,
    question: Optional[str] = None,
    config_dir: Union[str, Path, None] = None,
) -> str:
    """Prompt asking a judge to rate an explanation 0-5 against a reference.

    ``kind`` is "fine" (per-question; requires ``question``) or "coarse"
    (whole-record; forbids ``question``).
    """
    if kind == "fine":
        if question is None or not question.strip():
            raise PromptError("fine-grained subjective rendering requires a question")
        return render_template(
            "subjective_fine",
            {
                "question": question,
                "gt_exp": generated_explanation,
                "ref_exp": reference_explanation,
            },
            config_dir,
        )
    if kind == "coarse":
        if question is not None:
            raise PromptError("coarse-grained subjective rendering takes no question")
        return render_template(
            "subjective_coarse",
            {"ref_exp": reference_explanation, "gt_exp": generated_explanation},
            config_dir,
        )
    raise PromptError(f"unknown subjective kind '{kind}'")


__all__ = [
    "PromptError",
    "RenderedPrompt",
    "TEMPLATE_IDS",
    "TEMPLATE_PLACEHOLDERS",
    "load_template",
    "render_answering",
    "render_answering_direct",
    "render_direct_scoring",
    "render_extraction",
    "render_merged",
    "render_questions_only",
    "render_scoring",
    "render_subjective",
    "render_summaries_only",
    "render_template",
]
