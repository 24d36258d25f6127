"""Deterministic offline judge for tests and demos.

A SceneSpec describes what a text prompt asked for, what the "image"
actually shows (via a corruption map), and how good each entity looks.
From a scene the oracle can play every judge role: it emits
template-conformant transcripts for all stages and variants, with a
ground-truth overall score computed by a documented closed-form rule,
so full pipeline runs can be checked exactly with zero network.

Entity names carry an ``_s<seed>`` suffix.  Any request payload
(prompt text, question block, or structure info) therefore identifies
its scene, which lets the HTTP stub regenerate state on demand and stay
stateless.

Ground-truth rule: consistency starts at 10 and loses 2 points per
corrupted attribute or relationship (floor 0); the overall score is the
half-up-rounded mean of consistency and the average effective
appearance, where an absent entity's appearance counts as 0.
"""

from __future__ import annotations

import base64
import json
import math
import random
import re
import struct
import threading
import zlib
from dataclasses import dataclass, field
from fractions import Fraction
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional

from .core import (
    Answer,
    AttributePair,
    DimensionSummary,
    Dimension,
    Entity,
    EntityCaption,
    ExtractionResult,
    GeneratorId,
    ImageRef,
    PromptSource,
    Question,
    QuestionKind,
    QuestionVerdict,
    Relationship,
    TextPrompt,
    validate_extraction,
)
from .parsing import (
    render_answer_stage_doc,
    render_answers_doc,
    render_direct_scores_doc,
    render_evaluation_doc,
    render_extraction_doc,
    render_questions_block,
    render_summaries_doc,
)

CORRUPTION_PENALTY = 2

_NOUNS = [
    "cat", "dog", "car", "tree", "house", "bird",
    "chair", "lamp", "boat", "horse", "apple", "clock",
]
_QUANTITIES = ["one", "two", "three"]
_COLORS = ["black", "white", "red", "blue", "green", "yellow"]
_MATERIALS = ["wood", "metal", "glass", "stone"]
_RELATIONS = {
    "spatial relationship": ["next to", "behind", "on top of", "under"],
    "interaction": ["holding", "touching", "facing"],
    "relative size": ["larger than", "smaller than"],
}

_SEED_RE = re.compile(r"_s(\d+)\b")


def _png_1x1() -> bytes:
    def chunk(tag: bytes, data: bytes) -> bytes:
        return (
            struct.pack(">I", len(data))
            + tag
            + data
            + struct.pack(">I", zlib.crc32(tag + data))
        )

    header = struct.pack(">IIBBBBB", 1, 1, 8, 2, 0, 0, 0)
    pixel = zlib.compress(b"\x00\x80\x80\x80", 9)
    return b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", header) + chunk(b"IDAT", pixel) + chunk(b"IEND", b"")


PLACEHOLDER_IMAGE_URI = "data:image/png;base64," + base64.b64encode(_png_1x1()).decode("ascii")


class SceneError(ValueError):
    pass


@dataclass
class SceneEntity:
    name: str
    attributes: list[AttributePair]
    appearance: int

    def attribute(self, attr_type: str) -> Optional[str]:
        for pair in self.attributes:
            if pair.attr_type == attr_type:
                return pair.value
        return None


@dataclass
class SceneRelationship:
    rel_type: str
    entities: list[str]
    value: str


@dataclass
class SceneSpec:
    seed: int
    entities: list[SceneEntity]
    relationships: list[SceneRelationship] = field(default_factory=list)
    # (entity name, attribute type) -> value the "image" shows instead
    corrupted_attributes: dict[tuple[str, str], str] = field(default_factory=dict)
    # relationship index -> value the "image" shows instead
    corrupted_relationships: dict[int, str] = field(default_factory=dict)

    def entity(self, name: str) -> SceneEntity:
        for ent in self.entities:
            if ent.name == name:
                return ent
        raise SceneError(f"unknown entity '{name}'")

    def is_absent(self, name: str) -> bool:
        return (name, "existence") in self.corrupted_attributes

    def observed_attribute(self, name: str, attr_type: str) -> str:
        key = (name, attr_type)
        if key in self.corrupted_attributes:
            return self.corrupted_attributes[key]
        value = self.entity(name).attribute(attr_type)
        if value is None:
            raise SceneError(f"entity '{name}' has no attribute '{attr_type}'")
        return value

    def observed_relationship(self, index: int) -> str:
        return self.corrupted_relationships.get(index, self.relationships[index].value)

    def corruption_count(self) -> int:
        return len(self.corrupted_attributes) + len(self.corrupted_relationships)


def validate_scene(scene: SceneSpec) -> None:
    if not scene.entities:
        raise SceneError("scene has no entities")
    names = [e.name for e in scene.entities]
    if len(set(names)) != len(names):
        raise SceneError("duplicate entity names")
    for ent in scene.entities:
        if not 0 <= ent.appearance <= 10:
            raise SceneError(f"appearance out of range for '{ent.name}'")
        types = [a.attr_type for a in ent.attributes]
        for required in ("existence", "quantity"):
            if required not in types:
                raise SceneError(f"entity '{ent.name}' lacks '{required}'")
    for rel in scene.relationships:
        for name in rel.entities:
            if name not in names:
                raise SceneError(f"relationship references unknown entity '{name}'")
    for (name, attr_type), observed in scene.corrupted_attributes.items():
        ent = scene.entity(name)
        true_value = ent.attribute(attr_type)
        if true_value is None:
            raise SceneError(f"corruption targets missing attribute {name}/{attr_type}")
        if observed == true_value:
            raise SceneError(f"corruption of {name}/{attr_type} equals the true value")
    for index in scene.corrupted_relationships:
        if not 0 <= index < len(scene.relationships):
            raise SceneError(f"corruption targets missing relationship {index}")
        if scene.corrupted_relationships[index] == scene.relationships[index].value:
            raise SceneError(f"corruption of relationship {index} equals the true value")


def _alternative(value: str, pool: list[str], rng: random.Random) -> str:
    choices = [v for v in pool if v != value]
    return rng.choice(choices)


def generate_scene(
    seed: int,
    entities: Optional[int] = None,
    relationships: Optional[int] = None,
) -> SceneSpec:
    """Deterministic scene for a seed; sizes may be pinned explicitly."""
    rng = random.Random(seed)
    n_entities = entities if entities is not None else rng.randint(1, 4)
    if n_entities < 1:
        raise SceneError("need at least one entity")
    if n_entities > len(_NOUNS):
        raise SceneError(f"at most {len(_NOUNS)} entities supported")
    max_rel = 3 if n_entities >= 2 else 0
    n_relationships = (
        relationships if relationships is not None else rng.randint(0, max_rel)
    )
    if n_relationships < 0:
        raise SceneError("relationship count must be >= 0")
    if n_relationships > 0 and n_entities < 2:
        raise SceneError("relationships need at least two entities")

    names = [f"{noun}_s{seed}" for noun in rng.sample(_NOUNS, n_entities)]
    scene_entities = []
    for name in names:
        attributes = [
            AttributePair("existence", "yes"),
            AttributePair("quantity", rng.choice(_QUANTITIES)),
        ]
        if rng.random() < 0.7:
            attributes.append(AttributePair("color", rng.choice(_COLORS)))
        if rng.random() < 0.4:
            attributes.append(AttributePair("material", rng.choice(_MATERIALS)))
        scene_entities.append(
            SceneEntity(name=name, attributes=attributes, appearance=rng.randint(0, 10))
        )

    scene_relationships = []
    for _ in range(n_relationships):
        rel_type = rng.choice(sorted(_RELATIONS))
        a, b = rng.sample(names, 2)
        scene_relationships.append(
            SceneRelationship(
                rel_type=rel_type, entities=[a, b], value=rng.choice(_RELATIONS[rel_type])
            )
        )

    scene = SceneSpec(seed=seed, entities=scene_entities, relationships=scene_relationships)

    for ent in scene_entities:
        for attr in ent.attributes:
            if rng.random() >= 0.2:
                continue
            if attr.attr_type == "existence":
                observed = "no"
            elif attr.attr_type == "quantity":
                observed = _alternative(attr.value, _QUANTITIES, rng)
            elif attr.attr_type == "color":
                observed = _alternative(attr.value, _COLORS, rng)
            else:
                observed = _alternative(attr.value, _MATERIALS, rng)
            scene.corrupted_attributes[(ent.name, attr.attr_type)] = observed
    for index, rel in enumerate(scene_relationships):
        if rng.random() < 0.2:
            scene.corrupted_relationships[index] = _alternative(
                rel.value, _RELATIONS[rel.rel_type], rng
            )

    validate_scene(scene)
    return scene


def scene_prompt_text(scene: SceneSpec) -> str:
    """Synthetic text prompt a scene stands for."""
    parts = []
    for ent in scene.entities:
        words = [ent.attribute("quantity")]
        color = ent.attribute("color")
        if color:
            words.append(color)
        material = ent.attribute("material")
        if material:
            words.append(material)
        words.append(ent.name)
        parts.append(" ".join(words))
    sentence = "A scene with " + " and ".join(parts) + "."
    for rel in scene.relationships:
        sentence += f" The {rel.entities[0]} is {rel.value} the {rel.entities[1]}."
    return sentence


def scene_to_extraction(scene: SceneSpec) -> ExtractionResult:
    """The correct stage-one output for a scene."""
    entities = [
        Entity(name=e.name, attributes=list(e.attributes)) for e in scene.entities
    ]
    relationships = [
        Relationship(rel_type=r.rel_type, entities_involved=list(r.entities), value=r.value)
        for r in scene.relationships
    ]
    questions: list[Question] = []
    for i, ent in enumerate(scene.entities, start=1):
        questions.append(
            Question(
                qid=f"qa-{i}",
                kind=QuestionKind.APPEARANCE,
                text=f"Does the {ent.name} look realistic and aesthetically pleasing in the image?",
                subject_entities=[ent.name],
            )
        )
    ordinal = 0
    for ent in scene.entities:
        for attr in ent.attributes:
            ordinal += 1
            if attr.attr_type == "existence":
                text = f"Does the {ent.name} exist in the image?"
            elif attr.attr_type == "quantity":
                text = f"What is the quantity of the {ent.name} in the image?"
            else:
                text = f"What is the {attr.attr_type} of the {ent.name} in the image?"
            questions.append(
                Question(
                    qid=f"qi-{ordinal}",
                    kind=QuestionKind.INTRINSIC,
                    text=text,
                    subject_entities=[ent.name],
                )
            )
    for j, rel in enumerate(scene.relationships, start=1):
        questions.append(
            Question(
                qid=f"qr-{j}",
                kind=QuestionKind.RELATIONSHIP,
                text=(
                    f"What is the {rel.rel_type} between the {rel.entities[0]} "
                    f"and the {rel.entities[1]} in the image?"
                ),
                subject_entities=list(rel.entities),
            )
        )
    extraction = ExtractionResult(
        entities=entities, relationships=relationships, questions=questions
    )
    violations = validate_extraction(extraction)
    if violations:
        raise SceneError(f"scene produced invalid extraction: {violations[0].message}")
    return extraction


def effective_appearance(scene: SceneSpec, name: str) -> int:
    return 0 if scene.is_absent(name) else scene.entity(name).appearance


def ground_truth_score(scene: SceneSpec) -> int:
    """Closed-form overall score; see the module docstring for the rule."""
    consistency = max(0, 10 - CORRUPTION_PENALTY * scene.corruption_count())
    appearance = Fraction(
        sum(effective_appearance(scene, e.name) for e in scene.entities),
        len(scene.entities),
    )
    return int(math.floor((consistency + appearance) / 2 + Fraction(1, 2)))


def _round_half_up(value: Fraction) -> int:
    return int(math.floor(value + Fraction(1, 2)))


def scene_captions(scene: SceneSpec) -> list[EntityCaption]:
    captions = []
    for ent in scene.entities:
        if scene.is_absent(ent.name):
            text = f"No {ent.name} is visible anywhere in the image."
        else:
            shown = [
                f"{a.attr_type} {scene.observed_attribute(ent.name, a.attr_type)}"
                for a in ent.attributes
                if a.attr_type != "existence"
            ]
            text = f"The image shows the {ent.name} with " + ", ".join(shown) + "."
        captions.append(EntityCaption(entity=ent.name, caption=text))
    return captions


def scene_answers(scene: SceneSpec, questions: list[Question]) -> dict[str, Answer]:
    """Stage-two answers reflecting the corrupted scene, keyed by qid."""
    extraction = scene_to_extraction(scene)
    answers: dict[str, Answer] = {}
    for question, own in zip(extraction.questions, questions):
        name = own.subject_entities[0] if own.subject_entities else ""
        if question.kind is QuestionKind.APPEARANCE:
            if scene.is_absent(name):
                text = f"The {name} does not appear in the image at all."
            else:
                text = f"The {name} is rendered cleanly and reads naturally."
            answers[own.qid] = Answer(
                qid=own.qid, text=text, score=effective_appearance(scene, name)
            )
        elif question.kind is QuestionKind.INTRINSIC:
            attr_type = _intrinsic_attr_type(question.text)
            if scene.is_absent(name) and attr_type != "existence":
                text = f"The {name} does not exist in the image, so its {attr_type} cannot be read."
            else:
                observed = scene.observed_attribute(name, attr_type)
                text = f"The {attr_type} of the {name} in the image is {observed}."
            answers[own.qid] = Answer(qid=own.qid, text=text)
        else:
            index = int(own.qid.split("-")[1]) - 1
            rel = scene.relationships[index]
            missing = [n for n in rel.entities if scene.is_absent(n)]
            if missing:
                text = (
                    f"The {missing[0]} does not exist in the image, "
                    f"so the {rel.rel_type} cannot be assessed."
                )
            else:
                observed = scene.observed_relationship(index)
                text = f"In the image the {rel.entities[0]} is {observed} the {rel.entities[1]}."
            answers[own.qid] = Answer(qid=own.qid, text=text)
    return answers


def _intrinsic_attr_type(question_text: str) -> str:
    if question_text.startswith("Does the") and "exist" in question_text:
        return "existence"
    m = re.search(r"What is the (\w+) of", question_text)
    if m:
        return m.group(1)
    raise SceneError(f"cannot infer attribute from question: {question_text!r}")


def scene_verdicts(scene: SceneSpec, questions: list[Question]) -> dict[str, QuestionVerdict]:
    """Stage-three per-question judgements, keyed by qid."""
    extraction = scene_to_extraction(scene)
    answers = scene_answers(scene, questions)
    verdicts: dict[str, QuestionVerdict] = {}
    for question, own in zip(extraction.questions, questions):
        name = own.subject_entities[0] if own.subject_entities else ""
        answer = answers[own.qid]
        if question.kind is QuestionKind.APPEARANCE:
            score = effective_appearance(scene, name)
            explanation = f"The {name} appearance rates {score} of 10 in the image."
            verdicts[own.qid] = QuestionVerdict(
                qid=own.qid, answer="", explanation=explanation, score=score
            )
        elif question.kind is QuestionKind.INTRINSIC:
            attr_type = _intrinsic_attr_type(question.text)
            if scene.is_absent(name):
                score = 0
                explanation = f"The {name} is absent, so its {attr_type} scores zero."
            elif (name, attr_type) in scene.corrupted_attributes:
                score = 2
                explanation = f"The {attr_type} of the {name} contradicts the ground truth."
            else:
                score = 10
                explanation = f"The {attr_type} of the {name} matches the ground truth."
            verdicts[own.qid] = QuestionVerdict(
                qid=own.qid, answer=answer.text, explanation=explanation, score=score
            )
        else:
            index = int(own.qid.split("-")[1]) - 1
            rel = scene.relationships[index]
            missing = [n for n in rel.entities if scene.is_absent(n)]
            if missing:
                score = 0
                explanation = f"The {missing[0]} is absent, so the {rel.rel_type} scores zero."
            elif index in scene.corrupted_relationships:
                score = 2
                explanation = f"The {rel.rel_type} between {rel.entities[0]} and {rel.entities[1]} contradicts the ground truth."
            else:
                score = 10
                explanation = f"The {rel.rel_type} between {rel.entities[0]} and {rel.entities[1]} matches the ground truth."
            verdicts[own.qid] = QuestionVerdict(
                qid=own.qid, answer=answer.text, explanation=explanation, score=score
            )
    return verdicts


def scene_summaries(scene: SceneSpec, questions: list[Question]) -> list[DimensionSummary]:
    verdicts = scene_verdicts(scene, questions)
    appearance = _round_half_up(
        Fraction(
            sum(effective_appearance(scene, e.name) for e in scene.entities),
            len(scene.entities),
        )
    )
    intrinsic_scores = [
        verdicts[q.qid].score for q in questions if q.kind is QuestionKind.INTRINSIC
    ]
    intrinsic = _round_half_up(Fraction(sum(intrinsic_scores), len(intrinsic_scores)))
    rel_scores = [
        verdicts[q.qid].score for q in questions if q.kind is QuestionKind.RELATIONSHIP
    ]
    if rel_scores:
        relationship = _round_half_up(Fraction(sum(rel_scores), len(rel_scores)))
        rel_explanation = "Average consistency over the stated relationships."
    else:
        relationship = 10
        rel_explanation = "No relationships were stated, so nothing contradicts the image."
    return [
        DimensionSummary(
            dimension=Dimension.APPEARANCE,
            explanation="Average appearance quality over the entities in the image.",
            score=appearance,
        ),
        DimensionSummary(
            dimension=Dimension.INTRINSIC,
            explanation="Average consistency of the intrinsic attributes with the ground truth.",
            score=intrinsic,
        ),
        DimensionSummary(
            dimension=Dimension.RELATIONSHIP,
            explanation=rel_explanation,
            score=relationship,
        ),
        DimensionSummary(
            dimension=Dimension.OVERALL,
            explanation="Consistency and appearance combined per the scoring strategy.",
            score=ground_truth_score(scene),
        ),
    ]


_STAGE_MARKERS = [
    ("You are an expert in information extraction.", "extraction"),
    ("You are an expert in evaluation question design.", "questions_only"),
    (
        "You are an assistant specialized in answering questions based on the content of images.",
        "answering",
    ),
    (
        "You are an assistant specialized in answering questions directly from the content of images",
        "answering_direct",
    ),
    (
        "You are an expert in scoring image content against ground truth without intermediate answers.",
        "direct_scoring",
    ),
    ("You are an expert in summarizing per-question evaluation results.", "summaries_only"),
    (
        "You are an expert in evaluating generated images against ground truth in a single pass.",
        "merged",
    ),
    (
        "You are an expert in assessing the similarity between answers obtained from images "
        "and ground truth obtained from text.",
        "scoring",
    ),
    ("evaluating explanation texts for questions related to generated images", "subjective_fine"),
    ("evaluating explanation texts for the quality of generated images", "subjective_coarse"),
]


def detect_stage(payload_text: str) -> Optional[str]:
    """Identify which template a prompt was rendered from."""
    for marker, stage in _STAGE_MARKERS:
        if marker in payload_text:
            return stage
    return None


def seed_of_payload(payload_text: str) -> Optional[int]:
    m = _SEED_RE.search(payload_text)
    return int(m.group(1)) if m else None


def _with_noise(doc: str, rng: random.Random) -> str:
    """Sprinkle comment and blank lines the parser must skip.

    Every inserted line is unique so the noise can never look like
    degenerate repetition.
    """
    lines = doc.splitlines()
    count = rng.randint(1, 3)
    positions = sorted(rng.sample(range(len(lines) + 1), min(count, len(lines) + 1)), reverse=True)
    for i, pos in enumerate(positions):
        lines.insert(pos, f"// generated note {rng.randrange(10_000)}-{i}")
        if rng.random() < 0.5:
            lines.insert(pos, "")
    return "\n".join(lines) + "\n"


def oracle_judge(stage: str, payload_text: str, scene: SceneSpec) -> str:
    """Produce the oracle's reply for one rendered prompt.

    The reply is built from the scene, rendered through the canonical
    document renderers, and decorated with skip-noise, so it always
    parses.  ``payload_text`` only needs to be consistent with the
    stage (it is how the HTTP stub inferred the stage in the first
    place).
    """
    if stage in ("subjective_fine", "subjective_coarse"):
        return "4"
    extraction = scene_to_extraction(scene)
    questions = extraction.questions
    rng = random.Random(f"{scene.seed}:{stage}")
    if stage == "extraction":
        doc = render_extraction_doc(extraction)
    elif stage == "questions_only":
        doc = render_questions_block(extraction)
    elif stage == "answering":
        doc = render_answer_stage_doc(
            questions, scene_captions(scene), scene_answers(scene, questions)
        )
    elif stage == "answering_direct":
        doc = render_answers_doc(questions, scene_answers(scene, questions))
    elif stage == "direct_scoring":
        doc = render_direct_scores_doc(questions, scene_verdicts(scene, questions))
    elif stage == "scoring" or stage == "merged":
        doc = render_evaluation_doc(
            questions, scene_verdicts(scene, questions), scene_summaries(scene, questions)
        )
    elif stage == "summaries_only":
        doc = render_summaries_doc(scene_summaries(scene, questions))
    else:
        raise SceneError(f"unknown stage '{stage}'")
    return _with_noise(doc, rng)


def make_pairs(count: int, base_seed: int = 0) -> list[tuple[TextPrompt, ImageRef]]:
    """Synthetic prompt/image pairs whose seeds the stub can recover."""
    if count < 1:
        raise SceneError("need at least one pair")
    pairs = []
    for i in range(count):
        seed = base_seed + i
        scene = generate_scene(seed)
        prompt = TextPrompt(
            id=f"p{seed:06d}",
            text=scene_prompt_text(scene),
            source=PromptSource.LLM_GENERATED,
        )
        image = ImageRef(
            id=f"i{seed:06d}", uri=PLACEHOLDER_IMAGE_URI, generator=GeneratorId.UNKNOWN
        )
        pairs.append((prompt, image))
    return pairs


def _payload_text(body: dict) -> str:
    """All text content of a chat request, concatenated."""
    parts: list[str] = []
    for message in body.get("messages", []):
        content = message.get("content")
        if isinstance(content, str):
            parts.append(content)
        elif isinstance(content, list):
            for piece in content:
                if isinstance(piece, dict) and piece.get("type") == "text":
                    parts.append(str(piece.get("text", "")))
    return "\n".join(parts)


class _OracleHandler(BaseHTTPRequestHandler):
    server_version = "OracleJudge/1.0"

    def log_message(self, format: str, *args) -> None:  # noqa: A002 - stdlib signature
        pass

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self) -> None:  # noqa: N802 - stdlib signature
        if self.path == "/health":
            self._send_json(200, {"status": "ok"})
        else:
            self._send_json(404, {"error": "not found"})

    def do_POST(self) -> None:  # noqa: N802 - stdlib signature
        if self.path not in ("/chat/completions", "/v1/chat/completions"):
            self._send_json(404, {"error": "not found"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            body = json.loads(self.rfile.read(length).decode("utf-8"))
        except (ValueError, UnicodeDecodeError) as exc:
            self._send_json(400, {"error": f"bad request body: {exc}"})
            return
        text = _payload_text(body)
        stage = detect_stage(text)
        if stage is None:
            self._send_json(400, {"error": "request matches no known template"})
            return
        if stage in ("subjective_fine", "subjective_coarse"):
            reply = oracle_judge(stage, text, _EMPTY_SCENE)
        else:
            seed = seed_of_payload(text)
            if seed is None:
                self._send_json(400, {"error": "no scene seed in request"})
                return
            reply = oracle_judge(stage, text, generate_scene(seed))
        with self.server.counter_lock:  # type: ignore[attr-defined]
            self.server.request_count += 1  # type: ignore[attr-defined]
            ordinal = self.server.request_count  # type: ignore[attr-defined]
        self._send_json(
            200,
            {
                "id": f"oracle-{ordinal}",
                "object": "chat.completion",
                "model": body.get("model", "oracle"),
                "choices": [
                    {
                        "index": 0,
                        "message": {"role": "assistant", "content": reply},
                        "finish_reason": "stop",
                    }
                ],
                "usage": {
                    "prompt_tokens": len(text) // 4,
                    "completion_tokens": len(reply) // 4,
                    "total_tokens": len(text) // 4 + len(reply) // 4,
                },
            },
        )


# scene parameter is unused for subjective stages; any valid scene works
_EMPTY_SCENE = SceneSpec(
    seed=0,
    entities=[
        SceneEntity(
            name="cat_s0",
            attributes=[AttributePair("existence", "yes"), AttributePair("quantity", "one")],
            appearance=10,
        )
    ],
)


class OracleServer:
    """Local HTTP stub speaking the chat-completions wire format."""

    def __init__(self, port: int = 0):
        self._httpd = ThreadingHTTPServer(("127.0.0.1", port), _OracleHandler)
        self._httpd.counter_lock = threading.Lock()  # type: ignore[attr-defined]
        self._httpd.request_count = 0  # type: ignore[attr-defined]
        self._thread: Optional[threading.Thread] = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def base_url(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    @property
    def request_count(self) -> int:
        return self._httpd.request_count  # type: ignore[attr-defined]

    def start(self) -> "OracleServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "OracleServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()


def serve_oracle(port: int) -> None:
    """Run the stub until interrupted (CLI entry point)."""
    server = OracleServer(port)
    try:
        server._httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server._httpd.server_close()
