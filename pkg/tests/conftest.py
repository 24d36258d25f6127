import base64
import json
import threading
import zlib
import struct
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from t2ijudge.client import EndpointConfig
from t2ijudge.core import (
    Answer,
    AttributePair,
    Dimension,
    DimensionSummary,
    Entity,
    EntityCaption,
    EvaluationRecord,
    ExtractionResult,
    GeneratorId,
    ImageRef,
    PromptSource,
    Provenance,
    Question,
    QuestionKind,
    QuestionVerdict,
    Relationship,
    TextPrompt,
)
from t2ijudge.oracle import OracleServer


def _tiny_png() -> bytes:
    def chunk(tag, payload):
        body = tag + payload
        return struct.pack(">I", len(payload)) + body + struct.pack(">I", zlib.crc32(body))

    ihdr = struct.pack(">IIBBBBB", 1, 1, 8, 2, 0, 0, 0)
    idat = zlib.compress(b"\x00\x40\x40\x40", 9)
    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", ihdr)
        + chunk(b"IDAT", idat)
        + chunk(b"IEND", b"")
    )


TINY_PNG_URI = "data:image/png;base64," + base64.b64encode(_tiny_png()).decode("ascii")


def build_running_example() -> EvaluationRecord:
    """The worked example used across the suite: a black cat standing on
    the hood of a white car.  Two entities, one relationship, nine
    questions (2 appearance + 6 intrinsic + 1 relationship)."""
    prompt = TextPrompt(
        id="p-cat-car",
        text="a black cat standing on the hood of a white car",
        source=PromptSource.LLM_GENERATED,
    )
    image = ImageRef(id="i-cat-car", uri=TINY_PNG_URI, generator=GeneratorId.SD15)
    entities = [
        Entity(
            name="cat",
            attributes=[
                AttributePair("existence", "yes"),
                AttributePair("quantity", "one"),
                AttributePair("color", "black"),
            ],
        ),
        Entity(
            name="car",
            attributes=[
                AttributePair("existence", "yes"),
                AttributePair("quantity", "one"),
                AttributePair("color", "white"),
            ],
        ),
    ]
    relationships = [Relationship("spatial relationship", ["cat", "car"], "standing on")]
    questions = [
        Question("qa-1", QuestionKind.APPEARANCE, "Does the cat look realistic and aesthetically pleasing in the image?", ["cat"]),
        Question("qa-2", QuestionKind.APPEARANCE, "Does the car look realistic and aesthetically pleasing in the image?", ["car"]),
        Question("qi-1", QuestionKind.INTRINSIC, "Does the cat exist in the image?", ["cat"]),
        Question("qi-2", QuestionKind.INTRINSIC, "What is the quantity of the cat in the image?", ["cat"]),
        Question("qi-3", QuestionKind.INTRINSIC, "What is the color of the cat in the image?", ["cat"]),
        Question("qi-4", QuestionKind.INTRINSIC, "Does the car exist in the image?", ["car"]),
        Question("qi-5", QuestionKind.INTRINSIC, "What is the quantity of the car in the image?", ["car"]),
        Question("qi-6", QuestionKind.INTRINSIC, "What is the color of the car in the image?", ["car"]),
        Question("qr-1", QuestionKind.RELATIONSHIP, "What is the spatial relationship between the cat and the car in the image?", ["cat", "car"]),
    ]
    extraction = ExtractionResult(entities=entities, relationships=relationships, questions=questions)
    captions = [
        EntityCaption("cat", "A black cat stands on a pale car hood."),
        EntityCaption("car", "A white car seen from the front, a cat on its hood."),
    ]
    answers = [
        Answer("qa-1", "The cat is rendered cleanly with believable fur.", score=8),
        Answer("qa-2", "The car body is slightly warped near the wheels.", score=6),
        Answer("qi-1", "Yes, the cat exists in the image."),
        Answer("qi-2", "There is one cat in the image."),
        Answer("qi-3", "The color of the cat in the image is black."),
        Answer("qi-4", "Yes, the car exists in the image."),
        Answer("qi-5", "There is one car in the image."),
        Answer("qi-6", "The color of the car in the image is white."),
        Answer("qr-1", "The cat is standing on the hood of the car."),
    ]
    verdicts = [
        QuestionVerdict("qa-1", "The cat is rendered cleanly with believable fur.", "The cat looks realistic, minor softness only.", 8),
        QuestionVerdict("qa-2", "The car body is slightly warped near the wheels.", "The car shows visible warping artifacts.", 6),
        QuestionVerdict("qi-1", "Yes, the cat exists in the image.", "The cat is present as stated.", 10),
        QuestionVerdict("qi-2", "There is one cat in the image.", "The quantity matches the stated one.", 10),
        QuestionVerdict("qi-3", "The color of the cat in the image is black.", "The color matches the stated black.", 10),
        QuestionVerdict("qi-4", "Yes, the car exists in the image.", "The car is present as stated.", 10),
        QuestionVerdict("qi-5", "There is one car in the image.", "The quantity matches the stated one.", 10),
        QuestionVerdict("qi-6", "The color of the car in the image is white.", "The color matches the stated white.", 10),
        QuestionVerdict("qr-1", "The cat is standing on the hood of the car.", "The stated relationship holds in the image.", 10),
    ]
    summaries = [
        DimensionSummary(Dimension.APPEARANCE, "Both subjects look plausible with minor artifacts on the car.", 7),
        DimensionSummary(Dimension.INTRINSIC, "Every stated attribute is visible and matches.", 10),
        DimensionSummary(Dimension.RELATIONSHIP, "The stated placement of the cat on the car holds.", 10),
        DimensionSummary(Dimension.OVERALL, "The image matches the prompt with small appearance flaws.", 9),
    ]
    return EvaluationRecord(
        prompt=prompt,
        image=image,
        extraction=extraction,
        captions=captions,
        answers=answers,
        verdicts=verdicts,
        summaries=summaries,
        provenance=Provenance(evaluator="fixture"),
    )


@pytest.fixture
def running_example() -> EvaluationRecord:
    return build_running_example()


@pytest.fixture(scope="session")
def oracle_server():
    with OracleServer() as server:
        yield server


@pytest.fixture
def oracle_endpoint(oracle_server) -> EndpointConfig:
    return EndpointConfig(
        base_url=oracle_server.base_url, model_name="oracle", api_key="test-key"
    )


class ScriptedHandler(BaseHTTPRequestHandler):
    """Chat endpoint whose responses come from a mutable script list."""

    def log_message(self, *args):
        pass

    def do_POST(self):
        length = int(self.headers.get("Content-Length", "0"))
        body = json.loads(self.rfile.read(length) or b"{}")
        with self.server.lock:
            self.server.requests.append(
                {"body": body, "auth": self.headers.get("Authorization", "")}
            )
            if self.server.script:
                step = self.server.script.pop(0)
            else:
                step = self.server.default
        status = step.get("status", 200)
        if "raw" in step:
            payload = step["raw"].encode("utf-8")
        else:
            payload = json.dumps(
                {
                    "id": "scripted",
                    "object": "chat.completion",
                    "model": "scripted",
                    "choices": [
                        {"index": 0, "message": {"role": "assistant", "content": step.get("content", "")}}
                    ],
                    "usage": step.get(
                        "usage", {"prompt_tokens": 7, "completion_tokens": 3, "total_tokens": 10}
                    ),
                }
            ).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)


class ScriptedServer:
    """Context manager around a scripted chat endpoint for client tests.

    ``script`` is consumed one entry per request; afterwards ``default``
    answers everything.  Entries: {status, content | raw, usage}.
    """

    def __init__(self, script=None, default=None):
        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), ScriptedHandler)
        self._httpd.script = list(script or [])
        self._httpd.default = default or {"status": 200, "content": "ok"}
        self._httpd.requests = []
        self._httpd.lock = threading.Lock()
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        return f"http://127.0.0.1:{self._httpd.server_address[1]}"

    @property
    def requests(self):
        return self._httpd.requests

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._httpd.shutdown()
        self._httpd.server_close()


@pytest.fixture
def scripted_server_factory():
    servers = []

    def factory(script=None, default=None):
        server = ScriptedServer(script, default)
        server.__enter__()
        servers.append(server)
        return server

    yield factory
    for server in servers:
        server.__exit__()
