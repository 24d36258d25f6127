"""HTTP client for chat-completions endpoints with vision attachments.

Requests carry images inline as base64 data URIs.  Transient failures
(429, 5xx, timeouts) are retried with exponential backoff and jitter;
authentication failures are not retried.  A shared ledger accumulates
token usage and estimated cost across threads.
"""

from __future__ import annotations

import base64
import io
import json
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional

import httpx
from PIL import Image

from .core import ImageRef

ENV_BASE_URL = "BASE_URL"
ENV_API_KEY = "API_KEY"
ENV_MODEL = "MODEL"


class ClientError(RuntimeError):
    pass


class AuthenticationError(ClientError):
    pass


class EndpointError(ClientError):
    """Non-retryable protocol problem: bad request, malformed response."""


class TransportError(ClientError):
    """Raised when retries are exhausted; carries the attempt log."""

    def __init__(self, message: str, attempts: list[str]):
        super().__init__(message)
        self.attempts = attempts


@dataclass
class EndpointConfig:
    base_url: str
    model_name: str
    api_key: str = ""
    max_retries: int = 3
    request_timeout: float = 120.0
    max_concurrency: int = 4
    temperature: float = 0.0
    backoff_base: float = 1.0
    backoff_cap: float = 60.0
    # per-token prices; zero means cost accounting is off
    input_token_price: float = 0.0
    output_token_price: float = 0.0

    def validate(self) -> None:
        if not self.base_url:
            raise ValueError("base_url is required")
        if not self.model_name:
            raise ValueError("model_name is required")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")
        if self.request_timeout <= 0:
            raise ValueError("request_timeout must be positive")


_CONFIG_FIELDS = {
    "base_url": str,
    "model_name": str,
    "api_key": str,
    "max_retries": int,
    "request_timeout": float,
    "max_concurrency": int,
    "temperature": float,
    "backoff_base": float,
    "backoff_cap": float,
    "input_token_price": float,
    "output_token_price": float,
}


def load_endpoint_config(
    path: Optional[Path] = None,
    env: Optional[Mapping[str, str]] = None,
    overrides: Optional[Mapping[str, object]] = None,
) -> EndpointConfig:
    """Build an EndpointConfig from file, environment, and overrides.

    Precedence: explicit overrides beat environment variables
    (BASE_URL, API_KEY, MODEL), which beat the JSON config file.
    """
    values: dict[str, object] = {}
    if path is not None:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise ValueError(f"config file {path} must hold a JSON object")
        for key, value in raw.items():
            if key not in _CONFIG_FIELDS:
                raise ValueError(f"unknown config field '{key}' in {path}")
            values[key] = value
    if env:
        if env.get(ENV_BASE_URL):
            values["base_url"] = env[ENV_BASE_URL]
        if env.get(ENV_API_KEY):
            values["api_key"] = env[ENV_API_KEY]
        if env.get(ENV_MODEL):
            values["model_name"] = env[ENV_MODEL]
    if overrides:
        for key, value in overrides.items():
            if key not in _CONFIG_FIELDS:
                raise ValueError(f"unknown config override '{key}'")
            if value is not None:
                values[key] = value
    for key, caster in _CONFIG_FIELDS.items():
        if key in values:
            values[key] = caster(values[key])  # type: ignore[call-arg]
    missing = [k for k in ("base_url", "model_name") if k not in values]
    if missing:
        raise ValueError(f"missing required config: {', '.join(missing)}")
    config = EndpointConfig(**values)  # type: ignore[arg-type]
    config.validate()
    return config


@dataclass
class UsageTotals:
    request_count: int = 0
    input_tokens: int = 0
    output_tokens: int = 0
    retries: int = 0
    estimated_cost: float = 0.0


class UsageLedger:
    """Thread-safe accumulator of per-request usage."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._totals = UsageTotals()

    def record(self, input_tokens: int, output_tokens: int, cost: float) -> None:
        with self._lock:
            self._totals.request_count += 1
            self._totals.input_tokens += input_tokens
            self._totals.output_tokens += output_tokens
            self._totals.estimated_cost += cost

    def record_retry(self) -> None:
        with self._lock:
            self._totals.retries += 1

    def snapshot(self) -> UsageTotals:
        with self._lock:
            return UsageTotals(**self._totals.__dict__)


_MIME_BY_FORMAT = {"PNG": "image/png", "JPEG": "image/jpeg", "GIF": "image/gif", "WEBP": "image/webp"}


def encode_image(image: ImageRef) -> str:
    """Encode a local image file as a base64 data URI.

    Remote (http/https) and already-inline (data:) URIs pass through
    unchanged.  Local files are verified to decode before encoding.
    """
    uri = image.uri
    if uri.startswith(("http://", "https://", "data:")):
        return uri
    path = Path(uri)
    if not path.is_file():
        raise EndpointError(f"image file not found: {uri}")
    payload = path.read_bytes()
    try:
        with Image.open(io.BytesIO(payload)) as img:
            img.verify()
            fmt = img.format or ""
    except Exception as exc:
        raise EndpointError(f"undecodable image {uri}: {exc}") from exc
    mime = _MIME_BY_FORMAT.get(fmt, f"image/{fmt.lower()}" if fmt else "application/octet-stream")
    return f"data:{mime};base64,{base64.b64encode(payload).decode('ascii')}"


@dataclass
class ChatMessage:
    role: str
    text: str
    images: list[ImageRef] = field(default_factory=list)


class ChatClient:
    """Shareable across worker threads; admission bounded by a semaphore."""

    def __init__(
        self,
        config: EndpointConfig,
        ledger: Optional[UsageLedger] = None,
        request_hook: Optional[Callable[[dict], None]] = None,
        transcript_dir: Optional[Path] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        config.validate()
        self.config = config
        self.ledger = ledger if ledger is not None else UsageLedger()
        self.request_hook = request_hook
        self.transcript_dir = Path(transcript_dir) if transcript_dir else None
        self._sleep = sleep
        self._semaphore = threading.Semaphore(config.max_concurrency)
        self._jitter = random.Random()
        self._transcript_lock = threading.Lock()
        self._transcript_ordinal = 0
        headers = {"Content-Type": "application/json"}
        if config.api_key:
            headers["Authorization"] = f"Bearer {config.api_key}"
        self._http = httpx.Client(timeout=config.request_timeout, headers=headers)
        if self.transcript_dir:
            self.transcript_dir.mkdir(parents=True, exist_ok=True)

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> "ChatClient":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def _payload(self, messages: list[ChatMessage]) -> dict:
        wire_messages = []
        for message in messages:
            if message.images:
                content: object = [{"type": "text", "text": message.text}] + [
                    {"type": "image_url", "image_url": {"url": encode_image(img)}}
                    for img in message.images
                ]
            else:
                content = message.text
            wire_messages.append({"role": message.role, "content": content})
        return {
            "model": self.config.model_name,
            "temperature": self.config.temperature,
            "messages": wire_messages,
        }

    def _mirror(self, payload: dict, text: str, usage: dict) -> None:
        if not self.transcript_dir:
            return
        with self._transcript_lock:
            self._transcript_ordinal += 1
            ordinal = self._transcript_ordinal
        entry = {"request": payload, "response": text, "usage": usage}
        out = self.transcript_dir / f"{ordinal:06d}.json"
        out.write_text(json.dumps(entry, ensure_ascii=False, indent=2), encoding="utf-8")

    def _backoff(self, attempt: int) -> float:
        delay = min(self.config.backoff_cap, self.config.backoff_base * (2**attempt))
        return delay * self._jitter.uniform(0.5, 1.0)

    def chat(self, messages: list[ChatMessage]) -> str:
        """Send one conversation; return the assistant text verbatim."""
        payload = self._payload(messages)
        if self.request_hook is not None:
            self.request_hook(payload)
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        attempts: list[str] = []
        total_attempts = self.config.max_retries + 1
        for attempt in range(total_attempts):
            if attempt > 0:
                self.ledger.record_retry()
                self._sleep(self._backoff(attempt - 1))
            try:
                with self._semaphore:
                    response = self._http.post(url, json=payload)
            except httpx.HTTPError as exc:
                attempts.append(f"attempt {attempt + 1}: transport {type(exc).__name__}: {exc}")
                continue
            if response.status_code in (401, 403):
                raise AuthenticationError(
                    f"authentication rejected (HTTP {response.status_code}): {response.text[:200]}"
                )
            if response.status_code == 429 or response.status_code >= 500:
                attempts.append(f"attempt {attempt + 1}: HTTP {response.status_code}")
                continue
            if response.status_code != 200:
                raise EndpointError(
                    f"HTTP {response.status_code}: {response.text[:500]}"
                )
            try:
                body = response.json()
                text = body["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise EndpointError(f"malformed response body: {exc}") from exc
            usage = body.get("usage") or {}
            input_tokens = int(usage.get("prompt_tokens", 0))
            output_tokens = int(usage.get("completion_tokens", 0))
            cost = (
                input_tokens * self.config.input_token_price
                + output_tokens * self.config.output_token_price
            )
            self.ledger.record(input_tokens, output_tokens, cost)
            self._mirror(payload, text, usage)
            return text
        raise TransportError(
            f"exhausted {total_attempts} attempts against {url}", attempts
        )
