import base64
import json
import struct
import zlib
from pathlib import Path

import pytest

from t2ijudge.client import (
    AuthenticationError,
    ChatClient,
    ChatMessage,
    EndpointConfig,
    EndpointError,
    TransportError,
    UsageLedger,
    encode_image,
    load_endpoint_config,
)
from t2ijudge.core import GeneratorId, ImageRef

from conftest import TINY_PNG_URI, _tiny_png


def _config(base_url, **kwargs):
    kwargs.setdefault("max_retries", 3)
    kwargs.setdefault("backoff_base", 0.0)
    kwargs.setdefault("backoff_cap", 0.0)
    return EndpointConfig(base_url=base_url, model_name="test-model", api_key="sk-test", **kwargs)


class TestConfigLoading:
    def test_file_only(self, tmp_path):
        path = tmp_path / "endpoint.json"
        path.write_text(json.dumps({
            "base_url": "http://file.example/v1",
            "model_name": "file-model",
            "max_concurrency": 2,
        }))
        config = load_endpoint_config(path)
        assert config.base_url == "http://file.example/v1"
        assert config.model_name == "file-model"
        assert config.max_concurrency == 2
        assert config.api_key == ""

    def test_env_beats_file(self, tmp_path):
        path = tmp_path / "endpoint.json"
        path.write_text(json.dumps({"base_url": "http://file.example/v1", "model_name": "file-model"}))
        env = {"BASE_URL": "http://env.example/v1", "API_KEY": "sk-env", "MODEL": "env-model"}
        config = load_endpoint_config(path, env=env)
        assert config.base_url == "http://env.example/v1"
        assert config.model_name == "env-model"
        assert config.api_key == "sk-env"

    def test_overrides_beat_env(self, tmp_path):
        path = tmp_path / "endpoint.json"
        path.write_text(json.dumps({"base_url": "http://file.example/v1", "model_name": "file-model"}))
        env = {"BASE_URL": "http://env.example/v1"}
        config = load_endpoint_config(
            path, env=env, overrides={"base_url": "http://cli.example/v1", "api_key": None}
        )
        assert config.base_url == "http://cli.example/v1"
        assert config.api_key == ""  # None overrides are ignored

    def test_unknown_field_rejected(self, tmp_path):
        path = tmp_path / "endpoint.json"
        path.write_text(json.dumps({"base_url": "x", "model_name": "y", "surprise": 1}))
        with pytest.raises(ValueError, match="surprise"):
            load_endpoint_config(path)

    def test_missing_required_rejected(self):
        with pytest.raises(ValueError, match="base_url"):
            load_endpoint_config(env={"MODEL": "m"})

    def test_numeric_casting(self, tmp_path):
        path = tmp_path / "endpoint.json"
        path.write_text(json.dumps({
            "base_url": "http://x/v1",
            "model_name": "m",
            "request_timeout": "30",
            "max_retries": "1",
        }))
        config = load_endpoint_config(path)
        assert config.request_timeout == 30.0
        assert config.max_retries == 1


class TestEncodeImage:
    def test_remote_and_data_pass_through(self):
        for uri in ("http://host/img.png", "https://host/img.png", TINY_PNG_URI):
            assert encode_image(ImageRef("i", uri, GeneratorId.UNKNOWN)) == uri

    def test_local_png_encodes(self, tmp_path):
        path = tmp_path / "img.png"
        path.write_bytes(_tiny_png())
        uri = encode_image(ImageRef("i", str(path), GeneratorId.UNKNOWN))
        assert uri.startswith("data:image/png;base64,")
        assert base64.b64decode(uri.split(",", 1)[1]) == _tiny_png()

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(EndpointError, match="not found"):
            encode_image(ImageRef("i", str(tmp_path / "absent.png"), GeneratorId.UNKNOWN))

    def test_undecodable_file_rejected(self, tmp_path):
        path = tmp_path / "img.png"
        path.write_bytes(b"not an image at all")
        with pytest.raises(EndpointError, match="undecodable"):
            encode_image(ImageRef("i", str(path), GeneratorId.UNKNOWN))


class TestChatClient:
    def test_basic_chat_and_payload(self, scripted_server_factory):
        server = scripted_server_factory(script=[{"status": 200, "content": "hello back"}])
        client = ChatClient(_config(server.base_url))
        try:
            reply = client.chat([ChatMessage("user", "hello there")])
        finally:
            client.close()
        assert reply == "hello back"
        body = server.requests[0]["body"]
        assert body["model"] == "test-model"
        assert body["temperature"] == 0.0
        assert body["messages"] == [{"role": "user", "content": "hello there"}]
        assert server.requests[0]["auth"] == "Bearer sk-test"

    def test_image_message_encodes_attachment(self, scripted_server_factory):
        server = scripted_server_factory()
        image = ImageRef("i", TINY_PNG_URI, GeneratorId.UNKNOWN)
        client = ChatClient(_config(server.base_url))
        try:
            client.chat([ChatMessage("user", "look at this", images=[image])])
        finally:
            client.close()
        content = server.requests[0]["body"]["messages"][0]["content"]
        assert content[0] == {"type": "text", "text": "look at this"}
        assert content[1]["image_url"]["url"] == TINY_PNG_URI

    def test_retries_on_429_then_succeeds(self, scripted_server_factory):
        server = scripted_server_factory(script=[
            {"status": 429, "content": "slow down"},
            {"status": 429, "content": "slow down"},
            {"status": 200, "content": "finally"},
        ])
        ledger = UsageLedger()
        client = ChatClient(_config(server.base_url), ledger=ledger, sleep=lambda s: None)
        try:
            reply = client.chat([ChatMessage("user", "hi")])
        finally:
            client.close()
        assert reply == "finally"
        assert len(server.requests) == 3
        totals = ledger.snapshot()
        assert totals.retries == 2
        assert totals.request_count == 1

    def test_retries_on_500(self, scripted_server_factory):
        server = scripted_server_factory(script=[{"status": 503, "content": "down"}])
        client = ChatClient(_config(server.base_url), sleep=lambda s: None)
        try:
            assert client.chat([ChatMessage("user", "hi")]) == "ok"
        finally:
            client.close()
        assert len(server.requests) == 2

    def test_401_fails_immediately_without_retry(self, scripted_server_factory):
        server = scripted_server_factory(script=[{"status": 401, "content": "bad key"}])
        client = ChatClient(_config(server.base_url), sleep=lambda s: None)
        try:
            with pytest.raises(AuthenticationError):
                client.chat([ChatMessage("user", "hi")])
        finally:
            client.close()
        assert len(server.requests) == 1

    def test_exhausted_retries_raise_transport_error(self, scripted_server_factory):
        server = scripted_server_factory(default={"status": 429, "content": "never"})
        client = ChatClient(_config(server.base_url, max_retries=2), sleep=lambda s: None)
        try:
            with pytest.raises(TransportError) as err:
                client.chat([ChatMessage("user", "hi")])
        finally:
            client.close()
        assert len(server.requests) == 3  # initial + 2 retries
        assert len(err.value.attempts) == 3

    def test_unexpected_4xx_is_endpoint_error(self, scripted_server_factory):
        server = scripted_server_factory(script=[{"status": 418, "content": "teapot"}])
        client = ChatClient(_config(server.base_url), sleep=lambda s: None)
        try:
            with pytest.raises(EndpointError):
                client.chat([ChatMessage("user", "hi")])
        finally:
            client.close()

    def test_malformed_body_is_endpoint_error(self, scripted_server_factory):
        server = scripted_server_factory(script=[{"status": 200, "raw": "{\"choices\": []}"}])
        client = ChatClient(_config(server.base_url), sleep=lambda s: None)
        try:
            with pytest.raises(EndpointError, match="malformed"):
                client.chat([ChatMessage("user", "hi")])
        finally:
            client.close()

    def test_usage_accumulates_with_prices(self, scripted_server_factory):
        server = scripted_server_factory(script=[
            {"status": 200, "content": "a", "usage": {"prompt_tokens": 100, "completion_tokens": 10}},
            {"status": 200, "content": "b", "usage": {"prompt_tokens": 50, "completion_tokens": 5}},
        ])
        ledger = UsageLedger()
        config = _config(server.base_url, input_token_price=0.001, output_token_price=0.002)
        client = ChatClient(config, ledger=ledger)
        try:
            client.chat([ChatMessage("user", "one")])
            client.chat([ChatMessage("user", "two")])
        finally:
            client.close()
        totals = ledger.snapshot()
        assert totals.request_count == 2
        assert totals.input_tokens == 150
        assert totals.output_tokens == 15
        assert totals.estimated_cost == pytest.approx(150 * 0.001 + 15 * 0.002)

    def test_transcript_mirror(self, scripted_server_factory, tmp_path):
        server = scripted_server_factory(script=[
            {"status": 200, "content": "first"},
            {"status": 200, "content": "second"},
        ])
        client = ChatClient(_config(server.base_url), transcript_dir=tmp_path)
        try:
            client.chat([ChatMessage("user", "q1")])
            client.chat([ChatMessage("user", "q2")])
        finally:
            client.close()
        files = sorted(tmp_path.glob("*.json"))
        assert [f.name for f in files] == ["000001.json", "000002.json"]
        entry = json.loads(files[0].read_text())
        assert entry["response"] == "first"
        assert entry["request"]["messages"][0]["content"] == "q1"
        assert entry["usage"]["prompt_tokens"] == 7

    def test_request_hook_sees_payload_before_send(self, scripted_server_factory):
        server = scripted_server_factory()
        seen = []
        client = ChatClient(_config(server.base_url), request_hook=seen.append)
        try:
            client.chat([ChatMessage("user", "inspect me")])
        finally:
            client.close()
        assert len(seen) == 1
        assert seen[0]["messages"][0]["content"] == "inspect me"
