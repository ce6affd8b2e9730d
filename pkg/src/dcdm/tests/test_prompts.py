import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest
import requests
import yaml

from dcdm import llm
from dcdm.camera import MotionCategory
from dcdm.errors import ConfigError, LayoutError, TransportError, ValidationError
from dcdm.attention import ShotLayout
from dcdm.prompts import (
    MAX_PROMPT_BYTES,
    SECTION_HEADERS,
    Prompt,
    PromptSource,
    ShotPromptList,
    classify_camera_motion,
    classify_camera_motion_llm,
    embed_text,
    extend_prompt,
)


ENDPOINT = llm.LlmEndpointConfig("http://127.0.0.1:9", timeout=1.0)


class FakeResponse:

    def __init__(self, status_code=200, content="", body=None):
        self.status_code = status_code
        self.body = body if body is not None else {"choices": [{"message": {"content": content}}]}
        self.content = b""

    def json(self):
        if isinstance(self.body, Exception):
            raise self.body
        return self.body


@pytest.fixture
def reply(monkeypatch):
    """Route `requests.post` to a canned response, record the calls."""
    calls = []

    def install(response):
        def post(url, json=None, headers=None, timeout=None):
            calls.append({"url": url, "json": json, "headers": headers, "timeout": timeout})
            if isinstance(response, Exception):
                raise response
            return response

        monkeypatch.setattr(requests, "post", post)
        return calls

    return install


def test_offline_extension_contains_the_prompt():
    ext = extend_prompt("a red fox runs through snow")
    assert ext.source is PromptSource.OFFLINE
    assert ext.text.startswith("a red fox runs through snow")
    for header in SECTION_HEADERS:
        assert header in ext.text
    assert extend_prompt("a red fox runs through snow") == ext


def test_prompt_validation():
    for bad in ("", "   \n\t"):
        with pytest.raises(ValidationError):
            Prompt(bad)
    with pytest.raises(ValidationError):
        Prompt("x" * (MAX_PROMPT_BYTES + 1))
    assert Prompt("x" * MAX_PROMPT_BYTES).text


def test_endpoint_extension(reply, monkeypatch):
    monkeypatch.setenv(llm.ENV_API_KEY, "secret")
    calls = reply(FakeResponse(content="  X  "))
    ext = extend_prompt("a cat", ENDPOINT)
    assert ext.text == "X" and ext.source is PromptSource.ENDPOINT
    (call,) = calls
    assert call["url"] == "http://127.0.0.1:9/v1/chat/completions"
    assert call["json"]["temperature"] == 0
    assert call["json"]["messages"][1] == {"role": "user", "content": "a cat"}
    assert call["headers"]["Authorization"] == "Bearer secret"


def test_empty_reply_falls_back_to_offline(reply):
    reply(FakeResponse(content=""))
    ext = extend_prompt("a cat", ENDPOINT)
    assert ext.source is PromptSource.OFFLINE
    assert ext.warning
    assert ext.text == extend_prompt("a cat").text


def test_http_error(reply):
    reply(FakeResponse(status_code=500))
    with pytest.raises(TransportError) as info:
        extend_prompt("a cat", ENDPOINT)
    assert info.value.status == 500
    assert info.value.exit_code == 3


@pytest.mark.parametrize(
    "failure", [requests.Timeout("slow"), requests.ConnectionError("refused")]
)
def test_transport_failures(reply, failure):
    reply(failure)
    with pytest.raises(TransportError) as info:
        extend_prompt("a cat", ENDPOINT)
    assert info.value.status is None


def test_malformed_reply(reply):
    reply(FakeResponse(body={"unexpected": True}))
    with pytest.raises(TransportError):
        extend_prompt("a cat", ENDPOINT)
    reply(FakeResponse(body=ValueError("not json")))
    with pytest.raises(TransportError):
        extend_prompt("a cat", ENDPOINT)


class DripHandler(BaseHTTPRequestHandler):

    """Answers every POST with a valid reply, one byte every 0.1 s."""

    def do_POST(self):
        self.rfile.read(int(self.headers["Content-Length"]))
        body = json.dumps({"choices": [{"message": {"content": "X"}}]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        try:
            for i in range(len(body)):
                self.wfile.write(body[i : i + 1])
                self.wfile.flush()
                time.sleep(0.1)
        except OSError:
            pass

    def log_message(self, *args):
        pass


@pytest.fixture
def drip_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), DripHandler)
    server.daemon_threads = True
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield "http://127.0.0.1:{}".format(server.server_address[1])
    server.shutdown()
    server.server_close()


def test_timeout_bounds_a_trickling_reply(drip_server):
    cfg = llm.LlmEndpointConfig(drip_server, timeout=1.0)
    start = time.monotonic()
    with pytest.raises(TransportError) as info:
        llm.chat_completion(cfg, "system", "a cat")
    assert time.monotonic() - start < 2.0
    assert info.value.status is None


def test_endpoint_config_validation():
    assert ENDPOINT.url == "http://127.0.0.1:9/v1/chat/completions"
    assert llm.LlmEndpointConfig("http://x/").url == "http://x/v1/chat/completions"
    with pytest.raises(ConfigError):
        llm.LlmEndpointConfig("")
    with pytest.raises(ConfigError):
        llm.LlmEndpointConfig("http://x", timeout=0)


def test_rule_classifier(fixtures_dir):
    with open(fixtures_dir / "camera_phrases.yaml") as f:
        cases = yaml.safe_load(f)
    assert len(cases) == 30
    for case in cases:
        assert classify_camera_motion(case["prompt"]).value == case["label"], case["prompt"]


def test_classifier_examples():
    assert classify_camera_motion("camera pans left across a city") is MotionCategory.LEFT
    assert classify_camera_motion("a quiet meadow") is MotionCategory.STATIC


@pytest.mark.parametrize(
    "content, expected, source",
    [
        ("zoom_out", MotionCategory.ZOOM_OUT, PromptSource.ENDPOINT),
        ("Label: Zoom In.", MotionCategory.ZOOM_IN, PromptSource.ENDPOINT),
        ("zoomout", MotionCategory.ZOOM_OUT, PromptSource.ENDPOINT),
        ("The camera stays upright and still: static", MotionCategory.STATIC, PromptSource.ENDPOINT),
        ("a leftover outright copyright", MotionCategory.LEFT, PromptSource.OFFLINE),
        ("I am not sure", MotionCategory.LEFT, PromptSource.OFFLINE),
    ],
)
def test_endpoint_classifier(reply, content, expected, source):
    reply(FakeResponse(content=content))
    category, src, warning = classify_camera_motion_llm("pan left over hills", ENDPOINT)
    assert category is expected and src is source
    assert (warning is None) == (source is PromptSource.ENDPOINT)


def test_embedding_is_unit_and_deterministic():
    a = embed_text(extend_prompt("a red fox"))
    b = embed_text(extend_prompt("a red fox"))
    assert a.dim == 64 and a.vector.dtype == np.float32
    assert np.isclose(np.linalg.norm(a.vector), 1.0, atol=1e-6)
    assert np.array_equal(a.vector, b.vector) and a.source_hash == b.source_hash
    assert embed_text("x", dim=16).dim == 16
    with pytest.raises(ValidationError):
        embed_text("x", dim=4)


def test_distinct_prompts_get_distinct_embeddings(rng):
    letters = np.array(list("abcdefghijklmnopqrstuvwxyz"))
    texts = sorted({"".join(rng.choice(letters, size=20)) for _ in range(1000)})
    vectors = np.stack([embed_text(t).vector for t in texts]).astype(np.float64)
    gram = vectors @ vectors.T
    np.fill_diagonal(gram, 0.0)
    assert np.abs(gram).max() < 0.9


def test_shot_prompts_must_match_the_layout(tmp_path):
    path = tmp_path / "shots.txt"
    path.write_text("a dog runs\n\na dog jumps\n", encoding="utf-8")
    shots = ShotPromptList.from_file(path)
    assert len(shots) == 2
    shots.check_layout(ShotLayout.from_frames([1, 1], 4))
    with pytest.raises(LayoutError):
        shots.check_layout(ShotLayout.from_frames([1, 1, 1], 4))
