import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest
from hypothesis import given, strategies as st

from pvir.backend import (GenerateRequest, GenerateResponse, GenerationParams, HttpBackend, MediaRef, MockBackend,
                          fingerprint, load_fixture_index, load_fixtures, save_fixtures)
from pvir.errors import BackendProtocolError, BackendTimeout, IoError, NoFixture

MEDIA = (MediaRef("a.mp4", 0, 5), MediaRef("b.mp4", 1, 4))


def req(text="describe", media=MEDIA, **params):
    return GenerateRequest("m", text, media, GenerationParams(**params))


def test_fingerprint_properties():
    fp = fingerprint(req())
    assert len(fp) == 64 and fp == fingerprint(req())
    assert fingerprint(req(temperature=0.7, seed=9)) == fp
    assert fingerprint(GenerateRequest("other", "describe", MEDIA)) == fp
    assert fingerprint(req(media=MEDIA[::-1])) != fp
    assert fingerprint(req("describe.")) != fp
    assert fingerprint(req(media=(MediaRef("a.mp4", 0, 5.5), MEDIA[1]))) != fp


@given(st.text(), st.text())
def test_fingerprint_injective_on_text(a, b):
    assert (fingerprint(req(a)) == fingerprint(req(b))) == (a == b)


def test_response_validation():
    with pytest.raises(ValueError):
        GenerateResponse("x", finish_reason="halt")
    with pytest.raises(ValueError):
        GenerateResponse(None)
    GenerateResponse(None, finish_reason="error")
    with pytest.raises(ValueError):
        MediaRef("x", 0, 1, fps=0)


def test_mock_fixture_script_and_missing():
    mock = MockBackend(script=[BackendTimeout("slow"), "scripted"])
    fp = mock.add(req(), "from fixture")
    with pytest.raises(BackendTimeout):
        mock.generate(req())
    assert mock.generate(req()).text == "scripted"
    assert mock.generate(req()).text == "from fixture"
    with pytest.raises(NoFixture) as exc:
        mock.generate(req("unknown"))
    assert exc.value.fingerprint == fingerprint(req("unknown")) != fp
    assert mock.call_count == 4


def test_fixture_files_roundtrip(tmp_path):
    fixtures = {fingerprint(req("one")): "first", fingerprint(req("two")): "second\nline"}
    save_fixtures(tmp_path / "fx", fixtures, names={"one": fingerprint(req("one"))})
    assert load_fixtures(tmp_path / "fx") == fixtures
    assert load_fixture_index(tmp_path / "fx") == {"one": fingerprint(req("one"))}
    assert MockBackend(load_fixtures(tmp_path / "fx")).generate(req("two")).text == "second\nline"
    with pytest.raises(IoError):
        load_fixtures(tmp_path / "missing")


class FakeServer:
    """Local HTTP endpoint replaying a list of (status, body) replies."""

    def __init__(self, replies):
        self.replies = list(replies)
        self.received = []
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers["Content-Length"])
                outer.received.append((self.path, dict(self.headers), json.loads(self.rfile.read(length))))
                status, body = outer.replies.pop(0) if outer.replies else (500, "")
                data = body.encode() if isinstance(body, str) else json.dumps(body).encode()
                self.send_response(status)
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.httpd.server_address[1]}"
        threading.Thread(target=self.httpd.serve_forever, daemon=True).start()

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def server_factory():
    servers = []

    def make(replies):
        servers.append(FakeServer(replies))
        return servers[-1]

    yield make
    for s in servers:
        s.close()


def test_http_success(server_factory):
    srv = server_factory([(200, {"text": "hello", "finish_reason": "stop", "latency_ms": 12})])
    out = HttpBackend(srv.url, token="secret", timeout_s=5).generate(req())
    assert out == GenerateResponse("hello", "stop", 12.0)
    path, headers, body = srv.received[0]
    assert path == "/v1/generate"
    assert headers["Authorization"] == "Bearer secret"
    assert body == req().to_dict()


def test_http_retries_with_geometric_backoff(server_factory):
    srv = server_factory([(500, ""), (503, ""), (502, ""), (500, ""), (200, {"text": "late"})])
    slept = []
    backend = HttpBackend(srv.url, max_retries=3, backoff_s=0.5, sleep=slept.append, timeout_s=5)
    with pytest.raises(BackendProtocolError) as exc:
        backend.generate(req())
    assert len(srv.received) == 4
    assert slept == [0.5, 1.0, 2.0]
    assert exc.value.fingerprint == fingerprint(req())


def test_http_recovers_after_transient(server_factory):
    srv = server_factory([(503, ""), (200, {"text": "ok"})])
    slept = []
    assert HttpBackend(srv.url, sleep=slept.append, timeout_s=5).generate(req()).text == "ok"
    assert slept == [0.5]


@pytest.mark.parametrize("reply", [(200, "not json"), (200, {"text": "x", "finish_reason": "nope"}),
                                   (200, {"text": "boom", "finish_reason": "error"}), (404, "missing")])
def test_http_protocol_errors_are_not_retried(server_factory, reply):
    srv = server_factory([reply, (200, {"text": "never"})])
    with pytest.raises(BackendProtocolError):
        HttpBackend(srv.url, sleep=lambda s: None, timeout_s=5).generate(req())
    assert len(srv.received) == 1


def test_http_connection_refused_is_timeout():
    srv = FakeServer([])
    url = srv.url
    srv.close()
    with pytest.raises(BackendTimeout):
        HttpBackend(url, max_retries=1, sleep=lambda s: None, timeout_s=1).generate(req())


def test_http_env_configuration(monkeypatch):
    monkeypatch.delenv("PVIR_BACKEND_URL", raising=False)
    with pytest.raises(ValueError):
        HttpBackend()
    monkeypatch.setenv("PVIR_BACKEND_URL", "http://example.invalid/")
    monkeypatch.setenv("PVIR_BACKEND_TIMEOUT_S", "7.5")
    backend = HttpBackend()
    assert backend.url == "http://example.invalid/v1/generate"
    assert backend.timeout_s == 7.5
