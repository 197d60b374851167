import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from graphmem.errors import (
    AuthError,
    DimensionDriftError,
    EmptyResponseError,
    RateLimitedError,
    TransportError,
)
from graphmem.llm import ChatRequest, HttpGateway, ProviderConfig

CRED = "test-credential-abc"


class ScriptedServer:
    """Local HTTP stub that plays back a scripted list of (status, payload)
    responses and records every request it receives."""

    def __init__(self, script):
        self.script = list(script)
        self.requests = []
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                outer.requests.append(
                    {
                        "path": self.path,
                        "body": body,
                        "auth": self.headers.get("Authorization"),
                    }
                )
                status, payload = (
                    outer.script.pop(0) if outer.script else (500, {"error": "script empty"})
                )
                raw = payload if isinstance(payload, bytes) else json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(raw)))
                self.end_headers()
                self.wfile.write(raw)

            def log_message(self, *args):
                pass

        self.httpd = HTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    @property
    def base_url(self) -> str:
        host, port = self.httpd.server_address
        return f"http://{host}:{port}/v1"

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def serve(monkeypatch):
    monkeypatch.setenv("TEST_GATEWAY_CRED", CRED)
    servers = []

    def start(script) -> tuple[ScriptedServer, HttpGateway]:
        server = ScriptedServer(script)
        servers.append(server)
        config = ProviderConfig(
            base_url=server.base_url,
            credential_env="TEST_GATEWAY_CRED",
            max_attempts=3,
            backoff_base=0.01,
            timeout=5.0,
        )
        return server, HttpGateway(config)

    yield start
    for server in servers:
        server.close()


def chat_payload(text: str) -> dict:
    return {"choices": [{"message": {"content": text}}]}


def embed_payload(vectors) -> dict:
    return {"data": [{"embedding": v} for v in vectors]}


def test_chat_round_trip(serve):
    server, gateway = serve([(200, chat_payload("hello back"))])
    assert gateway.chat(ChatRequest(prompt="hello")) == "hello back"
    [request] = server.requests
    assert request["path"] == "/v1/chat/completions"
    assert request["body"]["messages"] == [{"role": "user", "content": "hello"}]
    assert request["body"]["temperature"] == 0.0
    assert request["auth"] == f"Bearer {CRED}"


def test_missing_credential_fails_before_any_request(monkeypatch):
    monkeypatch.delenv("ABSENT_CRED_VAR", raising=False)
    gateway = HttpGateway(ProviderConfig(credential_env="ABSENT_CRED_VAR"))
    with pytest.raises(AuthError):
        gateway.chat(ChatRequest(prompt="x"))


def test_401_fails_fast_no_retry(serve):
    server, gateway = serve([(401, {"error": "bad key"})])
    with pytest.raises(AuthError):
        gateway.chat(ChatRequest(prompt="x"))
    assert len(server.requests) == 1


def test_500_then_200_retries(serve):
    server, gateway = serve([(500, {"error": "boom"}), (200, chat_payload("ok"))])
    assert gateway.chat(ChatRequest(prompt="x")) == "ok"
    assert len(server.requests) == 2


def test_429_exhausts_attempts(serve):
    server, gateway = serve([(429, {})] * 3)
    with pytest.raises(RateLimitedError):
        gateway.chat(ChatRequest(prompt="x"))
    assert len(server.requests) == 3  # max_attempts


def test_unretryable_4xx_immediate(serve):
    server, gateway = serve([(404, {"error": "nope"})])
    with pytest.raises(TransportError):
        gateway.chat(ChatRequest(prompt="x"))
    assert len(server.requests) == 1


def test_non_json_200_is_transport_error(serve):
    _, gateway = serve([(200, b"<html>oops</html>")])
    with pytest.raises(TransportError):
        gateway.chat(ChatRequest(prompt="x"))


def test_empty_chat_content_rejected(serve):
    _, gateway = serve([(200, chat_payload("   "))])
    with pytest.raises(EmptyResponseError):
        gateway.chat(ChatRequest(prompt="x"))


def test_malformed_chat_shape_rejected(serve):
    _, gateway = serve([(200, {"choices": []})])
    with pytest.raises(EmptyResponseError):
        gateway.chat(ChatRequest(prompt="x"))


def test_embed_round_trip(serve):
    server, gateway = serve([(200, embed_payload([[1.0, 2.0], [3.0, 4.0]]))])
    vectors = gateway.embed(["a", "b"])
    assert vectors == [[1.0, 2.0], [3.0, 4.0]]
    assert server.requests[0]["path"] == "/v1/embeddings"
    assert server.requests[0]["body"]["input"] == ["a", "b"]


def test_embed_empty_input_no_request(serve):
    server, gateway = serve([])
    assert gateway.embed([]) == []
    assert server.requests == []


def test_embed_row_count_mismatch(serve):
    _, gateway = serve([(200, embed_payload([[1.0, 2.0]]))])
    with pytest.raises(EmptyResponseError):
        gateway.embed(["a", "b"])


def test_embed_dim_drift_across_calls(serve):
    _, gateway = serve(
        [
            (200, embed_payload([[1.0, 2.0]])),
            (200, embed_payload([[1.0, 2.0, 3.0]])),
        ]
    )
    assert gateway.embed(["a"]) == [[1.0, 2.0]]
    with pytest.raises(DimensionDriftError):
        gateway.embed(["b"])


def test_chat_model_override(serve):
    server, gateway = serve([(200, chat_payload("ok"))])
    gateway.chat(ChatRequest(prompt="x", model="special-model"))
    assert server.requests[0]["body"]["model"] == "special-model"


def test_trace_never_logs_credential(serve, caplog):
    server, gateway = serve([(200, chat_payload("ok"))])
    gateway.trace = True
    with caplog.at_level("INFO", logger="graphmem.llm.trace"):
        gateway.chat(ChatRequest(prompt="sensitive prompt"))
    assert caplog.records, "trace produced no log records"
    joined = "\n".join(r.getMessage() for r in caplog.records)
    assert CRED not in joined
    assert "sensitive prompt" in joined
