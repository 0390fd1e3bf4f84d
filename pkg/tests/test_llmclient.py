from __future__ import annotations

import json
import threading
import time

import httpx
import pytest

from subjectforge.llmclient import (
    API_KEY_ENV,
    ChatTransportError,
    FileStubClient,
    HttpChatClient,
    TokenBucket,
    request_fingerprint,
)

MESSAGES = [{"role": "system", "content": "rules"}, {"role": "user", "content": "[]"}]


class TestFingerprint:
    def test_stable_and_sensitive(self):
        a = request_fingerprint("m", MESSAGES, 0.7)
        b = request_fingerprint("m", MESSAGES, 0.7)
        assert a == b
        assert request_fingerprint("m", MESSAGES, 0.8) != a
        assert request_fingerprint("other", MESSAGES, 0.7) != a


class TestFileStub:
    def test_keyed_replay(self, tmp_path):
        key = request_fingerprint("stub-model", MESSAGES, 0.7)
        fixture = tmp_path / "stub.json"
        fixture.write_text(json.dumps({key: '{"subject":"題名"}'}))
        client = FileStubClient(fixture)
        assert client.complete(MESSAGES) == '{"subject":"題名"}'

    def test_default_answers_unknown_requests(self, tmp_path):
        fixture = tmp_path / "stub.json"
        fixture.write_text(json.dumps({"__default__": "fallback text"}))
        assert FileStubClient(fixture).complete(MESSAGES) == "fallback text"

    def test_unknown_without_default_is_transport_error(self, tmp_path):
        fixture = tmp_path / "stub.json"
        fixture.write_text("{}")
        with pytest.raises(ChatTransportError):
            FileStubClient(fixture).complete(MESSAGES)

    def test_list_values_play_sequentially_and_repeat(self, tmp_path):
        key = request_fingerprint("stub-model", MESSAGES, 0.7)
        fixture = tmp_path / "stub.json"
        fixture.write_text(json.dumps({key: ["first", "second"]}))
        client = FileStubClient(fixture)
        assert [client.complete(MESSAGES) for _ in range(3)] == ["first", "second", "second"]

    def test_error_entry_raises_with_status(self, tmp_path):
        fixture = tmp_path / "stub.json"
        fixture.write_text(json.dumps({"__default__": {"error": "down", "status": 503}}))
        with pytest.raises(ChatTransportError) as exc:
            FileStubClient(fixture).complete(MESSAGES)
        assert exc.value.status == 503


class TestHttpClient:
    def _client(self, handler, **kwargs):
        client = HttpChatClient("http://llm.test/v1/chat/completions", "m1", **kwargs)
        client._http = httpx.Client(transport=httpx.MockTransport(handler))
        return client

    def test_extracts_assistant_text(self, monkeypatch):
        monkeypatch.setenv(API_KEY_ENV, "secret-key")
        seen = {}

        def handler(request):
            seen["auth"] = request.headers.get("authorization")
            seen["body"] = json.loads(request.content)
            return httpx.Response(
                200, json={"choices": [{"message": {"content": '{"subject":"件名"}'}}]}
            )

        client = self._client(handler)
        assert client.complete(MESSAGES) == '{"subject":"件名"}'
        assert seen["auth"] == "Bearer secret-key"
        assert seen["body"]["model"] == "m1"
        assert seen["body"]["messages"] == MESSAGES

    def test_non_2xx_raises_with_status(self, monkeypatch):
        monkeypatch.delenv(API_KEY_ENV, raising=False)
        client = self._client(lambda request: httpx.Response(429, json={}))
        with pytest.raises(ChatTransportError) as exc:
            client.complete(MESSAGES)
        assert exc.value.status == 429

    def test_unexpected_shape_is_transport_error(self, monkeypatch):
        monkeypatch.delenv(API_KEY_ENV, raising=False)
        client = self._client(lambda request: httpx.Response(200, json={"nope": 1}))
        with pytest.raises(ChatTransportError):
            client.complete(MESSAGES)

    def test_api_key_never_in_error_text(self, monkeypatch):
        monkeypatch.setenv(API_KEY_ENV, "hunter2-very-secret")
        client = self._client(lambda request: httpx.Response(500, json={}))
        with pytest.raises(ChatTransportError) as exc:
            client.complete(MESSAGES)
        assert "hunter2" not in str(exc.value)


class TestTokenBucket:
    def test_paces_acquisitions(self):
        bucket = TokenBucket(rate_per_sec=100, burst=1)
        t0 = time.perf_counter()
        for _ in range(8):
            bucket.acquire()
        elapsed = time.perf_counter() - t0
        assert elapsed >= 0.05  # 7 refills at 10ms each, minus timer slack

    def test_thread_safe_total_rate(self):
        bucket = TokenBucket(rate_per_sec=200, burst=1)
        acquired = []

        def worker():
            for _ in range(5):
                bucket.acquire()
                acquired.append(time.perf_counter())

        threads = [threading.Thread(target=worker) for _ in range(4)]
        t0 = time.perf_counter()
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        elapsed = time.perf_counter() - t0
        assert len(acquired) == 20
        assert elapsed >= 0.07  # 19 refills at 5ms

    def test_rejects_non_positive_rate(self):
        with pytest.raises(ValueError):
            TokenBucket(0)
