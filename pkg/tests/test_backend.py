from __future__ import annotations

import threading

import pytest

from checkeval.backend import (
    Backend,
    BackendConfig,
    BackendMode,
    FunctionTransport,
    ResponseCache,
    TransportResponse,
    cache_key,
    complete,
)
from checkeval.errors import BackendError, ConfigurationError, ReplayMissError
from checkeval.prompts import ChatRequest, Decoding

from .stubserver import StubServer

REQ = ChatRequest("system text", "user text")
KEY_ENV = "CHECKEVAL_TEST_KEY"


@pytest.fixture
def api_key(monkeypatch):
    monkeypatch.setenv(KEY_ENV, "sk-test")


def _config(tmp_path, mode="live", **kw):
    return BackendConfig(
        model_name="stub-model",
        api_key_env=KEY_ENV,
        cache_dir=tmp_path / "cache",
        mode=BackendMode(mode),
        backoff_base=0.001,
        backoff_max=0.01,
        **kw,
    )


def test_cache_key_is_stable_and_sensitive():
    base = cache_key(REQ, "m")
    assert base == cache_key(ChatRequest("system text", "user text"), "m")
    assert len(base) == 64
    variants = [
        cache_key(REQ, "m2"),
        cache_key(ChatRequest("system text!", "user text"), "m"),
        cache_key(ChatRequest("system text", "user text!"), "m"),
        cache_key(ChatRequest("system text", "user text", Decoding(temperature=0.5)), "m"),
        cache_key(ChatRequest("system text", "user text", Decoding(max_output_tokens=10)), "m"),
        cache_key(ChatRequest("system text", "user text", cache_salt="r1"), "m"),
    ]
    assert len({base, *variants}) == len(variants) + 1


def test_cache_layout_and_append_only(tmp_path):
    cache = ResponseCache(tmp_path)
    digest = "ab" + "0" * 62
    assert cache.put(digest, "first", durable=True)
    assert not cache.put(digest, "second")
    assert (tmp_path / "ab" / f"{digest}.response").read_text(encoding="utf-8") == "first"
    assert cache.get(digest) == "first"
    assert cache.digests() == [digest]
    assert not list(tmp_path.glob("ab/.tmp-*"))


def test_config_validation(tmp_path):
    with pytest.raises(ConfigurationError):
        BackendConfig(model_name="m", mode=BackendMode.REPLAY, cache_dir=tmp_path / "absent")
    with pytest.raises(ConfigurationError):
        BackendConfig(model_name="m", mode=BackendMode.RECORD)
    with pytest.raises(ConfigurationError):
        BackendConfig(model_name="m", max_concurrency=0)
    with pytest.raises(ConfigurationError):
        BackendConfig(model_name="m", max_retries=-1)


def test_missing_api_key_is_configuration_error(tmp_path, monkeypatch):
    monkeypatch.delenv(KEY_ENV, raising=False)
    with pytest.raises(ConfigurationError, match=KEY_ENV):
        Backend(_config(tmp_path))


def test_retries_429_twice_then_succeeds(tmp_path, api_key):
    sleeps = []
    with StubServer(lambda body: "ok", statuses=[429, 429]) as stub:
        backend = Backend(_config(tmp_path, base_url=stub.base_url), sleep=sleeps.append)
        assert backend.complete(REQ) == "ok"
        backend.close()
    assert len(stub.requests) == 3
    assert backend.stats.retries == 2
    assert len(sleeps) == 2
    assert stub.requests[0]["auth"] == "Bearer sk-test"
    body = stub.requests[0]["body"]
    assert body["model"] == "stub-model"
    assert body["messages"] == [{"role": "system", "content": "system text"}, {"role": "user", "content": "user text"}]
    assert body["temperature"] == 0.0 and body["max_tokens"] == 1024
    assert backend.stats.prompt_tokens == 10


def test_backoff_grows_exponentially(tmp_path, api_key):
    sleeps = []
    with StubServer(lambda body: "ok", statuses=[500, 502, 503]) as stub:
        config = BackendConfig(
            model_name="m", api_key_env=KEY_ENV, base_url=stub.base_url, backoff_base=1.0, backoff_max=100.0
        )
        assert Backend(config, sleep=sleeps.append).complete(REQ) == "ok"
    assert [0.5 <= s <= 1.0 for s in sleeps[:1]] == [True]
    assert 1.0 <= sleeps[1] <= 2.0 and 2.0 <= sleeps[2] <= 4.0


def test_non_retryable_4xx_fails_immediately(tmp_path, api_key):
    with StubServer(lambda body: "ok", statuses=[400]) as stub:
        backend = Backend(_config(tmp_path, base_url=stub.base_url), sleep=lambda s: None)
        with pytest.raises(BackendError) as info:
            backend.complete(REQ)
    assert info.value.status == 400
    assert len(stub.requests) == 1


def test_gives_up_after_max_retries(tmp_path, api_key):
    with StubServer(lambda body: "ok", statuses=[503] * 10) as stub:
        backend = Backend(_config(tmp_path, base_url=stub.base_url, max_retries=2), sleep=lambda s: None)
        with pytest.raises(BackendError) as info:
            backend.complete(REQ)
    assert info.value.status == 503
    assert len(stub.requests) == 3


def test_transport_errors_are_retried(tmp_path, api_key):
    config = BackendConfig(
        model_name="m", api_key_env=KEY_ENV, base_url="http://127.0.0.1:9/v1", max_retries=1, timeout=0.5
    )
    with pytest.raises(BackendError) as info:
        Backend(config, sleep=lambda s: None).complete(REQ)
    assert info.value.status is None


def test_record_then_replay_round_trip(tmp_path, api_key):
    text = "réponse ✓\nline two"
    (tmp_path / "cache").mkdir()
    with StubServer(lambda body: text) as stub:
        recorded = complete(REQ, _config(tmp_path, "record", base_url=stub.base_url))
    assert recorded == text
    calls = []
    replay = Backend(_config(tmp_path, "replay"), FunctionTransport(lambda b: calls.append(b) or "x"))
    assert replay.complete(REQ) == text
    assert calls == []
    assert replay.stats.network_calls == 0


def test_replay_miss_names_digest(tmp_path):
    (tmp_path / "cache").mkdir()
    backend = Backend(_config(tmp_path, "replay"))
    with pytest.raises(ReplayMissError) as info:
        backend.complete(REQ)
    assert info.value.digest == cache_key(REQ, "stub-model")
    assert info.value.digest in str(info.value)


def test_live_mode_uses_cache(tmp_path, api_key):
    calls = []
    backend = Backend(_config(tmp_path), FunctionTransport(lambda b: calls.append(1) or "hi"))
    assert backend.complete(REQ) == "hi"
    assert backend.complete(REQ) == "hi"
    assert len(calls) == 1
    assert backend.stats.cache_hits == 1


def test_concurrency_is_bounded(tmp_path, api_key):
    with StubServer(lambda body: "ok", delay=0.05) as stub:
        backend = Backend(_config(tmp_path, base_url=stub.base_url, max_concurrency=3))
        requests = [ChatRequest("s", f"u{i}") for i in range(12)]
        threads = [threading.Thread(target=backend.complete, args=(r,)) for r in requests]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    assert len(stub.requests) == 12
    assert stub.high_water <= 3
    assert stub.high_water >= 2


def test_identical_in_flight_requests_are_deduplicated(tmp_path, api_key):
    release = threading.Event()
    calls = []

    class SlowTransport:
        def post_chat(self, body):
            calls.append(body)
            release.wait(5)
            return FunctionTransport(lambda b: "shared").post_chat(body)

    backend = Backend(_config(tmp_path), SlowTransport())
    results = []
    threads = [threading.Thread(target=lambda: results.append(backend.complete_ex(REQ))) for _ in range(5)]
    for t in threads:
        t.start()
    while backend.stats.requests < 5:
        pass
    release.set()
    for t in threads:
        t.join()
    assert len(calls) == 1
    assert [r.text for r in results] == ["shared"] * 5
    assert sum(r.shared for r in results) == 4


def test_malformed_response_is_backend_error(tmp_path, api_key):
    class Broken:
        def post_chat(self, body):
            return TransportResponse(200, {"nope": 1}, "{}")

    with pytest.raises(BackendError):
        Backend(_config(tmp_path), Broken()).complete(REQ)
