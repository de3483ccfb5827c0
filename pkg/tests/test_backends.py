"""Backend contract: requests, fixture scripts, and live-mode retry policy."""

from __future__ import annotations

import json
import tempfile
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import FIXTURES, scripted_backend
from vpcot.backends import (
    API_KEY_ENV,
    BackendRequest,
    ChatCompletionsAdapter,
    FixtureBackend,
    FixtureEntry,
    FixtureScript,
    LiveBackend,
    dump_script_jsonl,
)
from vpcot.errors import (
    BackendError,
    BackendTimeout,
    ConcurrentFixtureUse,
    FixtureExhausted,
    FixtureMiss,
    RateLimited,
)


# --- requests -----------------------------------------------------------------------


def test_request_validation():
    with pytest.raises(ValueError):
        BackendRequest.user("hello", tag="narrator")
    with pytest.raises(ValueError):
        BackendRequest.user("", tag="generator")
    with pytest.raises(ValueError):
        BackendRequest(messages=(("system", "be terse"),), tag="generator")


def test_last_user_message():
    request = BackendRequest(
        messages=(("system", "be terse"), ("user", "first"), ("user", "second")),
        tag="generator",
    )
    assert request.last_user_message() == "second"


# --- fixture scripts -----------------------------------------------------------------


def script(pairs):
    return FixtureScript([FixtureEntry(s, r) for s, r in pairs], name="test")


def test_script_consumes_in_order():
    s = script([(None, "one"), (None, "two")])
    assert s.next_response("x") == "one"
    assert s.next_response("x") == "two"
    assert s.exhausted


def test_script_guard_miss():
    s = script([("needle", "one")])
    with pytest.raises(FixtureMiss):
        s.next_response("haystack without the word")
    # A miss does not advance the cursor.
    assert s.next_response("found the needle here") == "one"


def test_script_exhaustion():
    s = script([(None, "only")])
    s.next_response("x")
    with pytest.raises(FixtureExhausted):
        s.next_response("x")


def test_script_concurrent_use_detected():
    s = script([(None, "one")])
    assert s._gate.acquire(blocking=False)  # simulate an in-flight consumer
    try:
        with pytest.raises(ConcurrentFixtureUse):
            s.next_response("x")
    finally:
        s._gate.release()


@given(
    st.lists(
        st.tuples(
            st.one_of(st.none(), st.text(min_size=1, max_size=20)),
            st.text(max_size=200),
        ),
        max_size=10,
    )
)
def test_script_jsonl_round_trip(pairs):
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "s.jsonl"
        entries = [FixtureEntry(s, r) for s, r in pairs]
        dump_script_jsonl(entries, path)
        loaded = FixtureScript.from_jsonl(path)
        assert [(e.substring, e.response) for e in loaded.entries] == pairs


# --- fixture backend ------------------------------------------------------------------


def test_fixture_backend_from_dir_replays_bundled_scripts():
    backend = FixtureBackend.from_dir(FIXTURES / "t-landmark")
    reply = backend.complete(
        BackendRequest.user("... Determine the first step ...", tag="generator")
    )
    assert "island" in reply.text
    assert reply.provider_meta["mode"] == "fixture"


def test_fixture_backend_missing_tag():
    backend = scripted_backend({"generator": [(None, "x")]})
    with pytest.raises(FixtureMiss):
        backend.complete(BackendRequest.user("q", tag="tiebreak"))


def test_fixture_backend_truncates_to_request_cap():
    backend = scripted_backend({"generator": [(None, "a" * 100)]})
    reply = backend.complete(BackendRequest.user("q", tag="generator", max_output_chars=10))
    assert len(reply.text) == 10
    assert reply.provider_meta.get("truncated") is True


# --- live backend ---------------------------------------------------------------------


def chat_body(text="# Step 1: x\nx = 1"):
    return {"choices": [{"message": {"content": text}}]}


class FakeTransport:
    """Scripted (status, body) sequence with call recording."""

    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.calls = []

    def __call__(self, url, payload, headers, timeout_s):
        self.calls.append((url, payload, headers))
        outcome = self.outcomes.pop(0)
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


def live(transport, sleeps):
    return LiveBackend(
        endpoint_url="https://api.test/v1/chat",
        api_key="k-123",
        adapter=ChatCompletionsAdapter("test-model"),
        transport=transport,
        sleep=sleeps.append,
    )


def test_live_success_single_attempt():
    transport = FakeTransport([(200, chat_body("hello"))])
    sleeps: list[float] = []
    reply = live(transport, sleeps).complete(BackendRequest.user("q", tag="generator"))
    assert reply.text == "hello"
    assert reply.provider_meta["attempts"] == 1
    assert sleeps == []
    url, payload, headers = transport.calls[0]
    assert headers["Authorization"] == "Bearer k-123"
    assert payload["model"] == "test-model"
    assert payload["messages"] == [{"role": "user", "content": "q"}]


def test_live_retries_server_errors_with_backoff():
    transport = FakeTransport([(500, {}), (503, {}), (200, chat_body("ok"))])
    sleeps: list[float] = []
    reply = live(transport, sleeps).complete(BackendRequest.user("q", tag="generator"))
    assert reply.text == "ok"
    assert sleeps == [1.0, 2.0]


def test_live_rate_limited_exhausts_budget():
    transport = FakeTransport([(429, {})] * 4)
    sleeps: list[float] = []
    with pytest.raises(RateLimited):
        live(transport, sleeps).complete(BackendRequest.user("q", tag="generator"))
    assert len(transport.calls) == 4  # 1 attempt + 3 retries
    assert sleeps == [1.0, 2.0, 4.0]


def test_live_client_error_not_retried():
    transport = FakeTransport([(400, {})])
    with pytest.raises(BackendError):
        live(transport, []).complete(BackendRequest.user("q", tag="generator"))
    assert len(transport.calls) == 1


def test_live_timeout_propagates_immediately():
    transport = FakeTransport([BackendTimeout("slow")])
    with pytest.raises(BackendTimeout):
        live(transport, []).complete(BackendRequest.user("q", tag="generator"))
    assert len(transport.calls) == 1


def test_live_api_key_from_env(monkeypatch):
    monkeypatch.setenv(API_KEY_ENV, "env-key")
    transport = FakeTransport([(200, chat_body())])
    backend = LiveBackend(endpoint_url="https://api.test/v1", transport=transport)
    backend.complete(BackendRequest.user("q", tag="generator"))
    assert transport.calls[0][2]["Authorization"] == "Bearer env-key"


def test_live_visual_refs_become_image_parts():
    transport = FakeTransport([(200, chat_body())])
    backend = live(transport, [])
    backend.complete(
        BackendRequest.user("look", tag="verifier", visual_refs=("img://a", "img://b"))
    )
    content = transport.calls[0][1]["messages"][0]["content"]
    assert content[0] == {"type": "text", "text": "look"}
    assert {part["image_url"]["url"] for part in content[1:]} == {"img://a", "img://b"}


def test_live_malformed_body_raises():
    transport = FakeTransport([(200, {"unexpected": True})])
    with pytest.raises(BackendError):
        live(transport, []).complete(BackendRequest.user("q", tag="generator"))


def test_dumped_scripts_are_valid_jsonl(tmp_path):
    path = tmp_path / "script.jsonl"
    dump_script_jsonl([FixtureEntry("g", "r1"), FixtureEntry(None, "r2")], path)
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert rows[0] == {"match": {"substring": "g"}, "response": "r1"}
    assert rows[1] == {"match": "any", "response": "r2"}
