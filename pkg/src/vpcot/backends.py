"""Uniform access to text endpoints: live HTTP or scripted fixtures.

The live path speaks a chat-completions-style JSON protocol behind a small
adapter seam; the fixture path replays an ordered script so that pipeline
runs are byte-reproducible.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import requests

from .errors import (
    BackendError,
    BackendTimeout,
    ConcurrentFixtureUse,
    FixtureExhausted,
    FixtureMiss,
    RateLimited,
)
from .model import REQUEST_TAGS

API_KEY_ENV = "SVIP_API_KEY"

DEFAULT_TIMEOUT_S = 60.0
MAX_RETRIES = 3
BACKOFF_BASE_S = 1.0
DEFAULT_CONCURRENCY_CAP = 4
DEFAULT_MAX_OUTPUT_CHARS = 8192


@dataclass(frozen=True)
class BackendRequest:
    messages: tuple[tuple[str, str], ...]
    tag: str
    visual_refs: tuple[str, ...] = ()
    max_output_chars: int = DEFAULT_MAX_OUTPUT_CHARS

    def __post_init__(self) -> None:
        if self.tag not in REQUEST_TAGS:
            raise ValueError(f"unknown request tag {self.tag!r}")
        if self.max_output_chars < 1:
            raise ValueError("max_output_chars must be positive")
        if not any(role == "user" for role, _ in self.messages):
            raise ValueError("request needs at least one user message")
        for role, content in self.messages:
            if role not in ("system", "user"):
                raise ValueError(f"unknown role {role!r}")
            if not content:
                raise ValueError("message content must be non-empty")

    @classmethod
    def user(cls, content: str, tag: str, visual_refs: tuple[str, ...] = (),
             max_output_chars: int = DEFAULT_MAX_OUTPUT_CHARS) -> "BackendRequest":
        return cls((("user", content),), tag, visual_refs, max_output_chars)

    def last_user_message(self) -> str:
        for role, content in reversed(self.messages):
            if role == "user":
                return content
        raise ValueError("no user message")  # unreachable given __post_init__


@dataclass(frozen=True)
class BackendResponse:
    text: str
    provider_meta: dict = field(default_factory=dict)


def _truncate(text: str, limit: int) -> tuple[str, bool]:
    if len(text) <= limit:
        return text, False
    return text[:limit], True


class Backend(Protocol):
    def complete(self, request: BackendRequest) -> BackendResponse: ...


# --- fixture mode -----------------------------------------------------------


@dataclass(frozen=True)
class FixtureEntry:
    """One scripted exchange: an optional substring guard plus the reply."""

    substring: str | None
    response: str

    def matches(self, last_user_message: str) -> bool:
        return self.substring is None or self.substring in last_user_message


class FixtureScript:
    """An ordered, single-consumer reply script.

    Entries are consumed strictly in order; a substring guard that fails
    against the request's last user message raises FixtureMiss rather than
    skipping ahead, so prompt regressions surface immediately.
    """

    def __init__(self, entries: list[FixtureEntry], name: str = "<script>") -> None:
        self.entries = list(entries)
        self.name = name
        self.cursor = 0
        self._gate = threading.Lock()

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def exhausted(self) -> bool:
        return self.cursor >= len(self.entries)

    def next_response(self, last_user_message: str) -> str:
        if not self._gate.acquire(blocking=False):
            raise ConcurrentFixtureUse(f"script {self.name} used concurrently")
        try:
            if self.cursor >= len(self.entries):
                raise FixtureExhausted(f"script {self.name} exhausted after {self.cursor} entries")
            entry = self.entries[self.cursor]
            if not entry.matches(last_user_message):
                raise FixtureMiss(
                    f"script {self.name} entry {self.cursor} expects substring "
                    f"{entry.substring!r}, absent from request"
                )
            self.cursor += 1
            return entry.response
        finally:
            self._gate.release()

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "FixtureScript":
        """Load a line-delimited script: {"match": "any"|{"substring": s}, "response": r}."""
        path = Path(path)
        entries: list[FixtureEntry] = []
        with path.open("r", encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    match = record["match"]
                    response = record["response"]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise BackendError(f"{path}:{line_no}: bad fixture entry ({exc})") from exc
                if match == "any":
                    substring = None
                elif isinstance(match, dict) and set(match) == {"substring"}:
                    substring = str(match["substring"])
                else:
                    raise BackendError(f"{path}:{line_no}: bad match spec {match!r}")
                entries.append(FixtureEntry(substring, str(response)))
        return cls(entries, name=str(path))


def dump_script_jsonl(entries: list[FixtureEntry], path: str | Path) -> None:
    """Write a script in the line-delimited on-disk form."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        for entry in entries:
            match: object = "any" if entry.substring is None else {"substring": entry.substring}
            handle.write(json.dumps({"match": match, "response": entry.response}) + "\n")


class FixtureBackend:
    """Replays per-role scripts keyed by the request tag.

    Visual refs are ignored: fixtures encode any needed vision knowledge
    directly in scripted responses.
    """

    def __init__(self, scripts: dict[str, FixtureScript]) -> None:
        self.scripts = dict(scripts)

    @classmethod
    def single(cls, script: FixtureScript) -> "FixtureBackend":
        """One script serving every tag (handy in unit tests)."""
        return cls({tag: script for tag in REQUEST_TAGS})

    @classmethod
    def from_dir(cls, directory: str | Path) -> "FixtureBackend":
        """Load ``<tag>.jsonl`` scripts from a directory; absent tags stay unscripted."""
        directory = Path(directory)
        scripts = {}
        for tag in REQUEST_TAGS:
            path = directory / f"{tag}.jsonl"
            if path.exists():
                scripts[tag] = FixtureScript.from_jsonl(path)
        return cls(scripts)

    def complete(self, request: BackendRequest) -> BackendResponse:
        script = self.scripts.get(request.tag)
        if script is None:
            raise FixtureMiss(f"no fixture script for tag {request.tag!r}")
        text = script.next_response(request.last_user_message())
        text, truncated = _truncate(text, request.max_output_chars)
        meta = {"mode": "fixture", "script": script.name}
        if truncated:
            meta["truncated"] = True
        return BackendResponse(text, meta)


# --- live mode --------------------------------------------------------------


class ChatCompletionsAdapter:
    """Provider-agnostic request/response shaping for chat-style endpoints."""

    def __init__(self, model: str = "default") -> None:
        self.model = model

    def build_payload(self, request: BackendRequest) -> dict:
        messages = []
        for role, content in request.messages:
            if role == "user" and request.visual_refs:
                parts: list[dict] = [{"type": "text", "text": content}]
                parts.extend(
                    {"type": "image_url", "image_url": {"url": ref}}
                    for ref in request.visual_refs
                )
                messages.append({"role": role, "content": parts})
            else:
                messages.append({"role": role, "content": content})
        return {"model": self.model, "messages": messages}

    def extract_text(self, payload: dict) -> str:
        try:
            return payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed provider response: {exc}") from exc


Transport = Callable[[str, dict, dict, float], tuple[int, dict]]


def _requests_transport(url: str, payload: dict, headers: dict, timeout_s: float) -> tuple[int, dict]:
    try:
        reply = requests.post(url, json=payload, headers=headers, timeout=timeout_s)
    except requests.Timeout as exc:
        raise BackendTimeout(f"no answer from {url} within {timeout_s}s") from exc
    except requests.RequestException as exc:
        raise BackendError(f"transport failure: {exc}") from exc
    try:
        body = reply.json()
    except ValueError:
        body = {}
    return reply.status_code, body


class LiveBackend:
    """HTTP backend with a bounded in-flight cap and a fixed retry budget."""

    def __init__(
        self,
        endpoint_url: str,
        api_key: str | None = None,
        adapter: ChatCompletionsAdapter | None = None,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        concurrency_cap: int = DEFAULT_CONCURRENCY_CAP,
        transport: Transport = _requests_transport,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.endpoint_url = endpoint_url
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.adapter = adapter or ChatCompletionsAdapter()
        self.timeout_s = timeout_s
        self.transport = transport
        self.sleep = sleep
        self._slots = threading.BoundedSemaphore(concurrency_cap)

    def complete(self, request: BackendRequest) -> BackendResponse:
        payload = self.adapter.build_payload(request)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        attempts = 0
        with self._slots:
            while True:
                attempts += 1
                try:
                    status, body = self.transport(self.endpoint_url, payload, headers, self.timeout_s)
                except BackendTimeout:
                    raise
                except BackendError:
                    if attempts > MAX_RETRIES:
                        raise
                    self.sleep(BACKOFF_BASE_S * 2 ** (attempts - 1))
                    continue
                if status == 429:
                    if attempts > MAX_RETRIES:
                        raise RateLimited(f"rate limited after {attempts} attempts")
                    self.sleep(BACKOFF_BASE_S * 2 ** (attempts - 1))
                    continue
                if status >= 500:
                    if attempts > MAX_RETRIES:
                        raise BackendError(f"server error {status} after {attempts} attempts")
                    self.sleep(BACKOFF_BASE_S * 2 ** (attempts - 1))
                    continue
                if status != 200:
                    raise BackendError(f"unexpected status {status}")
                break

        text = self.adapter.extract_text(body)
        text, truncated = _truncate(text, request.max_output_chars)
        meta = {"mode": "live", "status": 200, "attempts": attempts}
        if truncated:
            meta["truncated"] = True
        return BackendResponse(text, meta)
