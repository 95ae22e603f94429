"""Language-model backends: OpenAI-compatible HTTP, scripted, record and replay."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import httpx

logger = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant", "tool")
MAX_ATTEMPTS = 3
BACKOFF_S = (1.0, 2.0, 4.0)


class BackendError(Exception):
    pass


class FatalBackendError(BackendError):
    pass


class ScriptExhausted(BackendError):
    pass


class ReplayMismatch(BackendError):
    pass


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if not self.content and self.role != "assistant":
            raise ValueError(f"{self.role} message content may not be empty")


@dataclass(frozen=True)
class CompletionRequest:
    model_id: str
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    max_tokens: int | None = None

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.messages[0].role != "system":
            raise ValueError("first message must have role system")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens is not None and self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")

    def to_wire(self) -> dict:
        body: dict[str, Any] = {
            "model": self.model_id,
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "temperature": self.temperature,
        }
        if self.max_tokens is not None:
            body["max_tokens"] = self.max_tokens
        return body

    def sha256(self) -> str:
        blob = json.dumps(self.to_wire(), sort_keys=True, ensure_ascii=False, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def last_prompt_text(self) -> str:
        """Content of the final non-system message."""
        for m in reversed(self.messages):
            if m.role != "system":
                return m.content
        return ""


@dataclass(frozen=True)
class ModelResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0


@dataclass(frozen=True)
class ScriptRule:
    response: str
    substring: str | None = None  # None means "always"
    repeat: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "ScriptRule":
        trig = d.get("trigger", "always")
        if isinstance(trig, dict):
            sub = trig.get("substring")
        elif trig == "always":
            sub = None
        else:
            raise ValueError(f"bad trigger {trig!r}")
        return cls(response=d["response"], substring=sub, repeat=int(d.get("repeat", 1)))

    def to_dict(self) -> dict:
        trig: Any = "always" if self.substring is None else {"substring": self.substring}
        return {"trigger": trig, "response": self.response, "repeat": self.repeat}


@dataclass(frozen=True)
class BackendProfile:
    kind: str  # http | scripted | replay
    name: str = ""
    model_id: str = "default"
    base_url: str | None = None
    api_key_env: str | None = None
    script: tuple[ScriptRule, ...] = ()
    transcript_path: str | None = None
    timeout_s: float = 120.0
    record_path: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("http", "scripted", "replay"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "http" and not self.base_url:
            raise ValueError("http backend needs base_url")
        if self.kind == "replay" and not self.transcript_path:
            raise ValueError("replay backend needs transcript_path")

    @property
    def label(self) -> str:
        return self.name or f"{self.kind}:{self.model_id}"

    @classmethod
    def from_dict(cls, d: dict) -> "BackendProfile":
        return cls(
            kind=d["kind"],
            name=d.get("name", ""),
            model_id=d.get("model_id", d.get("model", "default")),
            base_url=d.get("base_url"),
            api_key_env=d.get("api_key_env"),
            script=tuple(ScriptRule.from_dict(r) for r in d.get("script", d.get("rules", []))),
            transcript_path=d.get("transcript_path"),
            timeout_s=float(d.get("timeout_s", 120.0)),
            record_path=d.get("record_path"),
        )

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind, "name": self.name, "model_id": self.model_id}
        if self.base_url:
            d["base_url"] = self.base_url
        if self.api_key_env:
            d["api_key_env"] = self.api_key_env
        if self.script:
            d["script"] = [r.to_dict() for r in self.script]
        if self.transcript_path:
            d["transcript_path"] = self.transcript_path
        if self.record_path:
            d["record_path"] = self.record_path
        return d

    @classmethod
    def load(cls, path: str | os.PathLike) -> "BackendProfile":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


class Backend:
    """A live completion service built from a BackendProfile."""

    model_id = "default"

    def complete(self, request: CompletionRequest) -> ModelResponse:  # pragma: no cover - interface
        raise NotImplementedError


class HttpBackend(Backend):
    def __init__(self, base_url: str, api_key: str | None = None, model_id: str = "default",
                 timeout_s: float = 120.0, transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep, rng: random.Random | None = None):
        self.url = base_url.rstrip("/") + "/chat/completions"
        self.model_id = model_id
        self.headers = {"Content-Type": "application/json"}
        if api_key:
            self.headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(timeout=timeout_s, transport=transport)
        self._sleep = sleep
        self._rng = rng or random.Random()
        self.attempts_made = 0

    def _backoff(self, attempt: int) -> float:
        base = BACKOFF_S[min(attempt, len(BACKOFF_S) - 1)]
        return base * (1.0 + self._rng.uniform(-0.2, 0.2))

    def complete(self, request: CompletionRequest) -> ModelResponse:
        last_error = "no attempt made"
        for attempt in range(MAX_ATTEMPTS):
            self.attempts_made += 1
            try:
                resp = self._client.post(self.url, json=request.to_wire(), headers=self.headers)
            except httpx.TimeoutException as exc:
                last_error = f"timeout: {exc}"
            except httpx.HTTPError as exc:
                raise FatalBackendError(f"transport error: {exc}") from exc
            else:
                if resp.status_code == 200:
                    return _parse_chat_response(resp)
                last_error = f"HTTP {resp.status_code}: {resp.text[:300]}"
                if not (resp.status_code == 429 or resp.status_code >= 500):
                    raise FatalBackendError(last_error)
            if attempt < MAX_ATTEMPTS - 1:
                delay = self._backoff(attempt)
                logger.warning("backend attempt %d failed (%s); retrying in %.2fs", attempt + 1, last_error, delay)
                self._sleep(delay)
        raise FatalBackendError(f"gave up after {MAX_ATTEMPTS} attempts: {last_error}")


def _parse_chat_response(resp: httpx.Response) -> ModelResponse:
    try:
        data = resp.json()
        text = data["choices"][0]["message"]["content"] or ""
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise FatalBackendError(f"malformed completion response: {exc}") from exc
    usage = data.get("usage") or {}
    return ModelResponse(text=text, prompt_tokens=int(usage.get("prompt_tokens") or 0),
                         completion_tokens=int(usage.get("completion_tokens") or 0))


class ScriptedBackend(Backend):
    """First-rule-wins responder keyed on the last non-system message."""

    def __init__(self, rules: list[ScriptRule] | tuple[ScriptRule, ...], model_id: str = "scripted"):
        self.rules = list(rules)
        self.model_id = model_id
        self._fired = [0] * len(self.rules)
        self._lock = threading.Lock()

    def complete(self, request: CompletionRequest) -> ModelResponse:
        text = request.last_prompt_text()
        with self._lock:
            for i, rule in enumerate(self.rules):
                if self._fired[i] >= rule.repeat:
                    continue
                if rule.substring is None or rule.substring in text:
                    self._fired[i] += 1
                    return ModelResponse(text=rule.response)
        raise ScriptExhausted(f"no scripted rule matches message: {text[:200]!r}")


class ReplayBackend(Backend):
    def __init__(self, path: str | os.PathLike, model_id: str = "replay"):
        self.model_id = model_id
        self.entries: list[dict] = []
        p = Path(path)
        if p.exists():
            with open(p, encoding="utf-8") as fh:
                for n, line in enumerate(fh, 1):
                    if line.strip():
                        try:
                            self.entries.append(json.loads(line))
                        except ValueError as exc:
                            raise FatalBackendError(f"{p}:{n}: bad recording line: {exc}") from exc
        self._pos = 0
        self._lock = threading.Lock()

    def complete(self, request: CompletionRequest) -> ModelResponse:
        with self._lock:
            if self._pos >= len(self.entries):
                raise ReplayMismatch(f"recording exhausted after {len(self.entries)} responses")
            entry = self.entries[self._pos]
            digest = request.sha256()
            if entry.get("request_sha256") != digest:
                raise ReplayMismatch(f"request #{self._pos} hash {digest[:12]} does not match recording "
                                     f"{str(entry.get('request_sha256'))[:12]}")
            self._pos += 1
            return ModelResponse(text=entry["response"])


class RecordingBackend(Backend):
    def __init__(self, inner: Backend, sink_path: str | os.PathLike):
        self.inner = inner
        self.model_id = inner.model_id
        self.sink = Path(sink_path)
        self._lock = threading.Lock()
        try:
            self.sink.parent.mkdir(parents=True, exist_ok=True)
            self.sink.touch()
        except OSError as exc:
            raise FatalBackendError(f"cannot open recording sink {self.sink}: {exc}") from exc

    def complete(self, request: CompletionRequest) -> ModelResponse:
        response = self.inner.complete(request)
        line = json.dumps({"request_sha256": request.sha256(), "response": response.text}, ensure_ascii=False)
        with self._lock:
            try:
                with open(self.sink, "a", encoding="utf-8") as fh:
                    fh.write(line + "\n")
            except OSError as exc:
                raise FatalBackendError(f"cannot write recording: {exc}") from exc
        return response


def scripted_backend(rules: list[dict] | list[ScriptRule], model_id: str = "scripted", name: str = "") -> BackendProfile:
    parsed = tuple(r if isinstance(r, ScriptRule) else ScriptRule.from_dict(r) for r in rules)
    return BackendProfile(kind="scripted", script=parsed, model_id=model_id, name=name)


def record_and_replay(profile: BackendProfile, sink_path: str | os.PathLike) -> BackendProfile:
    """Profile that records every exchange of `profile` into `sink_path`."""
    return BackendProfile(**{**profile.__dict__, "record_path": str(sink_path)})


def replay_profile(path: str | os.PathLike, model_id: str = "replay") -> BackendProfile:
    return BackendProfile(kind="replay", transcript_path=str(path), model_id=model_id)


def open_backend(profile: BackendProfile, transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep) -> Backend:
    if profile.kind == "http":
        key = None
        if profile.api_key_env:
            key = os.environ.get(profile.api_key_env)
            if not key:
                raise FatalBackendError(f"environment variable {profile.api_key_env} is not set")
        backend: Backend = HttpBackend(profile.base_url or "", key, profile.model_id, profile.timeout_s,
                                       transport=transport, sleep=sleep)
    elif profile.kind == "scripted":
        backend = ScriptedBackend(profile.script, profile.model_id)
    else:
        backend = ReplayBackend(profile.transcript_path or "", profile.model_id)
    if profile.record_path:
        backend = RecordingBackend(backend, profile.record_path)
    return backend


def complete(backend: Backend, request: CompletionRequest) -> ModelResponse:
    return backend.complete(request)
