"""OpenAI-compatible vision chat client, scripted mock, and JSONL audit log."""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol

import httpx

from ..errors import EndpointError, ProtocolError, ScriptedMissError, TransportError
from .prompts import PromptText

log = logging.getLogger(__name__)

RETRYABLE_STATUS = frozenset({408, 409, 425, 429, 500, 502, 503, 504})


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str = "http://localhost:8000/v1"
    model_name: str = "model"
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 120.0
    max_retries: int = 3
    max_parallel: int = 4
    temperature: float = 0.0
    backoff_base: float = 1.0
    backoff_cap: float = 30.0

    def __post_init__(self) -> None:
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    @property
    def api_key(self) -> str | None:
        return os.environ.get(self.api_key_env) if self.api_key_env else None


class ChatClient(Protocol):
    model_name: str

    def chat(self, prompt: PromptText) -> str: ...


def fingerprint(model_name: str, prompt: PromptText) -> str:
    h = hashlib.sha256()
    for part in (model_name, prompt.system or "", prompt.user):
        data = part.encode("utf-8")
        h.update(len(data).to_bytes(8, "big"))
        h.update(data)
    img = prompt.image or b""
    h.update(len(img).to_bytes(8, "big"))
    h.update(img)
    return h.hexdigest()


def request_body(cfg: EndpointConfig, prompt: PromptText) -> dict[str, Any]:
    content: list[dict[str, Any]] = [{"type": "text", "text": prompt.user}]
    if prompt.image is not None:
        url = "data:image/png;base64," + base64.b64encode(prompt.image).decode("ascii")
        content.append({"type": "image_url", "image_url": {"url": url}})
    messages: list[dict[str, Any]] = []
    if prompt.system:
        messages.append({"role": "system", "content": prompt.system})
    messages.append({"role": "user", "content": content})
    return {"model": cfg.model_name, "messages": messages, "temperature": cfg.temperature}


class AuditLog:
    """Append-only JSONL transcript keyed by request fingerprint."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._cache: dict[str, str] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        rec = json.loads(line)
                    except json.JSONDecodeError:
                        # a torn final line from an interrupted run
                        continue
                    self._cache[rec["fingerprint"]] = rec["response_text"]

    def lookup(self, fp: str) -> str | None:
        return self._cache.get(fp)

    def __contains__(self, fp: str) -> bool:
        return fp in self._cache

    def __len__(self) -> int:
        return len(self._cache)

    def record(self, fp: str, model: str, request_sha256: str, response_text: str, latency_ms: float) -> None:
        rec = {
            "fingerprint": fp,
            "model": model,
            "request_sha256": request_sha256,
            "response_text": response_text,
            "latency_ms": round(latency_ms, 3),
            "timestamp": datetime.now(timezone.utc).isoformat(),
        }
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
            self._cache[fp] = response_text


class HttpChatClient:
    """Blocking client; share one instance across worker threads.

    ``transport`` and ``sleep`` are injectable so retries and concurrency can
    be tested without a network or a real clock.
    """

    def __init__(self, cfg: EndpointConfig, transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep, audit: AuditLog | None = None):
        self.cfg = cfg
        self.model_name = cfg.model_name
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(cfg.max_parallel)
        self.audit = audit
        headers = {"Content-Type": "application/json"}
        key = cfg.api_key
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._http = httpx.Client(base_url=cfg.base_url.rstrip("/"), headers=headers,
                                  timeout=cfg.timeout, transport=transport)
        self.calls = 0

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> "HttpChatClient":
        return self

    def __exit__(self, *exc: Any) -> None:
        self.close()

    def _backoff(self, attempt: int) -> float:
        return min(self.cfg.backoff_cap, self.cfg.backoff_base * (2 ** attempt))

    def chat(self, prompt: PromptText) -> str:
        fp = fingerprint(self.model_name, prompt)
        if self.audit is not None:
            cached = self.audit.lookup(fp)
            if cached is not None:
                return cached
        body = request_body(self.cfg, prompt)
        payload = json.dumps(body, sort_keys=True).encode("utf-8")
        req_sha = hashlib.sha256(payload).hexdigest()
        attempt = 0
        while True:
            t0 = time.perf_counter()
            try:
                with self._slots:
                    self.calls += 1
                    resp = self._http.post("/chat/completions", content=payload)
            except (httpx.TimeoutException, httpx.NetworkError, httpx.RemoteProtocolError) as exc:
                if attempt >= self.cfg.max_retries:
                    raise TransportError(f"{type(exc).__name__} after {attempt + 1} attempts: {exc}") from exc
                log.warning("transport error (%s), retry %d", exc, attempt + 1)
                self._sleep(self._backoff(attempt))
                attempt += 1
                continue
            if resp.status_code in RETRYABLE_STATUS:
                if attempt >= self.cfg.max_retries:
                    raise EndpointError(resp.status_code, resp.text)
                log.warning("HTTP %d from %s, retry %d", resp.status_code, self.cfg.base_url, attempt + 1)
                self._sleep(self._backoff(attempt))
                attempt += 1
                continue
            if not 200 <= resp.status_code < 300:
                raise EndpointError(resp.status_code, resp.text)
            text = _completion_text(resp)
            latency = (time.perf_counter() - t0) * 1000.0
            if self.audit is not None:
                self.audit.record(fp, self.model_name, req_sha, text, latency)
            return text


def _completion_text(resp: httpx.Response) -> str:
    try:
        doc = resp.json()
        content = doc["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise ProtocolError(f"malformed completion payload: {resp.text[:300]}") from exc
    if isinstance(content, list):
        content = "".join(p.get("text", "") for p in content if isinstance(p, dict))
    if not isinstance(content, str) or not content.strip():
        raise ProtocolError("empty completion")
    return content


class MockChatClient:
    """Scripted client: looks responses up by request fingerprint.

    ``script`` maps fingerprints to response text. ``responder`` may be given
    instead (or as a fallback) to compute a response from the prompt.
    """

    def __init__(self, model_name: str, script: Mapping[str, str] | None = None,
                 responder: Callable[[PromptText], str] | None = None, audit: AuditLog | None = None):
        self.model_name = model_name
        self.script = dict(script or {})
        self.responder = responder
        self.audit = audit
        self.transcript: list[tuple[str, str]] = []
        self._lock = threading.Lock()
        self.calls = 0

    def chat(self, prompt: PromptText) -> str:
        fp = fingerprint(self.model_name, prompt)
        if self.audit is not None:
            cached = self.audit.lookup(fp)
            if cached is not None:
                return cached
        with self._lock:
            self.calls += 1
        if fp in self.script:
            text = self.script[fp]
        elif self.responder is not None:
            text = self.responder(prompt)
        else:
            raise ScriptedMissError(fp)
        with self._lock:
            self.transcript.append((fp, text))
        if self.audit is not None:
            self.audit.record(fp, self.model_name, fp, text, 0.0)
        return text


def mock_client(script: Mapping[str, str], model_name: str = "mock") -> MockChatClient:
    return MockChatClient(model_name, script=script)


def chat_vision(cfg_or_client: EndpointConfig | ChatClient, prompt: PromptText) -> str:
    """Send one multimodal chat request and return the assistant text."""
    if isinstance(cfg_or_client, EndpointConfig):
        with HttpChatClient(cfg_or_client) as client:
            return client.chat(prompt)
    return cfg_or_client.chat(prompt)
