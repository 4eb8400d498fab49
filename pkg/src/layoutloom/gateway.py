"""Backend-agnostic LLM access with deterministic record/replay.

Requests use the generic chat-completions JSON shape (one system and one
user message), so swapping vendors is configuration, not code. Every request
is identified by a stable key hashed from its content plus the candidate
index; record mode persists one transcript file per key and replay mode
answers from those files only, which makes full pipeline runs byte-stable
and network-free.

Environment variables honored by :meth:`BackendConfig.from_env`:
``LAYOUTLOOM_API_KEY``, ``LAYOUTLOOM_ENDPOINT``, ``LAYOUTLOOM_MODEL``.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable

from .errors import (
    ConfigError,
    CredentialMissing,
    LayoutLoomError,
    ParseFailure,
    ReplayMiss,
    TransportError,
)
from .model import Canvas, Layout, parse_html
from .prompts import PromptBundle

API_KEY_ENV = "LAYOUTLOOM_API_KEY"
ENDPOINT_ENV = "LAYOUTLOOM_ENDPOINT"
MODEL_ENV = "LAYOUTLOOM_MODEL"

# transport(payload, candidate_index) -> response text. The index is not part
# of the wire payload; it is exposed so offline transports can vary output
# per candidate the way sampling temperature would.
Transport = Callable[[dict, int], str]


@dataclass(frozen=True)
class BackendConfig:
    mode: str = "replay"
    endpoint: str = ""
    model: str = "offline"
    temperature: float = 0.7
    max_tokens: int = 2048
    timeout: float = 60.0
    retry_limit: int = 2
    retry_backoff: float = 0.5
    transcript_dir: str | None = None
    fanout: int = 4
    api_key: str | None = None

    def __post_init__(self):
        if self.mode not in ("live", "record", "replay"):
            raise ConfigError(f"unknown backend mode {self.mode!r}")
        if self.mode in ("record", "replay") and not self.transcript_dir:
            raise ConfigError(f"{self.mode} mode requires transcript_dir")

    @classmethod
    def from_env(cls, **overrides) -> "BackendConfig":
        values = {
            "endpoint": os.environ.get(ENDPOINT_ENV, ""),
            "model": os.environ.get(MODEL_ENV, "offline"),
            "api_key": os.environ.get(API_KEY_ENV),
        }
        values.update(overrides)
        return cls(**values)


def transcript_key(system: str, user: str, model: str, temperature: float,
                   candidate_index: int) -> str:
    """Stable, platform-independent hash of the request content."""
    body = json.dumps(
        {
            "system": system,
            "user": user,
            "model": model,
            "temperature": temperature,
            "candidate_index": candidate_index,
        },
        ensure_ascii=False,
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(body.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Transcript:
    key: str
    system: str
    user: str
    model: str
    temperature: float
    candidate_index: int
    response_text: str
    created_at: str = ""

    def derived_key(self) -> str:
        return transcript_key(self.system, self.user, self.model,
                              self.temperature, self.candidate_index)


def _transcript_path(directory: str | Path, key: str) -> Path:
    return Path(directory) / f"{key}.json"


def write_transcript(directory: str | Path, transcript: Transcript) -> Path:
    """Atomic write (temp file then rename) of one transcript."""
    path = _transcript_path(directory, transcript.key)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    payload = {
        "key": transcript.key,
        "request": {
            "system": transcript.system,
            "user": transcript.user,
            "model": transcript.model,
            "temperature": transcript.temperature,
            "candidate_index": transcript.candidate_index,
        },
        "response_text": transcript.response_text,
        "metadata": {"created_at": transcript.created_at},
    }
    tmp.write_text(json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
                   encoding="utf-8")
    tmp.replace(path)
    return path


def read_transcript(directory: str | Path, key: str) -> Transcript:
    path = _transcript_path(directory, key)
    if not path.exists():
        raise ReplayMiss(key)
    data = json.loads(path.read_text(encoding="utf-8"))
    request = data["request"]
    return Transcript(
        key=data["key"],
        system=request["system"],
        user=request["user"],
        model=request["model"],
        temperature=request["temperature"],
        candidate_index=request["candidate_index"],
        response_text=data["response_text"],
        created_at=data.get("metadata", {}).get("created_at", ""),
    )


def _http_transport(config: BackendConfig) -> Transport:
    def call(payload: dict, _candidate_index: int) -> str:
        key = config.api_key or os.environ.get(API_KEY_ENV)
        if not key:
            raise CredentialMissing(f"live mode needs {API_KEY_ENV} or api_key in config")
        if not config.endpoint:
            raise CredentialMissing(f"live mode needs an endpoint ({ENDPOINT_ENV})")
        request = urllib.request.Request(
            config.endpoint,
            data=json.dumps(payload).encode("utf-8"),
            headers={
                "Content-Type": "application/json",
                "Authorization": f"Bearer {key}",
            },
            method="POST",
        )
        try:
            with urllib.request.urlopen(request, timeout=config.timeout) as response:
                body = json.loads(response.read().decode("utf-8"))
        except (urllib.error.URLError, TimeoutError, json.JSONDecodeError) as exc:
            raise TransportError(f"chat completion request failed: {exc}") from exc
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"unexpected response shape: {exc}") from exc

    return call


class Gateway:
    """One LLM access point; safe to share across threads.

    ``transport`` overrides the HTTP layer, which is how offline tests and
    transcript recording against scripted backends work.
    """

    def __init__(self, config: BackendConfig, transport: Transport | None = None):
        self.config = config
        self._transport = transport or _http_transport(config)

    def _payload(self, bundle: PromptBundle, temperature: float) -> dict:
        return {
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": bundle.system},
                {"role": "user", "content": bundle.user},
            ],
            "temperature": temperature,
            "max_tokens": self.config.max_tokens,
        }

    def _call_with_retry(self, payload: dict, candidate_index: int) -> str:
        last: Exception | None = None
        for attempt in range(self.config.retry_limit + 1):
            try:
                return self._transport(payload, candidate_index)
            except (TransportError, CredentialMissing) as exc:
                if isinstance(exc, CredentialMissing):
                    raise
                last = exc
                if attempt < self.config.retry_limit and self.config.retry_backoff > 0:
                    time.sleep(self.config.retry_backoff * (2 ** attempt))
        raise TransportError(f"request failed after {self.config.retry_limit + 1} attempts: {last}")

    def complete(self, bundle: PromptBundle, n: int = 1,
                 temperature: float | None = None, first_index: int = 0) -> list[str]:
        """Fetch n candidate responses, ordered by candidate index.

        Candidate i uses transcript key salt ``first_index + i``, so retries
        with ``first_index=n`` draw fresh samples that record and replay
        independently of the first round.
        """
        if n < 1:
            raise ValueError("n must be at least 1")
        temp = self.config.temperature if temperature is None else temperature
        payload = self._payload(bundle, temp)
        indices = [first_index + i for i in range(n)]

        if self.config.mode == "replay":
            texts = []
            for idx in indices:
                key = transcript_key(bundle.system, bundle.user, self.config.model, temp, idx)
                texts.append(read_transcript(self.config.transcript_dir, key).response_text)
            return texts

        def fetch(idx: int) -> str:
            return self._call_with_retry(payload, idx)

        if n == 1:
            texts = [fetch(indices[0])]
        else:
            with ThreadPoolExecutor(max_workers=min(self.config.fanout, n)) as pool:
                texts = list(pool.map(fetch, indices))

        if self.config.mode == "record":
            stamp = datetime.now(timezone.utc).isoformat()
            for idx, text in zip(indices, texts):
                key = transcript_key(bundle.system, bundle.user, self.config.model, temp, idx)
                write_transcript(
                    self.config.transcript_dir,
                    Transcript(
                        key=key,
                        system=bundle.system,
                        user=bundle.user,
                        model=self.config.model,
                        temperature=temp,
                        candidate_index=idx,
                        response_text=text,
                        created_at=stamp,
                    ),
                )
        return texts

    def ping(self) -> bool:
        """Round-trip connectivity probe for live backends."""
        payload = {
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": "You are a connectivity probe."},
                {"role": "user", "content": "Reply with the single word OK."},
            ],
            "temperature": 0.0,
            "max_tokens": 8,
        }
        return bool(self._call_with_retry(payload, 0))


@dataclass(frozen=True)
class ExtractionFailure:
    """Returned instead of a Layout when a response holds no parseable layout."""

    raw_text: str
    reason: str


def extract_layout(response: str, vocabulary: Iterable[str],
                   fallback_canvas: Canvas | None = None,
                   layout_id: str = "") -> Layout | ExtractionFailure:
    """Lenient response-to-layout parsing; failures are values, not errors."""
    try:
        return parse_html(response, vocabulary, layout_id=layout_id,
                          fallback_canvas=fallback_canvas)
    except (ParseFailure, LayoutLoomError) as exc:
        return ExtractionFailure(raw_text=response, reason=str(exc))


def replay_check(transcript_dir: str | Path) -> list[str]:
    """Verify every stored transcript re-derives its own key; return problems."""
    problems = []
    directory = Path(transcript_dir)
    for path in sorted(directory.glob("*.json")):
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
            request = data["request"]
            derived = transcript_key(
                request["system"], request["user"], request["model"],
                request["temperature"], request["candidate_index"],
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            problems.append(f"{path.name}: unreadable transcript ({exc})")
            continue
        if derived != data.get("key") or path.stem != derived:
            problems.append(f"{path.name}: key does not match request content")
    return problems
