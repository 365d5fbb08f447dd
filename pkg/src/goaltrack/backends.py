"""Chat-completion and embedding providers behind one small interface.

Two implementations ship here: an OpenAI-compatible HTTP client and a
deterministic scripted mock keyed by pipeline stage tags. The mock is
what every hermetic test runs against; lookups are total — a missing
script key is a hard error, never a silent fallback.

Embeddings are unit-normalized at this boundary so cosine similarity
downstream reduces to a plain dot product.
"""

from __future__ import annotations

import json
import os
import re
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from threading import Lock
from typing import Any, Iterator, Sequence

import httpx
import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidConfig,
    MalformedOutput,
    MissingScriptEntry,
    ProviderRefusal,
    ProviderTimeout,
    ProviderUnreachable,
)

NORM_TOLERANCE = 1e-6

RETRY_SUFFIX = "Your previous reply was not valid JSON. Respond ONLY with valid JSON."

_ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in _ROLES:
            raise ValueError(f"unknown role: {self.role!r}")
        if self.role in ("user", "assistant") and not self.content:
            raise ValueError(f"{self.role} message content must be non-empty")


@dataclass
class BackendConfig:
    """Connection settings for one provider."""

    provider: str = "openai"
    model: str = "gpt-4o"
    endpoint: str = "https://api.openai.com/v1"
    credential_env: str = "OPENAI_API_KEY"
    timeout: float = 60.0
    max_retries: int = 2  # structured-output retries, not transport retries

    def __post_init__(self):
        if self.timeout <= 0:
            raise InvalidConfig("timeout must be > 0")
        if self.max_retries < 0:
            raise InvalidConfig("max_retries must be >= 0")

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "BackendConfig":
        known = {k: d[k] for k in ("provider", "model", "endpoint", "credential_env", "timeout", "max_retries") if k in d}
        return cls(**known)

    def to_dict(self) -> dict[str, Any]:
        return {
            "provider": self.provider,
            "model": self.model,
            "endpoint": self.endpoint,
            "credential_env": self.credential_env,
            "timeout": self.timeout,
            "max_retries": self.max_retries,
        }


def normalize_embedding(vector: Sequence[float]) -> np.ndarray:
    arr = np.asarray(vector, dtype=np.float64)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise DimensionMismatch("cannot normalize a zero embedding vector")
    return arr / norm


class Backend(ABC):
    """A chat-completion + embedding provider."""

    max_structured_retries: int = 2

    @abstractmethod
    def complete_chat(self, messages: list[ChatMessage], *, tag: str) -> Iterator[str]:
        """Stream the completion for ``messages`` as text chunks.

        The concatenation of the yielded chunks is the full response;
        iterator exhaustion is the end-of-stream marker.
        """

    @abstractmethod
    def raw_completion(self, prompt: str, *, tag: str) -> str:
        """Single non-streamed completion used for structured calls."""

    @abstractmethod
    def embed(self, texts: list[str]) -> np.ndarray:
        """One unit-norm vector per input text, order preserving.

        Returns an array of shape (len(texts), dim).
        """


def _strip_code_fence(text: str) -> str:
    stripped = text.strip()
    if stripped.startswith("```"):
        lines = stripped.splitlines()
        lines = lines[1:]
        if lines and lines[-1].strip().startswith("```"):
            lines = lines[:-1]
        stripped = "\n".join(lines).strip()
    return stripped


def complete_structured(
    backend: Backend,
    prompt: str,
    *,
    tag: str,
    retries: int | None = None,
) -> Any:
    """Request a JSON reply, retrying with a corrective instruction.

    Providers wrap JSON in code fences often enough that a fence is
    stripped before parsing. After ``retries`` failed re-asks the last
    raw text is surfaced in :class:`MalformedOutput`.
    """
    if not prompt:
        raise ValueError("prompt must be non-empty")
    if retries is None:
        retries = backend.max_structured_retries
    attempt_prompt = prompt
    raw = ""
    for attempt in range(retries + 1):
        raw = backend.raw_completion(attempt_prompt, tag=tag)
        try:
            return json.loads(_strip_code_fence(raw))
        except json.JSONDecodeError:
            attempt_prompt = prompt + "\n\n" + RETRY_SUFFIX
    raise MalformedOutput(f"no valid JSON after {retries + 1} attempts for {tag}", raw_text=raw)


_CHUNK_RE = re.compile(r"\S+\s*|\s+")


@dataclass
class ScriptedMockBackend(Backend):
    """Deterministic stand-in for LLM and embedding providers.

    ``script`` maps a stage tag (e.g. ``"infer:1"``, ``"evaluate:2:3"``)
    to a canned reply; a list value yields successive replies per
    attempt, repeating the last. ``embeddings`` maps exact text to a
    vector (normalized on the way out). Both tables are total for their
    tests: a missing key raises :class:`MissingScriptEntry`.
    """

    script: dict[str, str | list[str]] = field(default_factory=dict)
    embeddings: dict[str, Sequence[float]] = field(default_factory=dict)
    max_structured_retries: int = 2

    def __post_init__(self):
        self._attempts: dict[str, int] = {}
        self._lock = Lock()

    def _lookup(self, tag: str) -> str:
        if tag not in self.script:
            raise MissingScriptEntry(f"no scripted reply for tag {tag!r}")
        entry = self.script[tag]
        if isinstance(entry, str):
            return entry
        with self._lock:
            n = self._attempts.get(tag, 0)
            self._attempts[tag] = n + 1
        return entry[min(n, len(entry) - 1)]

    def complete_chat(self, messages: list[ChatMessage], *, tag: str) -> Iterator[str]:
        if not messages:
            raise ValueError("messages must be non-empty")
        reply = self._lookup(tag)
        for match in _CHUNK_RE.finditer(reply):
            yield match.group(0)

    def raw_completion(self, prompt: str, *, tag: str) -> str:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        return self._lookup(tag)

    def embed(self, texts: list[str]) -> np.ndarray:
        if not texts:
            raise ValueError("texts must be non-empty")
        vectors = []
        for text in texts:
            if not text:
                raise ValueError("cannot embed an empty string")
            if text not in self.embeddings:
                raise MissingScriptEntry(f"no scripted embedding for {text!r}")
            vectors.append(normalize_embedding(self.embeddings[text]))
        dims = {v.shape[0] for v in vectors}
        if len(dims) > 1:
            raise DimensionMismatch(f"ragged embedding batch: dims {sorted(dims)}")
        return np.stack(vectors)


class OpenAICompatBackend(Backend):
    """Client for OpenAI-style /chat/completions and /embeddings APIs."""

    def __init__(self, config: BackendConfig, embedding_model: str = "text-embedding-3-small"):
        self.config = config
        self.embedding_model = embedding_model
        self.max_structured_retries = config.max_retries

    def _headers(self) -> dict[str, str]:
        key = os.environ.get(self.config.credential_env, "")
        headers = {"Content-Type": "application/json"}
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, path: str, payload: dict[str, Any]) -> httpx.Response:
        url = self.config.endpoint.rstrip("/") + path
        try:
            response = httpx.post(
                url,
                json=payload,
                headers=self._headers(),
                timeout=self.config.timeout,
            )
        except httpx.TimeoutException as exc:
            raise ProviderTimeout(str(exc)) from exc
        except httpx.TransportError as exc:
            raise ProviderUnreachable(str(exc)) from exc
        if response.status_code < 200 or response.status_code >= 300:
            raise ProviderRefusal(
                f"{path} returned {response.status_code}: {response.text[:500]}",
                status_code=response.status_code,
            )
        return response

    def complete_chat(self, messages: list[ChatMessage], *, tag: str) -> Iterator[str]:
        if not messages:
            raise ValueError("messages must be non-empty")
        url = self.config.endpoint.rstrip("/") + "/chat/completions"
        payload = {
            "model": self.config.model,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
            "stream": True,
        }
        try:
            with httpx.stream(
                "POST",
                url,
                json=payload,
                headers=self._headers(),
                timeout=self.config.timeout,
            ) as response:
                if response.status_code < 200 or response.status_code >= 300:
                    response.read()
                    raise ProviderRefusal(
                        f"/chat/completions returned {response.status_code}",
                        status_code=response.status_code,
                    )
                for line in response.iter_lines():
                    if not line.startswith("data:"):
                        continue
                    data = line[len("data:"):].strip()
                    if data == "[DONE]":
                        break
                    try:
                        delta = json.loads(data)["choices"][0]["delta"]
                    except (json.JSONDecodeError, LookupError):
                        continue
                    content = delta.get("content")
                    if content:
                        yield content
        except httpx.TimeoutException as exc:
            raise ProviderTimeout(str(exc)) from exc
        except httpx.TransportError as exc:
            raise ProviderUnreachable(str(exc)) from exc

    def raw_completion(self, prompt: str, *, tag: str) -> str:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        payload = {
            "model": self.config.model,
            "messages": [{"role": "system", "content": prompt}],
            "stream": False,
        }
        response = self._post("/chat/completions", payload)
        try:
            return response.json()["choices"][0]["message"]["content"] or ""
        except (json.JSONDecodeError, LookupError) as exc:
            raise ProviderRefusal(f"unexpected completion payload: {exc}") from exc

    def embed(self, texts: list[str]) -> np.ndarray:
        if not texts or any(not t for t in texts):
            raise ValueError("texts must be non-empty strings")
        payload = {"model": self.embedding_model, "input": texts}
        response = self._post("/embeddings", payload)
        try:
            items = response.json()["data"]
            vectors = [normalize_embedding(item["embedding"]) for item in sorted(items, key=lambda d: d["index"])]
        except (json.JSONDecodeError, LookupError) as exc:
            raise ProviderRefusal(f"unexpected embeddings payload: {exc}") from exc
        if len(vectors) != len(texts):
            raise DimensionMismatch("provider returned wrong number of embeddings")
        dims = {v.shape[0] for v in vectors}
        if len(dims) > 1:
            raise DimensionMismatch(f"ragged embedding batch: dims {sorted(dims)}")
        return np.stack(vectors)


@dataclass
class BackendSet:
    """The providers one session talks to.

    The pipeline LLM is independent of the chat LLM the user converses
    with; embeddings may come from a third provider.
    """

    chat: Backend
    pipeline: Backend
    embeddings: Backend

    @classmethod
    def shared(cls, backend: Backend) -> "BackendSet":
        return cls(chat=backend, pipeline=backend, embeddings=backend)
