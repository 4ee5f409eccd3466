"""Scoring-service clients: chat-completions, embeddings, and offline replay.

All judgments flow through an append-only JSON-lines cache keyed by
(model_id, qid, docid, payload hash). A warm cache means zero network calls,
which makes batches resumable and, with the replay backend, makes the whole
pipeline byte-reproducible offline.

The wire protocol is chat-completions-compatible JSON: the prompt text plus
the image (base64 data URL for local files, pass-through for remote URLs) as
content parts of a single user message, and a parallel ``/embeddings``
endpoint for embedding backends. Sampling is pinned to temperature 0 and
recorded with each cache entry.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import mimetypes
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import requests

from .collection import ImageDoc, Topic
from .errors import (
    BackendError,
    ConfigError,
    ProtocolError,
    ReplayMissError,
    RequestError,
    TransportError,
)
from .prompting import PromptTemplate, RenderedPrompt, render_full

logger = logging.getLogger(__name__)

KINDS = ("chat_generative", "embedding", "replay")
REPLAY_MODES = ("generative", "embedding")


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 5
    base_backoff: float = 1.0


@dataclass(frozen=True)
class BackendConfig:
    """Connection settings for one scoring backend.

    ``api_key_env`` names an environment variable; the key itself is never
    stored or logged. ``replay_mode`` selects which scoring path a replay
    backend stands in for.
    """

    kind: str
    model_id: str
    endpoint: str = ""
    max_concurrency: int = 4
    timeout: float = 60.0
    retry: RetryPolicy = RetryPolicy()
    api_key_env: str | None = None
    temperature: float = 0.0
    replay_mode: str = "generative"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown backend kind {self.kind!r}")
        if self.replay_mode not in REPLAY_MODES:
            raise ConfigError(f"unknown replay mode {self.replay_mode!r}")
        if self.max_concurrency < 1:
            raise ConfigError("max_concurrency must be >= 1")
        if self.retry.max_attempts < 1:
            raise ConfigError("retry.max_attempts must be >= 1")
        if not self.model_id:
            raise ConfigError("model_id must be non-empty")

    @property
    def is_generative(self) -> bool:
        return self.kind == "chat_generative" or (
            self.kind == "replay" and self.replay_mode == "generative"
        )

    @property
    def is_embedding(self) -> bool:
        return self.kind == "embedding" or (
            self.kind == "replay" and self.replay_mode == "embedding"
        )


@dataclass(frozen=True)
class BackendResponse:
    """One backend result. Successful responses carry exactly one of
    ``raw_text`` (generative) or ``embedding`` (embedding); failures carry
    ``error``. ``attempt_count`` is 0 for cache hits."""

    raw_text: str | None = None
    embedding: tuple[float, ...] | None = None
    latency: float = 0.0
    attempt_count: int = 0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


class JudgmentCache:
    """Append-only JSON-lines store of backend responses.

    Entries are ``{"key": ..., "model_id": ..., "raw_text" | "embedding": ...,
    "timestamp": ..., "params": {...}}``. Replaying the file reconstructs the
    in-memory map; a truncated final line (crashed writer) is skipped. Appends
    are serialized through a single lock so concurrent batch workers never
    interleave lines.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[str, dict] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError:
                    logger.warning("cache %s: skipping unparsable line %d", self.path, line_no)
                    continue
                key = entry.get("key")
                if key:
                    self._entries[key] = entry

    @staticmethod
    def make_key(model_id: str, qid: str, docid: str, payload_hash: str) -> str:
        return "|".join((model_id, qid, docid, payload_hash))

    @staticmethod
    def payload_hash(*parts: str) -> str:
        h = hashlib.sha256()
        for part in parts:
            h.update(part.encode("utf-8"))
            h.update(b"\x00")
        return h.hexdigest()

    def get(self, key: str) -> dict | None:
        with self._lock:
            return self._entries.get(key)

    def put(self, key: str, payload: dict) -> None:
        entry = {"key": key, **payload, "timestamp": time.time()}
        with self._lock:
            self._entries[key] = entry
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)


def encode_image_ref(image_ref: str) -> str:
    """Remote URLs pass through; local files become base64 data URLs.

    Image bytes are treated as opaque; nothing is decoded or validated.
    """
    if image_ref.startswith(("http://", "https://", "data:")):
        return image_ref
    path = Path(image_ref)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise RequestError(f"cannot read image {image_ref!r}: {exc}") from None
    mime, _ = mimetypes.guess_type(path.name)
    mime = mime or "application/octet-stream"
    return f"data:{mime};base64,{base64.b64encode(data).decode('ascii')}"


class BackendClient:
    """Client for one backend config, with retries, caching, and batching."""

    def __init__(self, cfg: BackendConfig, cache: JudgmentCache | None = None):
        self.cfg = cfg
        self.cache = cache
        self._session = requests.Session()
        self._dim: int | None = None
        self._dim_lock = threading.Lock()

    # -- transport ---------------------------------------------------------

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.cfg.api_key_env:
            key = os.environ.get(self.cfg.api_key_env)
            if not key:
                raise ConfigError(
                    f"API key environment variable {self.cfg.api_key_env} is not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, path: str, payload: dict) -> tuple[dict, int]:
        """POST with retry on 429/5xx/timeouts. Returns (json, attempts)."""
        url = self.cfg.endpoint.rstrip("/") + path
        headers = self._headers()
        policy = self.cfg.retry
        last_error = "no attempt made"
        for attempt in range(1, policy.max_attempts + 1):
            try:
                resp = self._session.post(
                    url, json=payload, headers=headers, timeout=self.cfg.timeout
                )
            except requests.RequestException as exc:
                last_error = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code == 429 or resp.status_code >= 500:
                    last_error = f"HTTP {resp.status_code}"
                elif resp.status_code >= 400:
                    raise RequestError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                else:
                    try:
                        return resp.json(), attempt
                    except ValueError as exc:
                        raise ProtocolError(f"invalid JSON from backend: {exc}") from None
            if attempt < policy.max_attempts:
                time.sleep(policy.base_backoff * (2 ** (attempt - 1)))
        raise TransportError(
            f"{policy.max_attempts} attempts exhausted against {url}: {last_error}"
        )

    # -- single calls ------------------------------------------------------

    def complete(self, prompt: RenderedPrompt, cache_key: str | None = None) -> BackendResponse:
        """One chat-completion request: prompt text plus the image as content parts."""
        if not self.cfg.is_generative:
            raise ConfigError(f"complete() requires a generative backend, got {self.cfg.kind}")
        if cache_key is None:
            cache_key = JudgmentCache.make_key(
                self.cfg.model_id, "", "",
                JudgmentCache.payload_hash(prompt.text, prompt.image_ref),
            )
        if self.cache is not None:
            hit = self.cache.get(cache_key)
            if hit is not None and "raw_text" in hit:
                return BackendResponse(raw_text=hit["raw_text"])
        if self.cfg.kind == "replay":
            raise ReplayMissError(f"no cached response for {cache_key}")

        payload = {
            "model": self.cfg.model_id,
            "temperature": self.cfg.temperature,
            "messages": [
                {
                    "role": "user",
                    "content": [
                        {"type": "text", "text": prompt.text},
                        {
                            "type": "image_url",
                            "image_url": {"url": encode_image_ref(prompt.image_ref)},
                        },
                    ],
                }
            ],
        }
        started = time.monotonic()
        data, attempts = self._post("/chat/completions", payload)
        latency = time.monotonic() - started
        try:
            raw_text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise ProtocolError("chat response missing choices[0].message.content") from None
        if not isinstance(raw_text, str):
            raise ProtocolError("chat response content is not text")
        if self.cache is not None:
            self.cache.put(
                cache_key,
                {
                    "model_id": self.cfg.model_id,
                    "raw_text": raw_text,
                    "params": {"temperature": self.cfg.temperature},
                },
            )
        return BackendResponse(raw_text=raw_text, latency=latency, attempt_count=attempts)

    def embed(self, value: str, cache_key: str | None = None, is_image: bool = False) -> list[float]:
        """Embed one text or image locator; enforces a constant dimension per model."""
        if not self.cfg.is_embedding:
            raise ConfigError(f"embed() requires an embedding backend, got {self.cfg.kind}")
        if not value:
            raise RequestError("backends reject empty input")
        if cache_key is None:
            cache_key = JudgmentCache.make_key(
                self.cfg.model_id, "", "", JudgmentCache.payload_hash(value)
            )
        if self.cache is not None:
            hit = self.cache.get(cache_key)
            if hit is not None and "embedding" in hit:
                return self._check_dim([float(x) for x in hit["embedding"]])
        if self.cfg.kind == "replay":
            raise ReplayMissError(f"no cached embedding for {cache_key}")

        payload = {
            "model": self.cfg.model_id,
            "input": [encode_image_ref(value) if is_image else value],
        }
        data, _ = self._post("/embeddings", payload)
        try:
            vector = [float(x) for x in data["data"][0]["embedding"]]
        except (KeyError, IndexError, TypeError, ValueError):
            raise ProtocolError("embedding response missing data[0].embedding") from None
        self._check_dim(vector)
        if self.cache is not None:
            self.cache.put(cache_key, {"model_id": self.cfg.model_id, "embedding": vector})
        return vector

    def _check_dim(self, vector: list[float]) -> list[float]:
        with self._dim_lock:
            if self._dim is None:
                self._dim = len(vector)
            elif self._dim != len(vector):
                raise ProtocolError(
                    f"embedding dimension changed from {self._dim} to {len(vector)}"
                )
        return vector

    # -- batching ----------------------------------------------------------

    def judge_batch(
        self,
        pairs: Sequence[tuple[Topic, ImageDoc]],
        template: PromptTemplate | None = None,
    ) -> list[BackendResponse]:
        """Score (topic, image) pairs with a generative backend.

        At most ``max_concurrency`` requests are in flight at any instant,
        output order equals input order, and every successful response is in
        the cache before this returns. Per-pair failures become responses with
        ``error`` set; the batch itself always completes.
        """
        if not self.cfg.is_generative:
            raise ConfigError("judge_batch supports generative backends; use embed for embedding ones")
        if template is None and pairs:
            template = PromptTemplate.default()

        def work(pair: tuple[Topic, ImageDoc]) -> BackendResponse:
            topic, doc = pair
            prompt = render_full(topic, doc, template)
            key = JudgmentCache.make_key(
                self.cfg.model_id,
                topic.qid,
                doc.docid,
                JudgmentCache.payload_hash(prompt.text, prompt.image_ref),
            )
            try:
                return self.complete(prompt, cache_key=key)
            except BackendError as exc:
                logger.warning("judgment failed for (%s, %s): %s", topic.qid, doc.docid, exc)
                return BackendResponse(error=str(exc))

        return map_bounded(work, pairs, self.cfg.max_concurrency)


def map_bounded(fn: Callable, items: Iterable, max_workers: int) -> list:
    """Apply ``fn`` to every item with at most ``max_workers`` concurrent calls,
    preserving input order in the result."""
    items = list(items)
    if not items:
        return []
    if max_workers == 1 or len(items) == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        return list(executor.map(fn, items))


def complete(
    prompt: RenderedPrompt, cfg: BackendConfig, cache: JudgmentCache | None = None,
    cache_key: str | None = None,
) -> BackendResponse:
    return BackendClient(cfg, cache).complete(prompt, cache_key=cache_key)


def embed(
    value: str, cfg: BackendConfig, cache: JudgmentCache | None = None,
    cache_key: str | None = None, is_image: bool = False,
) -> list[float]:
    return BackendClient(cfg, cache).embed(value, cache_key=cache_key, is_image=is_image)


def judge_batch(
    pairs: Sequence[tuple[Topic, ImageDoc]],
    cfg: BackendConfig,
    cache: JudgmentCache | None = None,
    template: PromptTemplate | None = None,
) -> list[BackendResponse]:
    return BackendClient(cfg, cache).judge_batch(pairs, template=template)
