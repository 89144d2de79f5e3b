"""Semantic similarity primitives: embedding providers and cosine similarity.

Two providers are included. The deterministic provider hashes token
multisets into a fixed-dimension vector so that texts sharing more tokens
get a higher cosine; it is seedable and fully offline, which lets every
consumer run without network access. The HTTP provider speaks a minimal
JSON contract (request: model name plus list of texts; response: list of
float arrays in input order) against any compatible embedding endpoint.
"""

from __future__ import annotations

import hashlib
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import httpx
import numpy as np

DETERMINISTIC_ENDPOINT = "deterministic-test"


class EmbeddingError(Exception):
    """Base class for embedding failures."""


class EmptyBatchError(EmbeddingError):
    """Raised when an empty list of texts is submitted."""


class DimensionMismatchError(EmbeddingError):
    """Raised when two vectors of different dimension are compared."""


class ProviderUnreachableError(EmbeddingError):
    """Transport-level failure talking to the provider; retryable."""


class ProviderRejectedError(EmbeddingError):
    """Provider answered with an HTTP error status; not retryable."""

    def __init__(self, message: str, status_code: int):
        super().__init__(message)
        self.status_code = status_code


class ZeroVectorError(EmbeddingError):
    """Raised when a provider returns an all-zero vector."""


class EmbeddingVector:
    """A fixed-dimension embedding, stored L2-normalized.

    Zero vectors are rejected at construction; after normalization the
    stored norm is within 1e-6 of 1.
    """

    __slots__ = ("values",)

    def __init__(self, values: Sequence[float] | np.ndarray):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError(f"embedding must be one-dimensional, got shape {arr.shape}")
        norm = float(np.linalg.norm(arr))
        if norm < 1e-12:
            raise ZeroVectorError("zero vector cannot be normalized")
        self.values = arr / norm

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def __repr__(self) -> str:
        return f"EmbeddingVector(dim={self.dim})"


def cosine(u: EmbeddingVector, v: EmbeddingVector) -> float:
    """Cosine similarity of two stored-normalized vectors (their dot product)."""
    if u.dim != v.dim:
        raise DimensionMismatchError(f"dimension mismatch: {u.dim} vs {v.dim}")
    return float(np.dot(u.values, v.values))


@dataclass
class EmbeddingProviderConfig:
    """Connection settings for an embedding provider.

    ``endpoint`` is either an HTTP(S) URL or the literal string
    ``"deterministic-test"``. Credentials are referenced by environment
    variable name only and resolved at request time.
    """

    endpoint: str = DETERMINISTIC_ENDPOINT
    model: str = "hash-v1"
    batch_size: int = 32
    timeout: float = 30.0
    credential_env: str = ""
    max_retries: int = 2
    backoff_base: float = 0.5

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.timeout <= 0:
            raise ValueError(f"timeout must be > 0, got {self.timeout}")


class Embedder(Protocol):
    """Anything that turns a batch of texts into embedding vectors."""

    cache_key: str

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]: ...


class DeterministicEmbedder:
    """Offline embedder mapping token multisets to a hashed term-frequency vector.

    Each case-folded whitespace token is hashed (BLAKE2, keyed by the seed)
    to one of ``dim`` buckets with a +/-1 sign; bucket counts are then
    L2-normalized. Texts sharing more tokens therefore land closer in
    cosine, identical texts map to identical vectors, and the whole thing
    needs no network. Texts with no tokens fall back to a fixed unit vector
    so downstream consumers never see a zero vector.
    """

    def __init__(self, dim: int = 512, seed: int = 0):
        if dim < 2:
            raise ValueError(f"dim must be >= 2, got {dim}")
        self.dim = dim
        self.seed = seed
        self.cache_key = f"deterministic-test/d{dim}-s{seed}"

    def _bucket(self, token: str) -> tuple[int, float]:
        digest = hashlib.blake2b(
            token.encode("utf-8"), key=str(self.seed).encode("utf-8"), digest_size=8
        ).digest()
        value = int.from_bytes(digest, "big")
        sign = 1.0 if value & 1 else -1.0
        return (value >> 1) % self.dim, sign

    def embed_one(self, text: str) -> EmbeddingVector:
        vec = np.zeros(self.dim, dtype=np.float64)
        for token in text.casefold().split():
            idx, sign = self._bucket(token)
            vec[idx] += sign
        if not np.any(vec):
            vec[0] = 1.0
        return EmbeddingVector(vec)

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        if not texts:
            raise EmptyBatchError("cannot embed an empty batch")
        return [self.embed_one(text) for text in texts]


class HttpEmbedder:
    """Embedding client for the JSON-over-HTTP provider contract.

    POSTs ``{"model": ..., "texts": [...]}`` to the configured endpoint and
    expects ``{"embeddings": [[...], ...]}`` with one float array per input
    text, in order. Transport failures are retried with exponential backoff
    up to ``max_retries`` times and then surface as
    :class:`ProviderUnreachableError`; HTTP error statuses surface
    immediately as :class:`ProviderRejectedError`.
    """

    def __init__(self, config: EmbeddingProviderConfig, client: httpx.Client | None = None):
        self.config = config
        self.cache_key = f"{config.endpoint}/{config.model}"
        self._client = client or httpx.Client(timeout=config.timeout)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.credential_env:
            credential = os.environ.get(self.config.credential_env)
            if credential:
                headers["Authorization"] = f"Bearer {credential}"
        return headers

    def _post_chunk(self, texts: Sequence[str]) -> list[list[float]]:
        payload = {"model": self.config.model, "texts": list(texts)}
        last_exc: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            try:
                response = self._client.post(
                    self.config.endpoint, json=payload, headers=self._headers()
                )
            except httpx.HTTPError as exc:
                last_exc = exc
                if attempt < self.config.max_retries:
                    time.sleep(self.config.backoff_base * (2**attempt))
                continue
            if response.status_code >= 400:
                raise ProviderRejectedError(
                    f"embedding provider returned HTTP {response.status_code}",
                    status_code=response.status_code,
                )
            body = response.json()
            vectors = body.get("embeddings")
            if not isinstance(vectors, list) or len(vectors) != len(texts):
                raise ProviderRejectedError(
                    "embedding response did not contain one vector per input text",
                    status_code=response.status_code,
                )
            return vectors
        raise ProviderUnreachableError(f"embedding provider unreachable: {last_exc}")

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        if not texts:
            raise EmptyBatchError("cannot embed an empty batch")
        out: list[EmbeddingVector] = []
        size = self.config.batch_size
        for start in range(0, len(texts), size):
            chunk = texts[start : start + size]
            for row in self._post_chunk(chunk):
                try:
                    out.append(EmbeddingVector(row))
                except ZeroVectorError:
                    raise ZeroVectorError(
                        f"provider returned a zero vector for text index {len(out)}"
                    ) from None
        return out


@dataclass
class CachingEmbedder:
    """Thread-safe memoizing wrapper around another embedder.

    Entries are keyed by (provider cache key, text hash), so each distinct
    text hits the underlying provider once even when it appears in many
    pools or is compared against every other pool member.
    """

    inner: Embedder
    _cache: dict[tuple[str, str], EmbeddingVector] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def cache_key(self) -> str:
        return self.inner.cache_key

    @staticmethod
    def _text_key(text: str) -> str:
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        if not texts:
            raise EmptyBatchError("cannot embed an empty batch")
        keys = [(self.cache_key, self._text_key(t)) for t in texts]
        with self._lock:
            missing: dict[str, int] = {}
            for key, text in zip(keys, texts):
                if key not in self._cache and text not in missing:
                    missing[text] = 0
        if missing:
            fresh_texts = list(missing)
            fresh_vectors = self.inner.embed_batch(fresh_texts)
            with self._lock:
                for text, vector in zip(fresh_texts, fresh_vectors):
                    self._cache[(self.cache_key, self._text_key(text))] = vector
        with self._lock:
            return [self._cache[key] for key in keys]


def make_embedder(config: EmbeddingProviderConfig, seed: int = 0) -> Embedder:
    """Build the provider named by ``config.endpoint``, wrapped in a cache."""
    if config.endpoint == DETERMINISTIC_ENDPOINT:
        inner: Embedder = DeterministicEmbedder(seed=seed)
    else:
        inner = HttpEmbedder(config)
    return CachingEmbedder(inner)


def embed_batch(texts: Sequence[str], config: EmbeddingProviderConfig) -> list[EmbeddingVector]:
    """One-shot embedding of a batch under the given provider config."""
    return make_embedder(config).embed_batch(texts)
