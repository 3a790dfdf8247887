"""Embedding vectors, cosine math and the two embedder back ends."""
from __future__ import annotations

import hashlib
import os
import string
import threading
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import httpx
import numpy as np

from toolgate.errors import (
    DimensionMismatchError,
    EmbedderFailure,
    EmptyTextError,
    RemoteUnavailableError,
    ZeroVectorError,
)

DEFAULT_DIM = 768
NORM_FLOOR = 1e-12
EMBED_ENDPOINT_ENV = "TOOLGATE_EMBED_ENDPOINT"

DETERMINISTIC = "deterministic-test"
REMOTE = "remote-http"
KINDS = (DETERMINISTIC, REMOTE)


@dataclass(frozen=True, eq=False)
class Embedding:
    """A finite real vector. Embeddings produced by embedders are unit-norm."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        if arr.size == 0:
            raise DimensionMismatchError("embedding must have at least one component")
        if not np.all(np.isfinite(arr)):
            raise ValueError("embedding values must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def tolist(self) -> list[float]:
        return [float(x) for x in self.values]

    def __eq__(self, other):
        if not isinstance(other, Embedding):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())

    def __len__(self):
        return self.dim


def _as_array(v) -> np.ndarray:
    if isinstance(v, Embedding):
        return v.values
    return np.asarray(v, dtype=np.float64).reshape(-1)


def normalize(v) -> Embedding:
    arr = _as_array(v)
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector must be finite")
    n = float(np.linalg.norm(arr))
    if n < NORM_FLOOR:
        raise ZeroVectorError(f"vector norm {n!r} below floor {NORM_FLOOR}")
    return Embedding(arr / n)


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two vectors, clamped to [-1, 1]."""
    x, y = _as_array(a), _as_array(b)
    if x.shape != y.shape:
        raise DimensionMismatchError(f"dims differ: {x.shape[0]} vs {y.shape[0]}")
    nx, ny = float(np.linalg.norm(x)), float(np.linalg.norm(y))
    if nx < NORM_FLOOR or ny < NORM_FLOOR:
        raise ZeroVectorError("cosine of a zero vector is undefined")
    c = float(np.dot(x, y)) / (nx * ny)
    return max(-1.0, min(1.0, c))


@dataclass(frozen=True)
class EmbedderConfig:
    kind: str = DETERMINISTIC
    model_name: str = "hash-v1"
    dim: int = DEFAULT_DIM
    endpoint: str | None = None
    timeout_s: float = 60.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown embedder kind {self.kind!r}")
        if not isinstance(self.dim, int) or self.dim <= 0:
            raise ValueError("dim must be a positive integer")
        if self.kind == DETERMINISTIC and self.endpoint:
            raise ValueError("deterministic-test embedder takes no endpoint")

    @property
    def fingerprint(self) -> str:
        return f"{self.kind}/{self.model_name}/{self.dim}"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "model_name": self.model_name, "dim": self.dim}

    @classmethod
    def from_dict(cls, data: dict, endpoint: str | None = None) -> "EmbedderConfig":
        return cls(kind=data["kind"], model_name=data["model_name"], dim=int(data["dim"]),
                   endpoint=endpoint if data["kind"] == REMOTE else None)


_PUNCT = string.punctuation


def _tokens(text: str) -> list[str]:
    out = []
    for raw in text.lower().split():
        tok = raw.strip(_PUNCT)
        out.append(tok or raw)
    return out


@lru_cache(maxsize=1 << 16)
def _token_vector(token: str, dim: int) -> np.ndarray:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=16, person=b"toolgate-hash").digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    v.flags.writeable = False
    return v


def _check_text(text: str) -> None:
    if not isinstance(text, str) or not text.strip():
        raise EmptyTextError("text is empty after trimming whitespace")


class DeterministicEmbedder:
    """Bag-of-tokens hash projection; a pure function of ``(text, dim)``.

    Each whitespace token maps to a fixed pseudo-random unit vector; the text
    embedding is the normalized mean. Texts sharing tokens land close together.
    """

    def __init__(self, config: EmbedderConfig):
        self.config = config

    @property
    def fingerprint(self) -> str:
        return self.config.fingerprint

    def embed(self, text: str) -> Embedding:
        _check_text(text)
        vecs = [_token_vector(t, self.config.dim) for t in _tokens(text)]
        return normalize(np.sum(vecs, axis=0) / len(vecs))

    def embed_many(self, texts: Sequence[str]) -> list[Embedding]:
        return [self.embed(t) for t in texts]


class RemoteEmbedder:
    """Client for a JSON embedding server.

    Wire format: ``POST {"model": ..., "input": [texts]}`` answered by
    ``{"embeddings": [[...], ...]}``.
    """

    def __init__(self, config: EmbedderConfig, transport: httpx.BaseTransport | None = None):
        endpoint = os.environ.get(EMBED_ENDPOINT_ENV) or config.endpoint
        if not endpoint:
            raise ValueError(f"remote-http embedder needs an endpoint (or ${EMBED_ENDPOINT_ENV})")
        self.config = config
        self.endpoint = endpoint
        self._client = httpx.Client(timeout=config.timeout_s, transport=transport)
        self._lock = threading.Lock()

    @property
    def fingerprint(self) -> str:
        return self.config.fingerprint

    def embed(self, text: str) -> Embedding:
        return self.embed_many([text])[0]

    def embed_many(self, texts: Sequence[str]) -> list[Embedding]:
        texts = list(texts)
        for t in texts:
            _check_text(t)
        if not texts:
            return []
        payload = {"model": self.config.model_name, "input": texts}
        try:
            with self._lock:
                resp = self._client.post(self.endpoint, json=payload)
        except httpx.HTTPError as exc:
            raise RemoteUnavailableError(f"embedding endpoint {self.endpoint}: {exc}") from exc
        if not 200 <= resp.status_code < 300:
            raise RemoteUnavailableError(f"embedding endpoint returned HTTP {resp.status_code}")
        try:
            rows = resp.json()["embeddings"]
        except (ValueError, KeyError, TypeError) as exc:
            raise EmbedderFailure(f"unexpected embedding response: {exc}") from exc
        if not isinstance(rows, list) or len(rows) != len(texts):
            raise EmbedderFailure(f"expected {len(texts)} embeddings, got {len(rows) if isinstance(rows, list) else rows!r}")
        out = []
        for row in rows:
            if not isinstance(row, list) or len(row) != self.config.dim:
                got = len(row) if isinstance(row, list) else type(row).__name__
                raise DimensionMismatchError(f"remote returned dim {got}, expected {self.config.dim}")
            try:
                out.append(normalize(row))
            except (TypeError, ValueError) as exc:
                if isinstance(exc, ZeroVectorError):
                    raise
                raise EmbedderFailure(f"bad embedding values: {exc}") from exc
        return out

    def close(self):
        self._client.close()


@lru_cache(maxsize=32)
def make_embedder(config: EmbedderConfig):
    if config.kind == DETERMINISTIC:
        return DeterministicEmbedder(config)
    return RemoteEmbedder(config)


def embed_text(text: str, config: EmbedderConfig) -> Embedding:
    return make_embedder(config).embed(text)
