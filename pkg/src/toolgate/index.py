"""Offline search structures: per-tool (level 1) and per-cluster (level 2).

Both are built once from a tool set (and, for level 2, an augmented query
corpus), persisted as JSON, and shared read-only at runtime.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from toolgate import kernels
from toolgate.embedding import Embedding, EmbedderConfig, make_embedder, normalize
from toolgate.errors import (
    CorruptIndexError,
    DimensionMismatchError,
    DuplicateToolIdError,
    EmptyInputError,
    InvalidToolSpecError,
    IoFailure,
    SchemaVersionMismatchError,
    UnknownToolIdError,
)

SCHEMA_VERSION = 1
LINKAGE = "average"
DEFAULT_DISTANCE_THRESHOLD = 0.5
ORIGINS = ("seed", "generated")


@dataclass(frozen=True)
class ToolSpec:
    id: str
    name: str
    description: str
    parameters: dict = field(default_factory=lambda: {"type": "object", "properties": {}})

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name.strip():
            raise InvalidToolSpecError("tool name must be non-empty")
        if not isinstance(self.description, str) or not self.description.strip():
            raise InvalidToolSpecError(f"tool {self.name!r}: description must be non-empty")
        if not isinstance(self.id, str) or not self.id:
            raise InvalidToolSpecError(f"tool {self.name!r}: id must be non-empty")
        params = self.parameters
        if not isinstance(params, dict):
            raise InvalidToolSpecError(f"tool {self.name!r}: parameters must be an object")
        props = params.get("properties", {})
        required = params.get("required", [])
        if not isinstance(props, dict) or not isinstance(required, list):
            raise InvalidToolSpecError(f"tool {self.name!r}: malformed parameters")
        missing = [r for r in required if r not in props]
        if missing:
            raise InvalidToolSpecError(f"tool {self.name!r}: required but undeclared: {missing}")

    @property
    def embedding_text(self) -> str:
        return f"{self.name}: {self.description}"

    @property
    def required(self) -> list[str]:
        return list(self.parameters.get("required", []))

    def to_function_schema(self) -> dict:
        return {
            "type": "function",
            "function": {
                "name": self.name,
                "description": self.description,
                "parameters": self.parameters,
            },
        }

    def to_dict(self) -> dict:
        return {"name": self.name, "description": self.description, "parameters": self.parameters}

    @classmethod
    def from_dict(cls, data: dict) -> "ToolSpec":
        """Accepts a bare function schema or one wrapped as ``{"type": "function", "function": {...}}``."""
        if not isinstance(data, dict):
            raise InvalidToolSpecError("tool entry must be an object")
        inner = data.get("function") if isinstance(data.get("function"), dict) else data
        name = inner.get("name")
        return cls(
            id=data.get("id") or inner.get("id") or name,
            name=name,
            description=inner.get("description"),
            parameters=inner.get("parameters") or {"type": "object", "properties": {}},
        )


def check_unique_ids(tools: Sequence[ToolSpec]) -> None:
    seen = set()
    dupes = []
    for t in tools:
        if t.id in seen:
            dupes.append(t.id)
        seen.add(t.id)
    if dupes:
        raise DuplicateToolIdError(f"duplicate tool ids: {sorted(set(dupes))}")


def load_tools(path) -> list[ToolSpec]:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read tool set {path}: {exc}") from exc
    except ValueError as exc:
        raise InvalidToolSpecError(f"{path}: not valid JSON: {exc}") from exc
    if isinstance(data, dict) and "tools" in data:
        data = data["tools"]
    if not isinstance(data, list):
        raise InvalidToolSpecError(f"{path}: expected a JSON array of tools")
    tools = [ToolSpec.from_dict(d) for d in data]
    check_unique_ids(tools)
    return tools


def save_tools(tools: Sequence[ToolSpec], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([t.to_dict() for t in tools], fh, indent=2)
        fh.write("\n")


@dataclass(frozen=True)
class AugmentedQuery:
    id: str
    text: str
    category: str
    gold_tools: tuple
    origin: str = "seed"
    rouge_vs_seed: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "gold_tools", tuple(self.gold_tools))
        if not self.gold_tools:
            raise ValueError(f"query {self.id!r} has no gold tools")
        if self.origin not in ORIGINS:
            raise ValueError(f"query {self.id!r}: bad origin {self.origin!r}")

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "text": self.text,
            "category": self.category,
            "gold_tools": list(self.gold_tools),
            "origin": self.origin,
        }
        if self.rouge_vs_seed is not None:
            d["rouge_vs_seed"] = self.rouge_vs_seed
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentedQuery":
        return cls(
            id=str(d["id"]),
            text=d["text"],
            category=d.get("category", "default"),
            gold_tools=tuple(d["gold_tools"]),
            origin=d.get("origin", "seed"),
            rouge_vs_seed=d.get("rouge_vs_seed"),
        )


@dataclass(frozen=True, eq=False)
class Level1Index:
    tool_ids: tuple
    matrix: np.ndarray
    embedder: dict

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64, copy=True)
        if m.ndim != 2 or m.shape[0] != len(self.tool_ids):
            raise DimensionMismatchError("one embedding row per tool required")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "tool_ids", tuple(self.tool_ids))

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    @property
    def fingerprint(self) -> str:
        return EmbedderConfig.from_dict(self.embedder).fingerprint

    @property
    def entries(self) -> list[tuple[str, Embedding]]:
        return [(tid, Embedding(row)) for tid, row in zip(self.tool_ids, self.matrix)]

    @property
    def target_ids(self) -> tuple:
        return self.tool_ids

    @cached_property
    def id_rank(self) -> np.ndarray:
        return _rank_of(self.tool_ids)

    def __len__(self):
        return len(self.tool_ids)

    def __eq__(self, other):
        if not isinstance(other, Level1Index):
            return NotImplemented
        return (
            self.tool_ids == other.tool_ids
            and self.embedder == other.embedder
            and np.array_equal(self.matrix, other.matrix)
        )


@dataclass(frozen=True)
class ToolCluster:
    id: str
    member_query_ids: tuple
    centroid: Embedding
    tool_ids: tuple

    def __post_init__(self):
        object.__setattr__(self, "member_query_ids", tuple(self.member_query_ids))
        object.__setattr__(self, "tool_ids", tuple(self.tool_ids))
        if not self.member_query_ids:
            raise ValueError(f"cluster {self.id!r} has no members")


@dataclass(frozen=True, eq=False)
class Level2Index:
    clusters: tuple
    distance_threshold: float
    embedder: dict
    linkage: str = LINKAGE

    def __post_init__(self):
        object.__setattr__(self, "clusters", tuple(self.clusters))
        ids = [c.id for c in self.clusters]
        if len(set(ids)) != len(ids):
            raise ValueError("cluster ids must be unique")
        members = [q for c in self.clusters for q in c.member_query_ids]
        if len(set(members)) != len(members):
            raise ValueError("clusters must be disjoint")
        dims = {c.centroid.dim for c in self.clusters}
        if len(dims) > 1:
            raise DimensionMismatchError("centroids differ in dimension")

    @property
    def dim(self) -> int:
        return self.clusters[0].centroid.dim if self.clusters else int(self.embedder["dim"])

    @property
    def fingerprint(self) -> str:
        return EmbedderConfig.from_dict(self.embedder).fingerprint

    @property
    def target_ids(self) -> tuple:
        return tuple(c.id for c in self.clusters)

    @cached_property
    def matrix(self) -> np.ndarray:
        m = np.array([c.centroid.values for c in self.clusters], dtype=np.float64).reshape(len(self.clusters), -1)
        m.flags.writeable = False
        return m

    @cached_property
    def id_rank(self) -> np.ndarray:
        return _rank_of(self.target_ids)

    def cluster(self, cluster_id: str) -> ToolCluster:
        return self._by_id[cluster_id]

    @cached_property
    def _by_id(self) -> dict:
        return {c.id: c for c in self.clusters}

    def __len__(self):
        return len(self.clusters)

    def __eq__(self, other):
        if not isinstance(other, Level2Index):
            return NotImplemented
        return (
            self.clusters == other.clusters
            and self.embedder == other.embedder
            and self.linkage == other.linkage
            and _same_float(self.distance_threshold, other.distance_threshold)
        )


def _same_float(a, b):
    return a == b or (math.isnan(a) and math.isnan(b))


def _rank_of(ids) -> np.ndarray:
    order = sorted(range(len(ids)), key=lambda i: ids[i])
    rank = np.empty(len(ids), dtype=np.int64)
    rank[order] = np.arange(len(ids), dtype=np.int64)
    return rank


def build_level1(tools: Sequence[ToolSpec], embedder_config: EmbedderConfig, embedder=None) -> Level1Index:
    if not tools:
        raise EmptyInputError("tool set is empty")
    check_unique_ids(tools)
    embedder = embedder or make_embedder(embedder_config)
    vecs = embedder.embed_many([t.embedding_text for t in tools])
    return Level1Index(
        tool_ids=tuple(t.id for t in tools),
        matrix=np.array([v.values for v in vecs]),
        embedder=embedder_config.to_dict(),
    )


# --- clustering -----------------------------------------------------------

@dataclass(frozen=True)
class Merge:
    a: int
    b: int
    distance: float


def cosine_distance_matrix(points: Sequence) -> np.ndarray:
    if not points:
        raise EmptyInputError("no points to cluster")
    rows = [p.values if isinstance(p, Embedding) else np.asarray(p, dtype=np.float64) for p in points]
    dims = {r.shape[0] for r in rows}
    if len(dims) != 1:
        raise DimensionMismatchError(f"points have mixed dimensions {sorted(dims)}")
    x = np.array([normalize(r).values for r in rows])
    d = 1.0 - x @ x.T
    d = np.clip((d + d.T) / 2.0, 0.0, 2.0)
    np.fill_diagonal(d, 0.0)
    return d


def merge_sequence(points: Sequence, distance_threshold: float) -> list[Merge]:
    """Average-linkage merges over cosine distance, in the order performed."""
    if distance_threshold < 0 or math.isnan(distance_threshold):
        raise ValueError("distance_threshold must be >= 0")
    d = cosine_distance_matrix(points)
    pairs, heights = kernels.average_linkage(d, distance_threshold)
    merges = [Merge(int(a), int(b), float(h)) for (a, b), h in zip(pairs, heights)]
    for prev, cur in zip(merges, merges[1:]):
        assert cur.distance >= prev.distance - 1e-12, "average linkage merge heights must not decrease"
    return merges


def labels_from_merges(n: int, merges: Iterable[Merge]) -> list[int]:
    """Contiguous labels, numbered in order of each cluster's first member."""
    slot = list(range(n))
    for m in merges:
        for i in range(n):
            if slot[i] == m.b:
                slot[i] = m.a
    labels, seen = [], {}
    for s in slot:
        labels.append(seen.setdefault(s, len(seen)))
    return labels


def agglomerative_cluster(points: Sequence, distance_threshold: float = DEFAULT_DISTANCE_THRESHOLD) -> list[int]:
    merges = merge_sequence(points, distance_threshold)
    return labels_from_merges(len(points), merges)


def build_level2(
    corpus: Sequence[AugmentedQuery],
    tools: Sequence[ToolSpec],
    embedder_config: EmbedderConfig,
    distance_threshold: float = DEFAULT_DISTANCE_THRESHOLD,
    embedder=None,
) -> Level2Index:
    if not corpus:
        raise EmptyInputError("query corpus is empty")
    known = {t.id for t in tools}
    unknown = sorted({g for q in corpus for g in q.gold_tools if g not in known})
    if unknown:
        raise UnknownToolIdError(f"corpus references unknown tools: {unknown}")
    ids = [q.id for q in corpus]
    if len(set(ids)) != len(ids):
        raise ValueError("corpus query ids must be unique")
    embedder = embedder or make_embedder(embedder_config)
    vecs = embedder.embed_many([q.text for q in corpus])
    labels = agglomerative_cluster(vecs, distance_threshold)
    groups: dict[int, list[int]] = {}
    for i, lab in enumerate(labels):
        groups.setdefault(lab, []).append(i)
    clusters = []
    for lab in sorted(groups):
        members = groups[lab]
        centroid = normalize(np.mean([vecs[i].values for i in members], axis=0))
        tool_ids = sorted({g for i in members for g in corpus[i].gold_tools})
        clusters.append(ToolCluster(
            id=f"c{lab:04d}",
            member_query_ids=tuple(corpus[i].id for i in members),
            centroid=centroid,
            tool_ids=tuple(tool_ids),
        ))
    return Level2Index(
        clusters=tuple(clusters),
        distance_threshold=float(distance_threshold),
        embedder=embedder_config.to_dict(),
    )


# --- persistence ----------------------------------------------------------

_CHECKSUM_BLANK = "0" * 64


def _checksum_field(value: str) -> bytes:
    return f'"checksum": "{value}"'.encode("ascii")


def _payload(index) -> tuple[str, dict]:
    if isinstance(index, Level1Index):
        return "level1", {
            "tool_ids": list(index.tool_ids),
            "dim": index.dim,
            "vectors": [[float(x) for x in row] for row in index.matrix],
        }
    if isinstance(index, Level2Index):
        return "level2", {
            "linkage": index.linkage,
            "distance_threshold": index.distance_threshold,
            "dim": index.dim,
            "clusters": [
                {
                    "id": c.id,
                    "member_query_ids": list(c.member_query_ids),
                    "tool_ids": list(c.tool_ids),
                    "centroid": c.centroid.tolist(),
                }
                for c in index.clusters
            ],
        }
    raise TypeError(f"cannot persist {type(index).__name__}")


def dumps_index(index) -> bytes:
    """Serialize to JSON bytes whose checksum covers every other byte of the file."""
    kind, payload = _payload(index)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "fingerprint": index.fingerprint,
        "embedder": dict(index.embedder),
        "checksum": _CHECKSUM_BLANK,
        "payload": payload,
    }
    # python float repr is the shortest string that round-trips exactly
    blank = (json.dumps(doc, indent=1, allow_nan=False) + "\n").encode("utf-8")
    digest = hashlib.sha256(blank).hexdigest()
    return blank.replace(_checksum_field(_CHECKSUM_BLANK), _checksum_field(digest), 1)


def save_index(index, path) -> None:
    data = dumps_index(index)
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(f"cannot write index {path}: {exc}") from exc


def load_index(path):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read index {path}: {exc}") from exc
    return loads_index(raw)


def _reject_constant(name):
    raise ValueError(f"non-finite number {name}")


def loads_index(raw: bytes):
    if isinstance(raw, str):
        raw = raw.encode("utf-8")
    try:
        doc = json.loads(raw.decode("utf-8"), parse_constant=_reject_constant)
    except (UnicodeDecodeError, ValueError, RecursionError) as exc:
        raise CorruptIndexError(f"index is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise CorruptIndexError("index document lacks schema_version")
    version = doc["schema_version"]
    if type(version) is not int:
        raise CorruptIndexError(f"bad schema_version {version!r}")
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatchError(f"index schema_version {version}, expected {SCHEMA_VERSION}")
    checksum = doc.get("checksum")
    if not isinstance(checksum, str) or len(checksum) != 64 or raw.count(_checksum_field(checksum)) != 1:
        raise CorruptIndexError("missing or malformed checksum")
    blank = raw.replace(_checksum_field(checksum), _checksum_field(_CHECKSUM_BLANK), 1)
    if hashlib.sha256(blank).hexdigest() != checksum:
        raise CorruptIndexError("checksum mismatch")
    try:
        kind, payload, embedder = doc["kind"], doc["payload"], doc["embedder"]
        if kind == "level1":
            index = _level1_from_payload(payload, embedder)
        elif kind == "level2":
            index = _level2_from_payload(payload, embedder)
        else:
            raise CorruptIndexError(f"unknown index kind {kind!r}")
    except CorruptIndexError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError, IndexError, RecursionError) as exc:
        raise CorruptIndexError(f"malformed index: {exc!r}") from exc
    if doc.get("fingerprint") != index.fingerprint:
        raise CorruptIndexError("fingerprint does not match embedder record")
    return index


def _embedder_dict(embedder) -> dict:
    cfg = EmbedderConfig.from_dict(embedder)
    return cfg.to_dict()


def _level1_from_payload(payload, embedder) -> Level1Index:
    ids = payload["tool_ids"]
    dim = payload["dim"]
    vectors = payload["vectors"]
    if not all(isinstance(i, str) for i in ids) or len(ids) != len(vectors) or len(set(ids)) != len(ids):
        raise CorruptIndexError("tool ids do not match vectors")
    if not all(isinstance(v, list) and len(v) == dim for v in vectors):
        raise CorruptIndexError("vector dimension mismatch")
    matrix = np.array(vectors, dtype=np.float64).reshape(len(ids), dim)
    if not np.all(np.isfinite(matrix)):
        raise CorruptIndexError("non-finite vector component")
    return Level1Index(tool_ids=tuple(ids), matrix=matrix, embedder=_embedder_dict(embedder))


def _level2_from_payload(payload, embedder) -> Level2Index:
    dim = payload["dim"]
    clusters = []
    for c in payload["clusters"]:
        centroid = c["centroid"]
        if not isinstance(centroid, list) or len(centroid) != dim:
            raise CorruptIndexError("centroid dimension mismatch")
        if not all(isinstance(x, str) for x in c["member_query_ids"] + c["tool_ids"]) or not isinstance(c["id"], str):
            raise CorruptIndexError("ids must be strings")
        clusters.append(ToolCluster(
            id=c["id"],
            member_query_ids=tuple(c["member_query_ids"]),
            centroid=Embedding(np.array(centroid, dtype=np.float64)),
            tool_ids=tuple(c["tool_ids"]),
        ))
    threshold = payload["distance_threshold"]
    if isinstance(threshold, bool) or not isinstance(threshold, (int, float)):
        raise CorruptIndexError("bad distance_threshold")
    return Level2Index(
        clusters=tuple(clusters),
        distance_threshold=float(threshold),
        embedder=_embedder_dict(embedder),
        linkage=payload["linkage"],
    )
