"""Runtime tool selection: match recommendations against the search levels,
pick a level, and call the model with only the chosen tools."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from toolgate import kernels
from toolgate.embedding import Embedding, EmbedderConfig, make_embedder
from toolgate.errors import (
    DimensionMismatchError,
    EmbedderFailure,
    EmptyIndexError,
    ProtocolError,
    RecommenderFailed,
    StaleIndexError,
)
from toolgate.index import Level1Index, Level2Index, ToolSpec
from toolgate.llm import ERROR_SENTINEL, FULL_WINDOW, REDUCED_WINDOW, ChatRequest, ChatResponse
from toolgate.recommender import RecommenderOutput, embed_recommendation, load_prompt, recommend

log = logging.getLogger(__name__)

L1, L2, L3 = "L1", "L2", "L3"
SCORE_ARBITRATION = "score-arbitration"
LOW_CONFIDENCE = "low-confidence-floor"
RECOMMENDER_FAILED = "recommender-failed"
EMBEDDING_FAILED = "embedding-failed"
EXECUTION_FALLBACK = "execution-fallback"
ALL_TOOLS_MODE = "all-tools-mode"

MODES = ("lis", "all-tools")


@dataclass(frozen=True)
class KnnHit:
    target_id: str
    score: float
    rank: int


def knn(query_vec: Embedding, index: Level1Index | Level2Index, k: int) -> list[KnnHit]:
    """Exact top-``min(k, len(index))`` by cosine; equal scores ordered by id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(index) == 0:
        raise EmptyIndexError("index has no entries")
    q = query_vec.values if isinstance(query_vec, Embedding) else np.asarray(query_vec, dtype=np.float64)
    if q.shape[0] != index.dim:
        raise DimensionMismatchError(f"query dim {q.shape[0]} vs index dim {index.dim}")
    idx, scores = kernels.topk_cosine(index.matrix, q, k, index.id_rank)
    ids = index.target_ids
    return [KnnHit(ids[i], float(s), r) for r, (i, s) in enumerate(zip(idx, scores), start=1)]


class LevelScores(NamedTuple):
    avg_l1: float
    avg_l2: float
    hits_l1: list
    hits_l2: list


def score_levels(rec_vecs: Sequence[Embedding], l1: Level1Index, l2: Level2Index, k: int) -> LevelScores:
    """Pooled mean of the top-k scores of every recommendation vector, per level."""
    if not rec_vecs:
        raise ValueError("no recommendation vectors")
    hits_l1 = [knn(v, l1, k) for v in rec_vecs]
    hits_l2 = [knn(v, l2, k) for v in rec_vecs]
    avg_l1 = float(np.mean([h.score for hits in hits_l1 for h in hits]))
    avg_l2 = float(np.mean([h.score for hits in hits_l2 for h in hits]))
    return LevelScores(avg_l1, avg_l2, hits_l1, hits_l2)


def select_level(avg_l1: float, avg_l2: float, floor: float = 0.5) -> tuple[str, str]:
    if not 0 <= floor <= 1:
        raise ValueError("floor must be in [0, 1]")
    if max(avg_l1, avg_l2) < floor:
        return L3, LOW_CONFIDENCE
    # ties go to level 1: fewer tools on the prompt
    return (L2 if avg_l2 > avg_l1 else L1), SCORE_ARBITRATION


def _first_seen(pairs) -> list[str]:
    out, seen = [], set()
    for _, _, tid in sorted(pairs, key=lambda p: (-p[0], p[1])):
        if tid not in seen:
            seen.add(tid)
            out.append(tid)
    return out


def assemble_toolset(level: str, hits_l1, hits_l2, l1: Level1Index, l2: Level2Index,
                     tools: Sequence[ToolSpec]) -> list[str]:
    """Tool ids to attach for ``level``, deduplicated, best match first."""
    if level == L3:
        return list(dict.fromkeys(t.id for t in tools))
    if level == L1:
        pairs = [(h.score, h.target_id, h.target_id) for hits in hits_l1 for h in hits]
        return _first_seen(pairs)
    if level == L2:
        pairs = []
        for hits in hits_l2:
            if not hits:
                continue
            top = hits[0]
            for pos, tid in enumerate(l2.cluster(top.target_id).tool_ids):
                pairs.append((top.score, (top.target_id, pos), tid))
        return _first_seen(pairs)
    raise ValueError(f"unknown level {level!r}")


@dataclass(frozen=True)
class ControllerDecision:
    level: str
    selected_tool_ids: tuple
    avg_score_l1: float | None
    avg_score_l2: float | None
    k: int
    reason: str

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "selected_tool_ids": list(self.selected_tool_ids),
            "avg_score_l1": self.avg_score_l1,
            "avg_score_l2": self.avg_score_l2,
            "k": self.k,
            "reason": self.reason,
        }


@dataclass
class ControllerConfig:
    k: int = 5
    floor: float = 0.5
    reduced_window: int = REDUCED_WINDOW
    full_window: int = FULL_WINDOW
    mode: str = "lis"
    model: str = ""
    recommender_template: str | None = None
    system_prompt: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass
class SearchLevels:
    """Loaded level-1/level-2 indexes with the embedder that built them."""

    l1: Level1Index
    l2: Level2Index
    embedder: object = None

    def __post_init__(self):
        if self.l1.embedder != self.l2.embedder:
            raise StaleIndexError(f"level indexes disagree: {self.l1.fingerprint} vs {self.l2.fingerprint}")
        if self.embedder is None:
            self.embedder = make_embedder(EmbedderConfig.from_dict(self.l1.embedder))
        if self.embedder.fingerprint != self.l1.fingerprint:
            raise StaleIndexError(f"indexes built with {self.l1.fingerprint}, embedder is {self.embedder.fingerprint}")


@dataclass
class FunctionCallResult:
    kind: str
    calls: list
    text: str | None
    error: str | None = None


@dataclass
class QueryRun:
    result: FunctionCallResult
    decision: ControllerDecision
    timings: dict = field(default_factory=dict)
    prompt_tokens: int = 0
    tokens_estimated: bool = False
    recommendation: RecommenderOutput | None = None
    levels_tried: list = field(default_factory=list)


def _call_tools(query, tool_ids, by_id, llm, window, config) -> ChatResponse:
    missing = [t for t in tool_ids if t not in by_id]
    if missing:
        raise StaleIndexError(f"index selected tools absent from the tool set: {missing}")
    system = config.system_prompt if config.system_prompt is not None else load_prompt("function_call_v1.txt")
    request = ChatRequest(
        messages=[{"role": "system", "content": system}, {"role": "user", "content": query}],
        tools=[by_id[t] for t in tool_ids],
        context_window=window,
        model=config.model,
    )
    return llm.chat(request)


def run_query(query: str, levels: SearchLevels | None, tools: Sequence[ToolSpec], llm,
              config: ControllerConfig | None = None) -> QueryRun:
    """recommend -> embed -> score -> select -> assemble -> call, with fallbacks.

    Endpoint outages raise ``LlmUnavailableError``; every other stage failure
    ends at level 3 with the reason recorded on the decision.
    """
    config = config or ControllerConfig()
    by_id = {t.id: t for t in tools}
    all_ids = tuple(dict.fromkeys(t.id for t in tools))
    timings: dict[str, float] = {}
    tokens = 0
    estimated = False
    rec = None
    avg1 = avg2 = None
    t_start = time.perf_counter()

    if config.mode == "all-tools":
        level, reason, selected = L3, ALL_TOOLS_MODE, all_ids
    else:
        if levels is None:
            raise ValueError("lis mode needs search levels")
        t0 = time.perf_counter()
        try:
            rec = recommend(query, llm, config.recommender_template, config.model, config.reduced_window)
            tokens += rec.prompt_tokens
            estimated |= rec.tokens_estimated
        except RecommenderFailed as exc:
            tokens += exc.prompt_tokens
            rec = None
        timings["recommender_s"] = time.perf_counter() - t0
        if rec is None:
            level, reason, selected = L3, RECOMMENDER_FAILED, all_ids
        else:
            t0 = time.perf_counter()
            try:
                vecs = embed_recommendation(rec, levels.embedder)
            except EmbedderFailure as exc:
                log.warning("embedding recommendation failed: %s", exc)
                vecs = None
            timings["embed_s"] = time.perf_counter() - t0
            if vecs is None:
                level, reason, selected = L3, EMBEDDING_FAILED, all_ids
            else:
                t0 = time.perf_counter()
                scores = score_levels(vecs, levels.l1, levels.l2, config.k)
                avg1, avg2 = scores.avg_l1, scores.avg_l2
                level, reason = select_level(avg1, avg2, config.floor)
                selected = tuple(assemble_toolset(level, scores.hits_l1, scores.hits_l2,
                                                  levels.l1, levels.l2, tools))
                timings["search_s"] = time.perf_counter() - t0

    tried = [level]
    window = config.full_window if level == L3 else config.reduced_window
    t0 = time.perf_counter()
    response, error = _attempt(query, selected, by_id, llm, window, config)
    timings["call_s"] = time.perf_counter() - t0
    if response is not None:
        tokens += response.prompt_tokens
        estimated |= response.tokens_estimated
    if error is not None and level != L3:
        log.info("function call failed at %s (%s); retrying with all tools", level, error)
        level, reason, selected = L3, EXECUTION_FALLBACK, all_ids
        tried.append(L3)
        t0 = time.perf_counter()
        response, error = _attempt(query, selected, by_id, llm, config.full_window, config)
        timings["fallback_s"] = time.perf_counter() - t0
        if response is not None:
            tokens += response.prompt_tokens
            estimated |= response.tokens_estimated
    timings["total_s"] = time.perf_counter() - t_start

    if response is None:
        result = FunctionCallResult(ERROR_SENTINEL, [], None, error)
    else:
        result = FunctionCallResult(response.kind, list(response.tool_calls), response.text, error)
    decision = ControllerDecision(level, tuple(selected), avg1, avg2, config.k, reason)
    return QueryRun(result, decision, timings, tokens, estimated, rec, tried)


def _attempt(query, selected, by_id, llm, window, config):
    """One function-calling request; returns ``(response, error)``."""
    try:
        response = _call_tools(query, selected, by_id, llm, window, config)
    except ProtocolError as exc:
        return None, f"protocol error: {exc}"
    if response.kind == ERROR_SENTINEL:
        return response, response.error_message or "error"
    return response, None

