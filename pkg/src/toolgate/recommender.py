"""Ask the model, with no tools attached, which tools it would ideally want."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from importlib import resources
from string import Template

from toolgate.embedding import Embedding
from toolgate.errors import (
    EmptyQueryError,
    EmptyToolListError,
    MalformedEntryError,
    NoJsonFoundError,
    ProtocolError,
    RecommenderFailed,
)
from toolgate.llm import REDUCED_WINDOW, ChatRequest

log = logging.getLogger(__name__)

MAX_IDEAL_TOOLS = 8
MAX_NAME_LEN = 64
MAX_DESCRIPTION_LEN = 1024
DEFAULT_TEMPLATE = "recommender_v1.txt"
JSON_REMINDER = "\n\nReminder: output only the JSON object, with no other text."


def load_prompt(name: str) -> str:
    return resources.files("toolgate.prompts").joinpath(name).read_text(encoding="utf-8")


@dataclass(frozen=True)
class IdealTool:
    name: str
    description: str

    def __post_init__(self):
        if not self.name or not self.description:
            raise ValueError("ideal tool needs a name and a description")


@dataclass
class RecommenderOutput:
    query_text: str
    ideal_tools: list
    raw_response: str
    attempts: int = 1
    prompt_tokens: int = 0
    latency: float = 0.0
    tokens_estimated: bool = False


def build_recommender_prompt(query: str, template: str | None = None) -> str:
    if not isinstance(query, str) or not query.strip():
        raise EmptyQueryError("query is empty")
    template = template if template is not None else load_prompt(DEFAULT_TEMPLATE)
    return Template(template).safe_substitute(query=query.strip())


def iter_json_objects(raw: str):
    decoder = json.JSONDecoder()
    pos = raw.find("{")
    while pos != -1:
        try:
            obj, end = decoder.raw_decode(raw, pos)
        except (ValueError, RecursionError):
            pos = raw.find("{", pos + 1)
            continue
        if isinstance(obj, dict):
            yield obj
        pos = raw.find("{", end)


def parse_recommendation(raw) -> list[IdealTool]:
    """Pull the ``{"tools": [...]}`` object out of a model reply.

    Surrounding prose and code fences are ignored. Entries without a usable
    name and description are skipped; over-long fields are truncated and the
    list is capped at ``MAX_IDEAL_TOOLS``.
    """
    if isinstance(raw, (bytes, bytearray)):
        raw = raw.decode("utf-8", errors="replace")
    if not isinstance(raw, str):
        raise NoJsonFoundError(f"expected text, got {type(raw).__name__}")
    payload = next((o for o in iter_json_objects(raw) if "tools" in o), None)
    if payload is None:
        raise NoJsonFoundError("no JSON object with a 'tools' key in the response")
    entries = payload["tools"]
    if not isinstance(entries, list):
        raise MalformedEntryError("'tools' is not a list")
    if not entries:
        raise EmptyToolListError("the model recommended no tools")
    tools = []
    for entry in entries:
        if not isinstance(entry, dict):
            continue
        name, desc = entry.get("name"), entry.get("description")
        if not isinstance(name, str) or not isinstance(desc, str):
            continue
        name, desc = name.strip()[:MAX_NAME_LEN], desc.strip()[:MAX_DESCRIPTION_LEN]
        if name and desc:
            tools.append(IdealTool(name, desc))
        if len(tools) == MAX_IDEAL_TOOLS:
            break
    if not tools:
        raise MalformedEntryError("every recommended tool lacked a name or description")
    return tools


_PARSE_ERRORS = (NoJsonFoundError, EmptyToolListError, MalformedEntryError)


def recommend(query: str, llm, template: str | None = None, model: str = "",
              context_window: int = REDUCED_WINDOW) -> RecommenderOutput:
    """One tool-free chat call, plus one retry if the reply does not parse.

    Raises :class:`RecommenderFailed` after the second bad reply; endpoint
    outages (``LlmUnavailableError``) propagate unchanged.
    """
    prompt = build_recommender_prompt(query, template)
    raws, tokens, estimated = [], 0, False
    t0 = time.perf_counter()
    for attempt, text in enumerate((prompt, prompt + JSON_REMINDER), start=1):
        request = ChatRequest(messages=[{"role": "user", "content": text}], tools=None,
                              context_window=context_window, model=model)
        try:
            response = llm.chat(request)
        except ProtocolError as exc:
            log.warning("recommender attempt %d: unreadable response: %s", attempt, exc)
            raws.append("")
            continue
        tokens += response.prompt_tokens
        estimated |= response.tokens_estimated
        raw = response.text or ""
        raws.append(raw)
        try:
            ideal = parse_recommendation(raw)
        except _PARSE_ERRORS as exc:
            log.info("recommender attempt %d unparsable: %s", attempt, exc)
            continue
        return RecommenderOutput(query.strip(), ideal, raw, attempt, tokens,
                                 time.perf_counter() - t0, estimated)
    raise RecommenderFailed("recommender produced no usable JSON after retry", raws, tokens)


def recommendation_text(query_text: str, tool: IdealTool) -> str:
    body = f"{tool.name}: {tool.description}"
    query_text = (query_text or "").strip()
    return f"{query_text} || {body}" if query_text else body


def embed_recommendation(output: RecommenderOutput, embedder) -> list[Embedding]:
    if not output.ideal_tools:
        raise EmptyToolListError("nothing to embed")
    return embedder.embed_many([recommendation_text(output.query_text, t) for t in output.ideal_tools])
