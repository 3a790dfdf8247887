"""Chat-completions client with tool calling, plus a scripted in-process mock.

Two wire dialects share one interface:

* ``ollama``: ``POST /api/chat`` with ``{"model", "messages", "tools",
  "options": {"num_ctx": ...}}``
* ``openai``: ``POST /v1/chat/completions`` with ``{"model", "messages", "tools"}``
"""
from __future__ import annotations

import configparser
import json
import logging
import math
import os
import re
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence
from urllib.parse import urlsplit

import httpx

from toolgate.errors import (
    HttpError,
    LlmTimeoutError,
    MockScriptExhausted,
    ProtocolError,
    UnreachableError,
)

log = logging.getLogger(__name__)

LLM_ENDPOINT_ENV = "TOOLGATE_LLM_ENDPOINT"
DIALECTS = ("ollama", "openai")
ROLES = ("system", "user", "assistant", "tool")
TEXT, TOOL_CALLS, ERROR_SENTINEL = "text", "tool_calls", "error_sentinel"
REDUCED_WINDOW = 8192
FULL_WINDOW = 16384
DEFAULT_TIMEOUT_S = 120.0

_DEFAULT_PATHS = {"ollama": "/api/chat", "openai": "/v1/chat/completions"}


@dataclass(frozen=True)
class ToolCall:
    name: str
    arguments: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "arguments": self.arguments}


@dataclass
class ChatRequest:
    messages: list
    tools: Sequence | None = None
    context_window: int = REDUCED_WINDOW
    model: str = ""
    temperature: float = 0.0

    def __post_init__(self):
        if not self.messages:
            raise ValueError("a chat request needs at least one message")
        for m in self.messages:
            if m.get("role") not in ROLES or not isinstance(m.get("content"), str):
                raise ValueError(f"bad message {m!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not isinstance(self.context_window, int) or self.context_window <= 0:
            raise ValueError("context_window must be a positive integer")

    @property
    def tool_names(self) -> list[str]:
        return [t.name for t in self.tools or ()]

    def tool_schemas(self) -> list[dict]:
        return [t.to_function_schema() for t in self.tools or ()]

    def prompt_text(self) -> str:
        """Everything the model reads: messages plus serialized tool schemas."""
        parts = [json.dumps(self.messages, ensure_ascii=False)]
        if self.tools:
            parts.append(json.dumps(self.tool_schemas(), ensure_ascii=False))
        return "\n".join(parts)


@dataclass
class ChatResponse:
    kind: str
    text: str | None = None
    tool_calls: list = field(default_factory=list)
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency: float = 0.0
    tokens_estimated: bool = False

    def __post_init__(self):
        if self.kind not in (TEXT, TOOL_CALLS, ERROR_SENTINEL):
            raise ValueError(f"bad response kind {self.kind!r}")
        if self.kind == TOOL_CALLS and not self.tool_calls:
            raise ValueError("tool_calls response without calls")
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be >= 0")

    @property
    def error_message(self) -> str | None:
        if self.kind != ERROR_SENTINEL:
            return None
        return str(sentinel_payload(self.text or "") or "")


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text.encode("utf-8")) / 4)


_FENCE = re.compile(r"^\s*```[a-zA-Z0-9_-]*\s*(.*?)\s*```\s*$", re.S)


def sentinel_payload(content: str):
    """The error message if ``content`` is the ``{"error": ...}`` sentinel, else None."""
    text = content.strip()
    m = _FENCE.match(text)
    if m:
        text = m.group(1)
    if not text.startswith("{"):
        return None
    try:
        obj = json.loads(text)
    except ValueError:
        return None
    if isinstance(obj, dict) and "error" in obj:
        return obj["error"] if obj["error"] is not None else ""
    return None


def classify_text(content: str) -> str:
    return ERROR_SENTINEL if sentinel_payload(content) is not None else TEXT


# --- wire format ----------------------------------------------------------

def serialize_request(request: ChatRequest, dialect: str, model: str = "") -> dict:
    if dialect not in DIALECTS:
        raise ValueError(f"unknown dialect {dialect!r}")
    body: dict[str, Any] = {"model": request.model or model, "messages": list(request.messages)}
    if request.tools:
        body["tools"] = request.tool_schemas()
    if dialect == "ollama":
        body["stream"] = False
        body["options"] = {"num_ctx": request.context_window, "temperature": request.temperature}
    else:
        body["temperature"] = request.temperature
    return body


def _parse_arguments(raw) -> dict:
    if isinstance(raw, dict):
        return raw
    if raw is None or raw == "":
        return {}
    if isinstance(raw, str):
        try:
            parsed = json.loads(raw)
        except ValueError as exc:
            raise ProtocolError(f"tool call arguments are not JSON: {raw[:120]!r}") from exc
        if isinstance(parsed, dict):
            return parsed
    raise ProtocolError(f"tool call arguments must be an object, got {type(raw).__name__}")


def _parse_tool_calls(calls) -> list[ToolCall]:
    if not isinstance(calls, list):
        raise ProtocolError("tool_calls must be a list")
    out = []
    for c in calls:
        fn = c.get("function") if isinstance(c, dict) else None
        if not isinstance(fn, dict) or not isinstance(fn.get("name"), str) or not fn["name"]:
            raise ProtocolError(f"malformed tool call {c!r}")
        out.append(ToolCall(fn["name"], _parse_arguments(fn.get("arguments"))))
    return out


def parse_response(body: dict, dialect: str) -> tuple[str, str | None, list, int | None, int | None]:
    """Decode a server body into ``(kind, text, tool_calls, prompt_tokens, completion_tokens)``."""
    if not isinstance(body, dict):
        raise ProtocolError("response body is not a JSON object")
    try:
        if dialect == "ollama":
            msg = body["message"]
            p_tok, c_tok = body.get("prompt_eval_count"), body.get("eval_count")
        else:
            msg = body["choices"][0]["message"]
            usage = body.get("usage") or {}
            p_tok, c_tok = usage.get("prompt_tokens"), usage.get("completion_tokens")
    except (KeyError, IndexError, TypeError) as exc:
        raise ProtocolError(f"unexpected {dialect} response shape: {exc!r}") from exc
    if not isinstance(msg, dict):
        raise ProtocolError("message is not an object")
    content = msg.get("content") or ""
    if not isinstance(content, str):
        raise ProtocolError("message content is not a string")
    calls = msg.get("tool_calls")
    for tok in (p_tok, c_tok):
        if tok is not None and (not isinstance(tok, int) or tok < 0):
            raise ProtocolError(f"bad token count {tok!r}")
    if calls:
        return TOOL_CALLS, content or None, _parse_tool_calls(calls), p_tok, c_tok
    return classify_text(content), content, [], p_tok, c_tok


def render_response(response: ChatResponse, dialect: str) -> dict:
    """Server-side encoding of a response; the inverse of :func:`parse_response`."""
    msg: dict[str, Any] = {"role": "assistant", "content": response.text or ""}
    if response.kind == TOOL_CALLS:
        if dialect == "ollama":
            msg["tool_calls"] = [{"function": {"name": c.name, "arguments": c.arguments}} for c in response.tool_calls]
        else:
            msg["tool_calls"] = [
                {"id": f"call_{i}", "type": "function",
                 "function": {"name": c.name, "arguments": json.dumps(c.arguments)}}
                for i, c in enumerate(response.tool_calls)
            ]
    if dialect == "ollama":
        return {"model": "", "message": msg, "done": True,
                "prompt_eval_count": response.prompt_tokens, "eval_count": response.completion_tokens}
    return {
        "choices": [{"index": 0, "message": msg, "finish_reason": "tool_calls" if response.tool_calls else "stop"}],
        "usage": {"prompt_tokens": response.prompt_tokens, "completion_tokens": response.completion_tokens},
    }


# --- clients --------------------------------------------------------------

class HttpLlmClient:
    """Blocking HTTP client for one endpoint; safe to share between threads."""

    def __init__(self, endpoint: str, dialect: str = "ollama", model: str = "",
                 timeout_s: float = DEFAULT_TIMEOUT_S, transport: httpx.BaseTransport | None = None):
        if dialect not in DIALECTS:
            raise ValueError(f"unknown dialect {dialect!r}")
        if urlsplit(endpoint).path in ("", "/"):
            endpoint = endpoint.rstrip("/") + _DEFAULT_PATHS[dialect]
        self.url = endpoint
        self.dialect = dialect
        self.model = model
        self._client = httpx.Client(timeout=timeout_s, transport=transport)

    def chat(self, request: ChatRequest) -> ChatResponse:
        body = serialize_request(request, self.dialect, self.model)
        t0 = time.perf_counter()
        try:
            resp = self._client.post(self.url, json=body)
        except httpx.TimeoutException as exc:
            raise LlmTimeoutError(f"{self.url}: {exc}") from exc
        except httpx.HTTPError as exc:
            raise UnreachableError(f"{self.url}: {exc}") from exc
        latency = time.perf_counter() - t0
        if not 200 <= resp.status_code < 300:
            raise HttpError(resp.status_code, resp.text)
        try:
            data = resp.json()
        except ValueError as exc:
            raise ProtocolError(f"response is not JSON: {resp.text[:200]!r}") from exc
        kind, text, calls, p_tok, c_tok = parse_response(data, self.dialect)
        estimated = p_tok is None or c_tok is None
        if p_tok is None:
            p_tok = estimate_tokens(request.prompt_text())
        if c_tok is None:
            completion = text or ""
            if calls:
                completion += json.dumps([c.to_dict() for c in calls])
            c_tok = estimate_tokens(completion)
        return ChatResponse(kind, text, calls, p_tok, c_tok, latency, estimated)

    def close(self):
        self._client.close()


Reply = Any  # str | dict | list[ToolCall] | ChatResponse | BaseException | Callable[[ChatRequest], Reply]


class ScriptedLlm:
    """In-process mock that answers from a script and records every request.

    ``script`` is consumed in call order. ``rules`` are ``(matcher, reply)``
    pairs checked first on every call and never consumed. A reply may be a
    string (message content), a list of :class:`ToolCall`, a dict with a
    ``tool_calls`` key, a ready :class:`ChatResponse`, an exception instance
    (raised), or a callable that receives the request and returns any of these.
    Running past the end of the script raises :class:`MockScriptExhausted`.
    """

    def __init__(self, script: Sequence[Reply] = (), rules: Sequence[tuple[Callable, Reply]] = ()):
        self.script = list(script)
        self.rules = list(rules)
        self.requests: list[ChatRequest] = []

    def chat(self, request: ChatRequest) -> ChatResponse:
        t0 = time.perf_counter()
        self.requests.append(request)
        for matcher, reply in self.rules:
            if matcher(request):
                break
        else:
            if not self.script:
                raise MockScriptExhausted(f"script exhausted at call {len(self.requests)}")
            reply = self.script.pop(0)
        while callable(reply) and not isinstance(reply, (ChatResponse, BaseException)):
            reply = reply(request)
        if isinstance(reply, BaseException):
            raise reply
        response = _coerce_reply(reply)
        if not response.prompt_tokens:
            response.prompt_tokens = estimate_tokens(request.prompt_text())
            response.tokens_estimated = True
        if not response.completion_tokens:
            response.completion_tokens = estimate_tokens(response.text or "")
        response.latency = time.perf_counter() - t0
        return response

    @property
    def call_count(self) -> int:
        return len(self.requests)

    def untooled_requests(self) -> list[ChatRequest]:
        return [r for r in self.requests if not r.tools]


def _coerce_reply(reply) -> ChatResponse:
    if isinstance(reply, ChatResponse):
        return ChatResponse(reply.kind, reply.text, list(reply.tool_calls), reply.prompt_tokens,
                            reply.completion_tokens, 0.0, reply.tokens_estimated)
    if isinstance(reply, str):
        return ChatResponse(classify_text(reply), reply)
    if isinstance(reply, dict) and "tool_calls" in reply:
        calls = [c if isinstance(c, ToolCall) else ToolCall(c["name"], _parse_arguments(c.get("arguments")))
                 for c in reply["tool_calls"]]
        return ChatResponse(TOOL_CALLS, reply.get("text"), calls)
    if isinstance(reply, list) and all(isinstance(c, ToolCall) for c in reply):
        return ChatResponse(TOOL_CALLS, None, list(reply))
    raise TypeError(f"unsupported scripted reply {reply!r}")


@dataclass
class LlmConfig:
    endpoint: str | None = None
    dialect: str = "ollama"
    model: str = ""
    timeout_s: float = DEFAULT_TIMEOUT_S


def load_llm_config(path=None, **overrides) -> LlmConfig:
    """Read the ``[llm]`` section of an INI file; explicit overrides and
    ``$TOOLGATE_LLM_ENDPOINT`` take precedence."""
    cfg = LlmConfig()
    if path:
        parser = configparser.ConfigParser()
        if not parser.read(path):
            raise FileNotFoundError(path)
        if parser.has_section("llm"):
            sec = parser["llm"]
            cfg.endpoint = sec.get("endpoint", cfg.endpoint)
            cfg.dialect = sec.get("dialect", cfg.dialect)
            cfg.model = sec.get("model", cfg.model)
            cfg.timeout_s = sec.getfloat("timeout_s", cfg.timeout_s)
    env = os.environ.get(LLM_ENDPOINT_ENV)
    if env:
        cfg.endpoint = env
    for k, v in overrides.items():
        if v is not None:
            setattr(cfg, k, v)
    return cfg
