import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from toolgate.embedding import EmbedderConfig, cosine_similarity, make_embedder
from toolgate.errors import (
    EmptyQueryError,
    EmptyToolListError,
    LlmTimeoutError,
    MalformedEntryError,
    NoJsonFoundError,
    ProtocolError,
    RecommenderFailed,
)
from toolgate.llm import ScriptedLlm
from toolgate.recommender import (
    JSON_REMINDER,
    MAX_DESCRIPTION_LEN,
    MAX_IDEAL_TOOLS,
    MAX_NAME_LEN,
    IdealTool,
    RecommenderOutput,
    build_recommender_prompt,
    embed_recommendation,
    parse_recommendation,
    recommend,
)

WEATHER_TRANSLATE = json.dumps({"tools": [
    {"name": "weather_information", "description": "Fetches current weather data for a city."},
    {"name": "text_translation", "description": "Translates text into a target language."},
]})
QUERY = "What's the weather in New York and translate it to French?"


def test_prompt_has_query_and_no_schemas():
    prompt = build_recommender_prompt(QUERY)
    assert QUERY in prompt
    assert '{"tools"' in prompt
    assert "parameters" not in prompt


def test_prompt_rejects_empty_query():
    with pytest.raises(EmptyQueryError):
        build_recommender_prompt("   ")


def test_custom_template():
    assert build_recommender_prompt("find flights", "Q=$query") == "Q=find flights"


def test_parse_single():
    (tool,) = parse_recommendation('{"tools":[{"name":"weather_information","description":"fetches weather data"}]}')
    assert tool == IdealTool("weather_information", "fetches weather data")


def test_parse_fenced_with_prose():
    raw = f"Sure! Here you go:\n```json\n{WEATHER_TRANSLATE}\n```\nAnything else?"
    assert [t.name for t in parse_recommendation(raw)] == ["weather_information", "text_translation"]


def test_parse_skips_unrelated_objects():
    raw = '{"plan": 2} then {"tools": [{"name": "a", "description": "b"}]}'
    assert parse_recommendation(raw) == [IdealTool("a", "b")]


@pytest.mark.parametrize("raw,error", [
    ("I cannot help", NoJsonFoundError),
    ('{"tools": []}', EmptyToolListError),
    ('{"tools": "weather"}', MalformedEntryError),
    ('{"tools": [{"name": "x"}, {"description": "y"}, 3]}', MalformedEntryError),
])
def test_parse_errors(raw, error):
    with pytest.raises(error):
        parse_recommendation(raw)


def test_parse_truncates_and_caps():
    entries = [{"name": "n" * 100, "description": "d" * 2000}] + [
        {"name": f"t{i}", "description": f"tool {i}"} for i in range(11)]
    tools = parse_recommendation(json.dumps({"tools": entries}))
    assert len(tools) == MAX_IDEAL_TOOLS
    assert len(tools[0].name) == MAX_NAME_LEN and len(tools[0].description) == MAX_DESCRIPTION_LEN


@given(st.binary(max_size=200))
def test_parse_is_total_on_bytes(raw):
    try:
        out = parse_recommendation(raw)
    except (NoJsonFoundError, EmptyToolListError, MalformedEntryError):
        return
    assert 1 <= len(out) <= MAX_IDEAL_TOOLS


@given(st.text(max_size=200))
def test_parse_is_total_on_text(raw):
    try:
        parse_recommendation(raw)
    except (NoJsonFoundError, EmptyToolListError, MalformedEntryError):
        pass


def test_recommend_weather_translation():
    llm = ScriptedLlm([WEATHER_TRANSLATE])
    out = recommend(QUERY, llm)
    assert [t.name for t in out.ideal_tools] == ["weather_information", "text_translation"]
    assert out.attempts == 1 and out.raw_response == WEATHER_TRANSLATE
    assert llm.requests[0].tools is None


def test_recommend_retries_once_with_reminder():
    llm = ScriptedLlm(["Let me think about it.", WEATHER_TRANSLATE])
    out = recommend(QUERY, llm)
    assert out.attempts == 2
    assert llm.requests[1].messages[0]["content"].endswith(JSON_REMINDER)


def test_recommend_fails_after_two_prose_replies():
    llm = ScriptedLlm(["prose", "more prose"])
    with pytest.raises(RecommenderFailed) as info:
        recommend(QUERY, llm)
    assert info.value.raw_responses == ("prose", "more prose")
    assert info.value.prompt_tokens > 0
    assert all(not r.tools for r in llm.requests)


def test_recommend_caps_twelve_entries():
    entries = [{"name": f"t{i}", "description": f"tool {i}"} for i in range(12)]
    assert len(recommend("q", ScriptedLlm([json.dumps({"tools": entries})])).ideal_tools) == 8


def test_recommend_treats_protocol_error_as_bad_attempt():
    out = recommend(QUERY, ScriptedLlm([ProtocolError("garbled"), WEATHER_TRANSLATE]))
    assert out.attempts == 2


def test_recommend_propagates_outage():
    with pytest.raises(LlmTimeoutError):
        recommend(QUERY, ScriptedLlm([LlmTimeoutError("slow")]))


def _output(*tools, query="q"):
    return RecommenderOutput(query, list(tools), "")


def test_embed_recommendation_cardinality_and_determinism():
    emb = make_embedder(EmbedderConfig(dim=32))
    a = IdealTool("weather_information", "fetches weather data")
    vecs = embed_recommendation(_output(a, IdealTool("t", "translate text")), emb)
    assert len(vecs) == 2 and all(abs(v.norm - 1) < 1e-9 for v in vecs)
    twins = embed_recommendation(_output(a, a), emb)
    assert twins[0] == twins[1]
    with pytest.raises(EmptyToolListError):
        embed_recommendation(_output(), emb)


def test_real_description_matches_its_tool(world):
    tool = next(t for t in world.tools if t.name == "get_forecast")
    emb = world.levels.embedder
    (vec,) = embed_recommendation(_output(IdealTool(tool.name, tool.description), query=""), emb)
    scores = dict(zip(world.l1.tool_ids, world.l1.matrix @ vec.values))
    own = scores[tool.id]
    assert own == pytest.approx(cosine_similarity(vec, world.l1.matrix[world.l1.tool_ids.index(tool.id)]))
    assert own > np.max([scores[t] for t in scores if t != tool.id])
    other_domain = [t.id for t in world.tools if not t.description.endswith(tool.description.split(". ", 1)[1])]
    assert own > 0.5 > max(scores[t] for t in other_domain)
