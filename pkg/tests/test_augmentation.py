import json
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import rouge_l_reference
from toolgate import synthetic
from toolgate.augmentation import (
    AugmentationConfig,
    assemble_corpus,
    augment,
    generate_variants,
    read_queries,
    rouge_l,
    sample_seeds,
    write_queries,
)
from toolgate.errors import EmptyTextError, EmptyTrainingSetError, LlmTimeoutError, SchemaError
from toolgate.index import AugmentedQuery
from toolgate.llm import ScriptedLlm

WORKED = ("plot fmow captions in uk", "plot fmow captions in france from fall")


def q(i, text, cat="c", tools=("plot",), origin="seed", rouge=None):
    return AugmentedQuery(f"q{i}", text, cat, tools, origin, rouge)


def _variants(*entries):
    return json.dumps({"variants": [{"text": t, "tools": tools} for t, tools in entries]})


# --- rouge ----------------------------------------------------------------

def test_rouge_fixtures():
    assert rouge_l("plot the map", "plot the map") == 1.0
    assert rouge_l("a b c", "d e f") == 0.0
    assert rouge_l(*WORKED) == pytest.approx(2 / 3, abs=1e-12)
    assert rouge_l(*WORKED) == pytest.approx(rouge_l_reference(*WORKED), abs=1e-15)


def test_rouge_ignores_case_and_punctuation():
    assert rouge_l("Plot, the MAP!", "plot the map") == 1.0


def test_rouge_empty():
    with pytest.raises(EmptyTextError):
        rouge_l("...", "text")


words = st.lists(st.sampled_from("alpha beta gamma delta eps zeta".split()), min_size=1, max_size=8).map(" ".join)


@given(words, words)
def test_rouge_properties(a, b):
    r = rouge_l(a, b)
    assert 0.0 <= r <= 1.0
    assert r == pytest.approx(rouge_l(b, a), abs=1e-12)
    assert r == pytest.approx(rouge_l_reference(a, b), abs=1e-12)
    assert rouge_l(a, a) == 1.0


# --- sampling -------------------------------------------------------------

def test_sample_ten_per_category():
    train = [q(f"{c}{i}", f"{c} query {i}", cat=c) for c in "wxyz" for i in range(25)]
    samples = sample_seeds(train, AugmentationConfig(rng_seed=5))
    assert [s.category for s in samples] == list("wxyz")
    assert [len(s.queries) for s in samples] == [10] * 4
    assert all(x.origin == "seed" for s in samples for x in s.queries)
    assert samples == sample_seeds(list(reversed(train))[::-1], AugmentationConfig(rng_seed=5))


def test_undersized_category_and_empty_set():
    samples = sample_seeds([q(i, f"t {i}") for i in range(3)], AugmentationConfig())
    assert len(samples[0].queries) == 3
    with pytest.raises(EmptyTrainingSetError):
        sample_seeds([], AugmentationConfig())


def test_config_bounds():
    with pytest.raises(ValueError):
        AugmentationConfig(rouge_min=0.9, rouge_max=0.3)


# --- generation -----------------------------------------------------------

SEED = q(0, WORKED[1])


def _gen(reply, **cfg):
    return generate_variants(SEED, ScriptedLlm(reply), AugmentationConfig(**cfg), ["plot", "print"])


def test_echo_is_rejected():
    assert _gen([_variants((SEED.text, ["plot"]))]) == []


def test_disjoint_text_is_rejected():
    assert _gen([_variants(("order a pizza now", ["plot"]))]) == []


def test_two_thirds_paraphrase_kept():
    (kept,) = _gen([_variants((WORKED[0], ["plot"]))])
    assert kept.origin == "generated"
    assert kept.rouge_vs_seed == pytest.approx(0.6667, abs=1e-4)
    assert kept.id == "q0:g0"


def test_unknown_tools_rejected():
    assert _gen([_variants((WORKED[0], ["teleport"]))]) == []


def test_unparsable_retry_then_skip():
    assert _gen(["no json", _variants((WORKED[0], ["plot"]))]) != []
    assert _gen(["no json", "still none"]) == []


def test_generation_request_has_no_tools():
    llm = ScriptedLlm([_variants((WORKED[0], ["plot"]))])
    generate_variants(SEED, llm, AugmentationConfig(), ["plot"])
    assert llm.requests[0].tools is None


def test_outage_propagates():
    with pytest.raises(LlmTimeoutError):
        _gen([LlmTimeoutError("slow")])


# --- assembly -------------------------------------------------------------

def test_assemble_counts_and_dedup():
    seeds = [q(i, f"seed {i}") for i in range(40)]
    assert len(assemble_corpus(seeds, [])) == 40
    dup = q(99, "seed 3", origin="generated", rouge=0.5)
    corpus = assemble_corpus(seeds, [dup])
    assert len(corpus) == 40
    assert next(x for x in corpus if x.text == "seed 3").origin == "seed"


def test_assemble_makes_ids_unique():
    corpus = assemble_corpus([q(1, "a"), q(1, "b")], [])
    assert [x.id for x in corpus] == ["q1", "q1~2"]


def test_synthetic_corpus_is_forty_plus_eighty():
    tools = synthetic.build_tools()
    train = synthetic.training_set(domains=["weather", "finance", "email", "maps"])
    cfg = AugmentationConfig(rng_seed=0)
    corpus = augment(train, [t.id for t in tools], cfg, synthetic.simulated_llm(tools))
    counts = Counter(x.origin for x in corpus)
    assert (len(corpus), counts["seed"], counts["generated"]) == (120, 40, 80)
    assert len({x.id for x in corpus}) == 120
    for x in corpus:
        if x.origin == "generated":
            assert cfg.rouge_min <= x.rouge_vs_seed <= cfg.rouge_max
    again = augment(train, [t.id for t in tools], cfg, synthetic.simulated_llm(tools))
    assert again == corpus


def test_seeds_only_without_llm():
    train = [q(i, f"t {i}") for i in range(12)]
    assert len(augment(train, ["plot"], AugmentationConfig())) == 10


def test_jsonl_round_trip(tmp_path):
    items = [q(1, "a"), q(2, "b", origin="generated", rouge=0.5)]
    write_queries(items, tmp_path / "c.jsonl")
    assert read_queries(tmp_path / "c.jsonl") == items


def test_read_accepts_gold_calls_and_reports_line(tmp_path):
    p = tmp_path / "t.jsonl"
    p.write_text('{"id": "a", "text": "x", "gold_calls": [{"tool_name": "f", "arguments": {}}]}\n\n{"id": "b"}\n')
    with pytest.raises(SchemaError) as info:
        read_queries(p)
    assert info.value.line == 3
    p.write_text('{"id": "a", "text": "x", "gold_calls": [{"tool_name": "f", "arguments": {}}]}\n')
    assert read_queries(p)[0].gold_tools == ("f",)
