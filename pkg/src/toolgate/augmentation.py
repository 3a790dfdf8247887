"""Build the query corpus that level-2 clusters are grown from.

Seed queries are sampled per category from a labelled training set, an LLM
proposes nearby variants, and a ROUGE-L band keeps variants that are related
to their seed without repeating it.
"""
from __future__ import annotations

import json
import logging
import random
import string
from dataclasses import dataclass
from string import Template
from typing import Iterable, Sequence

from toolgate import kernels
from toolgate.errors import (
    EmptyTextError,
    EmptyTrainingSetError,
    IoFailure,
    LlmUnavailableError,
    ProtocolError,
    SchemaError,
    UnparsableGenerationError,
)
from toolgate.index import AugmentedQuery
from toolgate.llm import REDUCED_WINDOW, ChatRequest
from toolgate.recommender import iter_json_objects, load_prompt

log = logging.getLogger(__name__)

_STRIP_PUNCT = str.maketrans("", "", string.punctuation)


@dataclass(frozen=True)
class AugmentationConfig:
    per_category_sample: int = 10
    variants_per_seed: int = 3
    rouge_min: float = 0.3
    rouge_max: float = 0.9
    rng_seed: int = 0

    def __post_init__(self):
        if not 0 <= self.rouge_min < self.rouge_max <= 1:
            raise ValueError("need 0 <= rouge_min < rouge_max <= 1")
        if self.per_category_sample < 1 or self.variants_per_seed < 0:
            raise ValueError("sample sizes must be positive")


@dataclass(frozen=True)
class SeedSample:
    category: str
    queries: tuple


def sample_seeds(training_set: Sequence[AugmentedQuery], config: AugmentationConfig) -> list[SeedSample]:
    """Uniform sample without replacement of up to ``per_category_sample``
    queries per category. Categories are visited in sorted order so a fixed
    ``rng_seed`` always yields the same selection."""
    if not training_set:
        raise EmptyTrainingSetError("training set is empty")
    by_cat: dict[str, list[AugmentedQuery]] = {}
    for q in training_set:
        by_cat.setdefault(q.category, []).append(q)
    rng = random.Random(config.rng_seed)
    samples = []
    for cat in sorted(by_cat):
        pool = by_cat[cat]
        chosen = rng.sample(pool, min(config.per_category_sample, len(pool)))
        samples.append(SeedSample(cat, tuple(_as_seed(q) for q in chosen)))
    return samples


def _as_seed(q: AugmentedQuery) -> AugmentedQuery:
    if q.origin == "seed" and q.rouge_vs_seed is None:
        return q
    return AugmentedQuery(q.id, q.text, q.category, q.gold_tools, "seed", None)


def rouge_tokens(text: str) -> list[str]:
    return [t for t in (w.translate(_STRIP_PUNCT) for w in text.lower().split()) if t]


def rouge_l(candidate: str, reference: str) -> float:
    """Word-level ROUGE-L F1 between two strings."""
    cand, ref = rouge_tokens(candidate), rouge_tokens(reference)
    if not cand or not ref:
        raise EmptyTextError("ROUGE-L needs non-empty token sequences")
    vocab: dict[str, int] = {}
    a = [vocab.setdefault(t, len(vocab)) for t in cand]
    b = [vocab.setdefault(t, len(vocab)) for t in ref]
    lcs = kernels.lcs_length(a, b)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(cand), lcs / len(ref)
    return 2 * p * r / (p + r)


def build_generation_prompt(seed: AugmentedQuery, tool_names: Iterable[str], n: int) -> str:
    return Template(load_prompt("augment_v1.txt")).safe_substitute(
        query=seed.text,
        tools=", ".join(seed.gold_tools),
        catalog=", ".join(sorted(tool_names)),
        n=n,
    )


def parse_variants(raw: str) -> list[dict]:
    payload = next((o for o in iter_json_objects(raw or "") if "variants" in o), None)
    if payload is None or not isinstance(payload["variants"], list):
        raise UnparsableGenerationError("no {'variants': [...]} object in generation")
    return payload["variants"]


def generate_variants(seed: AugmentedQuery, llm, config: AugmentationConfig,
                      tool_ids: Iterable[str], model: str = "") -> list[AugmentedQuery]:
    """Ask the LLM for variants of one seed and keep those inside the ROUGE band.

    A reply that cannot be parsed is retried once; after that the seed is
    skipped with a warning. Endpoint outages propagate.
    """
    known = set(tool_ids)
    prompt = build_generation_prompt(seed, known, config.variants_per_seed)
    entries = None
    for attempt in (1, 2):
        request = ChatRequest(messages=[{"role": "user", "content": prompt}], tools=None,
                              context_window=REDUCED_WINDOW, model=model)
        try:
            entries = parse_variants(llm.chat(request).text or "")
            break
        except LlmUnavailableError:
            raise
        except (UnparsableGenerationError, ProtocolError) as exc:
            log.info("seed %s generation attempt %d unusable: %s", seed.id, attempt, exc)
    if entries is None:
        log.warning("skipping seed %s: generation unparsable after retry", seed.id)
        return []
    kept = []
    for entry in entries:
        if len(kept) == config.variants_per_seed:
            break
        if not isinstance(entry, dict):
            continue
        text, tools = entry.get("text"), entry.get("tools")
        if not isinstance(text, str) or not rouge_tokens(text):
            continue
        if not isinstance(tools, list) or not tools or not all(isinstance(t, str) and t in known for t in tools):
            continue
        score = rouge_l(text, seed.text)
        if not config.rouge_min <= score <= config.rouge_max:
            continue
        kept.append(AugmentedQuery(
            id=f"{seed.id}:g{len(kept)}",
            text=text.strip(),
            category=seed.category,
            gold_tools=tuple(dict.fromkeys(tools)),
            origin="generated",
            rouge_vs_seed=score,
        ))
    return kept


def _flatten(items) -> list[AugmentedQuery]:
    out = []
    for item in items:
        if isinstance(item, SeedSample):
            out.extend(item.queries)
        else:
            out.append(item)
    return out


def _text_key(text: str) -> str:
    return " ".join(text.split())


def assemble_corpus(seeds, variants) -> list[AugmentedQuery]:
    """Seeds then variants; identical texts keep the first (seed) copy and ids
    are made unique by suffixing."""
    corpus, texts, ids = [], set(), set()
    for q in _flatten(seeds) + _flatten(variants):
        key = _text_key(q.text)
        if key in texts:
            continue
        texts.add(key)
        qid, n = q.id, 1
        while qid in ids:
            n += 1
            qid = f"{q.id}~{n}"
        ids.add(qid)
        if qid != q.id:
            q = AugmentedQuery(qid, q.text, q.category, q.gold_tools, q.origin, q.rouge_vs_seed)
        corpus.append(q)
    return corpus


def augment(training_set: Sequence[AugmentedQuery], tool_ids: Iterable[str], config: AugmentationConfig,
            llm=None, model: str = "") -> list[AugmentedQuery]:
    """Sample seeds, generate variants when an LLM is given, and assemble."""
    tool_ids = list(tool_ids)
    seeds = sample_seeds(training_set, config)
    variants = []
    if llm is not None and config.variants_per_seed > 0:
        for sample in seeds:
            for q in sample.queries:
                variants.extend(generate_variants(q, llm, config, tool_ids, model))
    return assemble_corpus(seeds, variants)


def read_queries(path) -> list[AugmentedQuery]:
    """Read a JSONL training set or corpus.

    Lines carry ``gold_tools``, or benchmark-style ``gold_calls`` from which
    the tool names are taken.
    """
    out = []
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                if "gold_tools" not in d and "gold_calls" in d:
                    d = dict(d, gold_tools=list(dict.fromkeys(
                        c.get("tool_name") or c["name"] for c in d["gold_calls"])))
                out.append(AugmentedQuery.from_dict(d))
            except (ValueError, KeyError, TypeError, AttributeError) as exc:
                raise SchemaError(str(exc), lineno) from exc
    return out


def write_queries(queries: Iterable[AugmentedQuery], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in queries:
            fh.write(json.dumps(q.to_dict(), ensure_ascii=False) + "\n")
