"""Benchmark harness: load queries, run them, judge the calls, report metrics."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from toolgate.controller import ControllerConfig, ControllerDecision, SearchLevels, run_query
from toolgate.errors import (
    IoFailure,
    LlmError,
    MissingBaselineMetricError,
    NonMonotoneTimestampsError,
    QuerySetMismatchError,
    SchemaError,
    UnknownGoldToolError,
)
from toolgate.index import ToolSpec
from toolgate.llm import ToolCall

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class GoldCall:
    tool_name: str
    arguments: dict = field(default_factory=dict)


@dataclass(frozen=True)
class BenchQuery:
    id: str
    text: str
    category: str
    gold_calls: tuple
    sequential: bool = False


def _parse_bench_line(d, lineno) -> BenchQuery:
    if not isinstance(d, dict):
        raise SchemaError("record is not an object", lineno)
    for key in ("id", "text", "gold_calls"):
        if key not in d:
            raise SchemaError(f"missing {key!r}", lineno)
    if not isinstance(d["text"], str) or not d["text"].strip():
        raise SchemaError("text must be a non-empty string", lineno)
    calls = d["gold_calls"]
    if not isinstance(calls, list) or not calls:
        raise SchemaError("gold_calls must be a non-empty list", lineno)
    gold = []
    for c in calls:
        name = c.get("tool_name", c.get("name")) if isinstance(c, dict) else None
        args = c.get("arguments", {}) if isinstance(c, dict) else None
        if not isinstance(name, str) or not name or not isinstance(args, dict):
            raise SchemaError(f"bad gold call {c!r}", lineno)
        gold.append(GoldCall(name, args))
    sequential = d.get("sequential", False)
    if not isinstance(sequential, bool):
        raise SchemaError("sequential must be a boolean", lineno)
    return BenchQuery(str(d["id"]), d["text"], str(d.get("category", "default")), tuple(gold), sequential)


def load_benchmark(path, tools: Sequence[ToolSpec] | None = None) -> list[BenchQuery]:
    """Read a JSONL benchmark; with ``tools`` given, every gold tool must exist."""
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read benchmark {path}: {exc}") from exc
    queries = []
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except ValueError as exc:
                raise SchemaError(f"invalid JSON: {exc}", lineno) from exc
            queries.append(_parse_bench_line(d, lineno))
    ids = [q.id for q in queries]
    if len(set(ids)) != len(ids):
        dupes = sorted(k for k, v in Counter(ids).items() if v > 1)
        raise SchemaError(f"duplicate query ids {dupes}")
    if tools is not None:
        names = {t.name for t in tools}
        unknown = [c.tool_name for q in queries for c in q.gold_calls if c.tool_name not in names]
        if unknown:
            raise UnknownGoldToolError(unknown)
    return queries


def write_benchmark(queries: Sequence[BenchQuery], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in queries:
            fh.write(json.dumps({
                "id": q.id, "text": q.text, "category": q.category,
                "gold_calls": [{"tool_name": c.tool_name, "arguments": c.arguments} for c in q.gold_calls],
                "sequential": q.sequential,
            }, ensure_ascii=False) + "\n")


# --- judging --------------------------------------------------------------

def _name(call) -> str:
    return call.tool_name if isinstance(call, GoldCall) else call.name


def judge_tool_accuracy(predicted_calls, gold_calls, sequential: bool = False) -> bool:
    pred = [_name(c) for c in predicted_calls]
    gold = [_name(c) for c in gold_calls]
    if sequential:
        return pred == gold
    return Counter(pred) == Counter(gold)


def value_kind(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "boolean"
    if isinstance(v, (int, float)):
        return "number"
    if isinstance(v, str):
        return "string"
    if isinstance(v, (list, tuple)):
        return "array"
    if isinstance(v, dict):
        return "object"
    return type(v).__name__


def _numeric_string(v) -> bool:
    try:
        return math.isfinite(float(v.strip()))
    except ValueError:
        return False


def type_compatible(gold_value, predicted_value) -> bool:
    gk, pk = value_kind(gold_value), value_kind(predicted_value)
    if gk == "null":
        return True
    if gk == pk:
        return True
    # lenient: "3" is accepted where 3 is expected
    return gk == "number" and pk == "string" and _numeric_string(predicted_value)


def arguments_compatible(gold_args: dict, predicted_args: dict) -> bool:
    """Every gold key present with a type-compatible value; extras are allowed."""
    if not isinstance(predicted_args, dict):
        return False
    return all(k in predicted_args and type_compatible(v, predicted_args[k]) for k, v in gold_args.items())


def _perfect_match(gold, pred) -> bool:
    # bipartite matching over same-name calls (Kuhn's augmenting paths)
    owner = [-1] * len(pred)

    def augment(g, seen):
        for p in range(len(pred)):
            if p in seen or not arguments_compatible(gold[g].arguments, pred[p].arguments):
                continue
            seen.add(p)
            if owner[p] == -1 or augment(owner[p], seen):
                owner[p] = g
                return True
        return False

    return all(augment(g, set()) for g in range(len(gold)))


def judge_success(predicted_calls, gold_calls, sequential: bool = False) -> bool:
    if not judge_tool_accuracy(predicted_calls, gold_calls, sequential):
        return False
    if sequential:
        return all(arguments_compatible(g.arguments, p.arguments) for g, p in zip(gold_calls, predicted_calls))
    by_name: dict[str, tuple[list, list]] = {}
    for g in gold_calls:
        by_name.setdefault(g.tool_name, ([], []))[0].append(g)
    for p in predicted_calls:
        by_name[p.name][1].append(p)
    return all(_perfect_match(g, p) for g, p in by_name.values())


# --- records and reports --------------------------------------------------

@dataclass
class EvalRecord:
    query_id: str
    decision: ControllerDecision
    predicted_calls: list
    tool_correct: bool
    success: bool
    wall_time: float
    prompt_tokens: int
    recommender_time: float = 0.0
    started_at: float = 0.0
    ended_at: float = 0.0
    energy_j: float | None = None
    mean_power_w: float | None = None
    tokens_estimated: bool = False
    levels_tried: list = field(default_factory=list)
    error: str | None = None

    def __post_init__(self):
        if self.success and not self.tool_correct:
            raise ValueError(f"{self.query_id}: success without tool correctness")

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "decision": self.decision.to_dict(),
            "predicted_calls": [c.to_dict() for c in self.predicted_calls],
            "tool_correct": self.tool_correct,
            "success": self.success,
            "wall_time": self.wall_time,
            "recommender_time": self.recommender_time,
            "prompt_tokens": self.prompt_tokens,
            "started_at": self.started_at,
            "ended_at": self.ended_at,
            "energy_j": self.energy_j,
            "mean_power_w": self.mean_power_w,
            "tokens_estimated": self.tokens_estimated,
            "levels_tried": list(self.levels_tried),
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalRecord":
        dec = dict(d["decision"])
        dec["selected_tool_ids"] = tuple(dec["selected_tool_ids"])
        return cls(
            query_id=d["query_id"],
            decision=ControllerDecision(**dec),
            predicted_calls=[ToolCall(c["name"], c["arguments"]) for c in d["predicted_calls"]],
            tool_correct=d["tool_correct"],
            success=d["success"],
            wall_time=d["wall_time"],
            prompt_tokens=d["prompt_tokens"],
            recommender_time=d.get("recommender_time", 0.0),
            started_at=d.get("started_at", 0.0),
            ended_at=d.get("ended_at", 0.0),
            energy_j=d.get("energy_j"),
            mean_power_w=d.get("mean_power_w"),
            tokens_estimated=d.get("tokens_estimated", False),
            levels_tried=list(d.get("levels_tried", [])),
            error=d.get("error"),
        )


@dataclass
class RunReport:
    mode: str
    k: int
    model: str
    n_queries: int
    success_rate: float
    tool_accuracy: float
    mean_wall_time: float | None
    mean_recommender_time: float | None
    mean_prompt_tokens: float | None
    mean_power_w: float | None = None
    energy_gap_fraction: float | None = None
    level_counts: dict = field(default_factory=dict)
    tokens_estimated: bool = False
    partial: bool = False
    error: str | None = None
    baseline: str | None = None
    normalized_time: float | None = None
    normalized_power: float | None = None
    records: list = field(default_factory=list)

    def __post_init__(self):
        for name in ("success_rate", "tool_accuracy"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} {v} outside [0, 1]")

    @property
    def query_ids(self) -> list[str]:
        return [r.query_id for r in self.records]

    def summary(self) -> dict:
        return {k: v for k, v in self.to_dict().items() if k != "records"}

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "mode": self.mode,
            "k": self.k,
            "model": self.model,
            "n_queries": self.n_queries,
            "success_rate": self.success_rate,
            "tool_accuracy": self.tool_accuracy,
            "mean_wall_time": self.mean_wall_time,
            "mean_recommender_time": self.mean_recommender_time,
            "mean_prompt_tokens": self.mean_prompt_tokens,
            "mean_power_w": self.mean_power_w,
            "energy_gap_fraction": self.energy_gap_fraction,
            "level_counts": dict(sorted(self.level_counts.items())),
            "tokens_estimated": self.tokens_estimated,
            "partial": self.partial,
            "error": self.error,
            "baseline": self.baseline,
            "normalized_time": self.normalized_time,
            "normalized_power": self.normalized_power,
            "records": [r.to_dict() for r in self.records],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        if d.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise SchemaError(f"unsupported report schema_version {d.get('schema_version')!r}")
        fields = {k: v for k, v in d.items() if k not in ("schema_version", "records")}
        return cls(**fields, records=[EvalRecord.from_dict(r) for r in d.get("records", [])])


def _mean(values):
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def build_report(records: Sequence[EvalRecord], mode: str, k: int, model: str = "",
                 partial: bool = False, error: str | None = None) -> RunReport:
    records = list(records)
    n = len(records)
    powers = [r.mean_power_w for r in records if r.mean_power_w is not None]
    has_energy_data = any(r.energy_j is not None for r in records)
    return RunReport(
        mode=mode,
        k=k,
        model=model,
        n_queries=n,
        success_rate=sum(r.success for r in records) / n if n else 0.0,
        tool_accuracy=sum(r.tool_correct for r in records) / n if n else 0.0,
        mean_wall_time=_mean([r.wall_time for r in records]),
        mean_recommender_time=_mean([r.recommender_time for r in records]),
        mean_prompt_tokens=_mean([r.prompt_tokens for r in records]),
        mean_power_w=float(np.mean(powers)) if powers else None,
        energy_gap_fraction=(sum(r.energy_j is None for r in records) / n) if (n and has_energy_data) else None,
        level_counts=dict(Counter(r.decision.level for r in records)),
        tokens_estimated=any(r.tokens_estimated for r in records),
        partial=partial,
        error=error,
        records=records,
    )


def evaluate(bench: Sequence[BenchQuery], tools: Sequence[ToolSpec], levels: SearchLevels | None, llm,
             mode: str = "lis", k: int = 5, config: ControllerConfig | None = None,
             clock=time.time) -> RunReport:
    """Run every query once and aggregate; a fatal LLM error stops the run and
    returns what was collected so far with ``partial=True``."""
    config = replace(config, mode=mode, k=k) if config else ControllerConfig(mode=mode, k=k)
    records = []
    for q in bench:
        started = clock()
        t0 = time.perf_counter()
        try:
            run = run_query(q.text, levels, tools, llm, config)
        except LlmError as exc:
            log.error("run aborted at query %s: %s", q.id, exc)
            return build_report(records, mode, k, config.model, partial=True, error=f"{q.id}: {exc}")
        wall = time.perf_counter() - t0
        ended = clock()
        calls = run.result.calls
        tool_ok = judge_tool_accuracy(calls, q.gold_calls, q.sequential)
        records.append(EvalRecord(
            query_id=q.id,
            decision=run.decision,
            predicted_calls=list(calls),
            tool_correct=tool_ok,
            success=tool_ok and judge_success(calls, q.gold_calls, q.sequential),
            wall_time=wall,
            prompt_tokens=run.prompt_tokens,
            recommender_time=run.timings.get("recommender_s", 0.0),
            started_at=started,
            ended_at=ended,
            tokens_estimated=run.tokens_estimated,
            levels_tried=run.levels_tried,
            error=run.result.error,
        ))
    return build_report(records, mode, k, config.model)


# --- power ----------------------------------------------------------------

def read_power_log(path) -> tuple[np.ndarray, np.ndarray]:
    """``(timestamps_s, power_w)`` from a two-column CSV; a header row is skipped."""
    ts, pw = [], []
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read power log {path}: {exc}") from exc
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            try:
                t, p = float(row[0]), float(row[1])
            except (ValueError, IndexError):
                if lineno == 1:
                    continue
                raise SchemaError(f"bad power sample {row!r}", lineno)
            ts.append(t)
            pw.append(p)
    t_arr, p_arr = np.array(ts, dtype=np.float64), np.array(pw, dtype=np.float64)
    if t_arr.size > 1 and np.any(np.diff(t_arr) < 0):
        raise NonMonotoneTimestampsError(f"{path}: timestamps go backwards")
    return t_arr, p_arr


def integrate_power(ts: np.ndarray, pw: np.ndarray, start: float, end: float) -> float | None:
    """Trapezoidal energy in joules over ``[start, end]``, or None if the log
    does not cover the whole window."""
    if ts.size == 0 or end < start or start < ts[0] or end > ts[-1]:
        return None
    inner = (ts > start) & (ts < end)
    x = np.concatenate(([start], ts[inner], [end]))
    y = np.concatenate(([np.interp(start, ts, pw)], pw[inner], [np.interp(end, ts, pw)]))
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) / 2.0))


def ingest_power_log(path, records: Sequence[EvalRecord]) -> list[EvalRecord]:
    ts, pw = read_power_log(path)
    return attach_energy(records, ts, pw)


def attach_energy(records: Sequence[EvalRecord], ts, pw) -> list[EvalRecord]:
    out = []
    for r in records:
        energy = integrate_power(np.asarray(ts, dtype=np.float64), np.asarray(pw, dtype=np.float64),
                                 r.started_at, r.ended_at)
        duration = r.ended_at - r.started_at
        power = energy / duration if energy is not None and duration > 0 else None
        out.append(replace(r, energy_j=energy, mean_power_w=power))
    return out


def with_power(report: RunReport, path) -> RunReport:
    records = ingest_power_log(path, report.records)
    new = build_report(records, report.mode, report.k, report.model, report.partial, report.error)
    if new.energy_gap_fraction is None:
        new.energy_gap_fraction = 1.0 if records else None
    return new


def normalize_report(report: RunReport, baseline: RunReport, baseline_name: str = "all-tools") -> RunReport:
    """Express mean time and power as ratios to a baseline run of the same queries."""
    if set(report.query_ids) != set(baseline.query_ids):
        raise QuerySetMismatchError("reports cover different query sets")
    if not baseline.mean_wall_time or report.mean_wall_time is None:
        raise MissingBaselineMetricError("mean_wall_time missing")
    norm_power = None
    if report.mean_power_w is not None:
        if not baseline.mean_power_w:
            raise MissingBaselineMetricError("baseline has no mean_power_w")
        norm_power = report.mean_power_w / baseline.mean_power_w
    return replace(report, baseline=baseline_name,
                   normalized_time=report.mean_wall_time / baseline.mean_wall_time,
                   normalized_power=norm_power)


# --- emission -------------------------------------------------------------

CSV_COLUMNS = ("query_id", "level", "reason", "n_tools", "tool_correct", "success", "wall_time",
               "recommender_time", "prompt_tokens", "energy_j", "mean_power_w", "error")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    return repr(v) if isinstance(v, float) else str(v)


def render_report(report: RunReport, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in report.records:
            w.writerow([_cell(v) for v in (
                r.query_id, r.decision.level, r.decision.reason, len(r.decision.selected_tool_ids),
                r.tool_correct, r.success, r.wall_time, r.recommender_time, r.prompt_tokens,
                r.energy_j, r.mean_power_w, r.error)])
        return buf.getvalue()
    raise ValueError(f"unknown report format {fmt!r}")


def report_emit(report: RunReport, path, fmt: str = "json") -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(render_report(report, fmt))
    except OSError as exc:
        raise IoFailure(f"cannot write report {path}: {exc}") from exc


def load_report(path) -> RunReport:
    try:
        with open(path, encoding="utf-8") as fh:
            return RunReport.from_dict(json.load(fh))
    except OSError as exc:
        raise IoFailure(f"cannot read report {path}: {exc}") from exc


COMPARISON_METRICS = ("success_rate", "tool_accuracy", "mean_wall_time", "mean_prompt_tokens",
                      "mean_recommender_time", "mean_power_w")


def render_comparison(report: RunReport, baseline: RunReport) -> str:
    """CSV of run vs baseline per metric, with ratio and relative drop."""
    normalized = normalize_report(report, baseline)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("metric", "run", "baseline", "ratio", "drop"))
    for m in COMPARISON_METRICS:
        a, b = getattr(report, m), getattr(baseline, m)
        ratio = a / b if a is not None and b else None
        w.writerow((m, _cell(a), _cell(b), _cell(ratio), _cell(1 - ratio if ratio is not None else None)))
    w.writerow(("normalized_time", _cell(normalized.normalized_time), "1.0", "", ""))
    w.writerow(("normalized_power", _cell(normalized.normalized_power), "1.0" if normalized.normalized_power is not None else "", "", ""))
    return buf.getvalue()
