import csv
import io
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from judge_cases import CASES
from oracles import trapezoid
from toolgate import synthetic
from toolgate.bench import (
    CSV_COLUMNS,
    BenchQuery,
    EvalRecord,
    GoldCall,
    RunReport,
    attach_energy,
    build_report,
    evaluate,
    integrate_power,
    judge_success,
    judge_tool_accuracy,
    load_benchmark,
    load_report,
    normalize_report,
    read_power_log,
    render_comparison,
    render_report,
    report_emit,
    type_compatible,
    with_power,
    write_benchmark,
)
from toolgate.controller import L1, L3, SCORE_ARBITRATION, ControllerDecision
from toolgate.errors import (
    IoFailure,
    MissingBaselineMetricError,
    NonMonotoneTimestampsError,
    QuerySetMismatchError,
    SchemaError,
    UnknownGoldToolError,
)
from toolgate.llm import ScriptedLlm, ToolCall

import numpy as np


def record(qid, success=True, tool_correct=True, wall=1.0, start=0.0, end=None, level=L1):
    decision = ControllerDecision(level, ("a",), 0.7, 0.6, 5, SCORE_ARBITRATION)
    return EvalRecord(qid, decision, [ToolCall("a", {})], tool_correct, success, wall, 100,
                      started_at=start, ended_at=start + wall if end is None else end)


def report(walls, power=None, ids=None):
    ids = ids or [f"q{i}" for i in range(len(walls))]
    rep = build_report([record(q, wall=w) for q, w in zip(ids, walls)], "lis", 5)
    rep.mean_power_w = power
    return rep


# --- loading --------------------------------------------------------------

def test_synthetic_benchmark_round_trip(tmp_path):
    bench = synthetic.benchmark()
    assert len(bench) == 230
    write_benchmark(bench, tmp_path / "b.jsonl")
    assert len((tmp_path / "b.jsonl").read_text().splitlines()) == 230
    assert load_benchmark(tmp_path / "b.jsonl", synthetic.build_tools()) == bench


def test_schema_error_reports_line(tmp_path):
    p = tmp_path / "b.jsonl"
    p.write_text('{"id": "a", "text": "x", "gold_calls": [{"tool_name": "f"}]}\n{"id": "b", "text": "y"}\n')
    with pytest.raises(SchemaError) as info:
        load_benchmark(p)
    assert info.value.line == 2


@pytest.mark.parametrize("line", [
    "not json",
    '{"id": "a", "text": "", "gold_calls": [{"tool_name": "f"}]}',
    '{"id": "a", "text": "x", "gold_calls": []}',
    '{"id": "a", "text": "x", "gold_calls": [{"arguments": {}}]}',
    '{"id": "a", "text": "x", "gold_calls": [{"tool_name": "f"}], "sequential": "yes"}',
])
def test_bad_lines(tmp_path, line):
    p = tmp_path / "b.jsonl"
    p.write_text(line + "\n")
    with pytest.raises(SchemaError):
        load_benchmark(p)


def test_duplicate_ids_and_unknown_tool(tmp_path, small_tools):
    p = tmp_path / "b.jsonl"
    row = {"id": "a", "text": "x", "gold_calls": [{"tool_name": "frobnicate"}]}
    p.write_text(json.dumps(row) + "\n")
    with pytest.raises(UnknownGoldToolError) as info:
        load_benchmark(p, small_tools)
    assert info.value.names == ["frobnicate"]
    p.write_text((json.dumps(row) + "\n") * 2)
    with pytest.raises(SchemaError):
        load_benchmark(p)
    with pytest.raises(IoFailure):
        load_benchmark(tmp_path / "missing.jsonl")


# --- judging --------------------------------------------------------------

@pytest.mark.parametrize("pred,gold,seq,tool_ok,ok", CASES, ids=[f"case{i + 1}" for i in range(len(CASES))])
def test_hand_labelled_cases(pred, gold, seq, tool_ok, ok):
    assert judge_tool_accuracy(pred, gold, seq) == tool_ok
    assert judge_success(pred, gold, seq) == ok


def test_type_compatibility_examples():
    assert type_compatible(3, "3")
    assert not type_compatible("3", 3)
    assert not type_compatible(1.0, "nan")
    assert type_compatible(None, {"x": 1})


names = st.sampled_from("abc")
calls = st.lists(st.tuples(names, st.dictionaries(st.sampled_from("xyz"), st.integers() | st.text(max_size=2))),
                 max_size=4)


@given(calls, calls, st.booleans())
def test_success_implies_tool_correct(pred, gold, seq):
    p = [ToolCall(n, a) for n, a in pred]
    g = [GoldCall(n, a) for n, a in gold]
    if judge_success(p, g, seq):
        assert judge_tool_accuracy(p, g, seq)
    assert judge_success([ToolCall(n, a) for n, a in gold], g, seq) == judge_tool_accuracy(g, g, seq)


def test_record_rejects_success_without_tool():
    with pytest.raises(ValueError):
        record("q", success=True, tool_correct=False)


# --- aggregation ----------------------------------------------------------

def test_three_of_four():
    recs = [record(f"q{i}", success=i != 2) for i in range(4)]
    rep = build_report(recs, "lis", 5)
    assert rep.success_rate == 0.75 and rep.tool_accuracy == 1.0
    assert rep.level_counts == {L1: 4}


def test_report_rates_are_bounded():
    with pytest.raises(ValueError):
        RunReport("lis", 5, "", 1, 1.5, 1.0, None, None, None)


def test_all_tools_mode_uses_level_three():
    tools = synthetic.build_tools()
    bench = synthetic.benchmark()[:12]
    rep = evaluate(bench, tools, None, synthetic.simulated_llm(tools, bench), mode="all-tools")
    assert rep.level_counts == {L3: 12}
    assert all(r.decision.reason == "all-tools-mode" for r in rep.records)


def test_fatal_error_gives_partial_report():
    tools = synthetic.build_tools()
    bench = synthetic.benchmark()[:3]
    llm = ScriptedLlm([[ToolCall(c.tool_name, c.arguments) for c in bench[0].gold_calls]])
    rep = evaluate(bench, tools, None, llm, mode="all-tools")
    assert rep.partial and rep.n_queries == 1 and bench[1].id in rep.error


# --- power ----------------------------------------------------------------

def _log(tmp_path, rows, header=True):
    p = tmp_path / "power.csv"
    p.write_text(("timestamp,watts\n" if header else "") + "".join(f"{t},{w}\n" for t, w in rows))
    return p


def test_constant_power_energy():
    ts = np.arange(0, 21, dtype=float)
    assert integrate_power(ts, np.full(21, 26.0), 0, 20) == pytest.approx(520.0)
    assert integrate_power(ts, np.full(21, 22.0), 2, 19) == pytest.approx(374.0)
    assert integrate_power(ts, np.full(21, 22.0), -1, 19) is None


@given(st.lists(st.floats(0, 500), min_size=2, max_size=30), st.floats(0, 1), st.floats(0, 1))
def test_integration_matches_oracle(watts, a, b):
    ts = np.arange(len(watts), dtype=float) * 0.5
    start, end = sorted((a * ts[-1], b * ts[-1]))
    got = integrate_power(ts, np.array(watts), start, end)
    assert got == pytest.approx(trapezoid(list(ts), watts, start, end), rel=1e-9, abs=1e-6)


def test_read_power_log(tmp_path):
    ts, pw = read_power_log(_log(tmp_path, [(0, 20), (1, 22)]))
    assert ts.tolist() == [0, 1] and pw.tolist() == [20, 22]
    with pytest.raises(NonMonotoneTimestampsError):
        read_power_log(_log(tmp_path, [(0, 20), (2, 22), (1, 21)]))


def test_empty_log_leaves_full_gap(tmp_path):
    rep = with_power(report([1.0, 2.0]), _log(tmp_path, []))
    assert rep.energy_gap_fraction == 1.0
    assert rep.mean_power_w is None


def test_with_power_per_query(tmp_path):
    rep = report([20.0])
    rep = with_power(rep, _log(tmp_path, [(t, 26) for t in range(0, 25)]))
    assert rep.records[0].energy_j == pytest.approx(520.0)
    assert rep.mean_power_w == pytest.approx(26.0)
    assert rep.energy_gap_fraction == 0.0


def test_partial_coverage_gap(tmp_path):
    recs = attach_energy([record("a", wall=2, start=0), record("b", wall=2, start=10)], [0, 5], [10, 10])
    assert recs[0].energy_j == pytest.approx(20.0) and recs[1].energy_j is None
    assert build_report(recs, "lis", 5).energy_gap_fraction == 0.5


# --- normalization and emission -------------------------------------------

def test_normalized_time_and_power():
    base = report([30.0], power=27.0)
    run = normalize_report(report([17.0], power=22.0), base)
    assert run.normalized_time == pytest.approx(0.5667, abs=1e-4)
    assert run.normalized_power == pytest.approx(0.8148, abs=1e-4)
    assert run.baseline == "all-tools"
    me = normalize_report(base, base)
    assert (me.normalized_time, me.normalized_power) == (1.0, 1.0)


def test_normalization_errors():
    with pytest.raises(QuerySetMismatchError):
        normalize_report(report([1.0], ids=["a"]), report([1.0], ids=["b"]))
    with pytest.raises(MissingBaselineMetricError):
        normalize_report(report([1.0], power=20.0), report([1.0]))


def test_json_and_csv_emission(tmp_path):
    rep = report([1.0, 2.0, 3.0])
    report_emit(rep, tmp_path / "r.json")
    assert load_report(tmp_path / "r.json").to_dict() == rep.to_dict()
    rows = list(csv.reader(io.StringIO(render_report(rep, "csv"))))
    assert len(rows) == 4 and tuple(rows[0]) == CSV_COLUMNS
    first = render_report(rep, "json").encode()
    assert render_report(load_report(tmp_path / "r.json"), "json").encode() == first
    with pytest.raises(ValueError):
        render_report(rep, "xml")


def test_load_report_rejects_other_schema(tmp_path):
    d = report([1.0]).to_dict()
    d["schema_version"] = 2
    (tmp_path / "r.json").write_text(json.dumps(d))
    with pytest.raises(SchemaError):
        load_report(tmp_path / "r.json")


def test_comparison_csv():
    rows = list(csv.DictReader(io.StringIO(render_comparison(report([17.0], 22.0), report([30.0], 27.0)))))
    by = {r["metric"]: r for r in rows}
    assert float(by["mean_wall_time"]["drop"]) == pytest.approx(0.4333, abs=1e-4)
    assert float(by["mean_power_w"]["drop"]) == pytest.approx(0.1852, abs=1e-4)
    assert float(by["normalized_time"]["run"]) == pytest.approx(17 / 30)


def test_evaluation_is_deterministic(world):
    bench = world.bench[:40]

    def strip(rep):
        d = rep.to_dict()
        for k in ("mean_wall_time", "mean_recommender_time"):
            d.pop(k)
        for r in d["records"]:
            for k in ("wall_time", "recommender_time", "started_at", "ended_at"):
                r.pop(k)
        return d

    a = evaluate(bench, world.tools, world.levels, world.llm())
    b = evaluate(bench, world.tools, world.levels, world.llm())
    assert strip(a) == strip(b)
    assert a.success_rate <= a.tool_accuracy


def test_bench_query_equality():
    q = BenchQuery("a", "x", "c", (GoldCall("f", {}),))
    assert q == BenchQuery("a", "x", "c", (GoldCall("f", {}),))
