import csv
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from toolgate import synthetic
from toolgate.bench import load_report
from toolgate.cli import main
from toolgate.index import ToolSpec, load_index
from toolgate.llm import ChatRequest, render_response


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--out", str(d)]) == 0
    return d


@pytest.fixture
def ollama_server():
    """A local ollama-dialect endpoint answering from the simulated model."""
    llm = synthetic.simulated_llm()

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
            tools = [ToolSpec.from_dict(t) for t in body.get("tools", [])] or None
            req = ChatRequest(body["messages"], tools, body["options"]["num_ctx"], body["model"])
            payload = json.dumps(render_response(llm.chat(req), "ollama")).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}", llm
    server.shutdown()
    server.server_close()


def _pipeline(d, tmp, endpoint, extra=()):
    corpus, idx = tmp / "corpus.jsonl", tmp / "idx"
    assert main(["augment", "--train", str(d / "train.jsonl"), "--tools", str(d / "tools.json"),
                 "--out", str(corpus), "--seed", "42", "--llm-endpoint", endpoint]) == 0
    assert main(["build-index", "--tools", str(d / "tools.json"), "--corpus", str(corpus),
                 "--threshold", "0.5", "--out", str(idx)]) == 0
    common = ["--tools", str(d / "tools.json"), "--bench", str(d / "bench.jsonl"), "--k", "5",
              "--llm-endpoint", endpoint, *extra]
    assert main(["run", *common, "--l1", str(idx / "idx.l1.json"), "--l2", str(idx / "idx.l2.json"),
                 "--floor", "0.5", "--mode", "lis", "--report", str(tmp / "lis.json"),
                 "--csv", str(tmp / "lis.csv")]) == 0
    assert main(["run", *common, "--mode", "all-tools", "--report", str(tmp / "all.json")]) == 0
    assert main(["report", "--run", str(tmp / "lis.json"), "--baseline", str(tmp / "all.json"),
                 "--out", str(tmp / "cmp.csv")]) == 0
    return load_report(tmp / "lis.json"), load_report(tmp / "all.json")


def test_synth_writes_fixture(fixture_dir):
    assert len(json.loads((fixture_dir / "tools.json").read_text())) == 50
    assert len((fixture_dir / "bench.jsonl").read_text().splitlines()) == 230


def test_full_pipeline_with_mock_endpoint(fixture_dir, tmp_path):
    lis, base = _pipeline(fixture_dir, tmp_path, "mock://synthetic")
    assert lis.n_queries == base.n_queries == 230
    assert lis.success_rate > base.success_rate
    assert lis.mean_prompt_tokens < base.mean_prompt_tokens
    assert len(load_index(tmp_path / "idx" / "idx.l1.json")) == 50
    rows = list(csv.DictReader((tmp_path / "cmp.csv").open()))
    assert {r["metric"] for r in rows} >= {"success_rate", "mean_prompt_tokens", "normalized_time"}
    assert len((tmp_path / "lis.csv").read_text().splitlines()) == 231


def test_pipeline_over_http(fixture_dir, tmp_path, ollama_server, monkeypatch):
    endpoint, llm = ollama_server
    monkeypatch.delenv("TOOLGATE_LLM_ENDPOINT", raising=False)
    lis, base = _pipeline(fixture_dir, tmp_path, endpoint)
    assert lis.success_rate > base.success_rate
    assert all(not r.tools for r in llm.untooled_requests())
    assert any(r.context_window == 8192 for r in llm.requests)


def test_env_endpoint_and_ini(fixture_dir, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("TOOLGATE_LLM_ENDPOINT", "mock://synthetic")
    out = tmp_path / "c.jsonl"
    assert main(["augment", "--train", str(fixture_dir / "train.jsonl"), "--tools",
                 str(fixture_dir / "tools.json"), "--out", str(out)]) == 0
    assert "generated" in capsys.readouterr().out
    monkeypatch.delenv("TOOLGATE_LLM_ENDPOINT")
    ini = tmp_path / "t.ini"
    ini.write_text("[llm]\nendpoint = mock://synthetic\n")
    assert main(["run", "--tools", str(fixture_dir / "tools.json"), "--bench", str(fixture_dir / "bench.jsonl"),
                 "--mode", "all-tools", "--config", str(ini), "--report", str(tmp_path / "r.json")]) == 0


def test_recommender_prompt_flag(fixture_dir, tmp_path):
    tpl = tmp_path / "rec.txt"
    tpl.write_text('Reply with JSON {"tools": [{"name": ..., "description": ...}]}.\nTask: $query\n')
    lis, _ = _pipeline(fixture_dir, tmp_path, "mock://synthetic", ["--recommender-prompt", str(tpl)])
    assert lis.level_counts.get("L1", 0) > 0


def test_user_errors(fixture_dir, tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("TOOLGATE_LLM_ENDPOINT", raising=False)
    assert main(["build-index", "--tools", str(tmp_path / "none.json"), "--corpus", "x",
                 "--out", str(tmp_path)]) == 2
    assert "error:" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["run", "--tools", str(fixture_dir / "tools.json"), "--bench", str(fixture_dir / "bench.jsonl"),
              "--report", str(tmp_path / "r.json")])
    with pytest.raises(SystemExit):
        main(["run", "--mode", "bogus"])


def test_unreachable_endpoint_gives_partial_exit(fixture_dir, tmp_path):
    rc = main(["run", "--tools", str(fixture_dir / "tools.json"), "--bench", str(fixture_dir / "bench.jsonl"),
               "--mode", "all-tools", "--llm-endpoint", "http://127.0.0.1:9", "--timeout", "2",
               "--report", str(tmp_path / "r.json")])
    assert rc == 1
    rep = load_report(tmp_path / "r.json")
    assert rep.partial and rep.n_queries == 0
