"""Command-line entry point: ``toolgate <command> ...``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from toolgate import augmentation, bench, index, synthetic
from toolgate.controller import MODES, ControllerConfig, SearchLevels
from toolgate.embedding import DETERMINISTIC, KINDS, EmbedderConfig, make_embedder
from toolgate.errors import ToolgateError
from toolgate.llm import DIALECTS, HttpLlmClient, load_llm_config

log = logging.getLogger("toolgate")

MOCK_SCHEME = "mock://"


def _add_llm_args(p):
    p.add_argument("--llm-endpoint",
                   help="chat endpoint URL; mock://synthetic uses the built-in simulated model")
    p.add_argument("--dialect", choices=DIALECTS)
    p.add_argument("--model")
    p.add_argument("--timeout", type=float, dest="timeout_s")
    p.add_argument("--config", help="INI file with an [llm] section")


def _add_embedder_args(p):
    p.add_argument("--embedder", choices=KINDS, default=DETERMINISTIC)
    p.add_argument("--embed-model", default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--embed-endpoint", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="toolgate", description="Less tools on the prompt, fewer wrong calls.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-index", help="build level-1 and level-2 indexes")
    p.add_argument("--tools", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--threshold", type=float, default=index.DEFAULT_DISTANCE_THRESHOLD)
    p.add_argument("--out", required=True)
    p.add_argument("--name", default="idx", help="file stem: <name>.l1.json and <name>.l2.json")
    _add_embedder_args(p)

    p = sub.add_parser("augment", help="sample seeds and generate the level-2 query corpus")
    p.add_argument("--train", required=True)
    p.add_argument("--tools", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--per-category", type=int, default=10)
    p.add_argument("--variants", type=int, default=3)
    p.add_argument("--rouge-min", type=float, default=0.3)
    p.add_argument("--rouge-max", type=float, default=0.9)
    _add_llm_args(p)

    p = sub.add_parser("run", help="evaluate a benchmark")
    p.add_argument("--tools", required=True)
    p.add_argument("--l1")
    p.add_argument("--l2")
    p.add_argument("--bench", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--floor", type=float, default=0.5)
    p.add_argument("--mode", choices=MODES, default="lis")
    p.add_argument("--report", required=True, help="JSON report path")
    p.add_argument("--csv", help="also write per-query rows as CSV")
    p.add_argument("--power-log", help="CSV of (unix_time_s, power_w) samples")
    p.add_argument("--recommender-prompt", help="template file replacing the built-in recommender prompt")
    p.add_argument("--embed-endpoint", default=None)
    _add_llm_args(p)

    p = sub.add_parser("report", help="compare a run against a baseline run")
    p.add_argument("--run", required=True)
    p.add_argument("--baseline", required=True)
    p.add_argument("--out", required=True, help=".csv for a metric table, .json for the normalized report")

    p = sub.add_parser("synth", help="write the synthetic 50-tool fixture")
    p.add_argument("--out", required=True)
    return parser


def make_llm(args, tools=None, queries=None):
    cfg = load_llm_config(getattr(args, "config", None), endpoint=args.llm_endpoint, dialect=args.dialect,
                          model=args.model, timeout_s=args.timeout_s)
    if not cfg.endpoint:
        return None, cfg
    if cfg.endpoint.startswith(MOCK_SCHEME):
        name = cfg.endpoint[len(MOCK_SCHEME):]
        if name != "synthetic":
            raise SystemExit(f"unknown mock endpoint {cfg.endpoint!r}")
        return synthetic.simulated_llm(tools, queries or []), cfg
    return HttpLlmClient(cfg.endpoint, cfg.dialect, cfg.model, cfg.timeout_s), cfg


def _embedder_config(args) -> EmbedderConfig:
    defaults = EmbedderConfig()
    return EmbedderConfig(
        kind=args.embedder,
        model_name=args.embed_model or defaults.model_name,
        dim=args.dim or defaults.dim,
        endpoint=args.embed_endpoint if args.embedder != DETERMINISTIC else None,
    )


def cmd_build_index(args) -> int:
    tools = index.load_tools(args.tools)
    corpus = augmentation.read_queries(args.corpus)
    cfg = _embedder_config(args)
    embedder = make_embedder(cfg)
    l1 = index.build_level1(tools, cfg, embedder)
    l2 = index.build_level2(corpus, tools, cfg, args.threshold, embedder)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    index.save_index(l1, out / f"{args.name}.l1.json")
    index.save_index(l2, out / f"{args.name}.l2.json")
    print(f"level 1: {len(l1)} tools; level 2: {len(l2)} clusters from {len(corpus)} queries -> {out}")
    return 0


def cmd_augment(args) -> int:
    tools = index.load_tools(args.tools)
    train = augmentation.read_queries(args.train)
    config = augmentation.AugmentationConfig(args.per_category, args.variants, args.rouge_min,
                                             args.rouge_max, args.seed)
    llm, cfg = make_llm(args, tools)
    if llm is None:
        log.warning("no LLM endpoint: corpus will hold seed queries only")
    corpus = augmentation.augment(train, [t.name for t in tools], config, llm, cfg.model)
    augmentation.write_queries(corpus, args.out)
    n_gen = sum(q.origin == "generated" for q in corpus)
    print(f"{len(corpus)} queries ({len(corpus) - n_gen} seeds, {n_gen} generated) -> {args.out}")
    return 0


def cmd_run(args) -> int:
    tools = index.load_tools(args.tools)
    queries = bench.load_benchmark(args.bench, tools)
    llm, cfg = make_llm(args, tools, queries)
    if llm is None:
        raise SystemExit("run needs an LLM endpoint (--llm-endpoint, $TOOLGATE_LLM_ENDPOINT or --config)")
    levels = None
    if args.mode == "lis":
        if not args.l1 or not args.l2:
            raise SystemExit("lis mode needs --l1 and --l2")
        l1, l2 = index.load_index(args.l1), index.load_index(args.l2)
        embedder = make_embedder(EmbedderConfig.from_dict(l1.embedder, args.embed_endpoint))
        levels = SearchLevels(l1, l2, embedder)
    template = Path(args.recommender_prompt).read_text(encoding="utf-8") if args.recommender_prompt else None
    config = ControllerConfig(k=args.k, floor=args.floor, mode=args.mode, model=cfg.model,
                              recommender_template=template)
    report = bench.evaluate(queries, tools, levels, llm, args.mode, args.k, config)
    if args.power_log:
        report = bench.with_power(report, args.power_log)
    bench.report_emit(report, args.report, "json")
    if args.csv:
        bench.report_emit(report, args.csv, "csv")
    print(f"{args.mode}: success {report.success_rate:.3f}, tool accuracy {report.tool_accuracy:.3f}, "
          f"mean prompt tokens {report.mean_prompt_tokens or 0:.1f}, levels {report.level_counts}")
    if report.partial:
        print(f"run aborted: {report.error}", file=sys.stderr)
        return 1
    return 0


def cmd_report(args) -> int:
    run, baseline = bench.load_report(args.run), bench.load_report(args.baseline)
    out = Path(args.out)
    if out.suffix == ".json":
        bench.report_emit(bench.normalize_report(run, baseline, Path(args.baseline).stem), out, "json")
    else:
        out.write_text(bench.render_comparison(run, baseline), encoding="utf-8")
    print(f"comparison -> {out}")
    return 0


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    index.save_tools(synthetic.build_tools(), out / "tools.json")
    augmentation.write_queries(synthetic.training_set(), out / "train.jsonl")
    bench.write_benchmark(synthetic.benchmark(), out / "bench.jsonl")
    print(f"tools.json, train.jsonl, bench.jsonl -> {out}")
    return 0


COMMANDS = {"build-index": cmd_build_index, "augment": cmd_augment, "run": cmd_run,
            "report": cmd_report, "synth": cmd_synth}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ToolgateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
