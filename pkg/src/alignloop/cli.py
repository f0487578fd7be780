"""Command line entry point: ingest, run, eval, trace.

Exit codes: 0 success, 1 completed but degraded, 2 usage or data error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields
from importlib import resources
from pathlib import Path

from .backend import Backend
from .corpus import ingest_jsonl, stats
from .errors import AlignLoopError, CorpusNotReady, DuplicateId, MalformedLine
from .evalkit import (
    CITATION_CONVENTION,
    LLMOracle,
    SubstringOracle,
    aggregate,
    label_conversion,
    load_gold,
    score_record,
)
from .gateway import EmbeddingProvider, Gateway, GatewayPolicy, HttpTransport, TapeTransport
from .mockmodel import MockFixture, MockModel
from .pipeline import Pipeline, PipelineConfig
from .retriever import InvertedIndex, Retriever, VectorStore

log = logging.getLogger("alignloop")

OK, DEGRADED, USAGE = 0, 1, 2

ENV = {
    "api_url": "ALIGNLOOP_API_URL",
    "api_key": "ALIGNLOOP_API_KEY",
    "model": "ALIGNLOOP_MODEL",
    "embed_model": "ALIGNLOOP_EMBED_MODEL",
}

DEFAULTS = {
    **{f.name: f.default for f in fields(PipelineConfig)},
    "corpus": None, "index": None, "vectors": None, "embeddings": None, "gold": None,
    "out": "runs", "mock_fixtures": None, "api_url": None, "api_key": None,
    "model": "gpt-3.5-turbo", "embed_model": "bge-large-en-v1.5", "chat_path": "/v1/chat/completions",
    "workers": 4, "max_retries": 2, "max_concurrent": 4, "timeout": 60.0,
    "requests_per_second": None, "oracle": "substring", "tape": None, "replay": None,
    "log_requests": None,
}

# flag dest -> config key
FLAG_KEYS = {"max_iters": "T", "candidates": "N", "window": "w", "mode": "retrieval_mode"}


def bundled(name: str) -> Path:
    return Path(str(resources.files("alignloop") / "data" / name))


def load_config(args: argparse.Namespace) -> dict:
    """defaults < config file < environment < flags."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
    for key, var in ENV.items():
        if os.environ.get(var):
            cfg[key] = os.environ[var]
    for dest, val in vars(args).items():
        if val is None or dest in ("cmd", "func", "config"):
            continue
        cfg[FLAG_KEYS.get(dest, dest)] = val
    return cfg


def redacted(cfg: dict) -> dict:
    return {k: ("***" if k == "api_key" and v else v) for k, v in cfg.items()}


def pipeline_config(cfg: dict) -> PipelineConfig:
    return PipelineConfig(**{f.name: cfg[f.name] for f in fields(PipelineConfig)})


def make_backend(cfg: dict) -> Backend:
    policy = GatewayPolicy(max_retries=int(cfg["max_retries"]),
                           max_concurrent=int(cfg["max_concurrent"]),
                           timeout=float(cfg["timeout"]),
                           requests_per_second=cfg["requests_per_second"])
    embedder = None
    http = None
    if cfg["api_url"]:
        http = HttpTransport(cfg["api_url"], cfg["api_key"] or "", cfg["chat_path"], policy.timeout)
    if cfg["embeddings"] or http is not None:
        if cfg["embeddings"]:
            embedder = EmbeddingProvider.from_jsonl(cfg["embeddings"], transport=http,
                                                    model=cfg["embed_model"])
        else:
            embedder = EmbeddingProvider(transport=http, model=cfg["embed_model"])
    fixture = None
    if cfg["replay"]:
        transport = TapeTransport.load(cfg["replay"])
    elif cfg["backend"] == "mock":
        fixture = MockFixture.load(cfg["mock_fixtures"] or bundled("mock_fixture.json"))
        transport = MockModel(fixture)
    else:
        if http is None:
            raise AlignLoopError(f"llm backend needs {ENV['api_url']} or api_url in the config file")
        transport = http
    gateway = Gateway(transport, policy, embedder=embedder, log_path=cfg["log_requests"])
    model = cfg["model"] if cfg["backend"] == "llm" else "mock"
    return Backend(gateway, model=model, temperature=float(cfg["temperature"]), fixture=fixture)


def _print_config(cfg: dict) -> None:
    print("effective config: " + json.dumps(redacted(cfg), sort_keys=True, default=str), file=sys.stderr)


# -- commands -----------------------------------------------------------------

def cmd_ingest(args) -> int:
    try:
        corpus = ingest_jsonl(args.corpus)
    except (MalformedLine, DuplicateId) as exc:
        print(f"error: {args.corpus}: {exc}", file=sys.stderr)
        return USAGE
    except OSError as exc:
        print(f"error: cannot read {args.corpus}: {exc.strerror or exc}", file=sys.stderr)
        return USAGE
    from .retriever import build_index

    index = build_index(corpus)
    if args.index:
        Path(args.index).parent.mkdir(parents=True, exist_ok=True)
        index.save(args.index)
    print(json.dumps({**stats(corpus), "terms": len(index.postings), "index": args.index}))
    return OK


def _read_queries(args) -> list[str]:
    if args.query:
        return list(args.query)
    lines = Path(args.queries).read_text(encoding="utf-8").splitlines()
    out = []
    for line in lines:
        if not line.strip():
            continue
        out.append(json.loads(line)["query"] if line.lstrip().startswith("{") else line.strip())
    return out


def cmd_run(args) -> int:
    cfg = load_config(args)
    _print_config(cfg)
    if not args.query and not args.queries:
        print("error: give --query or --queries", file=sys.stderr)
        return USAGE
    try:
        if not cfg["index"] or not Path(cfg["index"]).exists():
            raise CorpusNotReady(f"index not found: {cfg['index']}")
        index = InvertedIndex.load(cfg["index"])
        if not len(index.corpus):
            raise CorpusNotReady("index is empty")
        pcfg = pipeline_config(cfg)
        backend = make_backend(cfg)
        store = VectorStore.load_jsonl(cfg["vectors"]) if cfg["vectors"] else None
        retriever = Retriever(index, store, backend.gateway.embed if backend.gateway.embedder else None,
                              pcfg.retrieval_mode)
        queries = _read_queries(args)
    except CorpusNotReady as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE
    except (AlignLoopError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE

    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    pipe = Pipeline(retriever, backend, pcfg)

    def one(item):
        i, q = item
        try:
            res = pipe.run(q)
            text, degraded = res.to_json(), res.degraded
        except AlignLoopError as exc:
            log.error("query %r failed: %s", q, exc)
            text = json.dumps({"query": q, "error": str(exc), "degraded": True}, indent=2) + "\n"
            degraded = True
        (out / f"{i:04d}.json").write_text(text, encoding="utf-8")
        return degraded

    with ThreadPoolExecutor(max(1, int(cfg["workers"]))) as ex:
        flags = list(ex.map(one, enumerate(queries)))
    if cfg["tape"]:
        backend.gateway.save_tape(cfg["tape"])
    done = len(flags) - sum(flags)
    print(f"{len(flags)} queries, {done} clean, {sum(flags)} degraded -> {out}")
    return DEGRADED if any(flags) else OK


def _load_results(results_dir: Path) -> list[dict]:
    out = []
    for p in sorted(results_dir.glob("*.json")):
        if p.name == "report.json":
            continue
        out.append(json.loads(p.read_text(encoding="utf-8")))
    return out


def cmd_eval(args) -> int:
    cfg = load_config(args)
    results_dir = Path(args.results_dir)
    try:
        results = _load_results(results_dir) if results_dir.is_dir() else []
        if not results:
            print(f"error: no results in {results_dir}", file=sys.stderr)
            return USAGE
        if not cfg["gold"]:
            print("error: --gold is required", file=sys.stderr)
            return USAGE
        gold = load_gold(cfg["gold"])
        missing = [r.get("query") for r in results if r.get("query") not in gold]
        if missing:
            print(f"error: no gold record for query {missing[0]!r}", file=sys.stderr)
            return USAGE
        if cfg["index"]:
            corpus = InvertedIndex.load(cfg["index"]).corpus
        else:
            corpus = ingest_jsonl(cfg["corpus"] or bundled("corpus.jsonl"))
        texts = {d.doc_id: d.text for d in corpus}
        oracle = SubstringOracle() if cfg["oracle"] == "substring" else LLMOracle(make_backend(cfg))
        records = []
        for r in results:
            support = {i: texts[i] for i in r.get("support", []) if i in texts}
            records.append(score_record(r, gold[r["query"]], support, oracle,
                                        recall_cap=args.recall_cap))
    except (AlignLoopError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE

    agg = aggregate(records)
    labels = label_conversion([r["label_tally"] for r in results if "label_tally" in r])
    report_dir = Path(cfg["out"]) if args.out else results_dir / "report"
    report_dir.mkdir(parents=True, exist_ok=True)
    report = {"note": CITATION_CONVENTION, "oracle": cfg["oracle"], "aggregate": agg,
              "label_stats": labels.to_dict(), "records": records}
    (report_dir / "report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")

    cols = ["query"] + sorted({k for r in records for k in r} - {"query"})
    with open(report_dir / "metrics.tsv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(cols)
        for r in records:
            w.writerow([r.get(c, "") for c in cols])
    with open(report_dir / "labels.tsv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["label", "count_all", "count_final", "conversion_rate"])
        for l in labels.count_all:
            w.writerow([l, labels.count_all[l], labels.count_final[l], f"{labels.rate(l):.2f}"])
    if not args.no_figures:
        from .plotting import conversion_figure, metrics_figure

        conversion_figure(labels, report_dir / "label_conversion.png")
        metrics_figure(agg, report_dir / "metrics.png")

    width = max(len(k) for k in agg)
    for k, v in agg.items():
        print(f"{k:<{width}}  {v:.4f}")
    print(f"report -> {report_dir}")
    return OK


def cmd_trace(args) -> int:
    try:
        res = json.loads(Path(args.result).read_text(encoding="utf-8"))
        iters = res["iterations"]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"error: cannot read run result {args.result}: {exc}", file=sys.stderr)
        return USAGE
    print(f"query: {res.get('query')}")
    if not iters:
        print("no iterations")
        return OK
    print(f"{'iter':>4}  {'branch':<7} {'ratio':>6}  {'full':>4} {'part':>4} {'none':>4}  verified  selected")
    for it in iters:
        lab = it.get("labels", {})
        ratio = it.get("ratio")
        print(f"{it['iteration']:>4}  {it.get('branch') or '-':<7} "
              f"{'-' if ratio is None else format(ratio, '.2f'):>6}  "
              f"{lab.get('full', 0):>4} {lab.get('partial', 0):>4} {lab.get('none', 0):>4}  "
              f"{'yes' if it.get('verified') else 'no':<8}  {','.join(it.get('selected', []))}")
    print(f"support: {','.join(res.get('support', []))}  verified={res.get('verified')} "
          f"degraded={res.get('degraded')}  docs_retrieved_total={res.get('docs_retrieved_total')}")
    return OK


# -- parser -------------------------------------------------------------------

def _pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--index")
    p.add_argument("--corpus")
    p.add_argument("--vectors", help="document vectors JSONL for dense mode")
    p.add_argument("--embeddings", help="precomputed query embeddings JSONL (sha256, vec)")
    p.add_argument("--out")
    p.add_argument("--k", type=int)
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.add_argument("--candidates", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--window", type=int)
    p.add_argument("--mode", choices=("bm25", "dense"))
    p.add_argument("--backend", choices=("llm", "mock"))
    p.add_argument("--mock-fixtures", dest="mock_fixtures")
    p.add_argument("--temperature", type=float)
    p.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="alignloop", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("ingest", help="validate a JSONL corpus and persist its index")
    p.add_argument("--corpus", required=True)
    p.add_argument("--index", help="output index path")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("run", help="run the align-update loop for one or more queries")
    _pipeline_flags(p)
    p.add_argument("--query", action="append")
    p.add_argument("--queries", help="text file (one query per line) or JSONL with a query field")
    p.add_argument("--tape", help="write the recorded model tape here")
    p.add_argument("--replay", help="replay model replies from a recorded tape")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="score run results against gold answers")
    p.add_argument("results_dir")
    _pipeline_flags(p)
    p.add_argument("--gold")
    p.add_argument("--oracle", choices=("substring", "llm"))
    p.add_argument("--recall-cap", type=int, default=None, dest="recall_cap")
    p.add_argument("--no-figures", action="store_true", dest="no_figures")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("trace", help="per-iteration dump of a run result")
    p.add_argument("result")
    p.set_defaults(func=cmd_trace)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    verbose = args.__dict__.pop("verbose")
    del verbose
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
