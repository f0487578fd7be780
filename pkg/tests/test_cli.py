import json

import pytest

from alignloop.cli import main

from conftest import DATA, DIRECT_Q, GATED_Q, GOLDEN, write_jsonl

CORPUS = str(DATA / "corpus.jsonl")
GOLD = str(DATA / "gold.jsonl")


@pytest.fixture
def index(tmp_path):
    path = tmp_path / "idx.json"
    assert main(["ingest", "--corpus", CORPUS, "--index", str(path)]) == 0
    return path


def test_ingest_small_corpus(tmp_path, capsys):
    src = tmp_path / "c.jsonl"
    write_jsonl(src, [{"id": "a", "title": "", "text": "one two"}, {"id": "b", "title": "", "text": "three"}])
    assert main(["ingest", "--corpus", str(src), "--index", str(tmp_path / "i.json")]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["doc_count"] == 2 and stats["avg_doc_len"] == 1.5


def test_ingest_malformed_line_named(tmp_path, capsys):
    src = tmp_path / "c.jsonl"
    rows = [json.dumps({"id": f"d{i}", "title": "", "text": "x y"}) for i in range(6)] + ["{oops"]
    src.write_text("\n".join(rows) + "\n", encoding="utf-8")
    assert main(["ingest", "--corpus", str(src)]) == 2
    assert "line 7" in capsys.readouterr().err


def test_ingest_duplicate_and_unreadable(tmp_path):
    src = tmp_path / "c.jsonl"
    write_jsonl(src, [{"id": "a", "title": "", "text": "x"}, {"id": "a", "title": "", "text": "y"}])
    assert main(["ingest", "--corpus", str(src)]) == 2
    assert main(["ingest", "--corpus", str(tmp_path / "nope.jsonl")]) == 2


def test_run_single_query_matches_golden(index, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--index", str(index), "--query", DIRECT_Q, "--out", str(out)]) == 0
    text = (out / "0000.json").read_text(encoding="utf-8")
    assert json.loads(text)["verified"] is True
    assert text == (GOLDEN / "direct_hit.json").read_text(encoding="utf-8")
    assert "effective config" in capsys.readouterr().err


def test_run_missing_index(tmp_path):
    assert main(["run", "--index", str(tmp_path / "none.json"), "--query", "q", "--out", str(tmp_path)]) == 2


def test_run_one_degraded_exits_1(index, tmp_path):
    fx = json.loads((DATA / "mock_fixture.json").read_text(encoding="utf-8"))
    fx["decompositions"]["Bad query?"] = {"topic": "bad"}  # the mock echoes an unknown role
    (tmp_path / "fx.json").write_text(json.dumps(fx), encoding="utf-8")
    (tmp_path / "q.txt").write_text(f"{DIRECT_Q}\nBad query?\n{GATED_Q}\n", encoding="utf-8")
    out = tmp_path / "out"
    rc = main(["run", "--index", str(index), "--queries", str(tmp_path / "q.txt"), "--out", str(out),
               "--mock-fixtures", str(tmp_path / "fx.json")])
    assert rc == 1
    assert sorted(p.name for p in out.iterdir()) == ["0000.json", "0001.json", "0002.json"]


def test_run_config_precedence(index, tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"k": 3, "tau": 0.5, "api_key": "sk-secret"}), encoding="utf-8")
    monkeypatch.setenv("ALIGNLOOP_API_KEY", "sk-env")
    assert main(["run", "--config", str(cfg), "--k", "2", "--index", str(index),
                 "--query", DIRECT_Q, "--out", str(tmp_path / "o")]) == 0
    err = capsys.readouterr().err
    shown = json.loads(err.split("effective config: ", 1)[1].splitlines()[0])
    assert shown["k"] == 2 and shown["tau"] == 0.5
    assert "sk-" not in err


def test_tape_and_replay(index, tmp_path):
    a, b, tape = tmp_path / "a", tmp_path / "b", tmp_path / "tape.jsonl"
    assert main(["run", "--index", str(index), "--query", GATED_Q, "--out", str(a), "--tape", str(tape)]) == 0
    assert main(["run", "--index", str(index), "--query", GATED_Q, "--out", str(b), "--replay", str(tape)]) == 0
    assert (a / "0000.json").read_bytes() == (b / "0000.json").read_bytes()


def _run_all(index, out):
    return main(["run", "--index", str(index), "--queries", str(DATA / "queries.txt"), "--out", str(out)])


def test_eval_report(index, tmp_path, capsys):
    out = tmp_path / "out"
    assert _run_all(index, out) == 0
    assert main(["eval", str(out), "--gold", GOLD, "--index", str(index)]) == 0
    rep = out / "report"
    report = json.loads((rep / "report.json").read_text(encoding="utf-8"))
    for key in ("em_recall", "citation_recall", "citation_precision", "citation_f1", "claim_recall", "list_f1"):
        assert key in report["aggregate"]
    assert report["aggregate"]["em_recall"] > 0
    assert (rep / "label_conversion.png").stat().st_size > 0
    assert (rep / "metrics.tsv").read_text().startswith("query\t")
    assert "citation_f1" in capsys.readouterr().out


def test_eval_missing_gold_query(index, tmp_path, capsys):
    out = tmp_path / "out"
    _run_all(index, out)
    gold = tmp_path / "g.jsonl"
    write_jsonl(gold, [json.loads(l) for l in open(GOLD, encoding="utf-8")][:2])
    assert main(["eval", str(out), "--gold", str(gold), "--no-figures"]) == 2
    assert "Who founded Acme?" in capsys.readouterr().err


def test_eval_empty_dir(tmp_path):
    assert main(["eval", str(tmp_path), "--gold", GOLD]) == 2


def test_trace(index, tmp_path, capsys):
    out = tmp_path / "out"
    main(["run", "--index", str(index), "--query", GATED_Q, "--out", str(out)])
    capsys.readouterr()
    assert main(["trace", str(out / "0000.json")]) == 0
    text = capsys.readouterr().out
    rows = [l for l in text.splitlines() if l.strip()[:1].isdigit()]
    assert len(rows) == 2 and "pseudo" in rows[1]


def test_trace_corrupt_and_empty(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{nope", encoding="utf-8")
    assert main(["trace", str(bad)]) == 2
    empty = tmp_path / "empty.json"
    empty.write_text(json.dumps({"query": "q", "iterations": []}), encoding="utf-8")
    assert main(["trace", str(empty)]) == 0
    assert "no iterations" in capsys.readouterr().out


def test_idempotent(index, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    _run_all(index, a)
    _run_all(index, b)
    for p in a.glob("*.json"):
        assert p.read_bytes() == (b / p.name).read_bytes()
