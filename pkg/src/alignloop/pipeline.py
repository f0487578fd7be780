"""The align-update retrieval loop and cited answer generation."""
from __future__ import annotations

import json
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .aligner import (
    SyntacticComponents,
    align_components,
    decompose,
    reflect,
    synonym_rewrite,
)
from .backend import Backend
from .corpus import get
from .errors import BackendError, CitationOutOfRange, CorpusNotReady, ReplyParseError
from .prompts import format_docs, parse_statements
from .query_update import MAX_PSEUDO_TOKENS, MAX_QUERY_TOKENS, QueryState, scqu_update
from .rerank_select import PoolEntry, RankedPool, SupportSet, rerank, verify, window_select
from .retriever import Retriever
from .taxonomy import AlignmentLabel, check_tau, classify

log = logging.getLogger(__name__)

LABELS = tuple(l.value for l in AlignmentLabel)


@dataclass
class PipelineConfig:
    k: int = 5
    T: int = 4
    N: int = 20
    tau: float = 0.8
    w: int = 10
    retrieval_mode: str = "bm25"
    backend: str = "mock"
    temperature: float = 0.0
    pool_union: bool = True
    exclude_no_alignment: bool = False
    max_query_tokens: int = MAX_QUERY_TOKENS
    max_pseudo_tokens: int = MAX_PSEUDO_TOKENS
    fga_workers: int = 1
    generate: bool = True

    def __post_init__(self):
        if self.k < 1 or self.T < 1 or self.N < self.k or self.w < 1:
            raise ValueError("need k >= 1, T >= 1, N >= k, w >= 1")
        check_tau(self.tau)
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.retrieval_mode not in ("bm25", "dense"):
            raise ValueError(f"unknown retrieval mode {self.retrieval_mode!r}")
        if self.backend not in ("llm", "mock"):
            raise ValueError(f"unknown backend {self.backend!r}")


@dataclass(frozen=True)
class Statement:
    text: str
    citations: tuple[str, ...] = ()


@dataclass(frozen=True)
class CitedAnswer:
    statements: tuple[Statement, ...] = ()

    @property
    def text(self) -> str:
        return " ".join(s.text for s in self.statements)

    def to_list(self) -> list[dict]:
        return [{"text": s.text, "citations": list(s.citations)} for s in self.statements]

    @classmethod
    def from_list(cls, items: list[dict]) -> "CitedAnswer":
        return cls(tuple(Statement(i["text"], tuple(i.get("citations", []))) for i in items))


@dataclass
class RunResult:
    query: str
    support: SupportSet
    answer: CitedAnswer | None
    iterations_used: int
    docs_retrieved_total: int
    iterations: list[dict] = field(default_factory=list)
    selection: list[dict] = field(default_factory=list)
    label_tally: dict = field(default_factory=dict)
    components: dict = field(default_factory=dict)
    degraded: bool = False

    @property
    def verified(self) -> bool:
        return self.support.verified

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "components": self.components,
            "support": self.support.ids,
            "answer": self.answer.to_list() if self.answer else [],
            "iterations_used": self.iterations_used,
            "verified": self.verified,
            "degraded": self.degraded,
            "docs_retrieved_total": self.docs_retrieved_total,
            "label_tally": self.label_tally,
            "iterations": self.iterations,
            "selection": self.selection,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"


def _answer_from(reply: str, ids: list[str], strict: bool) -> CitedAnswer:
    """Map 1-based citation numbers onto support doc ids."""
    out = []
    for text, cites in parse_statements(reply):
        keep = []
        for c in cites:
            if not 1 <= c <= len(ids):
                if strict:
                    raise ReplyParseError(f"citation [{c}] is outside [1]..[{len(ids)}]")
                continue
            if ids[c - 1] not in keep:
                keep.append(ids[c - 1])
        out.append(Statement(text, tuple(keep)))
    if strict and not out:
        raise ReplyParseError("empty answer")
    return CitedAnswer(tuple(out))


def generate_answer(query: str, support: SupportSet, backend: Backend) -> tuple[CitedAnswer, bool]:
    """Cited answer over ``support``.

    Out-of-range citations get one re-prompt; if they persist they are stripped
    and the returned flag (degraded) is True.
    """
    if not len(support):
        raise ValueError("cannot generate from an empty support set")
    ids = support.ids
    docs = format_docs([{"id": e.doc_id, "title": e.doc.title, "text": e.doc.text}
                        for e in support.entries])

    def salvage(reply: str):
        log.warning("%s", CitationOutOfRange("invalid citations stripped from answer"))
        return _answer_from(reply, ids, strict=False), True

    return backend.ask("generate", {"query": query, "docs": docs},
                       lambda reply: (_answer_from(reply, ids, strict=True), False), salvage)


class Pipeline:
    def __init__(self, retriever: Retriever, backend: Backend, cfg: PipelineConfig | None = None):
        self.retriever = retriever
        self.backend = backend
        self.cfg = cfg or PipelineConfig()
        backend.temperature = self.cfg.temperature

    def _fga(self, components: SyntacticComponents, doc):
        first = align_components(components, doc, self.backend)
        return reflect(components, doc, first, self.backend)

    def run(self, query: str) -> RunResult:
        cfg = self.cfg
        corpus = self.retriever.corpus if self.retriever else None
        if corpus is None or not len(corpus):
            raise CorpusNotReady("no indexed corpus")
        components = decompose(query, self.backend)
        state = QueryState(query)
        support = SupportSet()
        known: dict[str, PoolEntry] = {}
        prev_pool = RankedPool()
        iterations, selection = [], []
        seen_labels: Counter[str] = Counter()
        retrieved_total = 0
        degraded = False
        used = 0

        for i in range(1, cfg.T + 1):
            used = i
            rec: dict = {"iteration": i, "branch": None, "ratio": None, "tau": cfg.tau,
                         "updated_q": None, "top_doc": None}
            if i > 1 and len(support) and len(prev_pool):
                top = prev_pool.entries[0]
                q_prime = synonym_rewrite(components, top.report.reflected, self.backend, query)
                try:
                    state = scqu_update(state, top.report, top.doc, q_prime, cfg.tau, self.backend,
                                        max_query_tokens=cfg.max_query_tokens,
                                        max_pseudo_tokens=cfg.max_pseudo_tokens)
                except BackendError as exc:
                    log.warning("query update failed, keeping previous query: %s", exc)
                    degraded = True
                rec.update(branch=state.branch, ratio=top.report.ratio,
                           updated_q=state.updated_q, top_doc=top.doc_id)
            qstr = state.retrieval_query
            hits = self.retriever.retrieve(qstr, cfg.N, cfg.retrieval_mode)
            retrieved_total += len(hits)

            fresh = [h for h in hits if h.doc_id not in known]
            docs = [get(corpus, h.doc_id) for h in fresh]
            if cfg.fga_workers > 1 and len(docs) > 1:
                with ThreadPoolExecutor(cfg.fga_workers) as ex:
                    verdicts = list(ex.map(lambda d: self._fga(components, d), docs))
            else:
                verdicts = [self._fga(components, d) for d in docs]
            for h, d, v in zip(fresh, docs, verdicts):
                known[h.doc_id] = PoolEntry(classify(components, v, h.doc_id, h.score), d)
            current = []
            for h in hits:  # refresh relevance to the latest retrieval
                e = known[h.doc_id]
                e = PoolEntry(classify(components, e.report.reflected, h.doc_id, h.score), e.doc)
                known[h.doc_id] = e
                current.append(e)
            labels = Counter(e.report.label.value for e in current)
            seen_labels.update(labels)

            candidates = list(known.values()) if cfg.pool_union else current
            pool = rerank(candidates, cfg.exclude_no_alignment)
            support = SupportSet(tuple(known[e.doc_id] for e in support.entries), False, support.degraded)
            win_trace: list = []
            support = window_select(pool, support, cfg.k, cfg.w, self.backend, query, win_trace)
            for t in win_trace:
                t["iteration"] = i
            selection.extend(win_trace)

            ok = False
            if len(support):
                try:
                    ok = verify(query, support, self.backend)
                except BackendError as exc:
                    log.warning("verification failed, treating as 'no': %s", exc)
                    degraded = True
            support = SupportSet(support.entries, ok, support.degraded)
            rec.update(retrieval_query=qstr, retrieved=[h.doc_id for h in hits],
                       labels={l: labels.get(l, 0) for l in LABELS},
                       selected=support.ids, verified=ok)
            iterations.append(rec)
            prev_pool = pool
            if ok:
                break

        degraded = degraded or support.degraded
        answer = None
        if cfg.generate and len(support):
            try:
                answer, repaired = generate_answer(query, support, self.backend)
                degraded = degraded or repaired
            except BackendError as exc:
                log.warning("answer generation failed: %s", exc)
                degraded = True
        final = Counter(e.report.label.value for e in support.entries)
        tally = {"all": {l: seen_labels.get(l, 0) for l in LABELS},
                 "final": {l: final.get(l, 0) for l in LABELS}}
        assert used <= cfg.T and retrieved_total <= cfg.T * cfg.N
        return RunResult(query, support, answer, used, retrieved_total, iterations, selection,
                         tally, components.to_dict(), degraded)


def run_query(query: str, cfg: PipelineConfig, retriever: Retriever, backend: Backend) -> RunResult:
    return Pipeline(retriever, backend, cfg).run(query)
