"""Lexical (Okapi BM25) and dense (cosine) ranking over a corpus."""
from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .corpus import Corpus, Document, tokenize
from .errors import DimensionMismatch, MalformedLine, ProviderUnavailable

K1 = 1.2
B = 0.75


@dataclass(frozen=True)
class ScoredDoc:
    doc_id: str
    score: float
    rank: int


def _ranked(scores: dict[str, float], n: int) -> list[ScoredDoc]:
    if n <= 0:
        return []
    order = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[:n]
    return [ScoredDoc(d, s, i) for i, (d, s) in enumerate(order, 1)]


@dataclass
class InvertedIndex:
    postings: dict[str, list[tuple[str, int]]]
    doc_freq: dict[str, int]
    doc_len: dict[str, int]
    corpus: Corpus
    k1: float = K1
    b: float = B

    @property
    def n_docs(self) -> int:
        return len(self.doc_len)

    @property
    def avg_doc_len(self) -> float:
        return self.corpus.avg_doc_len

    def idf(self, term: str) -> float:
        df = self.doc_freq.get(term, 0)
        return math.log(1.0 + (self.n_docs - df + 0.5) / (df + 0.5))

    def to_dict(self) -> dict:
        return {
            "k1": self.k1,
            "b": self.b,
            "documents": [d.to_dict() for d in self.corpus],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), ensure_ascii=False) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "InvertedIndex":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        corpus = Corpus.from_documents(
            Document(d["id"], d["title"], d["text"]) for d in obj["documents"]
        )
        return build_index(corpus, k1=obj.get("k1", K1), b=obj.get("b", B))


def build_index(corpus: Corpus, k1: float = K1, b: float = B) -> InvertedIndex:
    postings: dict[str, list[tuple[str, int]]] = defaultdict(list)
    doc_len = {}
    for doc, n_tok in zip(corpus.documents, corpus.token_counts):
        doc_len[doc.doc_id] = n_tok
        for term, tf in Counter(tokenize(doc.text)).items():
            postings[term].append((doc.doc_id, tf))
    doc_freq = {t: len(p) for t, p in postings.items()}
    return InvertedIndex(dict(postings), doc_freq, doc_len, corpus, k1, b)


def bm25_search(index: InvertedIndex, query: str, n: int) -> list[ScoredDoc]:
    """Top-``n`` documents by Okapi BM25; zero-score documents are dropped."""
    if n <= 0:
        return []
    scores: dict[str, float] = defaultdict(float)
    avgdl = index.avg_doc_len
    for term in tokenize(query):
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = index.idf(term)
        for doc_id, tf in plist:
            norm = index.k1 * (1.0 - index.b + index.b * index.doc_len[doc_id] / avgdl)
            scores[doc_id] += idf * tf * (index.k1 + 1.0) / (tf + norm)
    return _ranked({d: s for d, s in scores.items() if s > 0.0}, n)


@dataclass
class VectorStore:
    ids: list[str]
    matrix: np.ndarray  # shape (n_docs, dimension), rows L2-normalised
    dimension: int

    @classmethod
    def from_mapping(cls, vectors: dict[str, Sequence[float]]) -> "VectorStore":
        ids = list(vectors)
        if not ids:
            return cls([], np.zeros((0, 0)), 0)
        mat = np.asarray([vectors[i] for i in ids], dtype=float)
        if mat.ndim != 2:
            raise DimensionMismatch("all vectors must share one dimension")
        if not np.isfinite(mat).all():
            raise ValueError("vectors contain NaN or Inf")
        norms = np.linalg.norm(mat, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        return cls(ids, mat / norms, mat.shape[1])

    @classmethod
    def load_jsonl(cls, path: str | Path) -> "VectorStore":
        vectors: dict[str, list[float]] = {}
        dim = None
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    doc_id, vec = obj["id"], [float(x) for x in obj["vec"]]
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise MalformedLine(line_no, str(exc)) from None
                if dim is None:
                    dim = len(vec)
                elif len(vec) != dim:
                    raise DimensionMismatch(f"line {line_no}: expected {dim} components, got {len(vec)}")
                vectors[doc_id] = vec
        return cls.from_mapping(vectors)


def vector_search(store: VectorStore, query_vec: Sequence[float], n: int) -> list[ScoredDoc]:
    """Top-``n`` documents by cosine similarity, ties broken by ascending id."""
    q = np.asarray(query_vec, dtype=float)
    if q.shape != (store.dimension,):
        raise DimensionMismatch(f"query has dimension {q.size}, store has {store.dimension}")
    if n <= 0 or not store.ids:
        return []
    qn = np.linalg.norm(q)
    sims = store.matrix @ (q / qn if qn else q)
    return _ranked({d: float(s) for d, s in zip(store.ids, sims)}, n)


@dataclass
class Retriever:
    """Single entry point the pipeline calls once per iteration."""

    index: InvertedIndex
    store: VectorStore | None = None
    embed: Callable[[list[str]], list[list[float]]] | None = None
    mode: str = "bm25"
    calls: int = field(default=0, compare=False)

    @property
    def corpus(self) -> Corpus:
        return self.index.corpus

    def retrieve(self, query: str, n: int, mode: str | None = None) -> list[ScoredDoc]:
        mode = mode or self.mode
        self.calls += 1
        if mode == "bm25":
            return bm25_search(self.index, query, n)
        if mode == "dense":
            if self.embed is None or self.store is None:
                raise ProviderUnavailable("dense retrieval needs a vector store and an embedding provider")
            if n <= 0:
                return []
            (vec,) = self.embed([query])
            return vector_search(self.store, vec, n)
        raise ValueError(f"unknown retrieval mode {mode!r}")


def retrieve(retriever: Retriever, query: str, n: int, mode: str | None = None) -> list[ScoredDoc]:
    return retriever.retrieve(query, n, mode)
