"""Document pool: JSONL ingestion, lookup and length statistics."""
from __future__ import annotations

import json
import re
import string
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

from .errors import DuplicateId, MalformedLine, NotFound

_PUNCT = string.punctuation
_WS = re.compile(r"\S+")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip ASCII punctuation from token edges."""
    out = []
    for raw in text.lower().split():
        tok = raw.strip(_PUNCT)
        if tok:
            out.append(tok)
    return out


def tokenize_spans(text: str) -> list[tuple[str, int, int]]:
    """Like :func:`tokenize` but keeps ``(token, start, end)`` offsets into ``text``.

    Offsets cover the token after punctuation stripping, so ``text[start:end]``
    is the verbatim surface form.
    """
    out = []
    for m in _WS.finditer(text):
        raw = m.group()
        lead = len(raw) - len(raw.lstrip(_PUNCT))
        core = raw.strip(_PUNCT)
        if not core:
            continue
        start = m.start() + lead
        out.append((core.lower(), start, start + len(core)))
    return out


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    text: str

    def to_dict(self) -> dict:
        return {"id": self.doc_id, "title": self.title, "text": self.text}


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...] = ()
    token_counts: tuple[int, ...] = ()
    _by_id: Mapping[str, Document] = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_documents(cls, docs: Iterable[Document]) -> "Corpus":
        docs = tuple(docs)
        by_id: dict[str, Document] = {}
        counts = []
        for i, d in enumerate(docs, 1):
            if d.doc_id in by_id:
                raise DuplicateId(d.doc_id)
            n = len(tokenize(d.text))
            if not d.text.strip() or n == 0:
                raise MalformedLine(i, f"document {d.doc_id!r} has no tokens")
            by_id[d.doc_id] = d
            counts.append(n)
        return cls(docs, tuple(counts), MappingProxyType(by_id))

    @property
    def avg_doc_len(self) -> float:
        if not self.token_counts:
            return 0.0
        return sum(self.token_counts) / len(self.token_counts)

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def __contains__(self, doc_id: object) -> bool:
        return doc_id in self._by_id


def ingest_jsonl(path: str | Path) -> Corpus:
    """Read a JSONL corpus (fields ``id``, ``title``, ``text``; others ignored)."""
    docs = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLine(line_no, str(exc)) from None
            if not isinstance(obj, dict):
                raise MalformedLine(line_no, "not a JSON object")
            try:
                doc_id, title, text = obj["id"], obj["title"], obj["text"]
            except KeyError as exc:
                raise MalformedLine(line_no, f"missing field {exc.args[0]!r}") from None
            if not all(isinstance(v, str) for v in (doc_id, title, text)):
                raise MalformedLine(line_no, "id, title and text must be strings")
            if not tokenize(text):
                raise MalformedLine(line_no, "empty text")
            if doc_id in seen:
                raise DuplicateId(doc_id)
            seen.add(doc_id)
            docs.append(Document(doc_id, title, text))
    return Corpus.from_documents(docs)


def get(corpus: Corpus, doc_id: str) -> Document:
    try:
        return corpus._by_id[doc_id]
    except KeyError:
        raise NotFound(doc_id) from None


def stats(corpus: Corpus) -> dict:
    return {"doc_count": len(corpus), "avg_doc_len": corpus.avg_doc_len}
