"""Label-aware re-ranking, sliding-window progressive selection, sufficiency check."""
from __future__ import annotations

import logging
from dataclasses import dataclass

from .backend import Backend
from .corpus import Document
from .errors import BackendError
from .prompts import format_docs, parse_selection, parse_yes_no
from .taxonomy import AlignmentLabel, AlignmentReport

log = logging.getLogger(__name__)

K_DEFAULT = 5
WINDOW_DEFAULT = 10


@dataclass(frozen=True)
class PoolEntry:
    report: AlignmentReport
    doc: Document

    @property
    def doc_id(self) -> str:
        return self.doc.doc_id

    def sort_key(self) -> tuple:
        return (self.report.label.rank, -self.report.retriever_score, self.doc.doc_id)

    def prompt_entry(self) -> dict:
        return {"id": self.doc.doc_id, "label": self.report.label.value,
                "score": self.report.retriever_score, "title": self.doc.title,
                "text": self.doc.text}


@dataclass(frozen=True)
class RankedPool:
    entries: tuple[PoolEntry, ...] = ()

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def ids(self) -> list[str]:
        return [e.doc_id for e in self.entries]


@dataclass(frozen=True)
class SupportSet:
    entries: tuple[PoolEntry, ...] = ()
    verified: bool = False
    degraded: bool = False

    @property
    def docs(self) -> list[Document]:
        return [e.doc for e in self.entries]

    @property
    def ids(self) -> list[str]:
        return [e.doc_id for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


def rerank(reports: list[PoolEntry], exclude_no_alignment: bool = False) -> RankedPool:
    """Full before partial before none; then retriever score, then doc id."""
    entries = reports
    if exclude_no_alignment:
        entries = [e for e in entries if e.report.label is not AlignmentLabel.NONE]
    return RankedPool(tuple(sorted(entries, key=PoolEntry.sort_key)))


def _top_k(entries, k: int) -> list[PoolEntry]:
    return sorted(entries, key=PoolEntry.sort_key)[:k]


def window_select(pool: RankedPool, current: SupportSet, k: int, w: int, backend: Backend,
                  query: str = "", trace: list | None = None) -> SupportSet:
    """Slide a stride-``w`` window over ``pool``; keep the best ``k`` of current plus window."""
    if k < 1 or w < 1:
        raise ValueError("k and w must be >= 1")
    chosen = list(current.entries)
    degraded = current.degraded
    for wi, start in enumerate(range(0, len(pool), w)):
        have = {e.doc_id for e in chosen}
        offered = chosen + [e for e in pool.entries[start:start + w] if e.doc_id not in have]
        if len(offered) <= k:
            picked = _top_k(offered, k)
        else:
            try:
                nums = backend.ask(
                    "select",
                    {"query": query, "k": k, "docs": format_docs([e.prompt_entry() for e in offered])},
                    lambda reply, n=len(offered): parse_selection(reply, n, k),
                )
                picked = [offered[n - 1] for n in nums]
                if len(picked) < k:  # keep |support| == k when enough docs exist
                    rest = [e for e in _top_k(offered, len(offered)) if e not in picked]
                    picked += rest[:k - len(picked)]
            except BackendError as exc:
                log.warning("selection window %d fell back to key order: %s", wi, exc)
                picked = _top_k(offered, k)
                degraded = True
        chosen = picked
        if trace is not None:
            trace.append({"window_index": wi, "offered_ids": [e.doc_id for e in offered],
                          "chosen_ids": [e.doc_id for e in chosen]})
    return SupportSet(tuple(chosen), current.verified, degraded)


def verify(query: str, support: SupportSet, backend: Backend) -> bool:
    if not len(support):
        raise ValueError("cannot verify an empty support set")
    docs = format_docs([{"id": e.doc_id, "title": e.doc.title, "text": e.doc.text}
                        for e in support.entries])
    return backend.ask("verify", {"query": query, "docs": docs}, parse_yes_no)
