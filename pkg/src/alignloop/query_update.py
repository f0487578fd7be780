"""Next-iteration retrieval query from the previous round's alignment results.

A high-alignment top document is appended to the original query; otherwise the
synonym-rewritten query is enriched with a generated pseudo-document.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

from .aligner import RewrittenQuery
from .backend import Backend
from .corpus import Document
from .errors import ReplyParseError
from .prompts import format_components
from .taxonomy import AlignmentReport, check_tau

MAX_QUERY_TOKENS = 512
MAX_PSEUDO_TOKENS = 128

CONCAT = "concat"
PSEUDO = "pseudo"


@dataclass(frozen=True)
class QueryState:
    original_q: str
    rewritten_q: str | None = None
    updated_q: str | None = None
    iteration: int = 1
    history: tuple[str, ...] = ()
    branch: str | None = None

    @property
    def retrieval_query(self) -> str:
        return self.updated_q or self.original_q


@dataclass(frozen=True)
class PseudoDocument:
    text: str
    source_query: str


def _clip(text: str, max_tokens: int) -> str:
    toks = text.split()
    if len(toks) <= max_tokens:
        return text
    return " ".join(toks[:max_tokens])


def _nonempty(reply: str) -> str:
    text = " ".join(reply.split())
    if not text:
        raise ReplyParseError("empty passage")
    return text


def generate_pseudo_doc(q_prime: RewrittenQuery | str, backend: Backend,
                        max_pseudo_tokens: int = MAX_PSEUDO_TOKENS) -> PseudoDocument:
    if isinstance(q_prime, RewrittenQuery):
        query, comps = q_prime.rendered, dict(q_prime.components)
    else:
        query, comps = q_prime, {"subject": q_prime.strip()}
    if not query or not query.strip():
        raise ValueError("pseudo-document needs a non-empty query")
    text = backend.ask("pseudo_doc", {"query": query, "components": format_components(comps)},
                       _nonempty)
    return PseudoDocument(_clip(text, max_pseudo_tokens), query)


def scqu_update(state: QueryState, top_report: AlignmentReport, top_doc: Document,
                q_prime: RewrittenQuery | str, tau: float, backend: Backend, *,
                max_query_tokens: int = MAX_QUERY_TOKENS,
                max_pseudo_tokens: int = MAX_PSEUDO_TOKENS) -> QueryState:
    """Apply the concat / pseudo rule and advance ``state`` by one iteration."""
    check_tau(tau)
    if state.iteration < 1:
        raise ValueError("iteration must be >= 1")
    rendered = q_prime.rendered if isinstance(q_prime, RewrittenQuery) else q_prime
    if top_report.ratio >= tau:
        branch = CONCAT
        updated = f"{state.original_q} {top_doc.text}"
    else:
        branch = PSEUDO
        pseudo = generate_pseudo_doc(q_prime, backend, max_pseudo_tokens)
        updated = f"{rendered} {pseudo.text}"
    updated = _clip(updated, max_query_tokens)
    history = state.history + ((state.updated_q,) if state.updated_q else ())
    return replace(state, rewritten_q=rendered, updated_q=updated,
                   iteration=state.iteration + 1, history=history, branch=branch)
