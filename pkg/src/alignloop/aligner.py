"""Fine-grained grounded alignment: decomposition, per-component alignment,
reflection and synonym rewriting of unaligned components."""
from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

from .backend import Backend
from .corpus import Document
from .errors import EmptyQuery
from .mockmodel import ROLES
from .prompts import (
    format_components,
    format_verdicts,
    parse_decomposition,
    parse_synonyms,
    parse_verdicts,
)

__all__ = [
    "ROLES", "SyntacticComponents", "AlignmentSet", "RewrittenQuery",
    "decompose", "align_components", "reflect", "synonym_rewrite",
]


@dataclass(frozen=True)
class SyntacticComponents:
    """Role -> span for the roles present in a query (absent roles omitted)."""

    components: Mapping[str, str]

    def __post_init__(self):
        clean = {}
        for role in ROLES:
            span = (self.components.get(role) or "").strip()
            if span:
                clean[role] = span
        extra = set(self.components) - set(ROLES)
        if extra:
            raise ValueError(f"unknown roles {sorted(extra)}")
        object.__setattr__(self, "components", MappingProxyType(clean))

    @property
    def present_roles(self) -> tuple[str, ...]:
        return tuple(self.components)

    def spans(self, roles=None) -> dict[str, str]:
        roles = self.present_roles if roles is None else roles
        return {r: self.components[r] for r in self.present_roles if r in roles}

    def to_dict(self) -> dict:
        return dict(self.components)


@dataclass(frozen=True)
class AlignmentSet:
    aligned: frozenset[str]
    evidence: Mapping[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"aligned": [r for r in ROLES if r in self.aligned],
                "evidence": dict(self.evidence)}


@dataclass(frozen=True)
class RewrittenQuery:
    original: str
    replacement: Mapping[str, str]
    rendered: str
    components: Mapping[str, str] = field(default_factory=dict)


def decompose(query: str, backend: Backend) -> SyntacticComponents:
    if not query or not query.strip():
        raise EmptyQuery("query is empty")
    spans = backend.ask("decompose", {"query": query},
                        lambda reply: parse_decomposition(reply, ROLES))
    return SyntacticComponents(spans)


def _to_set(verdicts: dict[str, tuple[bool, str | None]]) -> AlignmentSet:
    aligned = frozenset(r for r, (ok, _) in verdicts.items() if ok)
    evidence = {r: ev for r, (ok, ev) in verdicts.items() if ok and ev}
    return AlignmentSet(aligned, MappingProxyType(evidence))


def align_components(components: SyntacticComponents, doc: Document,
                     backend: Backend) -> AlignmentSet:
    present = components.present_roles
    if not present or not doc.text.strip():
        return AlignmentSet(frozenset())
    verdicts = backend.ask(
        "align",
        {"components": format_components(components.spans()), "document": doc.text},
        lambda reply: parse_verdicts(reply, present),
    )
    return _to_set(verdicts)


def reflect(components: SyntacticComponents, doc: Document, first_pass: AlignmentSet,
            backend: Backend) -> AlignmentSet:
    """Second look at the first-pass verdicts; an LLM may add or drop roles."""
    present = components.present_roles
    if not present or not doc.text.strip():
        return AlignmentSet(frozenset())
    verdicts = backend.ask(
        "reflect",
        {
            "components": format_components(components.spans()),
            "verdicts": format_verdicts({r: r in first_pass.aligned for r in present}),
            "document": doc.text,
        },
        lambda reply: parse_verdicts(reply, present),
    )
    return _to_set(verdicts)


def _locate(query: str, span: str, claimed: list[tuple[int, int]]) -> int:
    for hay, needle in ((query, span), (query.lower(), span.lower())):
        pos = hay.find(needle)
        while pos >= 0:
            end = pos + len(needle)
            if all(end <= a or pos >= b for a, b in claimed):
                return pos
            pos = hay.find(needle, pos + 1)
    return -1


def substitute(query: str, components: Mapping[str, str], replacement: Mapping[str, str]) -> str:
    """Put each replacement where its component span sits in ``query``.

    Every component claims its own non-overlapping occurrence first; spans that
    cannot be located are appended in role order.
    """
    claimed: list[tuple[int, int]] = []
    where = {}
    for role, span in components.items():
        pos = _locate(query, span, claimed)
        if pos >= 0:
            claimed.append((pos, pos + len(span)))
            where[role] = (pos, pos + len(span))
    placed = sorted((where[r] + (new,)) for r, new in replacement.items() if r in where)
    tail = [new for r, new in replacement.items() if r not in where and new != components[r]]
    out, cursor = [], 0
    for start, end, new in placed:
        out.append(query[cursor:start])
        out.append(new)
        cursor = end
    out.append(query[cursor:])
    rendered = "".join(out)
    if tail:
        rendered = " ".join([rendered, *tail])
    return rendered


def synonym_rewrite(components: SyntacticComponents, reflected: AlignmentSet,
                    backend: Backend, query: str | None = None) -> RewrittenQuery:
    """Replace every unaligned component with a synonymous phrase."""
    original = query if query is not None else " ".join(components.components.values())
    unaligned = tuple(r for r in components.present_roles if r not in reflected.aligned)
    if not unaligned:
        return RewrittenQuery(original, MappingProxyType({}), original,
                              MappingProxyType(dict(components.components)))
    repl = backend.ask(
        "synonym",
        {"query": original, "components": format_components(components.spans(unaligned))},
        lambda reply: parse_synonyms(reply, unaligned),
    )
    rewritten = dict(components.components)
    rewritten.update(repl)
    return RewrittenQuery(
        original,
        MappingProxyType(repl),
        substitute(original, components.components, repl),
        MappingProxyType(rewritten),
    )
