"""Deterministic offline model.

:class:`MockModel` is a gateway transport that answers the prompt catalog from
a fixture (decompositions, synonym table, gold answers) using window matching
instead of a language model. The matching rules are exposed as pure functions
so they can be tested without the prompt round trip.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import tokenize, tokenize_spans
from .gateway import ChatRequest
from .prompts import parse_docs, task_of

ROLES = ("subject", "predicate", "object", "predicative",
         "attributive", "adverbial", "complement", "apposition")
LABEL_RANK = {"full": 0, "partial": 1, "none": 2}

STOPWORDS = frozenset(
    "a an the of to in on at for by with from and or is are was were be been being "
    "do does did which who whom whose what when where why how that this these those".split()
)


def phrase_key(phrase: str) -> str:
    return " ".join(tokenize(phrase))


def content_tokens(phrase: str) -> list[str]:
    """Non-stopword tokens of ``phrase``; all tokens if every one is a stopword."""
    toks = tokenize(phrase)
    kept = [t for t in toks if t not in STOPWORDS]
    return kept or toks


def min_cover(doc_tokens: list[str], required: set[str]) -> tuple[int, int] | None:
    """Shortest ``(first, last)`` token-index span containing every required token."""
    if not required or not required <= set(doc_tokens):
        return None
    need = len(required)
    have: dict[str, int] = {}
    best = None
    left = 0
    for right, tok in enumerate(doc_tokens):
        if tok in required:
            have[tok] = have.get(tok, 0) + 1
        while len(have) == need:
            if best is None or right - left < best[1] - best[0]:
                best = (left, right)
            lt = doc_tokens[left]
            if lt in have:
                have[lt] -= 1
                if not have[lt]:
                    del have[lt]
            left += 1
    return best


@dataclass
class MockFixture:
    decompositions: dict[str, dict[str, str]] = field(default_factory=dict)
    synonyms: dict[str, list[str]] = field(default_factory=dict)
    window: int = 8
    answers: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        self.synonyms = {phrase_key(k): list(v) for k, v in self.synonyms.items()}

    @classmethod
    def from_dict(cls, obj: dict) -> "MockFixture":
        return cls(
            decompositions=obj.get("decompositions", {}),
            synonyms=obj.get("synonyms", {}),
            window=int(obj.get("window", 8)),
            answers=obj.get("answers", {}),
        )

    @classmethod
    def load(cls, path: str | Path) -> "MockFixture":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def synonyms_of(self, phrase: str) -> list[str]:
        return self.synonyms.get(phrase_key(phrase), [])


def align_span(span: str, doc_text: str, synonyms: list[str], window: int) -> tuple[bool, str | None]:
    """Does ``span`` (or one of its ``synonyms``) fit inside ``window`` consecutive doc tokens?

    Returns the verdict and the verbatim document segment that matched.
    """
    spans = tokenize_spans(doc_text)
    toks = [t for t, _, _ in spans]
    for alt in [span, *synonyms]:
        cover = min_cover(toks, set(content_tokens(alt)))
        if cover is not None and cover[1] - cover[0] + 1 <= window:
            return True, doc_text[spans[cover[0]][1]:spans[cover[1]][2]]
    return False, None


def align_all(components: dict[str, str], doc_text: str, fixture: MockFixture,
              window: int) -> dict[str, tuple[bool, str | None]]:
    return {role: align_span(span, doc_text, fixture.synonyms_of(span), window)
            for role, span in components.items()}


def pseudo_passage(components: dict[str, str], fixture: MockFixture) -> str:
    """Component spans each followed by their synonyms, deduplicated in order."""
    seen = set()
    parts = []
    for role in ROLES:
        span = components.get(role)
        if not span:
            continue
        for phrase in [span, *fixture.synonyms_of(span)]:
            key = phrase_key(phrase) or phrase
            if key not in seen:
                seen.add(key)
                parts.append(phrase)
    return " ".join(parts)


def _norm(text: str) -> str:
    return " ".join(text.lower().split())


def mock_verify(answers: list[str], doc_texts: list[str]) -> bool:
    if not answers:
        return False
    blob = _norm(" ".join(doc_texts))
    return all(_norm(a) in blob for a in answers)


_SENT = re.compile(r"[^.!?]+[.!?]?")


def _sentence_with(text: str, needle: str) -> str:
    low = needle.lower()
    for m in _SENT.finditer(text):
        if low in _norm(m.group()):
            return m.group().strip()
    return needle


def _section(text: str, header: str, until: str | None = None) -> str:
    start = text.index(header + ":\n") + len(header) + 2
    if until is None:
        return text[start:]
    end = text.index("\n\n" + until + ":", start)
    return text[start:end]


def _components(block: str) -> dict[str, str]:
    out = {}
    for line in block.splitlines():
        role, sep, span = line.partition(": ")
        if sep:
            out[role.strip()] = span
    return out


class MockModel:
    """Gateway transport implementing the catalog tasks deterministically."""

    kind = "mock"

    def __init__(self, fixture: MockFixture | None = None):
        self.fixture = fixture or MockFixture()

    def __call__(self, request: ChatRequest) -> str:
        system = request.messages[0].content
        # a corrective re-prompt appends messages; answer the original prompt
        user = request.messages[1].content
        task = task_of(system)
        return getattr(self, "_" + task)(user)

    def _decompose(self, user: str) -> str:
        query = _section(user, "Question")
        comps = self.fixture.decompositions.get(query)
        if comps is None:
            comps = self.fixture.decompositions.get(query.strip())
        if comps is None:
            comps = {"subject": query.strip()}
        return "\n".join(f"{r}: {comps.get(r) or 'none'}" for r in ROLES)

    def _verdict_lines(self, user: str, window: int) -> str:
        comps = _components(_section(user, "Components", "Previous verdicts" if "\n\nPrevious verdicts:" in user else "Document"))
        doc = _section(user, "Document")
        lines = []
        for role, (ok, ev) in align_all(comps, doc, self.fixture, window).items():
            lines.append(f"{role}: yes | {ev}" if ok else f"{role}: no")
        return "\n".join(lines)

    def _align(self, user: str) -> str:
        return self._verdict_lines(user, self.fixture.window)

    def _reflect(self, user: str) -> str:
        return self._verdict_lines(user, self.fixture.window + 2)

    def _synonym(self, user: str) -> str:
        comps = _components(_section(user, "Components to rephrase"))
        lines = []
        for role, span in comps.items():
            syn = self.fixture.synonyms_of(span)
            lines.append(f"{role}: {syn[0] if syn else span}")
        return "\n".join(lines)

    def _pseudo_doc(self, user: str) -> str:
        return pseudo_passage(_components(_section(user, "Components")), self.fixture)

    def _select(self, user: str) -> str:
        k = int(re.search(r"^Number to select: (\d+)$", user, re.M).group(1))
        docs = parse_docs(_section(user, "Documents"))
        ranked = sorted(docs, key=lambda d: (LABEL_RANK.get(d.get("label", "none"), 3),
                                             -d.get("score", 0.0), d.get("id", "")))
        return "selected: " + ", ".join(str(d["n"]) for d in ranked[:k])

    def _query_answers(self, user: str) -> list[str]:
        query = _section(user, "Question", "Documents")
        return self.fixture.answers.get(query, self.fixture.answers.get(query.strip(), []))

    def _verify(self, user: str) -> str:
        docs = parse_docs(_section(user, "Documents"))
        ok = mock_verify(self._query_answers(user), [d["text"] for d in docs])
        return "yes" if ok else "no"

    def _generate(self, user: str) -> str:
        docs = parse_docs(_section(user, "Documents"))
        lines = []
        for ans in self._query_answers(user):
            for d in docs:
                if _norm(ans) in _norm(d["text"]):
                    line = f"{_sentence_with(d['text'], ans)} [{d['n']}]"
                    if line not in lines:
                        lines.append(line)
                    break
        return "\n".join(lines) if lines else "The documents do not answer the question."
