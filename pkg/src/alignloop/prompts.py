"""Prompt catalog and reply parsers.

Each template has a system part whose first line is ``TASK: <name>`` and a
user part with named slots. Replies use rigid line formats so they can be
parsed (and produced by the offline mock model) without guesswork.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import MissingSlot, ReplyParseError

CATALOG_VERSION = "1"
SLOT_NAMES = ("query", "components", "document", "docs", "verdicts", "k")
_SLOT = re.compile(r"\{(" + "|".join(SLOT_NAMES) + r")\}")


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    system: str
    user: str

    @property
    def slots(self) -> set[str]:
        return set(_SLOT.findall(self.system + self.user))


def _fill(text: str, slots: dict) -> str:
    def sub(m: re.Match) -> str:
        name = m.group(1)
        if name not in slots or slots[name] is None:
            raise MissingSlot(name)
        return str(slots[name])

    return _SLOT.sub(sub, text)


def render(template: PromptTemplate, slots: dict) -> tuple[str, str]:
    """Return ``(system, user)`` with every slot substituted verbatim."""
    return _fill(template.system, slots), _fill(template.user, slots)


_ROLE_LIST = "subject, predicate, object, predicative, attributive, adverbial, complement, apposition"

TEMPLATES = {
    t.name: t
    for t in (
        PromptTemplate(
            "decompose",
            "TASK: decompose\n"
            "Split the question into its syntactic components. The roles are: " + _ROLE_LIST + ".\n"
            "Answer with exactly one line per role, `role: span`, copying the span from the "
            "question, or `role: none` when the question has no such component.",
            "Question:\n{query}",
        ),
        PromptTemplate(
            "align",
            "TASK: align\n"
            "For each query component, decide whether one continuous segment of the document "
            "expresses the same meaning. Answer with one line per component: "
            "`role: yes | <segment copied from the document>` or `role: no`.",
            "Components:\n{components}\n\nDocument:\n{document}",
        ),
        PromptTemplate(
            "reflect",
            "TASK: reflect\n"
            "You previously judged which query components are grounded in the document. "
            "Re-check every verdict and correct mistakes. Answer in the same format: "
            "`role: yes | <segment>` or `role: no`, one line per component.",
            "Components:\n{components}\n\nPrevious verdicts:\n{verdicts}\n\nDocument:\n{document}",
        ),
        PromptTemplate(
            "synonym",
            "TASK: synonym\n"
            "The listed query components were not found in the retrieved text. For each one, "
            "give a short phrase with the same meaning that a relevant passage might use. "
            "Answer with one line per component: `role: phrase`.",
            "Question:\n{query}\n\nComponents to rephrase:\n{components}",
        ),
        PromptTemplate(
            "pseudo_doc",
            "TASK: pseudo_doc\n"
            "Write a short encyclopedic passage (at most five sentences) that would answer the "
            "question. Reply with the passage only.",
            "Question:\n{query}\n\nComponents:\n{components}",
        ),
        PromptTemplate(
            "select",
            "TASK: select\n"
            "Pick the documents that best support a complete, citable answer to the question. "
            "Reply with one line `selected: i, j, ...` listing at most the requested number of "
            "document numbers, best first.",
            "Question:\n{query}\n\nNumber to select: {k}\n\nDocuments:\n{docs}",
        ),
        PromptTemplate(
            "verify",
            "TASK: verify\n"
            "Do these documents contain enough information to answer the question with "
            "citations? Reply with `yes` or `no`.",
            "Question:\n{query}\n\nDocuments:\n{docs}",
        ),
        PromptTemplate(
            "generate",
            "TASK: generate\n"
            "Answer the question using only the documents. Write one statement per line and "
            "cite supporting documents with bracketed numbers, e.g. `... [1][3]`.",
            "Question:\n{query}\n\nDocuments:\n{docs}",
        ),
    )
}


def task_of(system: str) -> str:
    first = system.split("\n", 1)[0]
    if not first.startswith("TASK: "):
        raise ValueError("not a catalog prompt")
    return first[len("TASK: "):].strip()


# -- slot formatting -----------------------------------------------------------

def format_components(spans: dict[str, str]) -> str:
    return "\n".join(f"{role}: {span}" for role, span in spans.items())


def format_verdicts(verdicts: dict[str, bool]) -> str:
    return "\n".join(f"{role}: {'yes' if ok else 'no'}" for role, ok in verdicts.items())


def format_docs(entries: list[dict]) -> str:
    """``entries``: dicts with ``text`` and optional ``id``/``title``/``label``/``score``."""
    blocks = []
    for i, e in enumerate(entries, 1):
        head = [f"[{i}]"]
        if "id" in e:
            head.append(f"id={e['id']}")
        if "label" in e:
            head.append(f"label={e['label']}")
        if "score" in e:
            head.append(f"score={e['score']!r}")
        if e.get("title"):
            head.append(f"title={e['title']}")
        blocks.append(" ".join(head) + "\n" + " ".join(e["text"].split()))
    return "\n\n".join(blocks)


_DOC_HEAD = re.compile(r"^\[(\d+)\](.*)$")


def parse_docs(block: str) -> list[dict]:
    """Inverse of :func:`format_docs` (title dropped)."""
    out = []
    lines = block.split("\n")
    i = 0
    while i < len(lines):
        m = _DOC_HEAD.match(lines[i])
        if m:
            meta = {}
            for part in m.group(2).split():
                if "=" in part:
                    k, v = part.split("=", 1)
                    meta[k] = v
            entry = {"n": int(m.group(1)), "text": lines[i + 1] if i + 1 < len(lines) else ""}
            if "id" in meta:
                entry["id"] = meta["id"]
            if "label" in meta:
                entry["label"] = meta["label"]
            if "score" in meta:
                entry["score"] = float(meta["score"])
            out.append(entry)
            i += 2
        else:
            i += 1
    return out


# -- reply parsers ---------------------------------------------------------------

_LINE = re.compile(r"^\s*[-*]?\s*([A-Za-z_]+)\s*:\s*(.*?)\s*$")


def _role_lines(reply: str, allowed: set[str]) -> dict[str, str]:
    out = {}
    for line in reply.splitlines():
        m = _LINE.match(line)
        if not m:
            continue
        role = m.group(1).lower()
        if role not in allowed:
            raise ReplyParseError(f"unexpected role {role!r}")
        out[role] = m.group(2)
    return out


def parse_decomposition(reply: str, roles: tuple[str, ...]) -> dict[str, str]:
    lines = _role_lines(reply, set(roles))
    spans = {}
    for role in roles:
        val = lines.get(role, "").strip().strip("`\"'").strip()
        if val and val.lower() not in ("none", "n/a", "-"):
            spans[role] = val
    if not spans:
        raise ReplyParseError("decomposition names no component")
    return spans


def parse_verdicts(reply: str, present: tuple[str, ...]) -> dict[str, tuple[bool, str | None]]:
    """``role: yes | evidence`` / ``role: no`` for every present role."""
    lines = _role_lines(reply, set(present))
    out = {}
    for role in present:
        if role not in lines:
            raise ReplyParseError(f"no verdict for {role!r}")
        head, _, evidence = lines[role].partition("|")
        word = head.strip().lower().rstrip(".")
        if word in ("yes", "y", "1", "true"):
            out[role] = (True, evidence.strip() or None)
        elif word in ("no", "n", "0", "false"):
            out[role] = (False, None)
        else:
            raise ReplyParseError(f"verdict for {role!r} is {head.strip()!r}")
    return out


def parse_synonyms(reply: str, wanted: tuple[str, ...]) -> dict[str, str]:
    lines = _role_lines(reply, set(wanted))
    out = {}
    for role in wanted:
        val = lines.get(role, "").strip().strip("`\"'").strip()
        if not val:
            raise ReplyParseError(f"no synonym for {role!r}")
        out[role] = val
    return out


_SELECTED = re.compile(r"selected\s*:\s*(.*)", re.I)


def parse_selection(reply: str, offered: int, k: int) -> list[int]:
    """1-based document numbers, in reply order, deduplicated."""
    m = _SELECTED.search(reply)
    if not m:
        raise ReplyParseError("no `selected:` line")
    picks: list[int] = []
    for tok in re.findall(r"\d+", m.group(1)):
        n = int(tok)
        if not 1 <= n <= offered:
            raise ReplyParseError(f"document number {n} out of range")
        if n not in picks:
            picks.append(n)
    if len(picks) > k:
        picks = picks[:k]
    return picks


def parse_yes_no(reply: str) -> bool:
    words = re.findall(r"[a-z]+", reply.lower())
    if not words or words[0] not in ("yes", "no"):
        raise ReplyParseError("expected yes or no")
    return words[0] == "yes"


_CITE = re.compile(r"\[(\d+)\]")


def parse_statements(reply: str) -> list[tuple[str, list[int]]]:
    """Statement text (citation markers removed) and its 1-based citation numbers."""
    out = []
    for line in reply.splitlines():
        line = line.strip()
        if not line:
            continue
        cites = []
        for tok in _CITE.findall(line):
            if int(tok) not in cites:
                cites.append(int(tok))
        text = " ".join(_CITE.sub(" ", line).split())
        text = re.sub(r"\s+([.,;:!?])", r"\1", text)
        if text:
            out.append((text, cites))
    return out
