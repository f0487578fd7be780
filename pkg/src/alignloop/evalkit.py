"""Answer correctness and citation quality scoring, plus label conversion stats."""
from __future__ import annotations

import json
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

from .errors import InvalidTally, MissingGoldField, UnresolvedCitation
from .pipeline import CitedAnswer

_PUNCT_TABLE = str.maketrans({c: " " for c in string.punctuation})

CITATION_CONVENTION = (
    "statements without citations count toward citation recall with score 0; "
    "a citation is precise iff it entails the statement alone or the statement's "
    "other citations do not entail it"
)


def normalize(text: str) -> str:
    """Lowercase, replace punctuation with spaces, collapse whitespace."""
    return " ".join(text.lower().translate(_PUNCT_TABLE).split())


@dataclass
class GoldRecord:
    query: str
    short_answers: list[list[str]] | None = None
    gold_list: list[str] | None = None
    sub_claims: list[str] | None = None

    def __post_init__(self):
        if self.short_answers is None and self.gold_list is None and self.sub_claims is None:
            raise ValueError(f"gold record for {self.query!r} has no answer field")
        if self.short_answers is not None and any(not aliases for aliases in self.short_answers):
            raise ValueError("alias sets must be non-empty")

    @classmethod
    def from_dict(cls, obj: dict) -> "GoldRecord":
        return cls(obj["query"], obj.get("short_answers"), obj.get("gold_list"), obj.get("sub_claims"))


def load_gold(path: str | Path) -> dict[str, GoldRecord]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = GoldRecord.from_dict(json.loads(line))
                out[rec.query] = rec
    return out


class EntailmentOracle(Protocol):
    kind: str

    def entails(self, premise: str, hypothesis: str) -> bool: ...


class SubstringOracle:
    """Premise entails hypothesis iff the normalized hypothesis occurs in the normalized premise."""

    kind = "substring"

    def entails(self, premise: str, hypothesis: str) -> bool:
        hyp = normalize(hypothesis)
        return bool(hyp) and hyp in normalize(premise)


class LLMOracle:
    """Entailment judged by the model behind a gateway (``verify``-style yes/no)."""

    kind = "llm"

    def __init__(self, backend):
        self.backend = backend

    def entails(self, premise: str, hypothesis: str) -> bool:
        from .prompts import format_docs, parse_yes_no

        query = f"Is the following claim fully supported by the documents? Claim: {hypothesis}"
        return self.backend.ask("verify", {"query": query, "docs": format_docs([{"text": premise}])},
                                parse_yes_no)


# -- correctness ---------------------------------------------------------------

def em_recall(answer: CitedAnswer, gold: GoldRecord) -> float:
    if not gold.short_answers:
        raise MissingGoldField("short_answers")
    text = normalize(answer.text)
    hits = sum(any(normalize(a) and normalize(a) in text for a in aliases)
               for aliases in gold.short_answers)
    return hits / len(gold.short_answers)


def _f1(p: float, r: float) -> float:
    return 0.0 if p == 0 or r == 0 else 2 * p * r / (p + r)


def answer_entities(answer: CitedAnswer, split_commas: bool = False) -> list[str]:
    ents = []
    for s in answer.statements:
        parts = s.text.split(",") if split_commas else [s.text]
        ents.extend(normalize(p) for p in parts)
    return [e for e in ents if e]


def list_f1(answer: CitedAnswer, gold: GoldRecord, split_commas: bool = False,
            recall_cap: int | None = None) -> dict:
    if not gold.gold_list:
        raise MissingGoldField("gold_list")
    pred = set(answer_entities(answer, split_commas))
    ref = {normalize(g) for g in gold.gold_list if normalize(g)}
    hit = len(pred & ref)
    precision = hit / len(pred) if pred else 0.0
    denom = min(len(ref), recall_cap) if recall_cap else len(ref)
    recall = min(1.0, hit / denom) if denom else 0.0
    return {"precision": precision, "recall": recall, "f1": _f1(precision, recall)}


def claim_recall(answer: CitedAnswer, gold: GoldRecord,
                 oracle: EntailmentOracle | None = None) -> float:
    if not gold.sub_claims:
        raise MissingGoldField("sub_claims")
    oracle = oracle or SubstringOracle()
    text = answer.text
    return sum(oracle.entails(text, c) for c in gold.sub_claims) / len(gold.sub_claims)


# -- citation quality ---------------------------------------------------------

def citation_scores(answer: CitedAnswer, support: Mapping[str, str],
                    oracle: EntailmentOracle | None = None) -> dict:
    """Citation recall, precision and F1.

    ``support`` maps doc id to passage text.
    """
    oracle = oracle or SubstringOracle()
    for s in answer.statements:
        for c in s.citations:
            if c not in support:
                raise UnresolvedCitation(c)

    def joined(ids: Iterable[str]) -> str:
        return "\n".join(support[i] for i in ids)

    recalls = []
    precise = []
    for s in answer.statements:
        if not s.citations:
            recalls.append(0.0)
            continue
        recalls.append(1.0 if oracle.entails(joined(s.citations), s.text) else 0.0)
        for c in s.citations:
            others = [o for o in s.citations if o != c]
            alone = oracle.entails(support[c], s.text)
            needed = not (others and oracle.entails(joined(others), s.text))
            precise.append(1.0 if alone or needed else 0.0)
    recall = sum(recalls) / len(recalls) if recalls else 0.0
    precision = sum(precise) / len(precise) if precise else 0.0
    return {"recall": recall, "precision": precision, "f1": _f1(precision, recall)}


# -- label statistics -----------------------------------------------------------

LABEL_NAMES = {"full": "FA", "partial": "PA", "none": "NA"}


@dataclass
class LabelStats:
    count_all: dict[str, int] = field(default_factory=dict)
    count_final: dict[str, int] = field(default_factory=dict)

    def rate(self, label: str) -> float:
        n = self.count_all.get(label, 0)
        return self.count_final.get(label, 0) / n if n else 0.0

    @property
    def conversion_rate(self) -> dict[str, float]:
        return {l: self.rate(l) for l in self.count_all}

    def to_dict(self, ndigits: int | None = 2) -> dict:
        rates = self.conversion_rate
        if ndigits is not None:
            rates = {l: round(r, ndigits) for l, r in rates.items()}
        return {"count_all": dict(self.count_all), "count_final": dict(self.count_final),
                "conversion_rate": rates}


def label_conversion(tallies: Mapping[str, tuple[int, int]] | Sequence[Mapping]) -> LabelStats:
    """Conversion rate per label.

    Accepts ``{label: (count_all, count_final)}`` or a sequence of per-run
    ``label_tally`` dicts (``{"all": {...}, "final": {...}}``) which are summed.
    """
    if isinstance(tallies, Mapping):
        pairs = dict(tallies)
    else:
        pairs = {}
        for t in tallies:
            for label in set(t.get("all", {})) | set(t.get("final", {})):
                a, f = pairs.get(label, (0, 0))
                pairs[label] = (a + t.get("all", {}).get(label, 0), f + t.get("final", {}).get(label, 0))
    stats = LabelStats()
    for label, (n_all, n_final) in pairs.items():
        if n_all < 0 or n_final < 0 or n_final > n_all:
            raise InvalidTally(f"{label}: final={n_final} all={n_all}")
        stats.count_all[label] = n_all
        stats.count_final[label] = n_final
    return stats


# -- batch scoring ---------------------------------------------------------------

def score_record(result: dict, gold: GoldRecord, support_text: Mapping[str, str],
                 oracle: EntailmentOracle | None = None, split_commas: bool = False,
                 recall_cap: int | None = None) -> dict:
    answer = CitedAnswer.from_list(result.get("answer", []))
    out: dict = {"query": gold.query, "iterations_used": result.get("iterations_used"),
                 "verified": result.get("verified"),
                 "docs_retrieved_total": result.get("docs_retrieved_total")}
    if gold.short_answers:
        out["em_recall"] = em_recall(answer, gold)
    if gold.gold_list:
        lf = list_f1(answer, gold, split_commas, recall_cap)
        out.update({f"list_{k}": v for k, v in lf.items()})
    if gold.sub_claims:
        out["claim_recall"] = claim_recall(answer, gold, oracle)
    cs = citation_scores(answer, support_text, oracle)
    out.update({f"citation_{k}": v for k, v in cs.items()})
    return out


def aggregate(records: list[dict]) -> dict:
    keys = sorted({k for r in records for k, v in r.items()
                   if isinstance(v, (int, float)) and not isinstance(v, bool)})
    agg = {}
    for k in keys:
        vals = [r[k] for r in records if isinstance(r.get(k), (int, float)) and not isinstance(r.get(k), bool)]
        agg[k] = sum(vals) / len(vals)
    agg["verified_rate"] = sum(bool(r.get("verified")) for r in records) / len(records) if records else 0.0
    return agg
