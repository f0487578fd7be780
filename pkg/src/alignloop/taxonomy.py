"""Full / partial / no alignment labels and the alignment ratio."""
from __future__ import annotations

import enum
from dataclasses import dataclass

from .aligner import AlignmentSet, SyntacticComponents
from .errors import EmptyComponents, InvalidTau


class AlignmentLabel(str, enum.Enum):
    FULL = "full"
    PARTIAL = "partial"
    NONE = "none"

    @property
    def rank(self) -> int:
        return _RANK[self]


_RANK = {AlignmentLabel.FULL: 0, AlignmentLabel.PARTIAL: 1, AlignmentLabel.NONE: 2}


@dataclass(frozen=True)
class AlignmentReport:
    doc_id: str
    reflected: AlignmentSet
    ratio: float
    label: AlignmentLabel
    retriever_score: float = 0.0

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "aligned": self.reflected.to_dict()["aligned"],
            "ratio": self.ratio,
            "label": self.label.value,
            "retriever_score": self.retriever_score,
        }


def label_for(ratio: float) -> AlignmentLabel:
    if ratio >= 1.0:
        return AlignmentLabel.FULL
    if ratio <= 0.0:
        return AlignmentLabel.NONE
    return AlignmentLabel.PARTIAL


def classify(components: SyntacticComponents, reflected: AlignmentSet, doc_id: str = "",
             retriever_score: float = 0.0) -> AlignmentReport:
    present = set(components.present_roles)
    if not present:
        raise EmptyComponents("query has no syntactic components")
    if not reflected.aligned <= present:
        raise ValueError(f"aligned roles {sorted(reflected.aligned - present)} are not present")
    ratio = len(reflected.aligned) / len(present)
    return AlignmentReport(doc_id, reflected, ratio, label_for(ratio), retriever_score)


def check_tau(tau: float) -> float:
    if not (0.0 < tau <= 1.0):
        raise InvalidTau(f"tau must lie in (0, 1], got {tau!r}")
    return tau


def is_high_alignment(report: AlignmentReport, tau: float) -> bool:
    return report.ratio >= check_tau(tau)
