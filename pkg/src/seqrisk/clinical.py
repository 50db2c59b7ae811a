"""Config-driven interval-scoring baseline (severity-score surrogate).

A scoring table maps value brackets of first-admission variables to points;
a patient's score is the sum over scored variables of the bracket containing
the first-visit (or static) value.  Missing variables contribute zero, and
only the first visit is ever consulted, so adding later visits can never
change a score.  Scores are compared against model risks through AUC.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .data import Cohort, PatientRecord


@dataclass(frozen=True)
class Bracket:
    low: float  # inclusive; -inf for an open left end
    high: float  # exclusive; +inf for an open right end
    points: float

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError(f"bracket low must be < high, got [{self.low}, {self.high})")
        if self.points < 0:
            raise ValueError(f"bracket points must be >= 0, got {self.points}")


@dataclass
class ScoringTable:
    rules: dict[str, list[Bracket]]
    max_score: float | None = None

    def __post_init__(self):
        for name, brackets in self.rules.items():
            if not brackets:
                raise ValueError(f"variable {name!r}: empty bracket list")
            ordered = sorted(brackets, key=lambda b: b.low)
            for a, b in zip(ordered, ordered[1:]):
                if b.low < a.high:
                    raise ValueError(
                        f"variable {name!r}: overlapping brackets "
                        f"[{a.low}, {a.high}) and [{b.low}, {b.high})"
                    )
                if b.low > a.high:
                    raise ValueError(
                        f"variable {name!r}: gap between [{a.low}, {a.high}) "
                        f"and [{b.low}, {b.high})"
                    )
            self.rules[name] = ordered
        achievable = self.achievable_max()
        if self.max_score is not None and achievable > self.max_score:
            raise ValueError(
                f"achievable score {achievable} exceeds declared maximum {self.max_score}"
            )

    def achievable_max(self) -> float:
        return sum(max(b.points for b in brackets) for brackets in self.rules.values())

    def bound(self) -> float:
        return self.max_score if self.max_score is not None else self.achievable_max()


def _bracket_points(brackets: list[Bracket], value: float) -> float:
    for b in brackets:
        if b.low <= value < b.high:
            return b.points
    return 0.0  # outside the declared range scores nothing, like missing


def clinical_score(record: PatientRecord, table: ScoringTable) -> float:
    """Additive first-admission score; raw (unnormalized) values expected."""
    if not record.visits:
        raise ValueError(f"patient {record.patient_id!r} has no visits")
    _, first = record.visits[0]
    total = 0.0
    for name, brackets in table.rules.items():
        if name in first:
            value = first[name]
        elif name in record.static_numeric:
            value = record.static_numeric[name]
        elif name in record.static_binary:
            value = float(record.static_binary[name])
        else:
            continue  # missing variable contributes zero points
        total += _bracket_points(brackets, value)
    return total


def score_cohort(cohort: Cohort, table: ScoringTable) -> dict[str, float]:
    return {r.patient_id: clinical_score(r, table) for r in cohort.records}


@dataclass
class ClinicalRiskLookup:
    """Adapter that lets the scoring baseline stand in for a trained model.

    risk_for maps the integer-ish score into (0, 1) by a strictly monotone
    affine squash, so AUC against the labels is exactly the score's AUC.
    """

    scores: dict[str, float]
    bound: float

    @classmethod
    def from_cohort(cls, cohort: Cohort, table: ScoringTable) -> "ClinicalRiskLookup":
        return cls(scores=score_cohort(cohort, table), bound=table.bound())

    def risk_for(self, patient_id: str) -> float:
        if patient_id not in self.scores:
            raise KeyError(f"no clinical score for patient {patient_id!r}")
        return (self.scores[patient_id] + 0.5) / (self.bound + 1.0)


# ---------------------------------------------------------------------------
# JSON round trip: {"max_score": ..., "variables": {name: [{"low": number|null,
# "high": number|null, "points": n}, ...]}}; null bounds mean unbounded.


def _edge(value, default: float) -> float:
    return default if value is None else float(value)


def load_scoring_table(path) -> ScoringTable:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return scoring_table_from_dict(doc)


def scoring_table_from_dict(doc: dict) -> ScoringTable:
    if "variables" not in doc or not isinstance(doc["variables"], dict):
        raise ValueError("scoring table needs a 'variables' mapping")
    rules = {}
    for name, entries in doc["variables"].items():
        rules[name] = [
            Bracket(
                low=_edge(e.get("low"), float("-inf")),
                high=_edge(e.get("high"), float("inf")),
                points=float(e["points"]),
            )
            for e in entries
        ]
    max_score = doc.get("max_score")
    return ScoringTable(rules=rules, max_score=None if max_score is None else float(max_score))


def save_scoring_table(table: ScoringTable, path) -> None:
    def edge_out(v: float):
        return None if v in (float("-inf"), float("inf")) else v

    doc = {
        "max_score": table.max_score,
        "variables": {
            name: [{"low": edge_out(b.low), "high": edge_out(b.high), "points": b.points}
                   for b in brackets]
            for name, brackets in table.rules.items()
        },
    }
    Path(path).write_text(json.dumps(doc, indent=2), encoding="utf-8")


def default_scoring_table() -> ScoringTable:
    """Surrogate table over the synthetic cohort's variables: age and imaging
    brackets that track outcome risk, vital brackets in the usual U shape,
    and single points for two comorbidity flags."""
    inf = float("inf")
    return ScoringTable(
        max_score=16.0,
        rules={
            "age": [
                Bracket(-inf, 45.0, 0.0), Bracket(45.0, 60.0, 1.0),
                Bracket(60.0, 75.0, 2.0), Bracket(75.0, inf, 3.0),
            ],
            "rale_score": [
                Bracket(-inf, 12.0, 0.0), Bracket(12.0, 24.0, 1.0),
                Bracket(24.0, 36.0, 2.0), Bracket(36.0, inf, 3.0),
            ],
            "vital_hr": [
                Bracket(-inf, 55.0, 2.0), Bracket(55.0, 110.0, 0.0),
                Bracket(110.0, 140.0, 2.0), Bracket(140.0, inf, 4.0),
            ],
            "vital_spo2": [
                Bracket(-inf, 85.0, 4.0), Bracket(85.0, 92.0, 2.0),
                Bracket(92.0, inf, 0.0),
            ],
            "hypertension": [Bracket(-inf, 0.5, 0.0), Bracket(0.5, inf, 1.0)],
            "diabetes": [Bracket(-inf, 0.5, 0.0), Bracket(0.5, inf, 1.0)],
        },
    )
