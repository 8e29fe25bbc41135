"""Scoring: mean relative accuracy for numbers, exact letter match for choices."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

__all__ = ["MRA_THRESHOLDS", "mra", "acc", "normalize_letter", "score_answer", "EvalReport", "evaluate"]

MRA_THRESHOLDS = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))
_DECIMALS = 9  # relative errors are compared after rounding so 1.2*y against y is exactly 0.2
_WRAP = re.compile(r"^[\s(\[]*(.*?)[\s.)\]:]*$")


def mra(predicted: float, truth: float) -> float:
    """Fraction of confidence thresholds at which the relative error is small enough."""
    truth = float(truth)
    if truth == 0:
        raise ValueError("mean relative accuracy is undefined for a zero ground truth")
    rel = round(abs(float(predicted) - truth) / abs(truth), _DECIMALS)
    if not np.isfinite(rel):
        return 0.0
    passed = sum(rel < round(1.0 - theta, _DECIMALS) for theta in MRA_THRESHOLDS)
    return passed / len(MRA_THRESHOLDS)


def normalize_letter(text) -> str:
    return _WRAP.match(str(text)).group(1).strip().upper()


def acc(predicted, truth) -> int:
    p, t = normalize_letter(predicted), normalize_letter(truth)
    if p == "X" or not p:
        return 0
    return int(p == t)


def score_answer(answer_type: str, predicted, truth) -> float:
    if answer_type == "numerical":
        try:
            value = float(str(predicted).strip())
        except ValueError:
            return 0.0
        return mra(value, float(truth))
    return float(acc(predicted, truth))


@dataclass
class EvalReport:
    per_kind: dict = field(default_factory=dict)  # kind -> {"metric", "score", "count", "failures"}

    @property
    def overall(self) -> float:
        scores = [v["score"] for v in self.per_kind.values()]
        return float(np.mean(scores)) if scores else 0.0

    @property
    def total(self) -> int:
        return sum(v["count"] for v in self.per_kind.values())

    def to_dict(self) -> dict:
        return {"overall": round(self.overall, 6), "total": self.total,
                "per_kind": {k: dict(v, score=round(v["score"], 6)) for k, v in sorted(self.per_kind.items())}}

    def table(self) -> str:
        rows = [f"{'kind':<30} {'metric':<6} {'n':>5} {'score':>7}"]
        for k, v in sorted(self.per_kind.items()):
            rows.append(f"{k:<30} {v['metric']:<6} {v['count']:>5} {100 * v['score']:>6.1f}%")
        rows.append(f"{'overall (mean over kinds)':<30} {'':<6} {self.total:>5} {100 * self.overall:>6.1f}%")
        return "\n".join(rows)


def evaluate(questions, predictions: dict) -> EvalReport:
    """Score ``predictions`` (question_id -> answer) against ``questions``.

    A question without a prediction scores zero and is listed as a failure.
    """
    sums: dict = {}
    for q in questions:
        slot = sums.setdefault(q.kind, {"metric": "MRA" if q.answer_type == "numerical" else "ACC",
                                        "total": 0.0, "count": 0, "failures": []})
        pred = predictions.get(q.question_id)
        s = 0.0 if pred is None else score_answer(q.answer_type, pred, q.ground_truth)
        slot["total"] += s
        slot["count"] += 1
        if s < 1.0:
            slot["failures"].append(q.question_id)
    report = EvalReport()
    for kind, v in sums.items():
        report.per_kind[kind] = {"metric": v["metric"], "score": v["total"] / v["count"], "count": v["count"],
                                 "failures": sorted(v["failures"])}
    return report
