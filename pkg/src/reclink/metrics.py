"""Evaluation metrics: top-1 retrieval accuracy and pairwise P/R/F1."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .results import LinkResult

GoldLinks = list[tuple[int, int]]  # (query row_id, gold key row_id); many golds per query allowed


@dataclass
class EvalReport:
    metric: str
    value: float
    support: dict[str, int] = field(default_factory=dict)
    threshold: float | None = None
    details: dict[str, float] = field(default_factory=dict)

    def as_line(self) -> str:
        parts = [f"metric={self.metric}", f"value={self.value:.6f}"]
        if self.threshold is not None:
            parts.append(f"threshold={self.threshold:.6f}")
        parts.extend(f"{k}={v:.6f}" for k, v in sorted(self.details.items()))
        parts.extend(f"{k}={v}" for k, v in sorted(self.support.items()))
        return " ".join(parts)

    def write_jsonl(self, path: str | Path) -> None:
        record = {"metric": self.metric, "value": self.value, "support": self.support}
        if self.threshold is not None:
            record["threshold"] = self.threshold
        if self.details:
            record["details"] = self.details
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True))
            fh.write("\n")


def top1_accuracy(result: LinkResult, gold: GoldLinks) -> EvalReport:
    """Fraction of gold queries whose rank-1 match hits any of their gold keys.

    Unmatched queries count as incorrect. Every gold query must be
    accounted for by the result (matched or explicitly unmatched).
    """
    if not gold:
        raise DataError("gold links are empty")
    gold_by_query: dict[int, set[int]] = {}
    for query_id, key_id in gold:
        gold_by_query.setdefault(query_id, set()).add(key_id)
    known = result.query_ids()
    missing = sorted(set(gold_by_query) - known)
    if missing:
        raise DataError(f"gold queries missing from the link result: {missing[:10]}")
    rank1 = result.rank1()
    correct = sum(
        1 for qid, keys in gold_by_query.items() if qid in rank1 and rank1[qid].key_id in keys
    )
    total = len(gold_by_query)
    return EvalReport(
        metric="top1_accuracy",
        value=correct / total,
        support={"correct": correct, "queries": total},
    )


def pairwise_f1(scores: list[float], labels: list[int], threshold: float) -> EvalReport:
    """Precision/recall/F1 of "match iff score >= threshold"."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if len(s) != len(y) or len(s) == 0:
        raise DataError("pairwise_f1 needs matching, non-empty scores and labels")
    if not set(np.unique(y)) <= {0, 1}:
        raise DataError("labels must be 0 or 1")
    predicted = s >= threshold
    actual = y == 1
    tp = int(np.sum(predicted & actual))
    fp = int(np.sum(predicted & ~actual))
    fn = int(np.sum(~predicted & actual))
    tn = int(np.sum(~predicted & ~actual))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return EvalReport(
        metric="pairwise_f1",
        value=f1,
        support={"tp": tp, "fp": fp, "fn": fn, "tn": tn},
        threshold=threshold,
        details={"precision": precision, "recall": recall},
    )
