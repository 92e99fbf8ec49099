"""Classification, capacity-aware and system-level evaluation metrics.

Besides recall and balanced accuracy, the flexible accuracy credits a
prediction for every beam whose offered capacity covers the demand, whatever
class it was labeled with. A beam whose demand exceeds the maximum capacity
counts as covered when it is given that maximum.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class EvalRecord:
    sample_id: int
    true_class: int
    predicted_class: int  # -1 when the predicted assignment is not in the class table
    requested: np.ndarray  # bps
    offered: np.ndarray  # bps


@dataclass
class MetricsReport:
    classes: list[int]
    counts: dict[int, int]
    recall: dict[int, float]
    balanced_accuracy: float
    flexible_accuracy: dict[int, float]
    flexible_balanced_accuracy: float
    nmse: list[float]
    nmse_avg: float
    nmse_excluded: int
    mean_requested: list[float]
    mean_offered: list[float]
    absent_classes: list[int] = field(default_factory=list)
    accuracy: float = 0.0
    macro_precision: float = 0.0
    macro_f1: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("counts", "recall", "flexible_accuracy"):
            d[key] = {str(k): v for k, v in d[key].items()}
        return d


def _ordered(records: Iterable[EvalRecord]) -> list[EvalRecord]:
    # Fixed order so float reductions do not depend on record order.
    return sorted(records, key=lambda r: r.sample_id)


def sufficient(offered, requested, c_max: float) -> np.ndarray:
    offered, requested = np.asarray(offered, dtype=float), np.asarray(requested, dtype=float)
    return np.where(requested > c_max, offered >= c_max, offered >= requested)


def recall_per_class(records: Sequence[EvalRecord]) -> dict[int, float]:
    hits: dict[int, int] = {}
    totals: dict[int, int] = {}
    for r in records:
        totals[r.true_class] = totals.get(r.true_class, 0) + 1
        hits[r.true_class] = hits.get(r.true_class, 0) + int(r.predicted_class == r.true_class)
    return {c: hits[c] / totals[c] for c in sorted(totals)}


def balanced_accuracy(records: Sequence[EvalRecord]) -> float:
    rec = recall_per_class(records)
    return math.fsum(rec.values()) / len(rec) if rec else float("nan")


def flexible_accuracy(records: Sequence[EvalRecord], c_max: float) -> tuple[dict[int, float], float]:
    """Per-class share of beams with sufficient capacity, and its class mean.

    Samples are grouped by their true class.
    """
    counts: dict[int, int] = {}
    covered: dict[int, float] = {}
    for r in _ordered(records):
        B = len(r.requested)
        counts[r.true_class] = counts.get(r.true_class, 0) + 1
        covered[r.true_class] = covered.get(r.true_class, 0.0) + sufficient(r.offered, r.requested, c_max).sum() / B
    per_class = {c: covered[c] / counts[c] for c in sorted(counts)}
    mean = math.fsum(per_class.values()) / len(per_class) if per_class else float("nan")
    return per_class, mean


def nmse(records: Sequence[EvalRecord]) -> tuple[list[float], float, int]:
    """Per-sample normalized squared error of offered vs requested capacity.

    Samples with an all-zero demand have no defined NMSE and are skipped;
    their count is returned third.
    """
    values, skipped = [], 0
    for r in _ordered(records):
        R = np.asarray(r.requested, dtype=float)
        den = float(np.sum(R**2))
        if den == 0.0:
            skipped += 1
            continue
        values.append(float(np.sum((np.asarray(r.offered, dtype=float) - R) ** 2)) / den)
    avg = math.fsum(values) / len(values) if values else float("nan")
    return values, avg, skipped


def capacity_report(records: Sequence[EvalRecord]) -> tuple[list[float], list[float]]:
    recs = _ordered(records)
    if not recs:
        return [], []
    req = np.array([r.requested for r in recs], dtype=float)
    off = np.array([r.offered for r in recs], dtype=float)
    return req.mean(axis=0).tolist(), off.mean(axis=0).tolist()


def _precision_f1(records: Sequence[EvalRecord], classes: list[int]) -> tuple[float, float]:
    precisions, f1s = [], []
    for c in classes:
        tp = sum(1 for r in records if r.true_class == c and r.predicted_class == c)
        fp = sum(1 for r in records if r.true_class != c and r.predicted_class == c)
        fn = sum(1 for r in records if r.true_class == c and r.predicted_class != c)
        p = tp / (tp + fp) if tp + fp else 0.0
        rc = tp / (tp + fn) if tp + fn else 0.0
        precisions.append(p)
        f1s.append(2 * p * rc / (p + rc) if p + rc else 0.0)
    n = len(classes)
    return (math.fsum(precisions) / n, math.fsum(f1s) / n) if n else (float("nan"), float("nan"))


def evaluate(
    records: Sequence[EvalRecord], c_max: float, label_classes: Iterable[int] | None = None
) -> MetricsReport:
    """Every metric at once. ``label_classes`` lists the full class set so the
    classes missing from ``records`` can be reported."""
    recs = _ordered(records)
    rec = recall_per_class(recs)
    flex, flex_bal = flexible_accuracy(recs, c_max)
    per_sample, avg, skipped = nmse(recs)
    mean_req, mean_off = capacity_report(recs)
    classes = sorted(rec)
    counts = {c: sum(1 for r in recs if r.true_class == c) for c in classes}
    absent = sorted(set(label_classes) - set(classes)) if label_classes is not None else []
    precision, f1 = _precision_f1(recs, classes)
    acc = sum(r.true_class == r.predicted_class for r in recs) / len(recs) if recs else float("nan")
    return MetricsReport(
        classes=classes,
        counts=counts,
        recall=rec,
        balanced_accuracy=balanced_accuracy(recs),
        flexible_accuracy=flex,
        flexible_balanced_accuracy=flex_bal,
        nmse=per_sample,
        nmse_avg=avg,
        nmse_excluded=skipped,
        mean_requested=mean_req,
        mean_offered=mean_off,
        absent_classes=absent,
        accuracy=acc,
        macro_precision=precision,
        macro_f1=f1,
    )


def write_report(path: str | Path, report: MetricsReport, metadata: dict | None = None):
    d = report.to_dict()
    d["metadata"] = metadata or {}
    Path(path).write_text(json.dumps(d, indent=1, sort_keys=True) + "\n")


def write_class_csv(path: str | Path, report: MetricsReport):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class_id", "count", "recall", "flexible_accuracy"])
        for c in report.classes:
            w.writerow([c, report.counts[c], repr(report.recall[c]), repr(report.flexible_accuracy[c])])


def write_beam_csv(path: str | Path, report: MetricsReport):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["beam", "mean_requested_bps", "mean_offered_bps"])
        for b, (r, o) in enumerate(zip(report.mean_requested, report.mean_offered), start=1):
            w.writerow([b, repr(r), repr(o)])
