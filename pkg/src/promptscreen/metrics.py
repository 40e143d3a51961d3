"""Predictive and behavioral metrics for prompt evaluation.

Predictive: accuracy, precision, recall, F1, macro-F1 from binary confusion
counts. Behavioral: bias (the absolute precision-recall gap), robustness
(sample standard deviation of F1 across evaluation slices), and inter-prompt
consistency (raw agreement plus Cohen's kappa over the three-way
positive/negative/invalid prediction space).

Unparseable predictions follow a strict policy: they count against the
prompt in the gold-aligned direction (a missed positive becomes a false
negative, a spurious call on a negative becomes a false positive), so
invalid output can never improve a score.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .dataset import GoldLabel
from .errors import (
    EmptyEvaluation,
    GoldMissing,
    MisalignedPredictions,
    TooFewSlices,
)
from .inference import Prediction

METRICS_CSV_COLUMNS = [
    "prompt_id", "family", "split", "accuracy", "precision", "recall",
    "f1", "macro_f1", "bias", "sigma_f1", "n_slices", "invalid_rate",
]


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0
    invalid_count: int = 0

    @property
    def total(self) -> int:
        # invalid records are already attributed to fp or fn
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricSet:
    accuracy: float
    precision: float
    recall: float
    f1: float
    macro_f1: float
    bias: float

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "macro_f1": self.macro_f1,
            "bias": self.bias,
        }


@dataclass(frozen=True)
class RobustnessReport:
    f1_per_slice: tuple
    mean_f1: float
    sigma_f1: float
    n: int
    slice_kind: str = "partition"


@dataclass(frozen=True)
class ConsistencyReport:
    prompt_ids: tuple
    pairwise_agreement: dict
    pairwise_kappa: dict

    def agreement(self, a: str, b: str) -> float:
        return self.pairwise_agreement[(a, b)]

    def kappa(self, a: str, b: str) -> float:
        return self.pairwise_kappa[(a, b)]


def confusion(records, gold: dict) -> ConfusionCounts:
    """Count binary outcomes for one prompt's records against gold labels.

    Invalid predictions are charged as errors in the gold-aligned direction
    and additionally tracked in invalid_count.
    """
    tp = fp = fn = tn = invalid = 0
    for rec in records:
        if rec.transcript_id not in gold:
            raise GoldMissing(f"no gold label for transcript {rec.transcript_id!r}")
        truth = gold[rec.transcript_id]
        pred = rec.parsed
        if pred is Prediction.INVALID:
            invalid += 1
            if truth is GoldLabel.POSITIVE:
                fn += 1
            else:
                fp += 1
        elif truth is GoldLabel.POSITIVE:
            if pred is Prediction.POSITIVE:
                tp += 1
            else:
                fn += 1
        else:
            if pred is Prediction.NEGATIVE:
                tn += 1
            else:
                fp += 1
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn, invalid_count=invalid)


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def bias(precision: float, recall: float) -> float:
    """Absolute precision-recall imbalance, |precision - recall|."""
    return abs(precision - recall)


def metric_set(counts: ConfusionCounts) -> MetricSet:
    """Derive the full metric set from confusion counts.

    Zero-denominator precision/recall are defined as 0. Macro-F1 is the
    unweighted mean of the positive-class F1 and the negative-class F1
    (the latter computed with tp<->tn and fp<->fn roles swapped).
    """
    total = counts.total
    if total == 0:
        raise EmptyEvaluation("no records to evaluate")
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    f1 = f1_score(precision, recall)
    neg_precision = counts.tn / (counts.tn + counts.fn) if counts.tn + counts.fn else 0.0
    neg_recall = counts.tn / (counts.tn + counts.fp) if counts.tn + counts.fp else 0.0
    neg_f1 = f1_score(neg_precision, neg_recall)
    return MetricSet(
        accuracy=(counts.tp + counts.tn) / total,
        precision=precision,
        recall=recall,
        f1=f1,
        macro_f1=(f1 + neg_f1) / 2.0,
        bias=bias(precision, recall),
    )


def robustness(f1_per_slice, slice_kind: str = "partition") -> RobustnessReport:
    """Sample standard deviation of F1 across n evaluation slices.

    sigma = sqrt( sum((f1_k - mean)^2) / (n - 1) ); smaller is more stable.
    Requires n >= 2 because of the n-1 denominator.
    """
    values = tuple(float(v) for v in f1_per_slice)
    n = len(values)
    if n < 2:
        raise TooFewSlices(f"robustness needs at least 2 slices, got {n}")
    if all(v == values[0] for v in values):
        # constant series: exactly zero, no float residue from the mean
        return RobustnessReport(f1_per_slice=values, mean_f1=values[0],
                                sigma_f1=0.0, n=n, slice_kind=slice_kind)
    mean = math.fsum(values) / n
    sigma = math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1))
    return RobustnessReport(
        f1_per_slice=values, mean_f1=mean, sigma_f1=sigma, n=n, slice_kind=slice_kind
    )


def cohen_kappa(a, b) -> float:
    """Cohen's kappa over the three-way prediction space.

    kappa = (p_o - p_e) / (1 - p_e). When chance agreement p_e is 1 the
    quotient is undefined; it is taken as 1 when observed agreement is also
    perfect and 0 otherwise.
    """
    if len(a) != len(b) or not a:
        raise MisalignedPredictions("prediction vectors must be nonempty and equal length")
    n = len(a)
    p_o = sum(1 for x, y in zip(a, b) if x == y) / n
    counts_a, counts_b = Counter(a), Counter(b)
    p_e = sum(counts_a[c] * counts_b.get(c, 0) for c in counts_a) / (n * n)
    if p_e == 1.0:
        return 1.0 if p_o == 1.0 else 0.0
    return (p_o - p_e) / (1.0 - p_e)


def consistency(predictions_by_prompt: dict) -> ConsistencyReport:
    """Pairwise agreement and kappa between prompts' prediction maps.

    Input: prompt_id -> {transcript_id -> Prediction}. Every prompt must
    cover the identical transcript set. Both matrices are symmetric and the
    agreement diagonal is 1.
    """
    prompt_ids = tuple(sorted(predictions_by_prompt))
    if not prompt_ids:
        raise MisalignedPredictions("no prompts to compare")
    reference = set(predictions_by_prompt[prompt_ids[0]])
    for pid in prompt_ids[1:]:
        if set(predictions_by_prompt[pid]) != reference:
            raise MisalignedPredictions(
                f"prompt {pid!r} covers a different transcript set than {prompt_ids[0]!r}"
            )
    if not reference:
        raise MisalignedPredictions("empty transcript set")
    ordered = sorted(reference)

    vectors = {pid: [predictions_by_prompt[pid][tid] for tid in ordered] for pid in prompt_ids}
    agreement, kappa = {}, {}
    for i, a in enumerate(prompt_ids):
        for b in prompt_ids[i:]:
            va, vb = vectors[a], vectors[b]
            agree = sum(1 for x, y in zip(va, vb) if x == y) / len(ordered)
            k = cohen_kappa(va, vb)
            agreement[(a, b)] = agreement[(b, a)] = agree
            kappa[(a, b)] = kappa[(b, a)] = k
    return ConsistencyReport(prompt_ids, agreement, kappa)


# --- csv interfaces ---------------------------------------------------------

def write_metrics_csv(rows, path) -> None:
    """Write metric rows with the fixed column layout; floats keep full
    precision via repr so downstream recomputation is exact."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRICS_CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({col: row[col] for col in METRICS_CSV_COLUMNS})


def load_metrics_csv(path) -> list:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            parsed = dict(row)
            for col in ("accuracy", "precision", "recall", "f1", "macro_f1",
                        "bias", "sigma_f1", "invalid_rate"):
                parsed[col] = float(parsed[col])
            parsed["n_slices"] = int(parsed["n_slices"])
            rows.append(parsed)
    return rows


def write_consistency_csv(report: ConsistencyReport, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["prompt_a", "prompt_b", "agreement", "kappa"])
        for i, a in enumerate(report.prompt_ids):
            for b in report.prompt_ids[i + 1:]:
                writer.writerow([a, b, report.agreement(a, b), report.kappa(a, b)])
