import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from promptscreen.dataset import GoldLabel
from promptscreen.errors import (
    EmptyEvaluation,
    GoldMissing,
    MisalignedPredictions,
    TooFewSlices,
)
from promptscreen.inference import InferenceRecord, Prediction
from promptscreen.metrics import (
    ConfusionCounts,
    bias,
    cohen_kappa,
    confusion,
    consistency,
    f1_score,
    metric_set,
    robustness,
)

P, N, I = Prediction.POSITIVE, Prediction.NEGATIVE, Prediction.INVALID
GP, GN = GoldLabel.POSITIVE, GoldLabel.NEGATIVE


def make_records(preds, prompt_id="DI-1"):
    return [
        InferenceRecord(prompt_id=prompt_id, transcript_id=f"t{i:03d}", run_index=0,
                        raw_output="", parsed=pred, latency_ms=1.0, backend_meta={})
        for i, pred in enumerate(preds)
    ]


def gold_map(golds):
    return {f"t{i:03d}": g for i, g in enumerate(golds)}


# --- confusion --------------------------------------------------------------

def test_confusion_all_correct_positive():
    counts = confusion(make_records([P, P, P, P]), gold_map([GP, GP, GP, GP]))
    assert counts == ConfusionCounts(tp=4)


def test_confusion_hand_case():
    counts = confusion(make_records([P, N, P, N]), gold_map([GP, GP, GN, GN]))
    assert (counts.tp, counts.fn, counts.fp, counts.tn) == (1, 1, 1, 1)


def test_confusion_invalid_strict_policy():
    counts = confusion(make_records([I]), gold_map([GP]))
    assert counts.fn == 1 and counts.invalid_count == 1
    counts = confusion(make_records([I]), gold_map([GN]))
    assert counts.fp == 1 and counts.invalid_count == 1


def test_confusion_gold_missing():
    with pytest.raises(GoldMissing):
        confusion(make_records([P]), {})


# --- metric_set -------------------------------------------------------------

def test_metric_set_perfect():
    ms = metric_set(ConfusionCounts(tp=1, tn=1))
    assert ms.precision == ms.recall == ms.f1 == ms.accuracy == ms.macro_f1 == 1.0
    assert ms.bias == 0.0


def test_metric_set_hand_case():
    # tp=3 fp=1 fn=2 tn=4: recounted by hand record by record
    ms = metric_set(ConfusionCounts(tp=3, fp=1, fn=2, tn=4))
    assert ms.precision == pytest.approx(0.75)
    assert ms.recall == pytest.approx(0.6)
    assert ms.f1 == pytest.approx(2 * 0.75 * 0.6 / 1.35)
    assert ms.accuracy == pytest.approx(0.7)
    assert ms.bias == pytest.approx(0.15)
    neg_f1 = 2 * (4 / 6) * (4 / 5) / ((4 / 6) + (4 / 5))
    assert ms.macro_f1 == pytest.approx((ms.f1 + neg_f1) / 2)


def test_metric_set_zero_denominators():
    ms = metric_set(ConfusionCounts(tn=5))
    assert ms.precision == 0.0 and ms.recall == 0.0 and ms.f1 == 0.0
    assert ms.accuracy == 1.0


def test_metric_set_empty():
    with pytest.raises(EmptyEvaluation):
        metric_set(ConfusionCounts())


def test_reported_row_consistency():
    assert bias(0.54, 0.91) == pytest.approx(0.37, abs=1e-12)
    assert abs(f1_score(0.54, 0.91) - 0.687) <= 0.02


# --- robustness -------------------------------------------------------------

def test_robustness_constant_series():
    assert robustness([0.5, 0.5, 0.5]).sigma_f1 == 0.0


def test_robustness_two_points():
    report = robustness([0.6, 0.7])
    assert report.sigma_f1 == pytest.approx(0.0707106781, abs=1e-9)
    assert report.mean_f1 == pytest.approx(0.65)
    assert report.n == 2


def test_robustness_too_few():
    with pytest.raises(TooFewSlices):
        robustness([0.6])
    with pytest.raises(TooFewSlices):
        robustness([])


def test_robustness_scale_property():
    values = [0.2, 0.5, 0.8, 0.4]
    base = robustness(values).sigma_f1
    for c in (0.0, 0.3, 1.0):
        scaled = robustness([c * v for v in values]).sigma_f1
        assert scaled == pytest.approx(c * base, abs=1e-12)


# --- consistency ------------------------------------------------------------

def _pred_maps(vec_a, vec_b):
    ids = [f"t{i}" for i in range(len(vec_a))]
    return {"A-1": dict(zip(ids, vec_a)), "B-1": dict(zip(ids, vec_b))}


def test_consistency_identical_vectors():
    report = consistency(_pred_maps([P, N, P, N], [P, N, P, N]))
    assert report.agreement("A-1", "B-1") == 1.0
    assert report.kappa("A-1", "B-1") == 1.0


def test_consistency_kappa_zero_case_one():
    report = consistency(_pred_maps([P, P, N, N], [P, N, P, N]))
    assert report.agreement("A-1", "B-1") == 0.5
    assert report.kappa("A-1", "B-1") == 0.0


def test_consistency_kappa_zero_case_two():
    report = consistency(_pred_maps([P, P, P, P], [P, P, N, N]))
    assert report.agreement("A-1", "B-1") == 0.5
    assert report.kappa("A-1", "B-1") == 0.0


def test_consistency_diagonal_and_symmetry():
    report = consistency(_pred_maps([P, I, N, P], [N, I, N, P]))
    assert report.agreement("A-1", "A-1") == 1.0
    assert report.kappa("A-1", "A-1") == 1.0
    assert report.agreement("A-1", "B-1") == report.agreement("B-1", "A-1")
    assert report.kappa("A-1", "B-1") == report.kappa("B-1", "A-1")


def test_consistency_constant_identical_vectors_use_pe_guard():
    # both raters always answer positive: p_e = 1, agreement perfect
    report = consistency(_pred_maps([P, P, P], [P, P, P]))
    assert report.kappa("A-1", "B-1") == 1.0


def test_cohen_kappa_pe_one_disagreement_guard():
    # degenerate marginals with imperfect agreement: defined as 0
    assert cohen_kappa([P, P], [P, N]) == pytest.approx((0.5 - 0.5) / 0.5)


def test_consistency_misaligned():
    maps = {"A-1": {"t0": P}, "B-1": {"t1": P}}
    with pytest.raises(MisalignedPredictions):
        consistency(maps)


# --- oracle equivalence and invariants ---------------------------------------

def naive_metrics(golds, preds):
    """Independent per-record recount used as the oracle."""
    tp = fp = fn = tn = 0
    for g, p in zip(golds, preds):
        if p is I:
            if g is GP:
                fn += 1
            else:
                fp += 1
        elif g is GP:
            if p is P:
                tp += 1
            else:
                fn += 1
        else:
            if p is N:
                tn += 1
            else:
                fp += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    neg_p = tn / (tn + fn) if tn + fn else 0.0
    neg_r = tn / (tn + fp) if tn + fp else 0.0
    neg_f1 = 2 * neg_p * neg_r / (neg_p + neg_r) if neg_p + neg_r else 0.0
    return {
        "accuracy": (tp + tn) / len(golds),
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "macro_f1": (f1 + neg_f1) / 2,
        "bias": abs(precision - recall),
    }


def test_oracle_equivalence_spot():
    rng = random.Random(500)
    for _ in range(100):
        n = rng.randint(1, 50)
        golds = [rng.choice([GP, GN]) for _ in range(n)]
        preds = [rng.choice([P, N, I]) for _ in range(n)]
        ms = metric_set(confusion(make_records(preds), gold_map(golds)))
        expected = naive_metrics(golds, preds)
        for key, value in expected.items():
            assert abs(getattr(ms, key) - value) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sampled_from([GP, GN]), st.sampled_from([P, N, I])),
                min_size=1, max_size=60),
       st.randoms(use_true_random=False))
def test_permutation_invariance(pairs, rng):
    golds = [g for g, _ in pairs]
    preds = [p for _, p in pairs]
    before = metric_set(confusion(make_records(preds), gold_map(golds)))
    order = list(range(len(pairs)))
    rng.shuffle(order)
    records = make_records(preds)
    shuffled = [records[i] for i in order]
    after = metric_set(confusion(shuffled, gold_map(golds)))
    assert before == after


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sampled_from([GP, GN]), st.sampled_from([P, N, I])),
                min_size=1, max_size=60))
def test_metric_ranges(pairs):
    golds = [g for g, _ in pairs]
    preds = [p for _, p in pairs]
    ms = metric_set(confusion(make_records(preds), gold_map(golds)))
    for value in (ms.accuracy, ms.precision, ms.recall, ms.f1, ms.macro_f1, ms.bias):
        assert 0.0 <= value <= 1.0
    assert ms.bias <= max(ms.precision, ms.recall)
