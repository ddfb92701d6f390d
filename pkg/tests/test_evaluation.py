import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from typemix.evaluation import (EvaluationError, confusion_matrix, evaluate, jaccard, mcnemar,
                                mcnemar_counts, overall_accuracy, paired_ttest, roc_auc)


def test_jaccard_values():
    assert jaccard(1, 0, 0) == 1.0
    assert jaccard(3, 1, 0) == 0.75
    assert jaccard(0, 0, 0) is None
    with pytest.raises(EvaluationError):
        jaccard(-1, 0, 0)


@given(tp=st.integers(0, 50), fp=st.integers(0, 50), fn=st.integers(0, 50))
def test_jaccard_bounds_and_monotone(tp, fp, fn):
    j = jaccard(tp, fp, fn)
    if j is None:
        return
    assert 0 <= j <= 1
    assert jaccard(tp, fp + 1, fn) <= j and jaccard(tp, fp, fn + 1) <= j


def test_mcnemar_values():
    assert mcnemar(19, 6) == 5.76
    assert mcnemar(6, 19) == 5.76
    assert mcnemar(1, 0) == 0.0
    assert mcnemar(0, 0) is None


@given(a=st.integers(0, 1000), b=st.integers(0, 1000))
def test_mcnemar_symmetric(a, b):
    assert mcnemar(a, b) == mcnemar(b, a)


def test_mcnemar_counts():
    assert mcnemar_counts([True, False, False, True], [True, True, True, False]) == (2, 1)


def test_roc_perfect_and_undefined():
    curve, auc = roc_auc([0.9, 0.8, 0.1, 0.2], [True, True, False, False])
    assert auc == 1.0
    assert curve.tpr[0] == 0 and curve.fpr[0] == 0 and curve.tpr[-1] == 1 and curve.fpr[-1] == 1
    assert roc_auc([0.1, 0.2], [False, False]) == (None, None)


def test_roc_random_near_half():
    rng = np.random.default_rng(0)
    _, auc = roc_auc(rng.random(1000), rng.random(1000) < 0.3)
    assert abs(auc - 0.5) < 0.1


def test_roc_ties_count_half():
    _, auc = roc_auc([0.5, 0.5], [True, False])
    assert auc == 0.5


@given(st.lists(st.tuples(st.integers(0, 1000), st.booleans()), min_size=2, max_size=40))
def test_auc_invariant_under_monotone_transform(pairs):
    # grid scores keep the transform strictly monotone in floating point
    scores = np.array([p[0] for p in pairs]) / 1000
    labels = [p[1] for p in pairs]
    _, auc = roc_auc(scores, labels)
    _, auc2 = roc_auc(scores ** 3 / 2, labels)
    assert (auc is None) == (auc2 is None)
    if auc is not None:
        assert 0 <= auc <= 1
        assert auc == pytest.approx(auc2, abs=1e-12)


def test_ttest_closed_form():
    rng = np.random.default_rng(1)
    b = rng.normal(size=30)
    d = rng.normal(0.4, 1.3, size=30)
    res = paired_ttest(b + d, b)
    t = d.mean() / (d.std(ddof=1) / math.sqrt(30))
    assert res.t == pytest.approx(t, rel=1e-9)
    assert 0 < res.p < 1 and res.df == 29


def test_ttest_matches_scipy():
    from scipy import stats
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=12), rng.normal(size=12)
    ref = stats.ttest_rel(a, b)
    res = paired_ttest(a, b)
    assert res.t == pytest.approx(ref.statistic, rel=1e-12)
    assert res.p == pytest.approx(ref.pvalue, rel=1e-9)


def test_ttest_degenerate():
    assert paired_ttest([1, 2, 3], [1, 2, 3]) is None
    assert paired_ttest([2, 3, 4], [1, 2, 3]) is None
    with pytest.raises(EvaluationError):
        paired_ttest([1], [2])


def test_confusion():
    truth = ["int", "bool", "str", "bool"]
    c = confusion_matrix(truth, truth, labels=["int", "bool", "str", "date"])
    assert np.array_equal(c.normalized[:3, :3], np.eye(3))
    assert c.empty_columns == ["date"]
    c = confusion_matrix(["str"], ["bool"], labels=["bool", "str"])
    assert c.normalized[1, 0] == 1.0
    with pytest.raises(EvaluationError):
        confusion_matrix(["a"], [])


@given(st.lists(st.tuples(st.sampled_from("abcd"), st.sampled_from("abcd")), min_size=1))
def test_confusion_properties(pairs):
    pred = [p for p, _ in pairs]
    truth = [t for _, t in pairs]
    c = confusion_matrix(pred, truth)
    assert c.counts.sum() == len(pairs)
    sums = c.normalized.sum(axis=0)
    for lab, s in zip(c.labels, sums):
        assert s == pytest.approx(1.0, abs=1e-12) or lab in c.empty_columns
    for lab in c.labels:
        tp = sum(p == t == lab for p, t in pairs)
        fp = sum(p == lab != t for p, t in pairs)
        fn = sum(t == lab != p for p, t in pairs)
        assert c.one_vs_rest(lab) == (tp, fp, fn)


def test_accuracy_and_report():
    pred = ["a", "b", "b", "a"]
    truth = ["a", "b", "a", "a"]
    assert overall_accuracy(pred, truth) == 0.75
    assert overall_accuracy([], []) is None
    rep = evaluate(pred, truth, row_scores=[0.1, 0.9], row_truth=[False, True],
                   baseline_predicted=["b", "b", "b", "a"])
    assert rep.per_type_jaccard["a"] == pytest.approx(2 / 3)
    assert rep.auc == 1.0
    assert rep.mcnemar == (1, 0, 0.0)
    d = rep.to_dict()
    assert d["confusion"]["counts"] == rep.confusion.counts.tolist()
    assert rep.roc_csv().startswith("threshold,tpr,fpr\n")
    assert rep.confusion.to_csv().splitlines()[0] == "predicted\\truth,a,b"
    rep = evaluate(pred, truth, row_scores=[0.1, 0.2], row_truth=[False, False])
    assert rep.auc is None and rep.notes
