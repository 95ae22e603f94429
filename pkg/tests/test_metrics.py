import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from medagents.tabular.metrics import (compute_classification_metrics, compute_regression_metrics,
                                       kappa_from_confusion, rank_auc)


# ---- brute-force oracles: plain loops over labels, no confusion-matrix algebra shared with the engine

def bf_auc(y, s):
    pos = [b for a, b in zip(y, s) if a]
    neg = [b for a, b in zip(y, s) if not a]
    if not pos or not neg:
        return 0.5
    tot = 0.0
    for p in pos:
        for q in neg:
            tot += 1.0 if p > q else 0.5 if p == q else 0.0
    return tot / (len(pos) * len(neg))


def bf_kappa(t, p, classes):
    n = len(t)
    po = sum(a == b for a, b in zip(t, p)) / n
    pe = sum((t.count(c) / n) * (p.count(c) / n) for c in classes)
    return 0.0 if pe == 1 else (po - pe) / (1 - pe)


def bf_mcc(t, p, classes):
    # Pearson correlation of one-hot indicator vectors, summed over classes
    n = len(t)
    cov = lambda a, b: sum(sum((a[i] == c) * (b[i] == c) for i in range(n)) / n
                           - (a.count(c) / n) * (b.count(c) / n) for c in classes)
    den = cov(t, t) * cov(p, p)
    return 0.0 if den == 0 else cov(t, p) / math.sqrt(den)


def bf_f1(t, p, c):
    tp = sum(a == c and b == c for a, b in zip(t, p))
    fp = sum(a != c and b == c for a, b in zip(t, p))
    fn = sum(a == c and b != c for a, b in zip(t, p))
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    return 2 * prec * rec / (prec + rec) if prec + rec else 0.0


def _all_assignments(k, max_n):
    classes = list(range(k))
    for n in range(1, max_n + 1):
        for t in itertools.product(classes, repeat=n):
            for p in itertools.product(classes, repeat=n):
                yield list(t), list(p)


@pytest.mark.parametrize("k,max_n", [(2, 6), (3, 5)])
def test_exhaustive_kappa_mcc_f1(k, max_n):
    classes = list(range(k))
    for t, p in _all_assignments(k, max_n):
        m = compute_classification_metrics(t, p, classes=classes)
        assert m["kappa"] == pytest.approx(bf_kappa(t, p, classes), abs=1e-12)
        assert m["mcc"] == pytest.approx(bf_mcc(t, p, classes), abs=1e-12)
        if k == 2:
            assert m["f1"] == pytest.approx(bf_f1(t, p, 1), abs=1e-12)
        else:
            assert m["f1"] == pytest.approx(sum(bf_f1(t, p, c) for c in classes) / k, abs=1e-12)


def test_exhaustive_auc_small():
    grid = (0.0, 0.25, 0.5, 1.0)
    for n in range(1, 6):
        for y in itertools.product((0, 1), repeat=n):
            for s in itertools.product(grid, repeat=n):
                assert rank_auc(np.array(y, bool), s) == pytest.approx(bf_auc(y, s), abs=1e-12)


def test_auc_worked_example():
    assert rank_auc([0, 0, 1, 1], [0.1, 0.4, 0.35, 0.8]) == 0.75
    probs = np.array([[0.9, 0.1], [0.6, 0.4], [0.65, 0.35], [0.2, 0.8]])
    m = compute_classification_metrics([0, 0, 1, 1], [0, 0, 0, 1], probs, classes=[0, 1])
    assert m["auc"] == 0.75


def test_kappa_balanced_confusion_is_zero():
    assert kappa_from_confusion(np.array([[1, 1], [1, 1]])) == 0.0


def test_perfect_predictions():
    m = compute_classification_metrics(list("abcab"), list("abcab"))
    assert m["accuracy"] == 1.0 and m["kappa"] == 1.0 and m["mcc"] == 1.0


def test_classification_errors():
    with pytest.raises(ValueError, match="length mismatch"):
        compute_classification_metrics([0, 1], [0])
    with pytest.raises(ValueError, match="sum to 1"):
        compute_classification_metrics([0, 1], [0, 1], np.array([[0.5, 0.6], [0.5, 0.5]]), [0, 1])


def test_regression_examples():
    m = compute_regression_metrics([1, 2], [2, 4])
    # |2-1|/1 and |4-2|/2 are both 1
    assert m["mae"] == 1.5 and m["mse"] == 2.5 and m["mape"] == 1.0
    exact = compute_regression_metrics([1.0, 2.0, 5.0], [1.0, 2.0, 5.0])
    assert exact["mae"] == 0 and exact["r2"] == 1 and exact["rmsle"] == 0 and exact["mape"] == 0
    z = compute_regression_metrics([0.0, 2.0, 4.0], [1.0, 2.0, 4.0])
    assert z["mape_excluded"] == 1 and z["mape"] == 0.0
    assert compute_regression_metrics([3, 3], [3, 3])["r2"] == 0.0
    assert compute_regression_metrics([3, 3], [3, 4])["r2"] == -1e12
    with pytest.raises(ValueError, match="empty"):
        compute_regression_metrics([], [])


def test_rmsle_exclusion():
    m = compute_regression_metrics([-2.0, 1.0], [0.0, 1.0])
    assert m["rmsle_excluded"] == 1 and m["rmsle"] == 0.0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(-50, 50), st.floats(-50, 50)), min_size=2, max_size=30))
def test_regression_direct_formulas(pairs):
    t = np.array([a for a, _ in pairs])
    p = np.array([b for _, b in pairs])
    m = compute_regression_metrics(t, p)
    assert m["rmse"] == pytest.approx(math.sqrt(sum((b - a) ** 2 for a, b in pairs) / len(pairs)), rel=1e-9, abs=1e-12)
    assert m["mae"] == pytest.approx(sum(abs(b - a) for a, b in pairs) / len(pairs), rel=1e-9, abs=1e-12)
