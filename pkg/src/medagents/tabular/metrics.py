"""Classification and regression metrics."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

CLASSIFICATION_METRICS = ("accuracy", "auc", "recall", "precision", "f1", "kappa", "mcc")
REGRESSION_METRICS = ("mae", "mse", "rmse", "r2", "rmsle", "mape")
R2_FLOOR = -1e12


def rank_auc(y_true: Sequence[bool], scores: Sequence[float]) -> float:
    """Mann-Whitney AUC with half credit for ties; 0.5 when one side is empty."""
    y = np.asarray(y_true, dtype=bool)
    s = np.asarray(scores, dtype=np.float64)
    pos, neg = s[y], s[~y]
    if len(pos) == 0 or len(neg) == 0:
        return 0.5
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s))
    ss = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and ss[j + 1] == ss[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    u = ranks[y].sum() - len(pos) * (len(pos) + 1) / 2.0
    return float(u / (len(pos) * len(neg)))


def confusion(y_true: Sequence, y_pred: Sequence, classes: Sequence) -> np.ndarray:
    index = {c: i for i, c in enumerate(classes)}
    m = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        m[index[t], index[p]] += 1
    return m


def kappa_from_confusion(m: np.ndarray) -> float:
    n = m.sum()
    if n == 0:
        return 0.0
    po = np.trace(m) / n
    pe = float(np.sum(m.sum(axis=1) * m.sum(axis=0))) / (n * n)
    if pe == 1.0:
        return 0.0
    return float((po - pe) / (1.0 - pe))


def mcc_from_confusion(m: np.ndarray) -> float:
    m = m.astype(np.float64)
    s = m.sum()
    c = np.trace(m)
    t = m.sum(axis=1)
    p = m.sum(axis=0)
    num = c * s - float(np.dot(t, p))
    den_a = s * s - float(np.dot(p, p))
    den_b = s * s - float(np.dot(t, t))
    if den_a == 0 or den_b == 0:
        return 0.0
    return float(num / math.sqrt(den_a * den_b))


def _prf(m: np.ndarray, k: int) -> tuple[float, float, float]:
    tp = m[k, k]
    fn = m[k].sum() - tp
    fp = m[:, k].sum() - tp
    rec = tp / (tp + fn) if tp + fn else 0.0
    prec = tp / (tp + fp) if tp + fp else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return float(rec), float(prec), float(f1)


def compute_classification_metrics(y_true: Sequence, y_pred: Sequence, probs: np.ndarray | None = None,
                                   classes: Sequence | None = None) -> dict[str, float]:
    """Binary metrics target the second sorted class; multiclass uses macro averages and one-vs-rest AUC."""
    if len(y_true) != len(y_pred):
        raise ValueError(f"length mismatch: {len(y_true)} labels vs {len(y_pred)} predictions")
    if len(y_true) == 0:
        raise ValueError("empty input")
    if classes is None:
        classes = sorted(set(y_true) | set(y_pred), key=str)
    classes = list(classes)
    k = len(classes)
    if probs is not None:
        probs = np.asarray(probs, dtype=np.float64)
        if probs.shape != (len(y_true), k):
            raise ValueError(f"probability matrix shape {probs.shape} does not match ({len(y_true)}, {k})")
        if np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-6):
            raise ValueError("probability rows must sum to 1")
    m = confusion(y_true, y_pred, classes)
    out = {"accuracy": float(np.trace(m) / m.sum())}
    yt = np.asarray([classes.index(t) for t in y_true])
    if k == 2:
        if probs is not None:
            out["auc"] = rank_auc(yt == 1, probs[:, 1])
        else:
            out["auc"] = rank_auc(yt == 1, np.asarray([classes.index(p) for p in y_pred], dtype=float))
        rec, prec, f1 = _prf(m, 1)
    else:
        aucs = []
        for j in range(k):
            pos = yt == j
            if pos.any() and (~pos).any():
                sc = probs[:, j] if probs is not None else np.asarray([p == classes[j] for p in y_pred], float)
                aucs.append(rank_auc(pos, sc))
        out["auc"] = float(np.mean(aucs)) if aucs else 0.5
        per = [_prf(m, j) for j in range(k)]
        rec, prec, f1 = (float(np.mean([p[i] for p in per])) for i in range(3))
    out.update(recall=rec, precision=prec, f1=f1, kappa=kappa_from_confusion(m), mcc=mcc_from_confusion(m))
    return {name: out[name] for name in CLASSIFICATION_METRICS}


def compute_regression_metrics(y_true: Sequence[float], y_pred: Sequence[float]) -> dict[str, float]:
    t = np.asarray(y_true, dtype=np.float64)
    p = np.asarray(y_pred, dtype=np.float64)
    if len(t) != len(p):
        raise ValueError(f"length mismatch: {len(t)} vs {len(p)}")
    if len(t) == 0:
        raise ValueError("empty input")
    err = p - t
    mse = float(np.mean(err * err))
    ss_res = float(np.sum(err * err))
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    if ss_tot == 0:
        r2 = 0.0 if ss_res == 0 else R2_FLOOR
    else:
        r2 = max(R2_FLOOR, 1.0 - ss_res / ss_tot)
    ok = (t > -1) & (p > -1)
    rmsle = float(math.sqrt(np.mean((np.log1p(p[ok]) - np.log1p(t[ok])) ** 2))) if ok.any() else float("nan")
    nz = t != 0
    with np.errstate(over="ignore"):
        mape = float(np.mean(np.abs(err[nz] / t[nz]))) if nz.any() else float("nan")
    return {"mae": float(np.mean(np.abs(err))), "mse": mse, "rmse": math.sqrt(mse), "r2": r2, "rmsle": rmsle,
            "mape": mape, "rmsle_excluded": int((~ok).sum()), "mape_excluded": int((~nz).sum())}
