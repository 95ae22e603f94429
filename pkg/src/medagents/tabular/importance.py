"""Feature ranking: random-forest impurity, ANOVA F, mutual information and recursive elimination."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.ensemble import RandomForestClassifier, RandomForestRegressor

from ..svg import PlotSpec, render_svg
from .eda import pairwise_correlation
from .table import (
    FeatureTable,
    TableError,
    apply_encoding,
    fit_encoding,
    fit_imputation,
    format_number,
    impute,
    infer_task_type,
    read_csv,
)

logger = logging.getLogger(__name__)

METHODS = ("random_forest", "anova_f", "mutual_information", "rfe")
F_CAP = 1e12
_REL_EPS = 1e-12


def anova_f(x: Sequence[float], labels: Sequence) -> float:
    """One-way ANOVA F statistic of a feature across class labels."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=object)
    classes = sorted(set(labels.tolist()), key=str)
    k, n = len(classes), len(x)
    if k < 2:
        raise ValueError("anova_f needs at least 2 classes")
    grand = x.mean()
    ssb = ssw = 0.0
    for c in classes:
        g = x[labels == c]
        m = g.mean()
        ssb += len(g) * (m - grand) ** 2
        ssw += float(np.sum((g - m) ** 2))
    sst = float(np.sum((x - grand) ** 2))
    if ssb <= _REL_EPS * sst or sst == 0.0:
        return 0.0
    if ssw <= _REL_EPS * sst or n == k:
        return F_CAP
    return min(F_CAP, (ssb / (k - 1)) / (ssw / (n - k)))


def regression_f(x: Sequence[float], y: Sequence[float]) -> float:
    """Univariate linear-regression F = r^2 / (1 - r^2) * (n - 2)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    r = pairwise_correlation(x, y, "pearson")
    if math.isnan(r) or r == 0.0 or len(x) < 3:
        return 0.0
    r2 = r * r
    if 1.0 - r2 <= _REL_EPS:
        return F_CAP
    return min(F_CAP, r2 / (1.0 - r2) * (len(x) - 2))


def _bin_codes(v: np.ndarray, bins: int) -> np.ndarray:
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        return np.zeros(len(v), dtype=np.int64)
    codes = np.floor((v - lo) / (hi - lo) * bins).astype(np.int64)
    return np.clip(codes, 0, bins - 1)


def _label_codes(v: Sequence) -> np.ndarray:
    keys = {k: i for i, k in enumerate(sorted(set(v), key=str))}
    return np.array([keys[a] for a in v], dtype=np.int64)


def mutual_information(x: Sequence, y: Sequence, bins: int = 10, x_discrete: bool = False,
                       y_discrete: bool = False) -> float:
    """Plug-in MI in nats; continuous inputs are cut into equal-width bins."""
    if len(x) != len(y):
        raise ValueError("x and y differ in length")
    n = len(x)
    if n < 2:
        raise ValueError("mutual_information needs n >= 2")
    cx = _label_codes(list(x)) if x_discrete else _bin_codes(np.asarray(x, dtype=np.float64), bins)
    cy = _label_codes(list(y)) if y_discrete else _bin_codes(np.asarray(y, dtype=np.float64), bins)
    joint = np.zeros((cx.max() + 1, cy.max() + 1))
    np.add.at(joint, (cx, cy), 1.0)
    pxy = joint / n
    px = pxy.sum(axis=1, keepdims=True)
    py = pxy.sum(axis=0, keepdims=True)
    nz = pxy > 0
    mi = float(np.sum(pxy[nz] * np.log(pxy[nz] / (px @ py)[nz])))
    return max(0.0, mi)


def _normalize(scores: np.ndarray) -> np.ndarray:
    total = float(scores.sum())
    if total <= 0.0 or not np.isfinite(total):
        return np.full(len(scores), 1.0 / len(scores))
    return scores / total


def _forest(task: str, n_trees: int, seed: int):
    cls = RandomForestClassifier if task == "classification" else RandomForestRegressor
    return cls(n_estimators=n_trees, random_state=seed, n_jobs=1)


def rf_scores(X: np.ndarray, y: np.ndarray, task: str, n_trees: int = 200, seed: int = 0) -> np.ndarray:
    """Mean impurity decrease, normalized to sum 1 (uniform when every score is zero)."""
    if X.shape[1] == 0:
        return np.zeros(0)
    model = _forest(task, n_trees, seed).fit(X, y)
    return _normalize(np.asarray(model.feature_importances_, dtype=np.float64))


def ranking(names: Sequence[str], scores: Sequence[float]) -> list[str]:
    return [n for n, _ in sorted(zip(names, scores), key=lambda p: (-p[1], p[0]))]


def rfe_eliminate(X: np.ndarray, y: np.ndarray, names: Sequence[str], task: str, n_keep: int,
                  step_fraction: float = 0.2, n_trees: int = 200, seed: int = 0) -> tuple[list[str], dict[str, float]]:
    """Recursive elimination; returns survivors and a score per feature (later elimination scores higher)."""
    d = len(names)
    if not 1 <= n_keep <= d:
        raise ValueError(f"n_keep must be in [1, {d}], got {n_keep}")
    remaining = list(range(d))
    score: dict[str, float] = {}
    rnd = 0
    while True:
        imp = rf_scores(X[:, remaining], y, task, n_trees, seed)
        order = sorted(range(len(remaining)), key=lambda i: (-imp[i], names[remaining[i]]))
        if len(remaining) <= n_keep:
            for i in order:
                score[names[remaining[i]]] = rnd + float(imp[i])
            break
        n_drop = min(math.ceil(step_fraction * len(remaining)), len(remaining) - n_keep)
        for i in order[len(order) - n_drop:]:
            score[names[remaining[i]]] = rnd + float(imp[i])
        remaining = [remaining[i] for i in order[:len(order) - n_drop]]
        rnd += 1
    return [names[i] for i in remaining], score


@dataclass
class Prepared:
    X: np.ndarray
    y: np.ndarray
    names: list[str]
    task: str
    table: FeatureTable  # imputed, rows with missing target removed
    source: dict[str, str]
    warnings: list[str] = field(default_factory=list)


def prepare(table: FeatureTable, target: str, cardinality_threshold: int = 15) -> Prepared:
    if target not in table:
        raise TableError(f"unknown target column {target!r}; columns: {', '.join(table.names)}")
    task = infer_task_type(table, target)
    tcol = table.column(target)
    keep = np.flatnonzero(~tcol.missing_mask)
    warnings = []
    if len(keep) < table.n_rows:
        warnings.append(f"dropped {table.n_rows - len(keep)} row(s) with missing target")
    table = table.take(keep)
    table = impute(table, fit_imputation(table, exclude=[target]))
    plan = fit_encoding(table, target, cardinality_threshold)
    enc = apply_encoding(table, plan)
    tcol = table.column(target)
    if task == "classification":
        y = np.array(tcol.as_text(), dtype=object)
    else:
        y = tcol.values.astype(np.float64)
    return Prepared(enc.X, y, enc.names, task, table, plan.source_of(), warnings + list(table.warnings) + enc.warnings)


def score_features(p: Prepared, method: str, n_trees: int = 200, seed: int = 0, bins: int = 10) -> np.ndarray:
    if method == "random_forest":
        y = p.y.astype(str) if p.task == "classification" else p.y
        return rf_scores(p.X, y, p.task, n_trees, seed)
    if method == "anova_f":
        f = anova_f if p.task == "classification" else regression_f
        return np.array([f(p.X[:, j], p.y) for j in range(p.X.shape[1])])
    if method == "mutual_information":
        disc = p.task == "classification"
        return np.array([mutual_information(p.X[:, j], p.y, bins, y_discrete=disc) for j in range(p.X.shape[1])])
    if method == "rfe":
        y = p.y.astype(str) if p.task == "classification" else p.y
        _, sc = rfe_eliminate(p.X, y, p.names, p.task, 1, n_trees=n_trees, seed=seed)
        return np.array([sc[n] for n in p.names])
    raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


def rfe_select(table: FeatureTable, target: str, n_keep: int, step_fraction: float = 0.2, seed: int = 0,
               n_trees: int = 200) -> list[str]:
    p = prepare(table, target)
    y = p.y.astype(str) if p.task == "classification" else p.y
    kept, _ = rfe_eliminate(p.X, y, p.names, p.task, n_keep, step_fraction, n_trees, seed)
    return kept


@dataclass
class ImportanceResult:
    method: str
    scores: dict[str, float]
    ranking: list[str]
    task_type: str
    exported_files: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def _write(path: Path, header: Sequence[str], rows) -> str:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return str(path)


def run_feature_importance(input_path: str | Path, target: str, output_dir: str | Path,
                           method: str = "random_forest", top_ks: Sequence[int] = (), make_plots: bool = True,
                           n_trees: int = 200, seed: int = 0) -> ImportanceResult:
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if any(int(k) < 1 for k in top_ks):
        raise ValueError("top_ks entries must be >= 1")
    raw = read_csv(input_path)
    p = prepare(raw, target)
    if not p.names:
        raise TableError("no usable feature columns after encoding")
    scores = score_features(p, method, n_trees, seed)
    rank = ranking(p.names, scores)
    res = ImportanceResult(method, dict(zip(p.names, map(float, scores))), rank, p.task, warnings=list(p.warnings))
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    res.exported_files.append(_write(out / "importance_scores.csv", ("feature", "score", "rank", "method"),
                                     [[n, format_number(res.scores[n]), str(i + 1), method]
                                      for i, n in enumerate(rank)]))
    # top-k exports keep original cell text where a feature maps 1:1 to an input column
    kept_rows = raw.take(np.flatnonzero(~raw.column(target).missing_mask))
    col_of = {n: j for j, n in enumerate(p.names)}
    for k in top_ks:
        k = int(k)
        kk = min(k, len(rank))
        if kk < k:
            msg = f"top_{k}: requested {k} features but only {len(rank)} available; exporting {kk}"
            res.warnings.append(msg)
            logger.warning(msg)
        chosen = rank[:kk]
        cols = []
        for n in chosen:
            if p.source.get(n) == n and n in kept_rows:
                cols.append(["" if v is None else v for v in kept_rows.column(n).as_text()])
            else:
                cols.append([format_number(v) for v in p.X[:, col_of[n]]])
        cols.append(["" if v is None else v for v in kept_rows.column(target).as_text()])
        rows = [list(r) for r in zip(*cols)]
        res.exported_files.append(_write(out / f"top_{k}_features.csv", chosen + [target], rows))
    if make_plots:
        res.exported_files.extend(_plots(p, res, out / "plots"))
    return res


def _pca2(X: np.ndarray) -> np.ndarray:
    sd = X.std(axis=0)
    Z = (X - X.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    if Z.shape[1] == 0:
        return np.zeros((len(Z), 2))
    u, s, vt = np.linalg.svd(Z, full_matrices=False)
    # sign convention: largest |loading| positive, so output is deterministic
    for i in range(vt.shape[0]):
        if vt[i, np.argmax(np.abs(vt[i]))] < 0:
            vt[i] *= -1
    proj = Z @ vt[:2].T
    if proj.shape[1] < 2:
        proj = np.hstack([proj, np.zeros((len(Z), 2 - proj.shape[1]))])
    return proj


def _plots(p: Prepared, res: ImportanceResult, pdir: Path) -> list[str]:
    top = res.ranking[:30]
    arts = [render_svg(PlotSpec("bar", f"{res.method} importance", labels=top,
                                counts=[res.scores[n] for n in top], ylabel="score"), pdir / "importance_bar.svg")]
    vals = np.array([res.scores[n] for n in res.ranking])
    total = vals.sum()
    cum = np.cumsum(vals) / total if total > 0 else np.linspace(0, 1, len(vals))
    arts.append(render_svg(PlotSpec("line", "Cumulative importance", x=list(range(1, len(vals) + 1)),
                                    series={"cumulative": cum.tolist()}, xlabel="features"),
                           pdir / "cumulative_importance.svg"))
    proj = _pca2(p.X)
    if p.task == "classification":
        groups = [str(v) for v in p.y]
    else:
        qs = np.quantile(p.y, [0.25, 0.5, 0.75])
        groups = [f"Q{int(np.searchsorted(qs, v, side='right')) + 1}" for v in p.y]
    arts.append(render_svg(PlotSpec("scatter", "PCA (2 components)", x=proj[:, 0].tolist(),
                                    values=proj[:, 1].tolist(), groups=groups, xlabel="PC1", ylabel="PC2"),
                           pdir / "pca_scatter.svg"))
    idx = [p.names.index(n) for n in top]
    k = len(idx)
    m = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            m[i, j] = m[j, i] = pairwise_correlation(p.X[:, idx[i]], p.X[:, idx[j]])
    arts.append(render_svg(PlotSpec("heatmap", "Feature correlation", labels=top, matrix=m.tolist()),
                           pdir / "feature_correlation.svg"))
    return arts
