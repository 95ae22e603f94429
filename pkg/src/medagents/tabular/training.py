"""Cross-validated leaderboard, random-search tuning, blending, persistence and inference."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..svg import PlotSpec, render_svg
from .bundle import ModelBundle, Pipeline, blend_labels, fit_pipeline, load_bundle, save_bundle
from .metrics import (CLASSIFICATION_METRICS, REGRESSION_METRICS, compute_classification_metrics,
                      compute_regression_metrics, confusion)
from .models import ALIASES, GRIDS, ModelSpec, fit_model, predict_raw, zoo
from .table import FeatureTable, TableError, format_number, infer_task_type, read_csv

logger = logging.getLogger(__name__)

PRIMARY = {"classification": "accuracy", "regression": "r2"}
DEFAULT_FOLDS = 10
TOP_N = 3
LEARNING_FRACTIONS = (0.1, 0.25, 0.5, 0.75, 1.0)


def metric_names(task: str) -> tuple[str, ...]:
    return CLASSIFICATION_METRICS if task == "classification" else REGRESSION_METRICS


def _warn(warnings: list[str], msg: str) -> None:
    warnings.append(msg)
    logger.warning(msg)


# ---------------------------------------------------------------- folds

def assign_folds(y: Sequence, folds: int, stratified: bool, seed: int = 0) -> np.ndarray:
    """Fold id per row. Stratified: each class is shuffled, then dealt round-robin with one running counter."""
    n = len(y)
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if folds > n:
        raise ValueError(f"folds={folds} exceeds the number of rows ({n})")
    rng = np.random.default_rng(seed)
    out = np.empty(n, dtype=np.int64)
    if stratified:
        labels = np.asarray([str(v) for v in y], dtype=object)
        counter = 0
        for c in sorted(set(labels.tolist())):
            for i in rng.permutation(np.flatnonzero(labels == c)):
                out[i] = counter % folds
                counter += 1
    else:
        perm = rng.permutation(n)
        out[perm] = np.arange(n) % folds
    return out


@dataclass
class FoldData:
    train_idx: np.ndarray
    test_idx: np.ndarray
    pipeline: Pipeline
    X_train: np.ndarray
    y_train: np.ndarray  # class indices or floats
    X_test: np.ndarray
    y_test: np.ndarray


@dataclass
class Dataset:
    table: FeatureTable
    target: str
    task: str
    y: np.ndarray  # class indices (classification) or floats
    classes: list[str] = field(default_factory=list)

    @property
    def labels(self) -> list[str]:
        return [self.classes[i] for i in self.y]


def make_dataset(table: FeatureTable, target: str, task: str | None = None) -> tuple[Dataset, list[str]]:
    if target not in table:
        raise TableError(f"unknown target column {target!r}; columns: {', '.join(table.names)}")
    warnings: list[str] = []
    col = table.column(target)
    keep = np.flatnonzero(~col.missing_mask)
    if len(keep) < table.n_rows:
        _warn(warnings, f"dropped {table.n_rows - len(keep)} row(s) with missing target")
        table = table.take(keep)
        col = table.column(target)
    if table.n_rows < 2:
        raise TableError(f"single-row dataset: need at least 2 labelled rows, got {table.n_rows}")
    inferred = infer_task_type(table, target)  # raises on a constant target
    task = task or inferred
    if task == "classification":
        labels = col.as_text()
        classes = sorted(set(labels))
        index = {c: i for i, c in enumerate(classes)}
        return Dataset(table, target, task, np.array([index[v] for v in labels], dtype=np.int64), classes), warnings
    if col.kind != "numeric":
        raise TableError(f"regression target {target!r} must be numeric (column kind is {col.kind})")
    return Dataset(table, target, task, col.values.astype(np.float64)), warnings


def oversample(X: np.ndarray, y: np.ndarray, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded random oversampling of every class up to the majority count."""
    rng = np.random.default_rng(seed)
    classes, counts = np.unique(y, return_counts=True)
    top = counts.max()
    extra = [rng.choice(np.flatnonzero(y == c), top - k, replace=True) for c, k in zip(classes, counts) if k < top]
    if not extra:
        return X, y
    idx = np.concatenate([np.arange(len(y))] + extra)
    return X[idx], y[idx]


def prepare_folds(ds: Dataset, fold_ids: np.ndarray, normalize: bool = True, oversample_train: bool = False,
                  seed: int = 0) -> list[FoldData]:
    """Fit one pipeline per training fold; test rows never touch the fitted statistics."""
    out = []
    for k in range(int(fold_ids.max()) + 1):
        te = np.flatnonzero(fold_ids == k)
        tr = np.flatnonzero(fold_ids != k)
        pipe, Xtr = fit_pipeline(ds.table.take(tr), ds.target, normalize)
        ytr = ds.y[tr]
        if oversample_train and ds.task == "classification":
            Xtr, ytr = oversample(Xtr, ytr, seed + k)
        out.append(FoldData(tr, te, pipe, Xtr, ytr, pipe.transform(ds.table.take(te)), ds.y[te]))
    return out


# ---------------------------------------------------------------- cross-validation

@dataclass
class CvResult:
    label: str
    fold_metrics: list[dict[str, float]]
    mean: dict[str, float]
    sd: dict[str, float]
    folds: int
    stratified: bool
    oof_prediction: np.ndarray  # class indices or floats, in row order
    oof_probability: np.ndarray | None = None
    pipelines: list[Pipeline] = field(default_factory=list)

    def score(self, metric: str) -> float:
        return self.mean[metric]


def _fit_members(specs: Sequence[ModelSpec], X: np.ndarray, y: np.ndarray, n_classes: int | None) -> list[dict]:
    return [fit_model(s, X, y, n_classes) for s in specs]


def _predict_members(models: Sequence[dict], X: np.ndarray, n_classes: int | None) -> np.ndarray:
    return np.mean([predict_raw(m, X, n_classes) for m in models], axis=0)


def _fold_metrics(ds: Dataset, y_true: np.ndarray, out: np.ndarray) -> dict[str, float]:
    if ds.task == "classification":
        pred = blend_labels(out, ds.classes)
        m = compute_classification_metrics([ds.classes[i] for i in y_true], pred, out, ds.classes)
    else:
        m = compute_regression_metrics(y_true, out)
    return {k: m[k] for k in metric_names(ds.task)}


def cross_validate_folds(specs: ModelSpec | Sequence[ModelSpec], ds: Dataset, fold_data: list[FoldData],
                         stratified: bool) -> CvResult:
    """CV of one model, or of the soft-vote blend of several, over precomputed folds."""
    specs = [specs] if isinstance(specs, ModelSpec) else list(specs)
    if len({s.task for s in specs}) != 1 or specs[0].task != ds.task:
        raise ValueError("all models must share the dataset's task type")
    k = len(ds.classes) if ds.task == "classification" else None
    n = ds.table.n_rows
    oof_prob = np.zeros((n, k)) if k else None
    oof = np.zeros(n, dtype=np.int64 if k else np.float64)
    per_fold = []
    for fd in fold_data:
        out = _predict_members(_fit_members(specs, fd.X_train, fd.y_train, k), fd.X_test, k)
        per_fold.append(_fold_metrics(ds, fd.y_test, out))
        if k:
            oof_prob[fd.test_idx] = out
            pred = blend_labels(out, ds.classes)
            oof[fd.test_idx] = [ds.classes.index(p) for p in pred]
        else:
            oof[fd.test_idx] = out
    names = metric_names(ds.task)
    mean = {m: float(np.mean([f[m] for f in per_fold])) for m in names}
    sd = {m: float(np.std([f[m] for f in per_fold])) for m in names}
    label = specs[0].label() if len(specs) == 1 else "blend[" + ", ".join(s.algorithm for s in specs) + "]"
    return CvResult(label, per_fold, mean, sd, len(fold_data), stratified, oof, oof_prob,
                    [fd.pipeline for fd in fold_data])


def cross_validate(spec: ModelSpec | Sequence[ModelSpec], table: FeatureTable, target: str,
                   folds: int = DEFAULT_FOLDS, stratified: bool | None = None, seed: int = 0,
                   normalize: bool = True, oversample_train: bool = False) -> CvResult:
    first = spec if isinstance(spec, ModelSpec) else spec[0]
    ds, _ = make_dataset(table, target, first.task)
    if stratified is None:
        stratified = ds.task == "classification"
    fold_ids = assign_folds(ds.labels if stratified else ds.y, folds, stratified, seed)
    fd = prepare_folds(ds, fold_ids, normalize, oversample_train, seed)
    return cross_validate_folds(spec, ds, fd, stratified)


# ---------------------------------------------------------------- tuning

@dataclass
class TuneResult:
    best: ModelSpec
    cv: CvResult
    trials: list[tuple[ModelSpec, float]]


def draw_configs(grid: dict[str, list], iters: int, seed: int) -> list[dict]:
    """Seeded draws with replacement; one integer draw per parameter in sorted-key order."""
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ValueError("tuning grid must be non-empty")
    rng = np.random.default_rng(seed)
    keys = sorted(grid)
    return [{k: grid[k][int(rng.integers(len(grid[k])))] for k in keys} for _ in range(max(1, iters))]


def tune_folds(spec: ModelSpec, ds: Dataset, fold_data: list[FoldData], stratified: bool,
               grid: dict[str, list] | None = None, iters: int = 20, seed: int = 0) -> TuneResult:
    grid = GRIDS[spec.algorithm] if grid is None else grid
    primary = PRIMARY[ds.task]
    cache: dict[str, CvResult] = {}
    best: tuple[ModelSpec, CvResult] | None = None
    trials = []
    for params in draw_configs(grid, iters, seed):
        cand = ModelSpec(spec.algorithm, spec.task, {**spec.hyperparams, **params}, spec.seed)
        key = json.dumps(cand.params(), sort_keys=True)
        if key not in cache:
            cache[key] = cross_validate_folds(cand, ds, fold_data, stratified)
        cv = cache[key]
        trials.append((cand, cv.mean[primary]))
        if best is None or cv.mean[primary] > best[1].mean[primary]:  # strict: first draw wins ties
            best = (cand, cv)
    return TuneResult(best[0], best[1], trials)


def tune(spec: ModelSpec, table: FeatureTable, target: str, grid: dict[str, list] | None = None, iters: int = 20,
         seed: int = 0, folds: int = 5, normalize: bool = True) -> TuneResult:
    ds, _ = make_dataset(table, target, spec.task)
    strat = ds.task == "classification"
    fold_ids = assign_folds(ds.labels if strat else ds.y, folds, strat, seed)
    return tune_folds(spec, ds, prepare_folds(ds, fold_ids, normalize, False, seed), strat, grid, iters, seed)


# ---------------------------------------------------------------- blending

def blend_probabilities(member_probs: Sequence[np.ndarray]) -> np.ndarray:
    return np.mean(np.stack([np.asarray(p, dtype=np.float64) for p in member_probs]), axis=0)


def blend(bundles: Sequence[ModelBundle], name: str = "blended_model") -> ModelBundle:
    """Soft-vote blend of fitted single-model bundles that share one pipeline."""
    if not bundles:
        raise ValueError("nothing to blend")
    tasks = {b.task_type for b in bundles}
    if len(tasks) != 1:
        raise ValueError(f"cannot blend mixed task types: {sorted(tasks)}")
    first = bundles[0]
    members = [m for b in bundles for m in b.members]
    return ModelBundle(first.task_type, first.target, first.pipeline, members, list(first.classes), {}, name)


# ---------------------------------------------------------------- training entry points

@dataclass
class TrainOptions:
    folds: int = DEFAULT_FOLDS
    exclude: Sequence[str] = ()
    normalize: bool = True
    oversample: bool = False
    seed: int = 0
    tune_iters: int = 20
    power_transformation: bool = False
    dimensionality_reduction: bool = False
    make_plots: bool = True


@dataclass
class TrainingReport:
    task_type: str
    target: str
    primary_metric: str
    folds: int
    leaderboard: list[tuple[ModelSpec, CvResult]]
    tuned: list[tuple[ModelSpec, CvResult]]
    blended: CvResult
    artifacts: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def summary(self) -> str:
        p = self.primary_metric
        top = ", ".join(f"{s.algorithm} {cv.mean[p]:.4f}" for s, cv in self.leaderboard[:TOP_N])
        return (f"{self.task_type} on {self.target!r} with {self.folds}-fold CV; leaderboard top: {top}; "
                f"blended {p} = {self.blended.mean[p]:.4f} (sd {self.blended.sd[p]:.4f})")


def resolve_exclusions(task: str, exclude: Sequence[str], warnings: list[str]) -> set[str]:
    out = set()
    for raw in exclude:
        name = ALIASES.get(raw.strip().lower(), raw.strip().lower())
        if name in zoo(task):
            out.add(name)
        else:
            _warn(warnings, f"unknown model name ignored: {raw!r}")
    return out


def _write_rows(path: Path, header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return str(path)


def _ordered_metrics(task: str) -> list[str]:
    """Primary ranking metric first, then the rest in declared order."""
    return [PRIMARY[task]] + [m for m in metric_names(task) if m != PRIMARY[task]]


def _metric_columns(task: str) -> list[str]:
    cols = []
    for m in _ordered_metrics(task):
        cols += [f"{m}_mean", f"{m}_sd"]
    return cols


def _metric_cells(task: str, cv: CvResult) -> list[str]:
    cells = []
    for m in _ordered_metrics(task):
        cells += [format_number(cv.mean[m]), format_number(cv.sd[m])]
    return cells


def _effective_folds(ds: Dataset, folds: int, warnings: list[str]) -> int:
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if ds.task == "classification":
        counts = np.bincount(ds.y, minlength=len(ds.classes))
        small = [ds.classes[i] for i in np.flatnonzero(counts < 2)]
        if small:
            raise TableError(f"class(es) with fewer than 2 rows cannot be cross-validated: {small}")
        limit = int(counts.min())
    else:
        limit = ds.table.n_rows
    if folds > limit:
        _warn(warnings, f"folds reduced from {folds} to {limit} (smallest split size)")
        return limit
    return folds


def train_tabular(task: str, input_path: str | Path, target: str, output_dir: str | Path,
                  options: TrainOptions | None = None) -> TrainingReport:
    opt = options or TrainOptions()
    warnings: list[str] = []
    raw = read_csv(input_path)
    ds, w = make_dataset(raw, target, task)
    warnings += w
    if opt.power_transformation:
        _warn(warnings, "power_transformation is not supported and was ignored")
    if opt.dimensionality_reduction:
        _warn(warnings, "dimensionality_reduction is not supported and was ignored")
    if opt.oversample and task == "regression":
        _warn(warnings, "oversample applies to classification only and was ignored")
    folds = _effective_folds(ds, int(opt.folds), warnings)
    strat = task == "classification"
    fold_ids = assign_folds(ds.labels if strat else ds.y, folds, strat, opt.seed)
    fold_data = prepare_folds(ds, fold_ids, opt.normalize, opt.oversample, opt.seed)
    primary = PRIMARY[task]

    excluded = resolve_exclusions(task, opt.exclude, warnings)
    candidates = [a for a in zoo(task) if a not in excluded]
    if not candidates:
        raise ValueError("every model in the zoo was excluded")
    board = [(spec, cross_validate_folds(spec, ds, fold_data, strat))
             for spec in (ModelSpec(a, task, {}, opt.seed) for a in candidates)]
    board.sort(key=lambda sc: (-sc[1].mean[primary], candidates.index(sc[0].algorithm)))

    top = board[:TOP_N]
    if len(top) < TOP_N:
        _warn(warnings, f"only {len(top)} candidate model(s) available for tuning and blending")
    tuned = []
    for i, (spec, _) in enumerate(top):
        tr = tune_folds(spec, ds, fold_data, strat, iters=opt.tune_iters, seed=opt.seed * 1000 + i)
        tuned.append((tr.best, tr.cv))
    tuned.sort(key=lambda sc: -sc[1].mean[primary])  # stable: leaderboard order breaks ties
    blended = cross_validate_folds([s for s, _ in tuned], ds, fold_data, strat)

    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = TrainingReport(task, target, primary, folds, board, tuned, blended, warnings=warnings)
    cols = _metric_columns(task)
    report.artifacts.append(_write_rows(out / "leaderboard.csv", ["rank", "algorithm"] + cols,
                                        [[str(i + 1), s.algorithm] + _metric_cells(task, cv)
                                         for i, (s, cv) in enumerate(board)]))
    report.artifacts.append(_write_rows(out / "tuned_results.csv", ["rank", "algorithm", "hyperparams"] + cols,
                                        [[str(i + 1), s.algorithm, json.dumps(s.params(), sort_keys=True)]
                                         + _metric_cells(task, cv) for i, (s, cv) in enumerate(tuned)]))
    report.artifacts.append(_write_rows(out / "metrics.csv", ["metric", "value"],
                                        [[m, format_number(blended.mean[m])] for m in metric_names(task)]))

    # final models are refit on every labelled row with one shared pipeline
    pipe, X = fit_pipeline(ds.table, target, opt.normalize)
    y = ds.y
    if opt.oversample and task == "classification":
        X, y = oversample(X, y, opt.seed)
    k = len(ds.classes) if task == "classification" else None
    singles = []
    for i, (spec, cv) in enumerate(tuned):
        name = f"tuned_model_{i + 1}"
        b = ModelBundle(task, target, pipe, [(spec, fit_model(spec, X, y, k))], list(ds.classes), dict(cv.mean), name)
        singles.append(b)
        report.artifacts.append(save_bundle(b, out / "models" / name))
    bl = blend(singles)
    bl.training_metrics = dict(blended.mean)
    report.artifacts.append(save_bundle(bl, out / "models" / "blended_model"))

    if opt.make_plots:
        report.artifacts += _training_plots(ds, blended, tuned[0][0], fold_data, out / "plots", opt.seed)
    return report


def train_classifier(input_path: str | Path, target: str, output_dir: str | Path,
                     options: TrainOptions | None = None) -> TrainingReport:
    return train_tabular("classification", input_path, target, output_dir, options)


def train_regressor(input_path: str | Path, target: str, output_dir: str | Path,
                    options: TrainOptions | None = None) -> TrainingReport:
    return train_tabular("regression", input_path, target, output_dir, options)


# ---------------------------------------------------------------- plots

def roc_points(y_pos: np.ndarray, scores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(-scores, kind="mergesort")
    s, t = scores[order], y_pos[order].astype(np.float64)
    distinct = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tps = np.cumsum(t)[distinct]
    fps = (distinct + 1) - tps
    P, N = max(t.sum(), 1.0), max(len(t) - t.sum(), 1.0)
    return np.r_[0.0, fps / N], np.r_[0.0, tps / P]


def _roc_on_grid(fpr: np.ndarray, tpr: np.ndarray, grid: np.ndarray) -> list[float]:
    return [float(tpr[fpr <= g + 1e-12].max()) for g in grid]


def _learning_curve(ds: Dataset, spec: ModelSpec, fold_data: list[FoldData], seed: int):
    k = len(ds.classes) if ds.task == "classification" else None
    rng = np.random.default_rng(seed)
    train_sc, val_sc = [], []
    for frac in LEARNING_FRACTIONS:
        tr_f, va_f = [], []
        for fd in fold_data[:3]:
            m = max(2, int(round(frac * len(fd.y_train))))
            sub = np.sort(rng.permutation(len(fd.y_train))[:m])
            model = fit_model(spec, fd.X_train[sub], fd.y_train[sub], k)
            tr_f.append(_fold_metrics(ds, fd.y_train[sub], predict_raw(model, fd.X_train[sub], k))[PRIMARY[ds.task]])
            va_f.append(_fold_metrics(ds, fd.y_test, predict_raw(model, fd.X_test, k))[PRIMARY[ds.task]])
        train_sc.append(float(np.mean(tr_f)))
        val_sc.append(float(np.mean(va_f)))
    return train_sc, val_sc


def _training_plots(ds: Dataset, blended: CvResult, best: ModelSpec, fold_data: list[FoldData], plots: Path,
                    seed: int) -> list[str]:
    files = []
    if ds.task == "classification":
        grid = np.linspace(0.0, 1.0, 101)
        series = {}
        targets = [1] if len(ds.classes) == 2 else range(len(ds.classes))
        for j in targets:
            fpr, tpr = roc_points(ds.y == j, blended.oof_probability[:, j])
            series[f"class {ds.classes[j]}"] = _roc_on_grid(fpr, tpr, grid)
        series["chance"] = list(grid)
        files.append(render_svg(PlotSpec("line", "ROC (blended model, out-of-fold)", x=grid, series=series,
                                         xlabel="false positive rate", ylabel="true positive rate"),
                                plots / "roc_curve.svg"))
        cm = confusion(ds.y, blended.oof_prediction, range(len(ds.classes))).astype(np.float64)
        rows = cm.sum(axis=1, keepdims=True)
        files.append(render_svg(PlotSpec("heatmap", "Confusion matrix (row-normalized, CV)",
                                         matrix=(cm / np.where(rows > 0, rows, 1)).tolist(), labels=ds.classes),
                                plots / "confusion_matrix.svg"))
        ylab = "accuracy"
    else:
        pred = blended.oof_prediction
        files.append(render_svg(PlotSpec("scatter", "Predicted vs actual (blended, CV)", x=ds.y, values=pred,
                                         xlabel="actual", ylabel="predicted"), plots / "prediction_vs_actual.svg"))
        files.append(render_svg(PlotSpec("scatter", "Residuals (blended, CV)", x=pred, values=ds.y - pred,
                                         xlabel="predicted", ylabel="actual - predicted"), plots / "residuals.svg"))
        ylab = "r2"
    tr, va = _learning_curve(ds, best, fold_data, seed)
    files.append(render_svg(PlotSpec("line", f"Learning curve ({best.algorithm})", x=list(LEARNING_FRACTIONS),
                                     series={"train": tr, "validation": va}, xlabel="fraction of training rows",
                                     ylabel=ylab), plots / "learning_curve.svg"))
    return files


# ---------------------------------------------------------------- inference

@dataclass
class InferenceResult:
    predictions_path: str
    metrics_path: str | None
    metrics: dict[str, float]
    n_rows: int
    warnings: list[str] = field(default_factory=list)


def infer_tabular(bundle_path: str | Path, data_path: str | Path, output_dir: str | Path,
                  gt_column: str | None = None) -> InferenceResult:
    bundle = load_bundle(bundle_path)
    pipe = bundle.pipeline
    header = read_csv(data_path, kinds={})  # cheap way to learn the header and reuse the CSV checks
    missing = [c for c in pipe.input_columns if c not in header]
    if missing:
        raise TableError(f"input is missing feature column(s) required by the model: {', '.join(missing)}")
    if gt_column is not None and gt_column not in header:
        raise TableError(f"unknown gt column {gt_column!r}; columns: {', '.join(header.names)}")
    kinds = {c: pipe.column_kinds[c] for c in pipe.input_columns}
    try:
        table = read_csv(data_path, kinds=kinds)
    except ValueError as exc:
        raise TableError(f"input values do not match the training column types: {exc}") from None
    pred, probs = bundle.predict(table)
    warnings: list[str] = []
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    header_row = table.names + ["prediction"]
    pred_text = list(pred) if bundle.task_type == "classification" else [format_number(v) for v in pred]
    if probs is not None:
        header_row += [f"prob_{c}" for c in bundle.classes]
    rows = []
    for i, r in enumerate(table.rows_as_text()):
        row = r + [pred_text[i]]
        if probs is not None:
            row += [format_number(float(p)) for p in probs[i]]
        rows.append(row)
    pred_path = _write_rows(out / "predictions.csv", header_row, rows)
    metrics: dict[str, float] = {}
    metrics_path = None
    if gt_column is not None:
        gt = table.column(gt_column)
        ok = np.flatnonzero(~gt.missing_mask)
        if len(ok) < table.n_rows:
            _warn(warnings, f"{table.n_rows - len(ok)} row(s) without ground truth excluded from metrics")
        if len(ok) == 0:
            raise TableError(f"gt column {gt_column!r} has no values")
        if bundle.task_type == "classification":
            truth = [gt.as_text()[i] for i in ok]
            classes = list(bundle.classes) + sorted(set(truth) - set(bundle.classes))
            if len(classes) > len(bundle.classes):
                _warn(warnings, "ground truth contains labels never seen in training")
            p = np.zeros((len(ok), len(classes)))
            p[:, :len(bundle.classes)] = probs[ok]
            metrics = compute_classification_metrics(truth, [pred[i] for i in ok], p, classes)
        else:
            if gt.kind != "numeric":
                raise TableError(f"gt column {gt_column!r} must be numeric for a regression model")
            m = compute_regression_metrics(gt.values[ok], np.asarray(pred)[ok])
            metrics = {k: m[k] for k in REGRESSION_METRICS}
        metrics_path = _write_rows(out / "metrics.csv", ["metric", "value"],
                                   [[k, format_number(v)] for k, v in metrics.items()])
    return InferenceResult(pred_path, metrics_path, metrics, table.n_rows, warnings)
