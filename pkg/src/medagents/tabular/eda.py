"""Exploratory data analysis: profiling statistics, outliers, correlations, plots and a report."""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..svg import PlotSpec, render_svg
from .table import (
    DEFAULT_SAMPLE_CAP,
    Column,
    FeatureTable,
    TableError,
    format_number,
    infer_task_type,
    read_csv,
    sample_rows,
)

SUMMARY_HEADER = ("column", "kind", "count", "missing", "mean", "sd", "min", "q1", "median", "q3", "max",
                  "skewness", "kurtosis", "n_distinct", "top_values")
REPORT_SECTIONS = ("Overview", "Columns", "Missing Data", "Outliers", "Correlations", "Target Relationships")
PAIRPLOT_MAX_COLUMNS = 8


def quantile(sorted_values: Sequence[float], p: float) -> float:
    """Linear interpolation at rank h = (n-1)p."""
    n = len(sorted_values)
    if n == 0:
        raise ValueError("quantile of empty input")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    h = (n - 1) * p
    lo = math.floor(h)
    hi = min(lo + 1, n - 1)
    a, b = float(sorted_values[lo]), float(sorted_values[hi])
    return a + (h - lo) * (b - a)


def iqr_fences(values: Sequence[float]) -> tuple[float, float] | None:
    v = sorted(x for x in values if not math.isnan(x))
    if len(v) < 4:
        return None
    q1, q3 = quantile(v, 0.25), quantile(v, 0.75)
    iqr = q3 - q1
    return q1 - 1.5 * iqr, q3 + 1.5 * iqr


def iqr_outliers(values: Sequence[float]) -> list[int]:
    """Row indices outside the Tukey fences; needs at least 4 present values."""
    fences = iqr_fences(values)
    if fences is None:
        return []
    lo, hi = fences
    return [i for i, x in enumerate(values) if not math.isnan(x) and (x < lo or x > hi)]


def _moments(v: np.ndarray) -> tuple[float, float, float, float]:
    """Two-pass mean, sample sd, bias-corrected skewness and excess kurtosis."""
    n = len(v)
    mean = float(np.sum(v) / n)
    d = v - mean
    m2 = float(np.sum(d * d) / n)
    sd = math.sqrt(float(np.sum(d * d)) / (n - 1)) if n > 1 else 0.0
    if m2 == 0.0:
        return mean, sd, 0.0, 0.0
    m3 = float(np.sum(d ** 3) / n)
    m4 = float(np.sum(d ** 4) / n)
    g1 = m3 / m2 ** 1.5
    g2 = m4 / m2 ** 2 - 3.0
    skew = math.sqrt(n * (n - 1)) / (n - 2) * g1 if n > 2 else float("nan")
    kurt = ((n + 1) * g2 + 6.0) * (n - 1) / ((n - 2) * (n - 3)) if n > 3 else float("nan")
    return mean, sd, skew, kurt


@dataclass
class ColumnSummary:
    name: str
    kind: str
    count: int
    missing: int
    n_distinct: int
    mean: float = float("nan")
    sd: float = float("nan")
    min: float = float("nan")
    q1: float = float("nan")
    median: float = float("nan")
    q3: float = float("nan")
    max: float = float("nan")
    skewness: float = float("nan")
    kurtosis: float = float("nan")
    top_values: list[tuple[str, int]] = field(default_factory=list)

    def row(self) -> list[str]:
        nums = [self.mean, self.sd, self.min, self.q1, self.median, self.q3, self.max, self.skewness, self.kurtosis]
        top = ";".join(f"{k}:{c}" for k, c in self.top_values)
        return [self.name, self.kind, str(self.count), str(self.missing)] + [format_number(x) for x in nums] + [
            str(self.n_distinct), top]


def summarize_column(col: Column) -> ColumnSummary:
    present = ~col.missing_mask
    count = int(present.sum())
    s = ColumnSummary(col.name, col.kind, count, col.n_missing, len(col.categories()))
    if col.kind == "numeric":
        v = np.sort(col.values[present])
        if count:
            s.mean, s.sd, s.skewness, s.kurtosis = _moments(v)
            s.min, s.max = float(v[0]), float(v[-1])
            s.q1, s.median, s.q3 = quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75)
    else:
        counts: dict[str, int] = {}
        for x in col.values[present]:
            counts[x] = counts.get(x, 0) + 1
        s.top_values = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:5]
    return s


def _ranks(v: np.ndarray) -> np.ndarray:
    """Average ranks (1-based) for ties."""
    order = np.argsort(v, kind="mergesort")
    sv = v[order]
    ranks = np.empty(len(v), dtype=np.float64)
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    if len(x) < 2:
        return float("nan")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(np.dot(dx, dx)), float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        return float("nan")
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def pairwise_correlation(x: np.ndarray, y: np.ndarray, method: str = "pearson") -> float:
    keep = ~(np.isnan(x) | np.isnan(y))
    a, b = x[keep], y[keep]
    if method == "spearman":
        a, b = _ranks(a), _ranks(b)
    elif method != "pearson":
        raise ValueError(f"unknown correlation method {method!r}")
    return _pearson(a, b)


@dataclass
class CorrelationResult:
    names: list[str]
    matrix: np.ndarray
    method: str
    notes: list[str] = field(default_factory=list)


def correlation_matrix(table: FeatureTable, method: str = "pearson") -> CorrelationResult:
    cols = table.numeric_columns()
    names = [c.name for c in cols]
    k = len(cols)
    m = np.full((k, k), np.nan)
    notes: list[str] = []
    if k < 2:
        notes.append(f"correlation skipped: {k} numeric column(s), at least 2 needed")
    for i in range(k):
        m[i, i] = 1.0
        for j in range(i + 1, k):
            m[i, j] = m[j, i] = pairwise_correlation(cols[i].values, cols[j].values, method)
    for i in range(k):
        for j in range(i + 1, k):
            if math.isnan(m[i, j]):
                notes.append(f"correlation {names[i]} vs {names[j]} undefined (zero variance or too few pairs)")
    return CorrelationResult(names, m, method, notes)


@dataclass
class EdaReport:
    input_path: str
    n_rows: int
    n_cols: int
    summaries: list[ColumnSummary]
    outliers: list[tuple[str, int, float, float, float]]
    correlation: CorrelationResult
    target_column: str | None = None
    target_rows: list[list[str]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    artifacts: list[str] = field(default_factory=list)

    def summary(self, name: str) -> ColumnSummary:
        return next(s for s in self.summaries if s.name == name)


_SAFE = re.compile(r"[^A-Za-z0-9_.-]+")


def safe_name(name: str) -> str:
    return _SAFE.sub("_", name).strip("_") or "col"


def _write_rows(path: Path, header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return str(path)


def _target_relationships(table: FeatureTable, target: str) -> tuple[list[str], list[list[str]], str]:
    tcol = table.column(target)
    task = infer_task_type(table, target)
    others = [c for c in table.numeric_columns() if c.name != target]
    if task == "classification":
        header = ["target_class", "column", "count", "mean", "sd", "median"]
        rows = []
        labels = tcol.as_text()
        classes = sorted({t for t in labels if t is not None})
        for cls in classes:
            mask = np.array([t == cls for t in labels])
            for c in others:
                v = c.values[mask]
                v = np.sort(v[~np.isnan(v)])
                if len(v):
                    mean, sd, _, _ = _moments(v)
                    rows.append([cls, c.name, str(len(v)), format_number(mean), format_number(sd),
                                 format_number(quantile(v, 0.5))])
                else:
                    rows.append([cls, c.name, "0", "", "", ""])
        return header, rows, task
    header = ["column", "pearson_with_target", "spearman_with_target"]
    rows = [[c.name, format_number(pairwise_correlation(c.values, tcol.values, "pearson")),
             format_number(pairwise_correlation(c.values, tcol.values, "spearman"))] for c in others]
    return header, rows, task


def run_eda(input_path: str | Path, output_dir: str | Path, correlation_method: str = "pearson",
            sample_cap: int = DEFAULT_SAMPLE_CAP, make_plots: bool = True,
            target_column: str | None = None, seed: int = 0) -> EdaReport:
    if correlation_method not in ("pearson", "spearman"):
        raise ValueError(f"unknown correlation method {correlation_method!r}")
    full = read_csv(input_path)
    if target_column is not None and target_column not in full:
        raise TableError(f"unknown target column {target_column!r}; columns: {', '.join(full.names)}")
    table = sample_rows(full, sample_cap, seed)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    notes: list[str] = []
    if table.n_rows < full.n_rows:
        notes.append(f"sampled {table.n_rows} of {full.n_rows} rows (seed {seed})")

    summaries = [summarize_column(c) for c in table.columns]
    outliers = []
    for c in table.numeric_columns():
        fences = iqr_fences(c.values)
        for i in iqr_outliers(c.values):
            outliers.append((c.name, i, float(c.values[i]), fences[0], fences[1]))
    corr = correlation_matrix(table, correlation_method)
    notes.extend(corr.notes)

    report = EdaReport(str(input_path), table.n_rows, table.n_cols, summaries, outliers, corr,
                       target_column, notes=notes)
    arts = report.artifacts
    arts.append(_write_rows(out / "summary_stats.csv", SUMMARY_HEADER, [s.row() for s in summaries]))
    arts.append(_write_rows(out / "missing_report.csv", ("column", "missing", "missing_pct"),
                            [[s.name, str(s.missing), format_number(round(100.0 * s.missing / max(1, table.n_rows), 4))]
                             for s in summaries if s.missing > 0]))
    arts.append(_write_rows(out / "outliers.csv", ("column", "row", "value", "lower_fence", "upper_fence"),
                            [[c, str(i), format_number(v), format_number(lo), format_number(hi)]
                             for c, i, v, lo, hi in outliers]))
    arts.append(_write_rows(out / "correlations.csv", ["column"] + corr.names,
                            [[n] + [format_number(x) for x in corr.matrix[i]] for i, n in enumerate(corr.names)]))
    target_task = None
    if target_column is not None:
        header, rows, target_task = _target_relationships(table, target_column)
        report.target_rows = rows
        arts.append(_write_rows(out / "target_relationships.csv", header, rows))
    if make_plots:
        arts.extend(_plots(table, corr, out / "plots", notes))
    md = out / "report.md"
    md.write_text(_report_markdown(report, target_task), encoding="utf-8")
    arts.append(str(md))
    return report


def _plots(table: FeatureTable, corr: CorrelationResult, pdir: Path, notes: list[str]) -> list[str]:
    arts = []
    for c in table.columns:
        stem = safe_name(c.name)
        if c.kind == "numeric":
            vals = [float(x) for x in c.values]
            arts.append(render_svg(PlotSpec("histogram", f"Histogram of {c.name}", values=vals, xlabel=c.name),
                                   pdir / f"hist_{stem}.svg"))
            arts.append(render_svg(PlotSpec("box", f"Boxplot of {c.name}", values=vals, ylabel=c.name),
                                   pdir / f"box_{stem}.svg"))
        elif c.kind in ("categorical", "boolean"):
            counts: dict[str, int] = {}
            for x in c.values:
                if x is not None:
                    counts[x] = counts.get(x, 0) + 1
            labels = sorted(counts)
            arts.append(render_svg(PlotSpec("bar", f"Counts of {c.name}", labels=labels,
                                            counts=[counts[k] for k in labels], xlabel=c.name),
                                   pdir / f"bar_{stem}.svg"))
            arts.append(render_svg(PlotSpec("pie", f"Share of {c.name}", labels=labels,
                                            counts=[counts[k] for k in labels]), pdir / f"pie_{stem}.svg"))
    if corr.names:
        arts.append(render_svg(PlotSpec("heatmap", f"{corr.method.title()} correlation", labels=corr.names,
                                        matrix=corr.matrix.tolist()), pdir / "correlation_heatmap.svg"))
    nums = table.numeric_columns()
    if len(nums) > PAIRPLOT_MAX_COLUMNS:
        notes.append(f"pairplots omitted: {len(nums)} numeric columns exceed {PAIRPLOT_MAX_COLUMNS}")
    else:
        for i, a in enumerate(nums):
            for b in nums[i + 1:]:
                keep = ~(np.isnan(a.values) | np.isnan(b.values))
                arts.append(render_svg(PlotSpec("scatter", f"{a.name} vs {b.name}", x=a.values[keep].tolist(),
                                                values=b.values[keep].tolist(), xlabel=a.name, ylabel=b.name),
                                       pdir / f"pair_{safe_name(a.name)}__{safe_name(b.name)}.svg"))
    for d in (c for c in table.columns if c.kind == "datetime"):
        stamps = d.as_text()
        order = sorted((i for i, s in enumerate(stamps) if s is not None), key=lambda i: (stamps[i], i))
        if not order or not nums:
            continue
        series = {c.name: [float(c.values[i]) for i in order] for c in nums}
        arts.append(render_svg(PlotSpec("line", f"Time series by {d.name}", x=list(range(len(order))),
                                        series=series, xlabel=f"{d.name} (ordered)"),
                               pdir / f"timeseries_{safe_name(d.name)}.svg"))
    return arts


def _md_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> list[str]:
    out = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    out += ["| " + " | ".join(r) + " |" for r in rows]
    return out


def _report_markdown(r: EdaReport, target_task: str | None) -> str:
    lines = ["# Exploratory Data Analysis", ""]
    lines += ["## Overview", "", f"- Source: `{Path(r.input_path).name}`", f"- Rows: {r.n_rows}",
              f"- Columns: {r.n_cols}"]
    kinds: dict[str, int] = {}
    for s in r.summaries:
        kinds[s.kind] = kinds.get(s.kind, 0) + 1
    lines.append("- Column kinds: " + ", ".join(f"{k} {v}" for k, v in sorted(kinds.items())))
    lines += [f"- Note: {n}" for n in r.notes]
    lines += ["", "## Columns", ""]
    lines += _md_table(("column", "kind", "count", "missing", "mean", "sd", "median", "n_distinct"),
                       [[s.name, s.kind, str(s.count), str(s.missing), format_number(s.mean), format_number(s.sd),
                         format_number(s.median), str(s.n_distinct)] for s in r.summaries])
    lines += ["", "## Missing Data", ""]
    miss = [s for s in r.summaries if s.missing]
    if miss:
        lines += [f"- {s.name}: {s.missing} missing" for s in miss]
    else:
        lines.append("No missing values.")
    lines += ["", "## Outliers", ""]
    if r.outliers:
        per: dict[str, int] = {}
        for c, *_ in r.outliers:
            per[c] = per.get(c, 0) + 1
        lines += [f"- {c}: {n} value(s) outside the 1.5 IQR fences" for c, n in per.items()]
    else:
        lines.append("No outliers outside the 1.5 IQR fences.")
    lines += ["", "## Correlations", "", f"Method: {r.correlation.method}", ""]
    if r.correlation.names:
        lines += _md_table(["column"] + r.correlation.names,
                           [[n] + [format_number(round(x, 4)) if not math.isnan(x) else "" for x in r.correlation.matrix[i]]
                            for i, n in enumerate(r.correlation.names)])
    else:
        lines.append("No numeric columns.")
    lines += ["", "## Target Relationships", ""]
    if r.target_column is None:
        lines.append("No target column specified.")
    else:
        lines.append(f"Target `{r.target_column}` treated as {target_task}; see target_relationships.csv "
                     f"({len(r.target_rows)} rows).")
    return "\n".join(lines) + "\n"
