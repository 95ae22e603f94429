"""In-memory feature tables: CSV I/O, column typing, imputation, encoding and sampling."""

from __future__ import annotations

import csv
import io
import logging
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

KINDS = ("numeric", "categorical", "boolean", "text", "datetime")
MISSING_TOKENS = frozenset({"", "na", "nan", "null"})
BOOL_TOKENS = frozenset({"true", "false", "0", "1"})
DEFAULT_SAMPLE_CAP = 50_000
DEFAULT_CARDINALITY_THRESHOLD = 15

_NUM_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")
_ISO_RE = re.compile(
    r"^\d{4}-\d{2}-\d{2}([T ]\d{2}:\d{2}(:\d{2}(\.\d+)?)?(Z|[+-]\d{2}:?\d{2})?)?$")


class TableError(ValueError):
    pass


def is_missing(cell: str | None) -> bool:
    return cell is None or cell.strip().lower() in MISSING_TOKENS


def format_number(v: float) -> str:
    """Shortest round-trippable decimal; integral values without a trailing '.0'."""
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    v = float(v)
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


@dataclass(frozen=True)
class Column:
    name: str
    kind: str
    values: np.ndarray  # float64 with NaN for numeric; object array (str | None) otherwise

    @property
    def missing_mask(self) -> np.ndarray:
        if self.kind == "numeric":
            return np.isnan(self.values)
        return np.array([v is None for v in self.values], dtype=bool)

    @property
    def n_missing(self) -> int:
        return int(self.missing_mask.sum())

    def categories(self) -> list[str]:
        if self.kind == "numeric":
            return sorted({format_number(v) for v in self.values if not math.isnan(v)})
        return sorted({v for v in self.values if v is not None})

    def as_text(self) -> list[str | None]:
        if self.kind == "numeric":
            return [None if math.isnan(v) else format_number(v) for v in self.values]
        return list(self.values)


@dataclass(frozen=True)
class FeatureTable:
    columns: tuple[Column, ...]
    source_path: str | None = None
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise TableError(f"duplicate column names: {dup}")
        lengths = {len(c.values) for c in self.columns}
        if len(lengths) > 1:
            raise TableError("columns have unequal lengths")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def n_rows(self) -> int:
        return len(self.columns[0].values) if self.columns else 0

    @property
    def n_cols(self) -> int:
        return len(self.columns)

    def __contains__(self, name: object) -> bool:
        return name in self.names

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(f"unknown column: {name!r}")

    def kinds(self) -> dict[str, str]:
        return {c.name: c.kind for c in self.columns}

    def select(self, names: Sequence[str]) -> "FeatureTable":
        return replace(self, columns=tuple(self.column(n) for n in names))

    def drop(self, names: Iterable[str]) -> "FeatureTable":
        gone = set(names)
        return replace(self, columns=tuple(c for c in self.columns if c.name not in gone))

    def take(self, rows: np.ndarray | Sequence[int]) -> "FeatureTable":
        idx = np.asarray(rows, dtype=int)
        return replace(self, columns=tuple(replace(c, values=c.values[idx]) for c in self.columns))

    def with_column(self, col: Column) -> "FeatureTable":
        cols = [col if c.name == col.name else c for c in self.columns]
        if col.name not in self.names:
            cols.append(col)
        return replace(self, columns=tuple(cols))

    def numeric_columns(self) -> list[Column]:
        return [c for c in self.columns if c.kind == "numeric"]

    def rows_as_text(self) -> list[list[str]]:
        texts = [c.as_text() for c in self.columns]
        return [[("" if t[i] is None else t[i]) for t in texts] for i in range(self.n_rows)]


def _infer_kind(cells: list[str | None], n_rows: int) -> str:
    present = [c for c in cells if c is not None]
    if not present:
        return "numeric"
    distinct = set(present)
    lowered = {c.lower() for c in distinct}
    if len(lowered) <= 2 and lowered <= BOOL_TOKENS:
        return "boolean"
    if all(_NUM_RE.match(c) for c in distinct):
        return "numeric"
    if all(_ISO_RE.match(c) for c in distinct):
        return "datetime"
    if len(distinct) <= max(30, 0.05 * n_rows):
        return "categorical"
    return "text"


def _make_column(name: str, cells: list[str | None], kind: str | None = None) -> Column:
    if kind is None:
        kind = _infer_kind(cells, len(cells))
    if kind == "numeric":
        vals = np.array([np.nan if c is None else float(c) for c in cells], dtype=np.float64)
    elif kind == "boolean":
        vals = np.array([None if c is None else c.lower() if c.lower() in ("true", "false") else c
                         for c in cells], dtype=object)
    else:
        vals = np.array(cells, dtype=object)
    return Column(name, kind, vals)


def table_from_rows(header: Sequence[str], rows: Sequence[Sequence[str]], source_path: str | None = None,
                    kinds: dict[str, str] | None = None) -> FeatureTable:
    names = [h.strip() for h in header]
    seen: set[str] = set()
    for n in names:
        if n in seen:
            raise TableError(f"duplicate header: {n!r}")
        seen.add(n)
    cols = []
    for j, name in enumerate(names):
        cells = [None if is_missing(r[j]) else r[j].strip() for r in rows]
        cols.append(_make_column(name, cells, (kinds or {}).get(name)))
    return FeatureTable(tuple(cols), source_path=source_path)


def table_from_arrays(data: dict[str, Sequence], source_path: str | None = None) -> FeatureTable:
    """Build a table from python values; each column is typed by the CSV inference rules."""
    header = list(data)
    n = len(next(iter(data.values()))) if data else 0
    rows = []
    for i in range(n):
        row = []
        for h in header:
            v = data[h][i]
            if v is None or (isinstance(v, float) and math.isnan(v)):
                row.append("")
            elif isinstance(v, (float, np.floating)):
                row.append(format_number(float(v)))
            else:
                row.append(str(v))
        rows.append(row)
    return table_from_rows(header, rows, source_path)


def read_csv(path: str | Path, kinds: dict[str, str] | None = None) -> FeatureTable:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such file: {p}")
    with open(p, encoding="utf-8-sig", newline="") as fh:
        return parse_csv(fh.read(), str(p), kinds)


def parse_csv(text: str, source_path: str | None = None, kinds: dict[str, str] | None = None) -> FeatureTable:
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise TableError("empty CSV: header row is mandatory") from None
    width = len(header)
    rows = []
    for row in reader:
        if not row:
            continue
        if len(row) != width:
            raise TableError(f"line {reader.line_num}: expected {width} fields, got {len(row)}")
        rows.append(row)
    return table_from_rows(header, rows, source_path, kinds)


def write_csv(table: FeatureTable, path: str | Path) -> str:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.names)
        w.writerows(table.rows_as_text())
    return str(p)


def infer_task_type(table: FeatureTable, target: str) -> str:
    col = table.column(target)
    present = col.values[~col.missing_mask]
    distinct = set(present.tolist())
    if len(distinct) <= 1:
        raise TableError(f"constant target: column {target!r} has {len(distinct)} distinct value(s)")
    if col.kind in ("categorical", "boolean", "text"):
        return "classification"
    if col.kind == "numeric" and len(distinct) <= 10 and all(float(v).is_integer() for v in distinct):
        return "classification"
    return "regression"


def median(values: np.ndarray, lower: bool = False) -> float:
    """Median of non-NaN values; `lower` picks the lower middle for even counts."""
    v = np.sort(values[~np.isnan(values)])
    n = len(v)
    if n == 0:
        return float("nan")
    if n % 2 == 1:
        return float(v[n // 2])
    if lower:
        return float(v[n // 2 - 1])
    return float((v[n // 2 - 1] + v[n // 2]) / 2.0)


def mode(values: Iterable[str | None]) -> str | None:
    counts: dict[str, int] = {}
    for v in values:
        if v is not None:
            counts[v] = counts.get(v, 0) + 1
    if not counts:
        return None
    best = max(counts.values())
    return min(k for k, c in counts.items() if c == best)


@dataclass(frozen=True)
class ImputationPlan:
    fill: dict[str, object] = field(default_factory=dict)  # column -> float | str
    dropped: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"fill": dict(self.fill), "dropped": list(self.dropped)}

    @classmethod
    def from_dict(cls, d: dict) -> "ImputationPlan":
        return cls(fill=dict(d["fill"]), dropped=tuple(d["dropped"]))


def fit_imputation(table: FeatureTable, exclude: Iterable[str] = ()) -> ImputationPlan:
    skip = set(exclude)
    fill: dict[str, object] = {}
    dropped = []
    for c in table.columns:
        if c.name in skip:
            continue
        if c.n_missing == len(c.values):
            dropped.append(c.name)
        elif c.kind == "numeric":
            fill[c.name] = median(c.values)
        else:
            fill[c.name] = mode(c.values)
    return ImputationPlan(fill, tuple(dropped))


def impute(table: FeatureTable, plan: ImputationPlan | None = None) -> FeatureTable:
    """Fill missing cells (median for numerics, mode otherwise); all-missing columns are dropped."""
    if plan is None:
        plan = fit_imputation(table)
    warnings = list(table.warnings)
    cols = []
    for c in table.columns:
        if c.name in plan.dropped:
            warnings.append(f"column {c.name!r} is entirely missing and was dropped")
            continue
        if c.name not in plan.fill or c.n_missing == 0:
            cols.append(c)
            continue
        mask = c.missing_mask
        vals = c.values.copy()
        if c.kind == "numeric":
            vals[mask] = float(plan.fill[c.name])
        else:
            for i in np.flatnonzero(mask):
                vals[i] = plan.fill[c.name]
        cols.append(replace(c, values=vals))
    for w in warnings[len(table.warnings):]:
        logger.warning(w)
    return replace(table, columns=tuple(cols), warnings=tuple(warnings))


@dataclass(frozen=True)
class ColumnEncoding:
    action: str  # passthrough | one_hot | ordinal | drop
    categories: tuple[str, ...] = ()

    def width(self) -> int:
        return {"passthrough": 1, "ordinal": 1, "drop": 0}.get(self.action, len(self.categories))


@dataclass(frozen=True)
class EncodingPlan:
    columns: tuple[tuple[str, ColumnEncoding], ...]
    threshold: int = DEFAULT_CARDINALITY_THRESHOLD

    def feature_names(self) -> list[str]:
        names: list[str] = []
        for name, enc in self.columns:
            if enc.action in ("passthrough", "ordinal"):
                names.append(name)
            elif enc.action == "one_hot":
                names.extend(f"{name}={cat}" for cat in enc.categories)
        return names

    @property
    def width(self) -> int:
        return sum(enc.width() for _, enc in self.columns)

    def input_columns(self) -> list[str]:
        return [n for n, e in self.columns if e.action != "drop"]

    def source_of(self) -> dict[str, str]:
        """Encoded feature name -> input column name."""
        out = {}
        for name, enc in self.columns:
            if enc.action in ("passthrough", "ordinal"):
                out[name] = name
            elif enc.action == "one_hot":
                for cat in enc.categories:
                    out[f"{name}={cat}"] = name
        return out

    def to_dict(self) -> dict:
        return {"threshold": self.threshold,
                "columns": [[n, e.action, list(e.categories)] for n, e in self.columns]}

    @classmethod
    def from_dict(cls, d: dict) -> "EncodingPlan":
        return cls(tuple((n, ColumnEncoding(a, tuple(c))) for n, a, c in d["columns"]), int(d["threshold"]))


def fit_encoding(table: FeatureTable, target: str | None = None,
                 cardinality_threshold: int = DEFAULT_CARDINALITY_THRESHOLD) -> EncodingPlan:
    cols = []
    for c in table.columns:
        if c.name == target:
            continue
        if c.kind == "numeric":
            enc = ColumnEncoding("passthrough")
        elif c.kind == "boolean":
            enc = ColumnEncoding("passthrough")
        elif c.kind == "categorical":
            cats = tuple(c.categories())
            if len(cats) < cardinality_threshold:
                enc = ColumnEncoding("one_hot", cats)
            else:
                enc = ColumnEncoding("ordinal", cats)
        else:
            enc = ColumnEncoding("drop")
        cols.append((c.name, enc))
    return EncodingPlan(tuple(cols), cardinality_threshold)


@dataclass
class EncodedMatrix:
    X: np.ndarray
    names: list[str]
    warnings: list[str]


def apply_encoding(table: FeatureTable, plan: EncodingPlan) -> EncodedMatrix:
    n = table.n_rows
    blocks: list[np.ndarray] = []
    warnings: list[str] = []
    for name, enc in plan.columns:
        if enc.action == "drop":
            continue
        if name not in table:
            raise TableError(f"missing column required by encoding: {name!r}")
        col = table.column(name)
        if enc.action == "passthrough":
            if col.kind == "numeric":
                blocks.append(col.values.astype(np.float64)[:, None])
            else:
                vals = np.array([np.nan if v is None else _bool_value(v) for v in col.as_text()], dtype=np.float64)
                blocks.append(vals[:, None])
            continue
        texts = col.as_text()
        index = {cat: i for i, cat in enumerate(enc.categories)}
        unseen = sorted({t for t in texts if t is not None and t not in index})
        for u in unseen:
            warnings.append(f"column {name!r}: unseen category {u!r} mapped to reserved index")
        if enc.action == "ordinal":
            reserved = len(enc.categories)
            vals = np.array([np.nan if t is None else index.get(t, reserved) for t in texts], dtype=np.float64)
            blocks.append(vals[:, None])
        else:
            block = np.zeros((n, len(enc.categories)), dtype=np.float64)
            for i, t in enumerate(texts):
                if t is None:
                    block[i, :] = np.nan
                elif t in index:
                    block[i, index[t]] = 1.0
            blocks.append(block)
    X = np.hstack(blocks) if blocks else np.zeros((n, 0))
    for w in warnings:
        logger.warning(w)
    return EncodedMatrix(X, plan.feature_names(), warnings)


def _bool_value(v: str) -> float:
    low = v.lower()
    if low in ("1", "true"):
        return 1.0
    if low in ("0", "false"):
        return 0.0
    return float("nan")


def sample_rows(table: FeatureTable, cap: int = DEFAULT_SAMPLE_CAP, seed: int = 0) -> FeatureTable:
    if cap < 1:
        raise ValueError("cap must be >= 1")
    if table.n_rows <= cap:
        return table
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(table.n_rows, size=cap, replace=False))
    return table.take(idx)
