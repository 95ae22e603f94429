"""Preprocessing pipeline and the single-file `.mbundle` model archive.

An archive is one JSON document (sorted keys, fixed separators) in which
every numeric array is stored as a base64 block of little-endian bytes, so
save -> load -> save reproduces the file byte for byte.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .models import ModelSpec, predict_raw
from .table import (EncodingPlan, FeatureTable, ImputationPlan, TableError, apply_encoding, fit_encoding,
                    fit_imputation, impute)

FORMAT_VERSION = 1
BUNDLE_SUFFIX = ".mbundle"


class BundleError(ValueError):
    """Unreadable or inconsistent archive."""


class BundleVersionError(BundleError):
    pass


@dataclass(frozen=True)
class Pipeline:
    input_columns: tuple[str, ...]
    column_kinds: dict[str, str]
    imputation: ImputationPlan
    encoding: EncodingPlan
    mean: np.ndarray | None = None  # normalization stats; None when normalization is off
    scale: np.ndarray | None = None

    @property
    def feature_names(self) -> list[str]:
        return self.encoding.feature_names()

    def transform(self, table: FeatureTable) -> np.ndarray:
        missing = [c for c in self.input_columns if c not in table]
        if missing:
            raise TableError(f"input is missing feature column(s): {', '.join(missing)}")
        t = impute(table.select(list(self.input_columns)), self.imputation)
        X = apply_encoding(t, self.encoding).X
        X = np.where(np.isnan(X), 0.0, X)
        if self.mean is not None:
            X = (X - self.mean) / self.scale
        return X

    def to_dict(self) -> dict:
        return {"input_columns": list(self.input_columns), "column_kinds": dict(self.column_kinds),
                "imputation": self.imputation.to_dict(), "encoding": self.encoding.to_dict(),
                "mean": self.mean, "scale": self.scale}

    @classmethod
    def from_dict(cls, d: dict) -> "Pipeline":
        return cls(tuple(d["input_columns"]), dict(d["column_kinds"]), ImputationPlan.from_dict(d["imputation"]),
                   EncodingPlan.from_dict(d["encoding"]), d.get("mean"), d.get("scale"))


def fit_pipeline(table: FeatureTable, target: str, normalize: bool = True) -> tuple[Pipeline, np.ndarray]:
    """Fit imputation, encoding and normalization on `table` only; returns the pipeline and its matrix."""
    inputs = [n for n in table.names if n != target]
    feats = table.select(inputs)
    plan = fit_imputation(feats)
    imputed = impute(feats, plan)
    enc = fit_encoding(imputed)
    kinds = {c.name: c.kind for c in feats.columns}
    pipe = Pipeline(tuple(inputs), kinds, plan, enc)
    if not enc.feature_names():
        raise TableError("no usable feature columns after encoding")
    X = pipe.transform(table)
    if normalize:
        mean = X.mean(axis=0)
        sd = X.std(axis=0)
        scale = np.where(sd > 0, sd, 1.0)
        pipe = Pipeline(pipe.input_columns, kinds, plan, enc, mean, scale)
        X = (X - mean) / scale
    return pipe, X


@dataclass
class ModelBundle:
    task_type: str
    target: str
    pipeline: Pipeline
    members: list[tuple[ModelSpec, dict]]  # one member for tuned models, three for a blend
    classes: list[str] = field(default_factory=list)
    training_metrics: dict[str, float] = field(default_factory=dict)
    name: str = "model"
    format_version: int = FORMAT_VERSION

    def __post_init__(self) -> None:
        if not self.pipeline.feature_names:
            raise BundleError("bundle has an empty feature list")
        if not self.members:
            raise BundleError("bundle has no models")

    @property
    def feature_names(self) -> list[str]:
        return self.pipeline.feature_names

    @property
    def is_blend(self) -> bool:
        return len(self.members) > 1

    def predict_matrix(self, X: np.ndarray) -> tuple[list[str] | np.ndarray, np.ndarray | None]:
        if self.task_type == "classification":
            k = len(self.classes)
            probs = np.mean([predict_raw(m, X, k) for _, m in self.members], axis=0)
            return blend_labels(probs, self.classes), probs
        preds = np.mean([predict_raw(m, X, None) for _, m in self.members], axis=0)
        return preds, None

    def predict(self, table: FeatureTable):
        return self.predict_matrix(self.pipeline.transform(table))

    def to_dict(self) -> dict:
        return {"format_version": self.format_version, "name": self.name, "task_type": self.task_type,
                "target": self.target, "feature_names": self.feature_names, "classes": list(self.classes),
                "pipeline": self.pipeline.to_dict(), "training_metrics": dict(self.training_metrics),
                "members": [{"spec": s.to_dict(), "params": p} for s, p in self.members]}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelBundle":
        pipe = Pipeline.from_dict(d["pipeline"])
        b = cls(d["task_type"], d["target"], pipe,
                [(ModelSpec.from_dict(m["spec"]), m["params"]) for m in d["members"]],
                list(d["classes"]), dict(d["training_metrics"]), d["name"], int(d["format_version"]))
        if list(d["feature_names"]) != b.feature_names:
            raise BundleError("feature list does not match the stored encoding plan")
        return b


def blend_labels(probs: np.ndarray, classes: Sequence[str]) -> list[str]:
    """Argmax per row; on ties the lexicographically smallest label wins."""
    order = sorted(range(len(classes)), key=lambda i: classes[i])
    ordered = probs[:, order]
    return [classes[order[int(j)]] for j in np.argmax(ordered, axis=1)]


# ---------------------------------------------------------------- serialization

def _encode(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        arr = np.ascontiguousarray(obj)
        dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
        return {"__array__": {"dtype": dt.str, "shape": list(arr.shape),
                              "data": base64.b64encode(arr.astype(dt).tobytes()).decode("ascii")}}
    if isinstance(obj, dict):
        return {str(k): _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _decode(obj: Any) -> Any:
    if isinstance(obj, dict):
        if set(obj) == {"__array__"}:
            a = obj["__array__"]
            raw = base64.b64decode(a["data"].encode("ascii"), validate=True)
            return np.frombuffer(raw, dtype=np.dtype(a["dtype"])).reshape(a["shape"]).copy()
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    return obj


def dumps_bundle(bundle: ModelBundle) -> bytes:
    return json.dumps(_encode(bundle.to_dict()), sort_keys=True, separators=(",", ":"),
                      allow_nan=True).encode("utf-8") + b"\n"


def loads_bundle(data: bytes) -> ModelBundle:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BundleError(f"corrupted bundle archive: {exc}") from None
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise BundleError("corrupted bundle archive: no format_version")
    if doc["format_version"] != FORMAT_VERSION:
        raise BundleVersionError(f"unsupported bundle format_version {doc['format_version']!r} "
                                 f"(this build reads {FORMAT_VERSION})")
    try:
        return ModelBundle.from_dict(_decode(doc))
    except BundleError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise BundleError(f"corrupted bundle archive: {exc!r}") from None


def save_bundle(bundle: ModelBundle, directory: str | Path, name: str | None = None) -> str:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    path = d / f"{name or bundle.name}{BUNDLE_SUFFIX}"
    path.write_bytes(dumps_bundle(bundle))
    return str(path)


def load_bundle(path: str | Path) -> ModelBundle:
    p = Path(path)
    if p.is_dir():
        found = sorted(p.glob(f"*{BUNDLE_SUFFIX}"))
        if not found:
            raise BundleError(f"no {BUNDLE_SUFFIX} file in {p}")
        p = found[0]
    if not p.exists():
        raise FileNotFoundError(f"bundle not found: {p}")
    return loads_bundle(p.read_bytes())
