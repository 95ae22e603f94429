"""Per-case and batch radiomics extraction, plus merging of subject-level targets."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .. import __version__
from ..tabular.table import format_number
from .features import first_order_features, shape_features
from .imageops import FILTERS, apply_filter, bounding_box, discretize, resample_isotropic
from .nifti import Volume, geometry_matches, read_nifti
from .texture import TEXTURE_CLASSES, texture_features

logger = logging.getLogger(__name__)

FEATURE_CLASSES = ("firstorder", "shape", "glcm", "glrlm", "glszm", "gldm", "ngtdm")
NIFTI_SUFFIXES = (".nii.gz", ".nii")


@dataclass(frozen=True)
class ExtractionConfig:
    filters: tuple[str, ...] = ("original",)
    feature_classes: tuple[str, ...] = FEATURE_CLASSES
    bin_width: float = 25.0
    resample_spacing: float | None = None
    mode: str = "3d"
    labels: tuple[int, ...] | None = None
    workers: int = 1
    log_sigmas: tuple[float, ...] = (1.0,)
    features: tuple[str, ...] | None = None  # allowlist of full feature names
    targets_csv: str | None = None
    id_column: str = "subject_id"

    def __post_init__(self) -> None:
        bad = [f for f in self.filters if f not in FILTERS]
        if bad or not self.filters:
            raise ValueError(f"unknown filter(s) {bad}; supported: {', '.join(FILTERS)}")
        bad = [c for c in self.feature_classes if c not in FEATURE_CLASSES]
        if bad or not self.feature_classes:
            raise ValueError(f"unknown feature class(es) {bad}; supported: {', '.join(FEATURE_CLASSES)}")
        if self.bin_width <= 0:
            raise ValueError("bin_width must be positive")
        if self.resample_spacing is not None and self.resample_spacing <= 0:
            raise ValueError("resample_spacing must be positive")
        if self.mode not in ("3d", "2d_slicewise"):
            raise ValueError(f"mode must be '3d' or '2d_slicewise', got {self.mode!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if any(s <= 0 for s in self.log_sigmas):
            raise ValueError("LoG sigmas must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ExtractionConfig":
        kw = dict(d)
        for k in ("filters", "feature_classes", "log_sigmas", "labels", "features"):
            if kw.get(k) is not None:
                kw[k] = tuple(kw[k])
        if kw.get("labels") is not None:
            kw["labels"] = tuple(int(v) for v in kw["labels"])
        return cls(**kw)


@dataclass
class CaseRow:
    label: int
    image: str  # derived image name, e.g. original, wavelet-LLL, log-sigma-1mm
    features: dict[str, float]


def extract_case(image: Volume, mask: Volume, config: ExtractionConfig) -> tuple[list[CaseRow], list[str]]:
    mask = mask.as_mask() if mask.kind != "mask" else mask
    why = geometry_matches(image, mask)
    if why:
        raise ValueError(f"image/mask geometry mismatch: {why}")
    if config.resample_spacing is not None:
        image = resample_isotropic(image, config.resample_spacing, "trilinear")
        mask = resample_isotropic(mask, config.resample_spacing, "nearest")
    present = mask.labels()
    wanted = list(config.labels) if config.labels is not None else present
    warnings = [f"label {lab} not present in mask (present: {present})" for lab in wanted if lab not in present]
    labels = sorted(lab for lab in wanted if lab in present)
    if not labels:
        return [], warnings
    derived: dict[str, np.ndarray] = {}
    for f in config.filters:
        derived.update(apply_filter(image, f, config.log_sigmas))
    voxel_volume = float(np.prod(image.spacing))
    allow = set(config.features) if config.features is not None else None
    rows = []
    for lab in labels:
        roi_full = mask.data == lab
        box = bounding_box(roi_full)
        roi = roi_full[box]
        shape = None
        if "shape" in config.feature_classes:
            shape = {f"original_shape_{k}": v for k, v in shape_features(roi, mask.spacing).items()}
        for name in sorted(derived):
            img = derived[name][box]
            disc = discretize(img, roi, config.bin_width)
            feats: dict[str, float] = {}
            if shape is not None:
                feats.update(shape)
                shape = None
            for cls in config.feature_classes:
                if cls == "firstorder":
                    vals = first_order_features(img[roi], disc.levels[roi], voxel_volume)
                elif cls in TEXTURE_CLASSES:
                    vals = texture_features(cls, disc.levels, disc.n_levels, config.mode)
                else:
                    continue
                feats.update({f"{name}_{cls}_{k}": v for k, v in vals.items()})
            if allow is not None:
                feats = {k: v for k, v in feats.items() if k in allow}
            rows.append(CaseRow(lab, name, feats))
    return rows, warnings


def case_id(path: Path) -> str:
    name = path.name
    for suf in NIFTI_SUFFIXES:
        if name.endswith(suf):
            return name[: -len(suf)]
    return path.stem


def _nifti_files(d: Path) -> list[Path]:
    return sorted(p for p in d.iterdir() if p.is_file() and p.name.endswith(NIFTI_SUFFIXES))


def pair_cases(image_dir: str | Path, mask_dir: str | Path) -> tuple[list[tuple[str, Path, Path]], list[str]]:
    """(case, image, mask) triples and unpaired mask names; `<case>_0000` images are a fallback."""
    idir = Path(image_dir)
    pairs, unpaired = [], []
    for m in _nifti_files(Path(mask_dir)):
        cid = case_id(m)
        found = None
        for stem in (cid, f"{cid}_0000"):
            for suf in NIFTI_SUFFIXES:
                cand = idir / f"{stem}{suf}"
                if cand.is_file():
                    found = cand
                    break
            if found:
                break
        if found:
            pairs.append((cid, found, m))
        else:
            unpaired.append(m.name)
    return pairs, unpaired


def _run_case(args: tuple[str, str, str, dict]) -> tuple[str, list[CaseRow] | None, list[str], str | None]:
    cid, img_path, mask_path, cfg = args
    try:
        config = ExtractionConfig.from_dict(cfg)
        rows, warnings = extract_case(read_nifti(img_path), read_nifti(mask_path, as_mask=True), config)
        return cid, rows, warnings, None
    except Exception as exc:  # isolate per-case failures
        return cid, None, [], f"{type(exc).__name__}: {exc}"


@dataclass
class BatchResult:
    csv_files: list[str]
    params_path: str
    report_path: str
    successes: list[str]
    failures: dict[str, str]
    unpaired: list[str]
    warnings: list[str] = field(default_factory=list)
    merged_files: list[str] = field(default_factory=list)

    @property
    def artifacts(self) -> list[str]:
        return self.csv_files + self.merged_files + [self.params_path, self.report_path]


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return str(path)


def extract_batch(image_dir: str | Path, mask_dir: str | Path, output_dir: str | Path,
                  config: ExtractionConfig) -> BatchResult:
    for d in (image_dir, mask_dir):
        if not Path(d).is_dir():
            raise FileNotFoundError(f"no such directory: {d}")
    pairs, unpaired = pair_cases(image_dir, mask_dir)
    if not pairs:
        raise ValueError(f"no image/mask pairs found (masks in {mask_dir}, images in {image_dir})")
    jobs = [(cid, str(i), str(m), config.to_dict()) for cid, i, m in pairs]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_case, jobs))
    else:
        results = [_run_case(j) for j in jobs]
    results.sort(key=lambda r: r[0])

    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    per_label: dict[int, list[tuple[str, dict[str, float]]]] = {}
    successes, failures, warnings = [], {}, []
    for cid, rows, warns, err in results:
        warnings.extend(f"{cid}: {w}" for w in warns)
        if err is not None:
            failures[cid] = err
            continue
        successes.append(cid)
        merged: dict[int, dict[str, float]] = {}
        for r in rows:
            merged.setdefault(r.label, {}).update(r.features)
        for lab, feats in merged.items():
            per_label.setdefault(lab, []).append((cid, feats))

    csv_files, merged_files = [], []
    for lab in sorted(per_label):
        cols: list[str] = []
        seen: set[str] = set()
        for _, feats in per_label[lab]:
            for k in feats:
                if k not in seen:
                    seen.add(k)
                    cols.append(k)
        rows = [[cid, str(lab)] + [format_number(feats[c]) if c in feats else "" for c in cols]
                for cid, feats in per_label[lab]]
        path = _write_csv(out / f"features_label_{lab}.csv", ["subject_id", "label"] + cols, rows)
        csv_files.append(path)
        if config.targets_csv:
            m = merge_targets(path, config.targets_csv, config.id_column,
                              out / f"features_label_{lab}_with_targets.csv")
            merged_files.append(m.path)
            warnings.extend(m.warnings)

    params = out / "extraction_params.json"
    params.write_text(json.dumps({**config.to_dict(), "version": __version__, "image_dir": str(image_dir),
                                  "mask_dir": str(mask_dir)}, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    report = out / "report.md"
    lines = ["# Radiomics extraction report", "", f"- Cases paired: {len(pairs)}", f"- Succeeded: {len(successes)}",
             f"- Failed: {len(failures)}", f"- Labels written: {', '.join(map(str, sorted(per_label))) or 'none'}",
             "", "## Successes", ""]
    lines += [f"- {c}" for c in successes] or ["None."]
    lines += ["", "## Failures", ""]
    lines += [f"- {c}: {e}" for c, e in failures.items()] or ["None."]
    lines += ["", "## Unpaired masks", ""]
    lines += [f"- {u}" for u in unpaired] or ["None."]
    lines += ["", "## Warnings", ""]
    lines += [f"- {w}" for w in warnings] or ["None."]
    report.write_text("\n".join(lines) + "\n", encoding="utf-8")
    for w in warnings:
        logger.warning(w)
    return BatchResult(csv_files, str(params), str(report), successes, failures, unpaired, warnings, merged_files)


@dataclass
class MergeResult:
    path: str
    warnings: list[str]


def merge_targets(features_csv: str | Path, targets_csv: str | Path, id_column: str = "subject_id",
                  output_path: str | Path | None = None) -> MergeResult:
    """Left join of feature rows (on subject_id) with a subject-level targets table."""
    with open(features_csv, encoding="utf-8-sig", newline="") as fh:
        feat_rows = list(csv.reader(fh))
    with open(targets_csv, encoding="utf-8-sig", newline="") as fh:
        tgt_rows = list(csv.reader(fh))
    if not feat_rows or "subject_id" not in feat_rows[0]:
        raise ValueError(f"{features_csv}: missing subject_id column")
    if not tgt_rows or id_column not in tgt_rows[0]:
        raise ValueError(f"{targets_csv}: missing id column {id_column!r}")
    theader = tgt_rows[0]
    key = theader.index(id_column)
    extra = [i for i in range(len(theader)) if i != key]
    lookup: dict[str, list[str]] = {}
    for r in tgt_rows[1:]:
        if not r:
            continue
        if r[key] in lookup:
            raise ValueError(f"ambiguous target id {r[key]!r} in {targets_csv}")
        lookup[r[key]] = [r[i] for i in extra]
    fheader = feat_rows[0]
    sid = fheader.index("subject_id")
    taken = set(fheader)
    new_cols = [theader[i] if theader[i] not in taken else f"target_{theader[i]}" for i in extra]
    warnings = []
    out_rows = []
    for r in feat_rows[1:]:
        t = lookup.get(r[sid])
        if t is None:
            warnings.append(f"no target row for subject {r[sid]!r}")
            t = [""] * len(extra)
        out_rows.append(r + t)
    out = Path(output_path) if output_path else Path(features_csv).with_name(
        Path(features_csv).stem + "_with_targets.csv")
    _write_csv(out, fheader + new_cols, out_rows)
    return MergeResult(str(out), warnings)
