"""Deterministic stand-ins for the external segmentation and CNN executables.

    python -m medagents.adapters.mock segment  --input P --output D [--labels K] [--strip-channel] [--roi a,b]
    python -m medagents.adapters.mock train    --kind nnunet|image_cls --output D --data P [--classes N]
    python -m medagents.adapters.mock classify --model M --input D --output D --classes N [--gt CSV]

Every command accepts --sleep S (delay before work) and --skip-output (exit 0
without writing anything), which the negative tests use.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
import zlib
from pathlib import Path

import numpy as np

from ..radiomics.extract import NIFTI_SUFFIXES
from ..radiomics.nifti import Volume, read_nifti, write_nifti

FIXED_METRICS = {"accuracy": 0.9, "precision_macro": 0.9, "recall_macro": 0.9, "f1_macro": 0.9, "auc": 0.95}


def sphere_mask(shape: tuple[int, ...], labels: int = 1) -> np.ndarray:
    """Centered ball of radius 0.3 * min(dims); with K labels, concentric bands get labels 1..K from the rim inward."""
    grids = np.meshgrid(*[np.arange(n, dtype=np.float64) for n in shape], indexing="ij")
    center = [(n - 1) / 2.0 for n in shape]
    r = np.sqrt(sum((g - c) ** 2 for g, c in zip(grids, center)))
    radius = max(1.0, 0.3 * min(shape))
    out = np.zeros(shape, dtype=np.uint8)
    inside = r <= max(radius, float(r.min()))
    # split the distinct radii inside the ball into K bands, so small grids still carry every label
    levels = np.unique(r[inside])
    band = np.minimum((np.searchsorted(levels, r[inside]) * labels) // len(levels), labels - 1)
    out[inside] = (labels - band).astype(np.uint8)
    return out


def _strip(name: str) -> tuple[str, str]:
    for suf in NIFTI_SUFFIXES:
        if name.endswith(suf):
            return name[: -len(suf)], suf
    return name, ""


def cmd_segment(a: argparse.Namespace) -> int:
    src = Path(a.input)
    if not src.exists():
        print(f"input not found: {src}", file=sys.stderr)
        return 2
    files = [src] if src.is_file() else sorted(p for p in src.iterdir() if p.name.endswith(NIFTI_SUFFIXES))
    if a.strip_channel:
        files = [p for p in files if _strip(p.name)[0].endswith("_0000")]
    if not files:
        print(f"no NIfTI images in {src}", file=sys.stderr)
        return 2
    out = Path(a.output)
    out.mkdir(parents=True, exist_ok=True)
    for p in files:
        vol = read_nifti(p)
        stem, _ = _strip(p.name)
        if a.strip_channel:
            stem = stem[: -len("_0000")]
        mask = Volume(sphere_mask(vol.dims, a.labels), vol.spacing, vol.affine, kind="mask")
        dest = out / f"{stem}.nii.gz"
        write_nifti(mask, dest)
        print(f"wrote {dest}")
    if a.roi:
        print(f"roi subset: {a.roi}")
    return 0


def cmd_train(a: argparse.Namespace) -> int:
    data = Path(a.data)
    if not data.exists():
        print(f"data directory not found: {data}", file=sys.stderr)
        return 2
    out = Path(a.output)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / ("checkpoint_final.pth" if a.kind == "nnunet" else "best_model.pt")
    ckpt.write_bytes(b"MOCK-CHECKPOINT\n" + json.dumps({"kind": a.kind, "classes": a.classes},
                                                       sort_keys=True).encode() + b"\n")
    metrics = dict(FIXED_METRICS) if a.kind == "image_cls" else {"dice_mean": 0.9, "iou_mean": 0.85}
    (out / "metrics.json").write_text(json.dumps(metrics, sort_keys=True, indent=2) + "\n")
    print(f"wrote {ckpt}")
    return 0


def cmd_classify(a: argparse.Namespace) -> int:
    model, src = Path(a.model), Path(a.input)
    if not model.is_file():
        print(f"model not found: {model}", file=sys.stderr)
        return 2
    if not src.is_dir():
        print(f"input folder not found: {src}", file=sys.stderr)
        return 2
    files = sorted(p.relative_to(src).as_posix() for p in src.rglob("*") if p.is_file())
    preds = {f: zlib.crc32(f.encode()) % a.classes for f in files}
    out = Path(a.output)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "predictions.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["filename", "prediction"])
        w.writerows([f, preds[f]] for f in files)
    if a.gt:
        with open(a.gt, newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        truth = {r[0]: int(r[1]) for r in rows if len(r) >= 2}
        hits = [preds[f] == truth[f] for f in files if f in truth]
        acc = float(np.mean(hits)) if hits else 0.0
        (out / "metrics.json").write_text(json.dumps({"accuracy": acc, "n_evaluated": len(hits)},
                                                     sort_keys=True, indent=2) + "\n")
    print(f"classified {len(files)} image(s)")
    return 0


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="medagents.adapters.mock")
    sub = ap.add_subparsers(dest="cmd", required=True)
    s = sub.add_parser("segment")
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    s.add_argument("--labels", type=int, default=1)
    s.add_argument("--strip-channel", action="store_true")
    s.add_argument("--roi", default="")
    t = sub.add_parser("train")
    t.add_argument("--kind", choices=("nnunet", "image_cls"), required=True)
    t.add_argument("--output", required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--classes", type=int, default=2)
    c = sub.add_parser("classify")
    c.add_argument("--model", required=True)
    c.add_argument("--input", required=True)
    c.add_argument("--output", required=True)
    c.add_argument("--classes", type=int, required=True)
    c.add_argument("--gt", default="")
    for p in (s, t, c):
        p.add_argument("--sleep", type=float, default=0.0)
        p.add_argument("--skip-output", action="store_true")
    a = ap.parse_args(argv)
    if a.sleep:
        time.sleep(a.sleep)
    if a.skip_output:
        return 0
    return {"segment": cmd_segment, "train": cmd_train, "classify": cmd_classify}[a.cmd](a)


if __name__ == "__main__":
    sys.exit(main())
