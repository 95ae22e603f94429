"""Resampling, image filters, gray-level discretization and ROI cropping."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from ..tabular.table import format_number
from .nifti import Volume

FILTERS = ("original", "wavelet", "log", "exponential", "gradient", "squareroot")
WAVELET_BANDS = tuple(a + b + c for a in "LH" for b in "LH" for c in "LH")


def resample_isotropic(vol: Volume, spacing_mm: float, interp: str = "trilinear") -> Volume:
    """Resample onto an isotropic grid anchored at the same physical origin (edge values clamped)."""
    if spacing_mm <= 0:
        raise ValueError("spacing_mm must be positive")
    if interp not in ("trilinear", "nearest"):
        raise ValueError(f"unknown interpolation {interp!r}")
    if vol.kind == "mask" and interp != "nearest":
        raise ValueError("masks must be resampled with nearest-neighbour interpolation, not trilinear")
    if all(abs(s - spacing_mm) < 1e-9 for s in vol.spacing):
        return vol
    ratio = [spacing_mm / s for s in vol.spacing]
    # small tolerance so e.g. 3 * 0.7 / 0.7 does not round up an extra voxel
    dims = [max(1, math.ceil(d * s / spacing_mm - 1e-9)) for d, s in zip(vol.dims, vol.spacing)]
    coords = [np.arange(n) * r for n, r in zip(dims, ratio)]
    if interp == "nearest":
        idx = [np.clip(np.floor(c + 0.5).astype(int), 0, d - 1) for c, d in zip(coords, vol.dims)]
        out = vol.data[np.ix_(*idx)]
    else:
        out = vol.data.astype(np.float64)
        for axis, c in enumerate(coords):
            out = _lerp_axis(out, c, axis)
    aff = None
    if vol.affine is not None:
        aff = vol.affine.copy()
        aff[:3, :3] = aff[:3, :3] * np.array(ratio)[None, :]
    return replace(vol, data=out, spacing=(spacing_mm,) * 3, affine=aff)


def _lerp_axis(x: np.ndarray, coords: np.ndarray, axis: int) -> np.ndarray:
    """Linear interpolation along one axis with clamped edges; a + t(b - a) keeps constants exact."""
    n = x.shape[axis]
    c = np.clip(coords, 0.0, n - 1)
    lo = np.floor(c).astype(int)
    hi = np.minimum(lo + 1, n - 1)
    shape = [1] * x.ndim
    shape[axis] = len(c)
    t = (c - lo).reshape(shape)
    a = np.take(x, lo, axis=axis)
    b = np.take(x, hi, axis=axis)
    return a + t * (b - a)


def _haar(x: np.ndarray, axis: int, high: bool) -> np.ndarray:
    nxt = np.concatenate([np.take(x, np.arange(1, x.shape[axis]), axis=axis),
                          np.take(x, [x.shape[axis] - 1], axis=axis)], axis=axis)
    return (x - nxt) / math.sqrt(2.0) if high else (x + nxt) / math.sqrt(2.0)


def wavelet_bands(x: np.ndarray) -> dict[str, np.ndarray]:
    """Single-level undecimated Haar along each axis; band letters follow axis order (x, y, z)."""
    out = {}
    for band in WAVELET_BANDS:
        y = x.astype(np.float64)
        for axis, letter in enumerate(band):
            y = _haar(y, axis, letter == "H")
        out[f"wavelet-{band}"] = y
    return out


def laplacian(x: np.ndarray, spacing) -> np.ndarray:
    padded = np.pad(x, 1, mode="symmetric")
    core = tuple(slice(1, -1) for _ in range(x.ndim))
    out = np.zeros_like(x, dtype=np.float64)
    for axis, h in enumerate(spacing):
        fwd = list(core)
        bwd = list(core)
        fwd[axis] = slice(2, None)
        bwd[axis] = slice(0, -2)
        out += (padded[tuple(fwd)] - 2.0 * x + padded[tuple(bwd)]) / (h * h)
    return out


def log_name(sigma: float) -> str:
    return f"log-sigma-{format_number(float(sigma))}mm"


def apply_filter(vol: Volume, filter_id: str, sigmas=(1.0,)) -> dict[str, np.ndarray]:
    """Named derived image(s) for one filter; images keep the input dims."""
    x = vol.data.astype(np.float64)
    if filter_id == "original":
        return {"original": x}
    if filter_id == "gradient":
        grads = [np.gradient(x, h, axis=a) if x.shape[a] > 1 else np.zeros_like(x)
                 for a, h in enumerate(vol.spacing)]
        return {"gradient": np.sqrt(sum(g * g for g in grads))}
    if filter_id == "squareroot":
        return {"squareroot": np.sign(x) * np.sqrt(np.abs(x))}
    if filter_id == "exponential":
        c = float(np.max(np.abs(x))) if x.size else 0.0
        if c == 0.0:
            return {"exponential": np.ones_like(x)}
        return {"exponential": np.exp(x * math.log(1.0 + c) / c)}
    if filter_id == "log":
        out = {}
        for s in sigmas:
            if s <= 0:
                raise ValueError(f"LoG sigma must be positive, got {s}")
            smooth = ndimage.gaussian_filter(x, [s / h for h in vol.spacing], mode="reflect", truncate=4.0)
            out[log_name(s)] = laplacian(smooth, vol.spacing)
        return out
    if filter_id == "wavelet":
        return wavelet_bands(x)
    raise ValueError(f"unknown filter {filter_id!r}; supported: {', '.join(FILTERS)}")


@dataclass(frozen=True)
class DiscretizedRoi:
    levels: np.ndarray  # int array, 0 outside the ROI, 1..n_levels inside
    n_levels: int
    bin_width: float
    roi_min: float


def n_levels_for(lo: float, hi: float, bin_width: float) -> int:
    return max(1, math.ceil((hi - lo) / bin_width))


def discretize_values(x: np.ndarray, bin_width: float) -> tuple[np.ndarray, int, float]:
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    if x.size == 0:
        raise ValueError("empty ROI")
    lo, hi = float(np.min(x)), float(np.max(x))
    n = n_levels_for(lo, hi, bin_width)
    lev = np.floor((x - lo) / bin_width).astype(np.int64) + 1
    return np.clip(lev, 1, n), n, lo


def discretize(image: np.ndarray, roi: np.ndarray, bin_width: float) -> DiscretizedRoi:
    lev, n, lo = discretize_values(image[roi], bin_width)
    levels = np.zeros(image.shape, dtype=np.int64)
    levels[roi] = lev
    return DiscretizedRoi(levels, n, bin_width, lo)


def bounding_box(roi: np.ndarray) -> tuple[slice, ...]:
    idx = np.nonzero(roi)
    if not idx[0].size:
        raise ValueError("empty ROI")
    return tuple(slice(int(i.min()), int(i.max()) + 1) for i in idx)
