"""First-order intensity statistics and mask shape descriptors."""

from __future__ import annotations

import math

import numpy as np

from ..tabular.eda import quantile

FIRST_ORDER = ("energy", "total_energy", "entropy", "uniformity", "minimum", "p10", "mean", "median", "p90",
               "maximum", "iqr", "range", "mad", "robust_mad", "rms", "variance", "sd", "skewness", "kurtosis")
SHAPE = ("volume", "surface_area", "sphericity", "surface_to_volume", "max_3d_diameter", "major_axis_length",
         "minor_axis_length", "least_axis_length", "elongation", "flatness")
DIAMETER_SAMPLE = 2000


def first_order_features(x: np.ndarray, levels: np.ndarray, voxel_volume: float) -> dict[str, float]:
    """x: ROI intensities; levels: their discretized gray levels (same order)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("empty ROI")
    n = x.size
    s = np.sort(x)
    energy = float(np.dot(x, x))
    _, counts = np.unique(np.asarray(levels).ravel(), return_counts=True)
    p = counts / counts.sum()
    mean = float(np.sum(x) / n)
    d = x - mean
    var = float(np.dot(d, d) / n)
    if var > 0:
        m3 = float(np.sum(d ** 3) / n)
        m4 = float(np.sum(d ** 4) / n)
        skew, kurt = m3 / var ** 1.5, m4 / var ** 2 - 3.0
    else:
        skew = kurt = 0.0
    p10, p90 = quantile(s, 0.10), quantile(s, 0.90)
    inner = x[(x >= p10) & (x <= p90)]
    robust = float(np.mean(np.abs(inner - inner.mean()))) if inner.size else 0.0
    return {
        "energy": energy,
        "total_energy": voxel_volume * energy,
        "entropy": float(-np.sum(p * np.log2(p))) + 0.0,
        "uniformity": float(np.sum(p * p)),
        "minimum": float(s[0]),
        "p10": p10,
        "mean": mean,
        "median": quantile(s, 0.5),
        "p90": p90,
        "maximum": float(s[-1]),
        "iqr": quantile(s, 0.75) - quantile(s, 0.25),
        "range": float(s[-1] - s[0]),
        "mad": float(np.mean(np.abs(d))),
        "robust_mad": robust,
        "rms": math.sqrt(energy / n),
        "variance": var,
        "sd": math.sqrt(var),
        "skewness": skew,
        "kurtosis": kurt,
    }


def surface_voxels(roi: np.ndarray) -> np.ndarray:
    """ROI voxels with at least one 6-neighbour outside the ROI (volume border counts as outside)."""
    padded = np.pad(roi, 1, constant_values=False)
    core = tuple(slice(1, -1) for _ in range(3))
    exposed = np.zeros(roi.shape, dtype=bool)
    for axis in range(3):
        for step in (-1, 1):
            sl = list(core)
            sl[axis] = slice(1 + step, roi.shape[axis] + 1 + step)
            exposed |= ~padded[tuple(sl)]
    return roi & exposed


def exposed_face_area(roi: np.ndarray, spacing) -> float:
    sx, sy, sz = spacing
    face = (sy * sz, sx * sz, sx * sy)
    area = 0.0
    for axis in range(3):
        diff = np.diff(np.pad(roi, [(1, 1) if a == axis else (0, 0) for a in range(3)]).astype(np.int8), axis=axis)
        area += int(np.count_nonzero(diff)) * face[axis]
    return area


def max_diameter(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    best = 0.0
    for start in range(0, len(points), 512):
        block = points[start:start + 512]
        d2 = np.sum((block[:, None, :] - points[None, :, :]) ** 2, axis=-1)
        best = max(best, float(d2.max()))
    return math.sqrt(best)


def shape_features(roi: np.ndarray, spacing) -> dict[str, float]:
    roi = np.asarray(roi, dtype=bool)
    n = int(roi.sum())
    if n == 0:
        raise ValueError("empty label")
    sp = np.asarray(spacing, dtype=np.float64)
    volume = n * float(np.prod(sp))
    area = exposed_face_area(roi, spacing)
    surf = np.argwhere(surface_voxels(roi))
    # deterministic subsample: sort by (z, y, x), keep every ceil(n/limit)-th
    surf = surf[np.lexsort((surf[:, 0], surf[:, 1], surf[:, 2]))]
    step = max(1, math.ceil(len(surf) / DIAMETER_SAMPLE))
    diam = max_diameter(surf[::step] * sp)
    coords = np.argwhere(roi) * sp
    cov = np.cov(coords.T, bias=True) if n > 1 else np.zeros((3, 3))
    lam = np.sort(np.clip(np.linalg.eigvalsh(cov), 0.0, None))[::-1]
    l1, l2, l3 = (float(v) for v in lam)
    return {
        "volume": volume,
        "surface_area": area,
        "sphericity": math.pi ** (1 / 3) * (6 * volume) ** (2 / 3) / area,
        "surface_to_volume": area / volume,
        "max_3d_diameter": diam,
        "major_axis_length": 4 * math.sqrt(l1),
        "minor_axis_length": 4 * math.sqrt(l2),
        "least_axis_length": 4 * math.sqrt(l3),
        "elongation": math.sqrt(l2 / l1) if l1 > 0 else 1.0,
        "flatness": math.sqrt(l3 / l1) if l1 > 0 else 1.0,
    }
