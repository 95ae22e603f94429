"""Gray-level texture matrices (GLCM, GLRLM, GLSZM, GLDM, NGTDM) and their features.

Inputs are integer level arrays (2D or 3D) with 0 outside the ROI and 1..Ng inside.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import ndimage

SENTINEL = 1e6

GLCM = ("joint_energy", "joint_entropy", "contrast", "correlation", "idm", "id", "maximum_probability",
        "sum_average", "sum_entropy", "difference_average", "difference_entropy", "cluster_shade",
        "cluster_prominence", "autocorrelation")
GLRLM = ("sre", "lre", "gln", "glnn", "rln", "rlnn", "rp", "glv", "rv", "run_entropy", "lglre", "hglre",
         "srlgle", "srhgle", "lrlgle", "lrhgle")
GLSZM = ("sae", "lae", "gln", "glnn", "szn", "sznn", "zp", "glv", "zv", "zone_entropy", "lglze", "hglze",
         "salgle", "sahgle", "lalgle", "lahgle")
GLDM = ("sde", "lde", "gln", "dn", "dnn", "glv", "dv", "dependence_entropy", "lgle", "hgle", "sdlgle",
        "sdhgle", "ldlgle", "ldhgle")
NGTDM = ("coarseness", "contrast", "busyness", "complexity", "strength")


def directions(ndim: int) -> list[tuple[int, ...]]:
    """Unique neighbour offsets (first nonzero component positive): 13 in 3D, 4 in 2D."""
    out = []
    for off in itertools.product((-1, 0, 1), repeat=ndim):
        nz = [v for v in off if v != 0]
        if nz and nz[0] > 0:
            out.append(off)
    return out


def neighbours(ndim: int) -> list[tuple[int, ...]]:
    return [off for off in itertools.product((-1, 0, 1), repeat=ndim) if any(off)]


def _shift_pair(shape, off):
    """Slices (a, b) such that arr[b] is the neighbour at arr[a] + off."""
    a, b = [], []
    for n, o in zip(shape, off):
        if o >= 0:
            a.append(slice(0, max(0, n - o)))
            b.append(slice(o, n))
        else:
            a.append(slice(-o, n))
            b.append(slice(0, max(0, n + o)))
    return tuple(a), tuple(b)


def safe_div(num: float, den: float) -> float:
    if den == 0:
        return 0.0 if num == 0 else SENTINEL
    return num / den


def _entropy(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p))) + 0.0


# ---------------------------------------------------------------- GLCM

def glcm_matrices(levels: np.ndarray, n_levels: int, distance: int = 1) -> list[np.ndarray]:
    """Symmetric, unnormalized co-occurrence counts per direction with at least one pair."""
    mats = []
    for d in directions(levels.ndim):
        off = tuple(distance * v for v in d)
        sa, sb = _shift_pair(levels.shape, off)
        a, b = levels[sa], levels[sb]
        keep = (a > 0) & (b > 0)
        if not keep.any():
            continue
        m = np.zeros((n_levels, n_levels))
        np.add.at(m, (a[keep] - 1, b[keep] - 1), 1.0)
        mats.append(m + m.T)
    return mats


def glcm_from_matrix(P: np.ndarray) -> dict[str, float]:
    P = P / P.sum()
    ng = P.shape[0]
    i = np.arange(1, ng + 1, dtype=np.float64)[:, None]
    j = i.T
    px, py = P.sum(axis=1), P.sum(axis=0)
    lv = np.arange(1, ng + 1, dtype=np.float64)
    ux, uy = float(np.dot(lv, px)), float(np.dot(lv, py))
    sx = math.sqrt(max(0.0, float(np.dot((lv - ux) ** 2, px))))
    sy = math.sqrt(max(0.0, float(np.dot((lv - uy) ** 2, py))))
    p_sum = np.bincount((i + j - 2).astype(int).ravel(), weights=P.ravel(), minlength=2 * ng - 1)
    p_diff = np.bincount(np.abs(i - j).astype(int).ravel(), weights=P.ravel(), minlength=ng)
    k_sum = np.arange(2, 2 * ng + 1, dtype=np.float64)
    k_diff = np.arange(ng, dtype=np.float64)
    auto = float(np.sum(i * j * P))
    cl = i + j - ux - uy
    corr = 1.0 if sx * sy == 0 else (auto - ux * uy) / (sx * sy)
    return {
        "joint_energy": float(np.sum(P * P)),
        "joint_entropy": _entropy(P.ravel()),
        "contrast": float(np.sum((i - j) ** 2 * P)),
        "correlation": corr,
        "idm": float(np.sum(P / (1.0 + (i - j) ** 2))),
        "id": float(np.sum(P / (1.0 + np.abs(i - j)))),
        "maximum_probability": float(P.max()),
        "sum_average": float(np.dot(k_sum, p_sum)),
        "sum_entropy": _entropy(p_sum),
        "difference_average": float(np.dot(k_diff, p_diff)),
        "difference_entropy": _entropy(p_diff),
        "cluster_shade": float(np.sum(cl ** 3 * P)),
        "cluster_prominence": float(np.sum(cl ** 4 * P)),
        "autocorrelation": auto,
    }


def _mean_maps(maps: list[dict[str, float]]) -> dict[str, float]:
    keys = maps[0].keys()
    return {k: float(sum(m[k] for m in maps) / len(maps)) for k in keys}


def glcm_features(levels: np.ndarray, n_levels: int, distance: int = 1) -> dict[str, float]:
    mats = glcm_matrices(levels, n_levels, distance)
    if not mats:
        # no voxel pairs at all: each voxel paired with itself
        counts = np.bincount(levels[levels > 0], minlength=n_levels + 1)[1:]
        mats = [np.diag(counts.astype(np.float64))]
    return _mean_maps([glcm_from_matrix(m) for m in mats])


# ---------------------------------------------------------------- GLRLM

def glrlm_matrix(levels: np.ndarray, n_levels: int, direction) -> np.ndarray:
    """Run-length counts R[level-1, length-1] for maximal runs along `direction`."""
    roi = levels > 0
    max_len = max(levels.shape)
    R = np.zeros((n_levels, max_len))
    # a run starts where the predecessor is outside the volume/ROI or has another level
    prev = np.zeros(levels.shape, dtype=np.int64)
    back = tuple(-v for v in direction)
    sa, sb = _shift_pair(levels.shape, back)
    prev[sa] = levels[sb]
    start = roi & (prev != levels)
    cur = np.argwhere(start)
    lev = levels[start]
    length = np.ones(len(cur), dtype=np.int64)
    alive = np.ones(len(cur), dtype=bool)
    step = np.asarray(direction)
    shape = np.asarray(levels.shape)
    pos = cur.copy()
    while alive.any():
        pos = pos + step
        inside = alive & np.all((pos >= 0) & (pos < shape), axis=1)
        same = np.zeros(len(cur), dtype=bool)
        if inside.any():
            idx = tuple(pos[inside].T)
            same[inside] = levels[idx] == lev[inside]
        length[same] += 1
        alive = same
    np.add.at(R, (lev - 1, length - 1), 1.0)
    return R


def run_features(M: np.ndarray, n_voxels: int) -> dict[str, float]:
    """Shared run/zone-style statistics over a (level, size) count matrix."""
    total = M.sum()
    p = M / total
    ng, nr = M.shape
    i = np.arange(1, ng + 1, dtype=np.float64)[:, None]
    j = np.arange(1, nr + 1, dtype=np.float64)[None, :]
    pg, pr = p.sum(axis=1), p.sum(axis=0)
    mu_i = float(np.sum(p * i))
    mu_j = float(np.sum(p * j))
    return {
        "short": float(np.sum(p / j ** 2)),
        "long": float(np.sum(p * j ** 2)),
        "gln": float(np.sum(M.sum(axis=1) ** 2) / total),
        "glnn": float(np.sum(pg ** 2)),
        "sn": float(np.sum(M.sum(axis=0) ** 2) / total),
        "snn": float(np.sum(pr ** 2)),
        "pct": float(total / n_voxels),
        "glv": float(np.sum(p * (i - mu_i) ** 2)),
        "sv": float(np.sum(p * (j - mu_j) ** 2)),
        "entropy": _entropy(p.ravel()),
        "lgle": float(np.sum(p / i ** 2)),
        "hgle": float(np.sum(p * i ** 2)),
        "s_lgle": float(np.sum(p / (i ** 2 * j ** 2))),
        "s_hgle": float(np.sum(p * i ** 2 / j ** 2)),
        "l_lgle": float(np.sum(p * j ** 2 / i ** 2)),
        "l_hgle": float(np.sum(p * i ** 2 * j ** 2)),
    }


_RUN_ORDER = ("short", "long", "gln", "glnn", "sn", "snn", "pct", "glv", "sv", "entropy", "lgle", "hgle",
              "s_lgle", "s_hgle", "l_lgle", "l_hgle")


def _rename(vals: dict[str, float], names) -> dict[str, float]:
    return {n: vals[k] for n, k in zip(names, _RUN_ORDER)}


def glrlm_from_matrix(R: np.ndarray, n_voxels: int) -> dict[str, float]:
    return _rename(run_features(R, n_voxels), GLRLM)


def glrlm_features(levels: np.ndarray, n_levels: int) -> dict[str, float]:
    n = int((levels > 0).sum())
    return _mean_maps([glrlm_from_matrix(glrlm_matrix(levels, n_levels, d), n) for d in directions(levels.ndim)])


# ---------------------------------------------------------------- GLSZM

def glszm_matrix(levels: np.ndarray, n_levels: int) -> np.ndarray:
    structure = np.ones((3,) * levels.ndim, dtype=bool)
    sizes_by_level = []
    for lev in range(1, n_levels + 1):
        lab, nzones = ndimage.label(levels == lev, structure=structure)
        sizes_by_level.append(np.bincount(lab.ravel())[1:] if nzones else np.zeros(0, dtype=np.int64))
    max_size = max([int(s.max()) for s in sizes_by_level if s.size] or [1])
    S = np.zeros((n_levels, max_size))
    for lev, sizes in enumerate(sizes_by_level):
        if sizes.size:
            np.add.at(S[lev], sizes - 1, 1.0)
    return S


def glszm_from_matrix(S: np.ndarray, n_voxels: int) -> dict[str, float]:
    return _rename(run_features(S, n_voxels), GLSZM)


def glszm_features(levels: np.ndarray, n_levels: int) -> dict[str, float]:
    return glszm_from_matrix(glszm_matrix(levels, n_levels), int((levels > 0).sum()))


# ---------------------------------------------------------------- GLDM / NGTDM helpers

def _neighbour_stats(levels: np.ndarray, alpha: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per voxel: count of dependent neighbours, neighbour level sum, neighbour count (ROI only)."""
    dep = np.zeros(levels.shape, dtype=np.int64)
    nsum = np.zeros(levels.shape, dtype=np.float64)
    ncount = np.zeros(levels.shape, dtype=np.int64)
    for off in neighbours(levels.ndim):
        sa, sb = _shift_pair(levels.shape, off)
        a, b = levels[sa], levels[sb]
        valid = (a > 0) & (b > 0)
        dep[sa] += valid & (np.abs(a - b) <= alpha)
        nsum[sa] += np.where(valid, b, 0)
        ncount[sa] += valid
    return dep, nsum, ncount


def gldm_matrix(levels: np.ndarray, n_levels: int, alpha: int = 0) -> np.ndarray:
    """D[level-1, dep-1] where dep = 1 + number of dependent neighbours."""
    dep, _, _ = _neighbour_stats(levels, alpha)
    roi = levels > 0
    D = np.zeros((n_levels, 3 ** levels.ndim))
    np.add.at(D, (levels[roi] - 1, dep[roi]), 1.0)
    return D


def gldm_from_matrix(D: np.ndarray) -> dict[str, float]:
    v = run_features(D, int(D.sum()))
    keys = ("short", "long", "gln", "sn", "snn", "glv", "sv", "entropy", "lgle", "hgle", "s_lgle", "s_hgle",
            "l_lgle", "l_hgle")
    return {n: v[k] for n, k in zip(GLDM, keys)}


def gldm_features(levels: np.ndarray, n_levels: int, alpha: int = 0) -> dict[str, float]:
    return gldm_from_matrix(gldm_matrix(levels, n_levels, alpha))


def ngtdm_matrix(levels: np.ndarray, n_levels: int) -> tuple[np.ndarray, np.ndarray]:
    """(n_i, s_i) per level, over ROI voxels having at least one ROI neighbour."""
    _, nsum, ncount = _neighbour_stats(levels)
    valid = (levels > 0) & (ncount > 0)
    lev = levels[valid]
    diff = np.abs(lev - nsum[valid] / ncount[valid])
    n = np.bincount(lev - 1, minlength=n_levels).astype(np.float64)[:n_levels]
    s = np.bincount(lev - 1, weights=diff, minlength=n_levels)[:n_levels]
    return n, s


def ngtdm_from_matrix(n: np.ndarray, s: np.ndarray) -> dict[str, float]:
    nvp = float(n.sum())
    if nvp == 0:
        return {"coarseness": SENTINEL, "contrast": 0.0, "busyness": 0.0, "complexity": 0.0, "strength": 0.0}
    p = n / nvp
    lv = np.arange(1, len(n) + 1, dtype=np.float64)
    present = p > 0
    ngp = int(present.sum())
    pi, ii, si = p[present], lv[present], s[present]
    PI, PJ = pi[:, None], pi[None, :]
    I, J = ii[:, None], ii[None, :]
    SI, SJ = si[:, None], si[None, :]
    ps = float(np.sum(pi * si))
    if ngp > 1:
        contrast = float(np.sum(PI * PJ * (I - J) ** 2)) / (ngp * (ngp - 1)) * float(np.sum(si)) / nvp
    else:
        contrast = 0.0
    busy_den = float(np.sum(np.abs(I * PI - J * PJ)))
    complexity = float(np.sum(np.abs(I - J) * (PI * SI + PJ * SJ) / (PI + PJ))) / nvp
    strength_num = float(np.sum((PI + PJ) * (I - J) ** 2))
    return {
        "coarseness": safe_div(1.0, ps),
        "contrast": contrast,
        "busyness": safe_div(ps, busy_den),
        "complexity": complexity,
        "strength": safe_div(strength_num, float(np.sum(si))),
    }


def ngtdm_features(levels: np.ndarray, n_levels: int) -> dict[str, float]:
    return ngtdm_from_matrix(*ngtdm_matrix(levels, n_levels))


TEXTURE_CLASSES = {
    "glcm": glcm_features,
    "glrlm": glrlm_features,
    "glszm": glszm_features,
    "gldm": gldm_features,
    "ngtdm": ngtdm_features,
}


def texture_features(cls: str, levels: np.ndarray, n_levels: int, mode: str = "3d") -> dict[str, float]:
    """Features of one class; '2d_slicewise' averages per-slice values over slices touching the ROI."""
    fn = TEXTURE_CLASSES[cls]
    if mode == "3d":
        return fn(levels, n_levels)
    if mode != "2d_slicewise":
        raise ValueError(f"unknown mode {mode!r}")
    maps = [fn(levels[:, :, z], n_levels) for z in range(levels.shape[2]) if (levels[:, :, z] > 0).any()]
    return _mean_maps(maps)
