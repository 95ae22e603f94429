"""Brute-force texture oracles: explicit voxel loops over dicts, no shared code with the engine."""

import itertools
import math
from collections import Counter, deque


def voxels(levels):
    out = {}
    for idx in itertools.product(*[range(n) for n in levels.shape]):
        v = int(levels[idx])
        if v > 0:
            out[idx] = v
    return out


def add(p, d, k=1):
    return tuple(a + k * b for a, b in zip(p, d))


def half_offsets(ndim):
    seen, out = set(), []
    for d in itertools.product((-1, 0, 1), repeat=ndim):
        if not any(d):
            continue
        neg = tuple(-x for x in d)
        if neg in seen:
            continue
        seen.add(d)
        out.append(d)
    return out


def all_offsets(ndim):
    return [d for d in itertools.product((-1, 0, 1), repeat=ndim) if any(d)]


def log2(x):
    return math.log(x) / math.log(2)


def glcm(levels, ng):
    vox = voxels(levels)
    per_dir = []
    for d in half_offsets(levels.ndim):
        c = Counter()
        for p, a in vox.items():
            q = add(p, d)
            if q in vox:
                c[(a, vox[q])] += 1
                c[(vox[q], a)] += 1
        if c:
            per_dir.append(c)
    if not per_dir:
        per_dir = [Counter()]
        for a in vox.values():
            per_dir[0][(a, a)] += 1
    feats = [glcm_feats(c, ng) for c in per_dir]
    return {k: sum(f[k] for f in feats) / len(feats) for k in feats[0]}


def glcm_feats(c, ng):
    tot = sum(c.values())
    P = {k: v / tot for k, v in c.items()}
    px = [sum(P.get((i, j), 0) for j in range(1, ng + 1)) for i in range(1, ng + 1)]
    py = [sum(P.get((i, j), 0) for i in range(1, ng + 1)) for j in range(1, ng + 1)]
    ux = sum((i + 1) * px[i] for i in range(ng))
    uy = sum((j + 1) * py[j] for j in range(ng))
    sx = math.sqrt(sum((i + 1 - ux) ** 2 * px[i] for i in range(ng)))
    sy = math.sqrt(sum((j + 1 - uy) ** 2 * py[j] for j in range(ng)))
    psum, pdiff = Counter(), Counter()
    for (i, j), v in P.items():
        psum[i + j] += v
        pdiff[abs(i - j)] += v
    auto = sum(i * j * v for (i, j), v in P.items())
    return {
        "joint_energy": sum(v * v for v in P.values()),
        "joint_entropy": -sum(v * log2(v) for v in P.values() if v > 0),
        "contrast": sum((i - j) ** 2 * v for (i, j), v in P.items()),
        "correlation": 1.0 if sx * sy == 0 else (auto - ux * uy) / (sx * sy),
        "idm": sum(v / (1 + (i - j) ** 2) for (i, j), v in P.items()),
        "id": sum(v / (1 + abs(i - j)) for (i, j), v in P.items()),
        "maximum_probability": max(P.values()),
        "sum_average": sum(k * v for k, v in psum.items()),
        "sum_entropy": -sum(v * log2(v) for v in psum.values() if v > 0),
        "difference_average": sum(k * v for k, v in pdiff.items()),
        "difference_entropy": -sum(v * log2(v) for v in pdiff.values() if v > 0),
        "cluster_shade": sum((i + j - ux - uy) ** 3 * v for (i, j), v in P.items()),
        "cluster_prominence": sum((i + j - ux - uy) ** 4 * v for (i, j), v in P.items()),
        "autocorrelation": auto,
    }


def size_feats(c, n_vox):
    """Run/zone/dependence statistics over {(level, size): count}."""
    tot = sum(c.values())
    p = {k: v / tot for k, v in c.items()}
    by_i, by_j = Counter(), Counter()
    for (i, j), v in c.items():
        by_i[i] += v
        by_j[j] += v
    mi = sum(i * v for (i, _), v in p.items())
    mj = sum(j * v for (_, j), v in p.items())
    return [
        sum(v / j ** 2 for (i, j), v in p.items()),
        sum(v * j ** 2 for (i, j), v in p.items()),
        sum(v * v for v in by_i.values()) / tot,
        sum(v * v for v in by_i.values()) / tot ** 2,
        sum(v * v for v in by_j.values()) / tot,
        sum(v * v for v in by_j.values()) / tot ** 2,
        tot / n_vox,
        sum(v * (i - mi) ** 2 for (i, _), v in p.items()),
        sum(v * (j - mj) ** 2 for (_, j), v in p.items()),
        -sum(v * log2(v) for v in p.values() if v > 0),
        sum(v / i ** 2 for (i, j), v in p.items()),
        sum(v * i ** 2 for (i, j), v in p.items()),
        sum(v / (i * i * j * j) for (i, j), v in p.items()),
        sum(v * i * i / (j * j) for (i, j), v in p.items()),
        sum(v * j * j / (i * i) for (i, j), v in p.items()),
        sum(v * i * i * j * j for (i, j), v in p.items()),
    ]


GLRLM_NAMES = ("sre", "lre", "gln", "glnn", "rln", "rlnn", "rp", "glv", "rv", "run_entropy", "lglre", "hglre",
               "srlgle", "srhgle", "lrlgle", "lrhgle")
GLSZM_NAMES = ("sae", "lae", "gln", "glnn", "szn", "sznn", "zp", "glv", "zv", "zone_entropy", "lglze", "hglze",
               "salgle", "sahgle", "lalgle", "lahgle")


def runs(levels, d):
    vox = voxels(levels)
    c = Counter()
    for p, a in vox.items():
        back = add(p, d, -1)
        if vox.get(back) == a:
            continue
        n = 1
        while vox.get(add(p, d, n)) == a:
            n += 1
        c[(a, n)] += 1
    return c


def glrlm(levels):
    n = len(voxels(levels))
    feats = [dict(zip(GLRLM_NAMES, size_feats(runs(levels, d), n))) for d in half_offsets(levels.ndim)]
    return {k: sum(f[k] for f in feats) / len(feats) for k in GLRLM_NAMES}


def zones(levels):
    vox = voxels(levels)
    seen, c = set(), Counter()
    offs = all_offsets(levels.ndim)
    for p, a in vox.items():
        if p in seen:
            continue
        seen.add(p)
        q, size = deque([p]), 0
        while q:
            cur = q.popleft()
            size += 1
            for d in offs:
                nb = add(cur, d)
                if nb not in seen and vox.get(nb) == a:
                    seen.add(nb)
                    q.append(nb)
        c[(a, size)] += 1
    return c


def glszm(levels):
    return dict(zip(GLSZM_NAMES, size_feats(zones(levels), len(voxels(levels)))))


def gldm(levels, alpha=0):
    vox = voxels(levels)
    c = Counter()
    for p, a in vox.items():
        dep = sum(1 for d in all_offsets(levels.ndim) if add(p, d) in vox and abs(vox[add(p, d)] - a) <= alpha)
        c[(a, dep + 1)] += 1
    v = size_feats(c, len(vox))
    names = ("sde", "lde", "gln", None, "dn", "dnn", None, "glv", "dv", "dependence_entropy", "lgle", "hgle",
             "sdlgle", "sdhgle", "ldlgle", "ldhgle")
    return {k: x for k, x in zip(names, v) if k}


def ngtdm(levels):
    vox = voxels(levels)
    n, s = Counter(), Counter()
    for p, a in vox.items():
        nb = [vox[add(p, d)] for d in all_offsets(levels.ndim) if add(p, d) in vox]
        if not nb:
            continue
        n[a] += 1
        s[a] += abs(a - sum(nb) / len(nb))
    nvp = sum(n.values())
    if nvp == 0:
        return {"coarseness": 1e6, "contrast": 0.0, "busyness": 0.0, "complexity": 0.0, "strength": 0.0}
    p = {i: n[i] / nvp for i in n}
    lv = sorted(p)
    ngp = len(lv)
    ps = sum(p[i] * s[i] for i in lv)
    ssum = sum(s[i] for i in lv)
    pairs = [(i, j) for i in lv for j in lv]
    contrast = 0.0 if ngp < 2 else (sum(p[i] * p[j] * (i - j) ** 2 for i, j in pairs) / (ngp * (ngp - 1))) * ssum / nvp
    bden = sum(abs(i * p[i] - j * p[j]) for i, j in pairs)

    def div(a, b):
        return (0.0 if a == 0 else 1e6) if b == 0 else a / b
    return {
        "coarseness": div(1.0, ps),
        "contrast": contrast,
        "busyness": div(ps, bden),
        "complexity": sum(abs(i - j) * (p[i] * s[i] + p[j] * s[j]) / (p[i] + p[j]) for i, j in pairs) / nvp,
        "strength": div(sum((p[i] + p[j]) * (i - j) ** 2 for i, j in pairs), ssum),
    }
