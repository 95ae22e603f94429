import gzip
import json
import math
import struct

import numpy as np
import pytest

import radiomics_oracles as oracle
from medagents.radiomics.extract import ExtractionConfig, extract_batch, extract_case, merge_targets
from medagents.radiomics.features import FIRST_ORDER, first_order_features, shape_features
from medagents.radiomics.imageops import (
    apply_filter,
    discretize,
    discretize_values,
    resample_isotropic,
)
from medagents.radiomics.nifti import NiftiError, Volume, read_nifti, write_nifti
from medagents.radiomics.texture import (
    directions,
    glcm_features,
    glcm_matrices,
    glcm_from_matrix,
    gldm_features,
    glrlm_features,
    glrlm_from_matrix,
    glrlm_matrix,
    glszm_features,
    ngtdm_features,
)

# ---------------------------------------------------------------- NIfTI


@pytest.mark.parametrize("dtype", [np.uint8, np.int16, np.int32, np.float32, np.float64])
@pytest.mark.parametrize("suffix", [".nii", ".nii.gz"])
def test_nifti_round_trip(tmp_path, dtype, suffix):
    rng = np.random.default_rng(1)
    data = (rng.random((4, 5, 3)) * 100).astype(dtype)
    aff = np.diag([0.5, 1.25, 2.0, 1.0])
    aff[:3, 3] = [10, -4, 3.5]
    vol = Volume(data, (0.5, 1.25, 2.0), aff)
    back = read_nifti(write_nifti(vol, tmp_path / f"v{suffix}"))
    assert back.data.dtype == data.dtype and np.array_equal(back.data, data)
    assert back.spacing == (0.5, 1.25, 2.0)
    assert np.array_equal(back.affine, aff)


def _patch_header(path, fmt, offset, value):
    raw = bytearray(path.read_bytes())
    struct.pack_into(fmt, raw, offset, value)
    path.write_bytes(bytes(raw))


def test_nifti_scaling_and_errors(tmp_path):
    p = tmp_path / "s.nii"
    write_nifti(Volume(np.full((2, 2, 2), 3, dtype=np.int16), (1.0, 1.0, 1.0)), p)
    _patch_header(p, "<f", 112, 2.0)   # scl_slope
    _patch_header(p, "<f", 116, 1.0)   # scl_inter
    assert np.all(read_nifti(p).data == 7.0)

    bad = tmp_path / "rgb.nii"
    write_nifti(Volume(np.zeros((2, 2, 2), dtype=np.uint8), (1.0, 1.0, 1.0)), bad)
    _patch_header(bad, "<h", 70, 128)
    with pytest.raises(NiftiError, match="unsupported datatype"):
        read_nifti(bad)

    magic = tmp_path / "m.nii"
    write_nifti(Volume(np.zeros((2, 2, 2), dtype=np.uint8), (1.0, 1.0, 1.0)), magic)
    raw = bytearray(magic.read_bytes())
    raw[344:348] = b"xyz\x00"
    magic.write_bytes(bytes(raw))
    with pytest.raises(NiftiError, match="bad magic"):
        read_nifti(magic)

    trunc = tmp_path / "t.nii.gz"
    write_nifti(Volume(np.zeros((8, 8, 8), dtype=np.float64), (1.0, 1.0, 1.0)), trunc)
    body = gzip.decompress(trunc.read_bytes())[:600]
    trunc.write_bytes(gzip.compress(body))
    with pytest.raises(NiftiError, match="truncated payload"):
        read_nifti(trunc)


def test_qform_fallback(tmp_path):
    p = tmp_path / "q.nii"
    write_nifti(Volume(np.zeros((2, 2, 2), dtype=np.uint8), (2.0, 2.0, 2.0)), p)
    _patch_header(p, "<h", 252, 1)   # qform_code
    _patch_header(p, "<f", 268, 5.0)  # qoffset_x
    aff = read_nifti(p).affine
    assert np.allclose(aff, [[2, 0, 0, 5], [0, 2, 0, 0], [0, 0, 2, 0], [0, 0, 0, 1]])


# ---------------------------------------------------------------- image ops


def test_resample_examples():
    ramp = Volume(np.array([0.0, 1.0, 2.0]).reshape(3, 1, 1), (2.0, 1.0, 1.0))
    out = resample_isotropic(ramp, 1.0)
    assert out.dims == (6, 1, 1)
    assert out.data[:, 0, 0].tolist() == [0, 0.5, 1, 1.5, 2, 2]
    const = Volume(np.full((3, 4, 5), 7.5), (0.7, 1.3, 2.0))
    r = resample_isotropic(const, 1.0)
    assert r.dims == (3, 6, 10) and np.all(r.data == 7.5)
    same = Volume(np.arange(8.0).reshape(2, 2, 2), (1.0, 1.0, 1.0))
    assert resample_isotropic(same, 1.0) is same
    mask = Volume(np.ones((2, 2, 2), dtype=np.int32), (2.0, 2.0, 2.0), kind="mask")
    with pytest.raises(ValueError, match="trilinear"):
        resample_isotropic(mask, 1.0, "trilinear")
    assert resample_isotropic(mask, 1.0, "nearest").dims == (4, 4, 4)


def test_filter_examples():
    const = Volume(np.full((4, 4, 4), 3.0), (1.0, 1.0, 2.0))
    assert np.all(apply_filter(const, "gradient")["gradient"] == 0)
    v = Volume(np.array([-4.0, 0.0, 9.0]).reshape(3, 1, 1), (1.0, 1.0, 1.0))
    assert apply_filter(v, "squareroot")["squareroot"].ravel().tolist() == [-2, 0, 3]
    bands = apply_filter(Volume(np.random.default_rng(0).random((5, 4, 3)), (1.0, 1.0, 1.0)), "wavelet")
    assert len(bands) == 8 and all(b.shape == (5, 4, 3) for b in bands.values())
    assert "wavelet-LLL" in bands and "wavelet-HHH" in bands
    ex = apply_filter(v, "exponential")["exponential"].ravel()
    assert ex[2] == pytest.approx(10.0) and ex[1] == 1.0
    assert np.all(apply_filter(Volume(np.zeros((2, 2, 2)), (1.0, 1.0, 1.0)), "exponential")["exponential"] == 1)
    lg = apply_filter(const, "log", sigmas=(1.0, 2.5))
    assert sorted(lg) == ["log-sigma-1mm", "log-sigma-2.5mm"]
    assert np.allclose(lg["log-sigma-1mm"], 0)
    with pytest.raises(ValueError):
        apply_filter(const, "log", sigmas=(0.0,))
    with pytest.raises(ValueError):
        apply_filter(const, "lbp2d")


def test_log_of_quadratic():
    # Laplacian of x^2 + y^2 + z^2 is 6 away from the borders; smoothing preserves it
    g = np.arange(12.0)
    x, y, z = np.meshgrid(g, g, g, indexing="ij")
    out = apply_filter(Volume(x ** 2 + y ** 2 + z ** 2, (1.0, 1.0, 1.0)), "log", (0.5,))["log-sigma-0.5mm"]
    assert out[6, 6, 6] == pytest.approx(6.0, rel=1e-6)


def test_discretize_examples():
    lev, n, _ = discretize_values(np.array([0, 24.9, 25, 50]), 25)
    assert lev.tolist() == [1, 1, 2, 2] and n == 2
    lev, n, _ = discretize_values(np.array([5.0, 5.0]), 25)
    assert lev.tolist() == [1, 1] and n == 1
    lev, n, _ = discretize_values(np.array([1.0, 3.0, 9.0]), 100)
    assert lev.tolist() == [1, 1, 1]
    with pytest.raises(ValueError):
        discretize_values(np.array([]), 1)


# ---------------------------------------------------------------- first order / shape


def test_first_order_examples():
    f = first_order_features(np.array([1.0, 2.0, 3.0]), np.array([1, 2, 3]), 2.0)
    assert f["energy"] == 14 and f["total_energy"] == 28 and len(f) == len(FIRST_ORDER) == 19
    c = first_order_features(np.full(5, 4.0), np.ones(5, int), 1.0)
    assert c["entropy"] == 0 and c["uniformity"] == 1 and c["variance"] == 0
    assert first_order_features(np.array([1.0, 2, 3, 4]), np.ones(4, int), 1.0)["iqr"] == 1.5
    x = np.random.default_rng(3).normal(10, 2, 200)
    g = first_order_features(x, np.ones(200, int), 1.0)
    mean = math.fsum(x) / len(x)
    assert g["mean"] == pytest.approx(mean, rel=1e-12)
    assert g["variance"] == pytest.approx(math.fsum((x - mean) ** 2) / len(x), rel=1e-12)


def test_shape_examples():
    cube = np.zeros((5, 5, 5), bool)
    cube[1:4, 1:4, 1:4] = True
    s = shape_features(cube, (1, 1, 1))
    assert s["volume"] == 27 and s["surface_area"] == 54
    assert s["elongation"] == pytest.approx(1, abs=1e-9) and s["flatness"] == pytest.approx(1, abs=1e-9)
    assert s["max_3d_diameter"] == pytest.approx(math.sqrt(12))
    one = np.zeros((3, 3, 3), bool)
    one[1, 1, 1] = True
    s1 = shape_features(one, (1, 1, 1))
    assert (s1["volume"], s1["surface_area"], s1["elongation"], s1["flatness"]) == (1, 6, 1, 1)
    big = np.ones((7, 7, 7), bool)
    sb = shape_features(big, (1, 1, 1))
    assert sb["elongation"] == pytest.approx(1, abs=1e-9) and sb["surface_area"] == 6 * 49
    box = np.ones((2, 3, 4), bool)
    assert shape_features(box, (0.5, 1.0, 2.0))["surface_area"] == pytest.approx(
        2 * (1 * 3 + 1 * 8 + 3 * 8))


# ---------------------------------------------------------------- texture examples


def test_glcm_hand_example():
    L = np.array([[1, 1], [1, 2]])
    d = directions(2).index((0, 1))
    m = glcm_matrices(L, 2)[d]
    P = m / m.sum()
    assert P.tolist() == [[0.5, 0.25], [0.25, 0.0]]
    f = glcm_from_matrix(m)
    assert f["joint_energy"] == 0.375 and f["contrast"] == 0.5
    assert len(directions(3)) == 13 and len(directions(2)) == 4


def test_glcm_constant():
    f = glcm_features(np.ones((3, 3, 3), int), 1)
    assert f["maximum_probability"] == 1 and f["joint_entropy"] == 0
    assert f["joint_energy"] == 1 and f["contrast"] == 0 and f["correlation"] == 1


def test_glrlm_examples():
    R = glrlm_matrix(np.array([[1, 1, 2]]), 2, (0, 1))
    assert R[0, 1] == 1 and R[1, 0] == 1 and R.sum() == 2
    assert glrlm_from_matrix(R, 3)["sre"] == 0.625
    col = np.ones((1, 1, 6), int)
    Rz = glrlm_matrix(col, 1, (0, 0, 1))
    assert glrlm_from_matrix(Rz, 6)["rp"] == pytest.approx(1 / 6)


def test_glszm_and_ngtdm_examples():
    f = glszm_features(np.array([[1, 1], [1, 2]]), 2)
    assert f["zp"] == 0.5
    assert ngtdm_features(np.ones((3, 3, 3), int), 1)["coarseness"] == 1e6


def _random_levels(rng, ndim):
    shape = tuple(int(v) for v in rng.integers(1, 7, size=ndim))
    ng = int(rng.integers(1, 5))
    levels = rng.integers(1, ng + 1, size=shape)
    roi = rng.random(shape) < rng.uniform(0.4, 1.0)
    if not roi.any():
        roi.flat[0] = True
    return np.where(roi, levels, 0), ng


def _assert_close(got, want):
    assert set(got) == set(want)
    for k in want:
        assert got[k] == pytest.approx(want[k], abs=1e-9), k


@pytest.mark.parametrize("seed", range(100))
def test_texture_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    levels, ng = _random_levels(rng, 3 if seed % 4 else 2)
    _assert_close(glcm_features(levels, ng), oracle.glcm(levels, ng))
    _assert_close(glrlm_features(levels, ng), oracle.glrlm(levels))
    _assert_close(glszm_features(levels, ng), oracle.glszm(levels))
    _assert_close(gldm_features(levels, ng), oracle.gldm(levels))
    _assert_close(ngtdm_features(levels, ng), oracle.ngtdm(levels))


def test_glcm_symmetric_and_normalized():
    rng = np.random.default_rng(7)
    for _ in range(10):
        levels, ng = _random_levels(rng, 3)
        for m in glcm_matrices(levels, ng):
            assert np.array_equal(m, m.T)
            assert abs((m / m.sum()).sum() - 1.0) < 1e-12


# ---------------------------------------------------------------- extraction


def _case(rng, shape=(12, 12, 10), labels=(1,), offset=(0, 0, 0)):
    img = rng.normal(100, 30, size=shape)
    mask = np.zeros(shape, dtype=np.int32)
    for k, lab in enumerate(labels):
        o = [a + 2 + 4 * k for a in offset]
        mask[o[0]:o[0] + 3, o[1]:o[1] + 4, o[2]:o[2] + 3] = lab
    return Volume(img, (1.0, 1.0, 1.5)), Volume(mask, (1.0, 1.0, 1.5), kind="mask")


def test_extract_case_counts():
    rng = np.random.default_rng(0)
    img, mask = _case(rng)
    rows, warns = extract_case(img, mask, ExtractionConfig(filters=("original",), feature_classes=("firstorder",)))
    assert len(rows) == 1 and len(rows[0].features) == 19 and not warns
    assert all(k.startswith("original_firstorder_") for k in rows[0].features)
    rows, warns = extract_case(img, mask, ExtractionConfig(labels=(5,)))
    assert rows == [] and len(warns) == 1
    img2, mask2 = _case(rng, labels=(1, 2))
    rows, _ = extract_case(img2, mask2, ExtractionConfig(filters=("wavelet",), feature_classes=("glcm",)))
    assert len(rows) == 16 and [(r.label, r.image) for r in rows] == sorted((r.label, r.image) for r in rows)


def test_extract_case_geometry_mismatch():
    rng = np.random.default_rng(0)
    img, mask = _case(rng)
    bad = Volume(mask.data, (1.0, 1.0, 1.2), kind="mask")
    with pytest.raises(ValueError, match="geometry"):
        extract_case(img, bad, ExtractionConfig())


def test_translation_invariance():
    rng = np.random.default_rng(5)
    a_img, a_mask = _case(rng, shape=(20, 20, 20))
    b_data = np.zeros((20, 20, 20))
    b_mask = np.zeros((20, 20, 20), dtype=np.int32)
    b_data[3:20, 4:20, 5:20] = a_img.data[:17, :16, :15]
    b_mask[3:20, 4:20, 5:20] = a_mask.data[:17, :16, :15]
    cfg = ExtractionConfig()
    ra, _ = extract_case(a_img, a_mask, cfg)
    rb, _ = extract_case(Volume(b_data, a_img.spacing), Volume(b_mask, a_img.spacing, kind="mask"), cfg)
    assert ra[0].features == rb[0].features


def test_2d_mode_runs():
    rng = np.random.default_rng(2)
    img, mask = _case(rng)
    rows, _ = extract_case(img, mask, ExtractionConfig(mode="2d_slicewise", bin_width=10))
    assert all(math.isfinite(v) for v in rows[0].features.values())


def _write_cases(tmp_path, n=3, labels=(1, 2), corrupt=None, channel_suffix=False):
    rng = np.random.default_rng(11)
    idir, mdir = tmp_path / "images", tmp_path / "masks"
    for i in range(n):
        img, mask = _case(rng, labels=labels)
        name = f"case{i:02d}"
        write_nifti(img, idir / (f"{name}_0000.nii.gz" if channel_suffix else f"{name}.nii.gz"))
        write_nifti(mask, mdir / f"{name}.nii.gz")
        if corrupt == i:
            (idir / f"{name}.nii.gz").write_bytes(b"garbage")
    return idir, mdir


def test_batch_two_labels_and_workers(tmp_path):
    idir, mdir = _write_cases(tmp_path, channel_suffix=True)
    cfg = ExtractionConfig(feature_classes=("firstorder", "shape", "glcm"))
    r1 = extract_batch(idir, mdir, tmp_path / "o1", cfg)
    r4 = extract_batch(idir, mdir, tmp_path / "o4", ExtractionConfig.from_dict({**cfg.to_dict(), "workers": 4}))
    assert [p.split("/")[-1] for p in r1.csv_files] == ["features_label_1.csv", "features_label_2.csv"]
    for a, b in zip(r1.csv_files, r4.csv_files):
        text = open(a).read()
        assert text == open(b).read()
        lines = text.splitlines()
        assert len(lines) == 4 and lines[0].startswith("subject_id,label,original_shape_volume")
    params = json.loads((tmp_path / "o1" / "extraction_params.json").read_text())
    assert params["bin_width"] == 25.0 and "version" in params


def test_batch_isolates_corrupt_case(tmp_path):
    idir, mdir = _write_cases(tmp_path, corrupt=1)
    res = extract_batch(idir, mdir, tmp_path / "o", ExtractionConfig(feature_classes=("firstorder",)))
    assert list(res.failures) == ["case01"]
    assert len(open(res.csv_files[0]).read().splitlines()) == 3
    assert "case01" in open(res.report_path).read()


def test_batch_no_pairs(tmp_path):
    (tmp_path / "i").mkdir()
    (tmp_path / "m").mkdir()
    with pytest.raises(ValueError, match="no image/mask pairs"):
        extract_batch(tmp_path / "i", tmp_path / "m", tmp_path / "o", ExtractionConfig())


def test_merge_targets(tmp_path):
    feats = tmp_path / "f.csv"
    feats.write_text("subject_id,label,x\ns1,1,0.5\ns2,1,0.7\ns3,1,0.9\n")
    full = tmp_path / "t.csv"
    full.write_text("pid,outcome\ns3,1\ns1,0\ns2,1\n")
    r = merge_targets(feats, full, "pid", tmp_path / "m.csv")
    assert r.warnings == []
    assert open(r.path).read().splitlines() == ["subject_id,label,x,outcome", "s1,1,0.5,0", "s2,1,0.7,1",
                                                "s3,1,0.9,1"]
    part = tmp_path / "p.csv"
    part.write_text("pid,outcome\ns1,0\ns3,1\n")
    r = merge_targets(feats, part, "pid", tmp_path / "m2.csv")
    assert len(r.warnings) == 1 and open(r.path).read().splitlines()[2] == "s2,1,0.7,"
    dup = tmp_path / "d.csv"
    dup.write_text("pid,outcome\ns1,0\ns1,1\n")
    with pytest.raises(ValueError, match="ambiguous target id"):
        merge_targets(feats, dup, "pid")
    with pytest.raises(ValueError, match="missing id column"):
        merge_targets(feats, full, "nope")


def test_discretize_levels_in_range():
    rng = np.random.default_rng(9)
    img = rng.normal(0, 50, size=(6, 6, 6))
    roi = rng.random((6, 6, 6)) < 0.5
    d = discretize(img, roi, 13.0)
    assert d.levels[roi].min() >= 1 and d.levels[roi].max() <= d.n_levels
    assert np.all(d.levels[~roi] == 0)
