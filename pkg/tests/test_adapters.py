import json
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from medagents.adapters import (ManifestError, build_argv, builtin_manifests, load_manifests, mock_manifests,
                                register_adapters, run_adapter, write_manifests)
from medagents.adapters.manifest import manifest_from_dict
from medagents.radiomics.nifti import Volume, read_nifti, write_nifti
from medagents.toolspec import ToolInvocation, ToolRegistry, ValidationError, dispatch


def _by_name(ms):
    return {m.tool_name: m for m in ms}


def _ct(path, shape=(12, 12, 8), seed=0):
    data = np.random.default_rng(seed).normal(40, 10, shape).astype(np.int16)
    write_nifti(Volume(data, (1.0, 1.0, 2.0)), path)
    return str(path)


def py_manifest(code, **kw):
    d = {"tool_name": "probe", "description": "probe", "argv_template": [sys.executable, "-c", code],
         "params": [], "timeout_s": 10}
    d.update(kw)
    return manifest_from_dict(d)


def test_five_builtins_register():
    ms = builtin_manifests()
    assert sorted(m.tool_name for m in ms) == ["image_cls_infer", "image_cls_train", "nnunet_infer",
                                               "nnunet_train", "totalseg"]
    reg = register_adapters(ToolRegistry(), ms)
    assert len(reg.names()) == 5


def test_builtin_schema_details():
    ms = _by_name(builtin_manifests())
    from medagents.toolspec import validate_invocation
    ts = ms["totalseg"].descriptor()
    assert validate_invocation(ts, {"input_path": "a.nii.gz", "task": "total_mr", "output_dir": "o"})["task"] == "total_mr"
    assert "299x299" in ms["image_cls_train"].description
    with pytest.raises(ValidationError, match="4d"):
        validate_invocation(ms["nnunet_train"].descriptor(), {"dataset_dir": "d", "configuration": "4d"})
    assert "inceptionv3" in ms["image_cls_train"].descriptor().param("architecture").values


def test_undeclared_placeholder_named(tmp_path):
    (tmp_path / "bad.manifest.json").write_text(json.dumps(
        {"tool_name": "x", "description": "d", "argv_template": ["run", "{foo}"], "params": []}))
    with pytest.raises(ManifestError, match="foo") as ei:
        load_manifests(tmp_path)
    assert "bad.manifest.json" in str(ei.value)


def test_duplicate_tool_names(tmp_path):
    doc = {"tool_name": "x", "description": "d", "argv_template": ["run"]}
    (tmp_path / "a.manifest.json").write_text(json.dumps(doc))
    (tmp_path / "b.manifest.json").write_text(json.dumps(doc))
    with pytest.raises(ManifestError, match="duplicate"):
        load_manifests(tmp_path)


def test_schema_errors_have_field_names():
    with pytest.raises(ManifestError, match="argv_template"):
        manifest_from_dict({"tool_name": "x", "description": "d", "argv_template": []})
    with pytest.raises(ManifestError, match="timeout_s"):
        manifest_from_dict({"tool_name": "x", "description": "d", "argv_template": ["a"], "timeout_s": -1})


def test_conditional_groups():
    ms = _by_name(builtin_manifests())
    ts = ms["totalseg"]
    base = {"input_path": "ct.nii.gz", "output_dir": "out", "task": "total", "multilabel": False}
    assert build_argv(ts, base) == ["TotalSegmentator", "-i", "ct.nii.gz", "-o", "out", "--task", "total"]
    full = build_argv(ts, {**base, "roi_subset": ["spleen", "liver"], "multilabel": True})
    assert full[-3:] == ["spleen,liver", "--ml"][-2:] or full[-3:] == ["--roi_subset", "spleen,liver", "--ml"]
    nn = ms["nnunet_infer"]
    args = {"dataset_id": "135", "configuration": "3d_fullres", "fold": "all", "input_dir": "i", "output_dir": "o"}
    assert build_argv(nn, {**args, "tta": True})[-1] == "all"
    assert build_argv(nn, {**args, "tta": False})[-1] == "--disable_tta"


@settings(max_examples=60, deadline=None)
@given(st.text(alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\x00"), min_size=1))
def test_substitution_keeps_arity(value):
    m = manifest_from_dict({"tool_name": "x", "description": "d", "argv_template": ["prog", "--a", "{a}", "x{a}y"],
                            "params": [{"name": "a", "kind": "string", "required": True}]})
    argv = build_argv(m, {"a": value})
    assert argv == ["prog", "--a", value, f"x{value}y"]


def test_shell_metacharacters_reach_child_verbatim(tmp_path):
    m = manifest_from_dict({
        "tool_name": "echo", "description": "d",
        "argv_template": [sys.executable, "-c", "import sys, json; print(json.dumps(sys.argv[1:]))", "{v}"],
        "params": [{"name": "v", "kind": "string", "required": True}], "timeout_s": 10})
    nasty = "a b; rm -rf / 'q' \"d\" $(x) | y"
    r = run_adapter(m, {"v": nasty}, tmp_path)
    assert r.status == "ok" and json.loads(r.stdout_tail) == [nasty]


def test_timeout_status(tmp_path):
    r = run_adapter(py_manifest("import time; time.sleep(5)", timeout_s=1), {}, tmp_path)
    assert r.status == "timeout" and r.duration_ms < 4000


def test_missing_outputs_fail(tmp_path):
    m = py_manifest("pass", expected_outputs=["{out}/mask.nii.gz"],
                    params=[{"name": "out", "kind": "path", "required": True}])
    r = run_adapter(m, {"out": str(tmp_path / "o")}, tmp_path)
    assert r.status == "failed" and "declared outputs missing" in r.message


def test_nonzero_exit_and_restricted_env(tmp_path, monkeypatch):
    monkeypatch.setenv("SECRET_TOKEN", "x")
    r = run_adapter(py_manifest("import os, sys; print(sorted(os.environ)); sys.exit(3)"), {}, tmp_path)
    assert r.status == "failed" and r.exit_code == 3
    assert "SECRET_TOKEN" not in r.stdout_tail


def test_launch_failure_is_reported(tmp_path):
    m = manifest_from_dict({"tool_name": "x", "description": "d", "argv_template": ["/no/such/binary"]})
    r = run_adapter(m, {}, tmp_path)
    assert r.status == "failed" and "could not launch" in r.message


def test_output_tails_truncated(tmp_path):
    r = run_adapter(py_manifest("print('x' * 20000)"), {}, tmp_path)
    assert len(r.stdout_tail) == 4096


def test_mock_segmentation_deterministic(tmp_path):
    ms = _by_name(mock_manifests())
    ct = _ct(tmp_path / "case1.nii.gz")
    a = run_adapter(ms["totalseg"], {"input_path": ct, "output_dir": str(tmp_path / "m1"),
                                     "roi_subset": ["spleen"]}, tmp_path)
    b = run_adapter(ms["totalseg"], {"input_path": ct, "output_dir": str(tmp_path / "m2")}, tmp_path)
    assert a.status == "ok" and b.status == "ok"
    m1, m2 = tmp_path / "m1" / "case1.nii.gz", tmp_path / "m2" / "case1.nii.gz"
    assert m1.read_bytes() == m2.read_bytes()
    mask = read_nifti(m1, as_mask=True)
    assert mask.dims == (12, 12, 8) and mask.data.max() == 1


def test_mock_nnunet_infer_strips_channel(tmp_path):
    ms = _by_name(mock_manifests())
    src = tmp_path / "imgs"
    src.mkdir()
    _ct(src / "BraTS_001_0000.nii.gz")
    _ct(src / "BraTS_001_0001.nii.gz")
    r = run_adapter(ms["nnunet_infer"], {"dataset_id": "135", "configuration": "3d_fullres", "fold": "all",
                                         "input_dir": str(src), "output_dir": str(tmp_path / "out")}, tmp_path)
    assert r.status == "ok"
    assert [p.name for p in (tmp_path / "out").iterdir()] == ["BraTS_001.nii.gz"]
    assert set(np.unique(read_nifti(tmp_path / "out" / "BraTS_001.nii.gz").data)) == {0, 1, 2, 3}


def test_mock_training_and_inference(tmp_path):
    ms = _by_name(mock_manifests())
    data = tmp_path / "data"
    (data / "test" / "a").mkdir(parents=True)
    for i in range(4):
        (data / "test" / "a" / f"img{i}.png").write_bytes(b"x")
    r = run_adapter(ms["image_cls_train"], {"data_dir": str(data), "architecture": "inceptionv3", "num_classes": 2,
                                            "output_dir": str(tmp_path / "model")}, tmp_path)
    assert r.status == "ok"
    gt = tmp_path / "gt.csv"
    gt.write_text("filename,label\n" + "".join(f"a/img{i}.png,0\n" for i in range(4)))
    r = run_adapter(ms["image_cls_infer"], {"model_path": str(tmp_path / "model" / "best_model.pt"),
                                            "input_dir": str(data / "test"), "num_classes": 2,
                                            "gt_csv": str(gt), "output_dir": str(tmp_path / "pred")}, tmp_path)
    assert r.status == "ok" and (tmp_path / "pred" / "metrics.json").is_file()
    r = run_adapter(ms["nnunet_train"], {"dataset_dir": str(data), "configuration": "3d_fullres", "fold": "all"},
                    tmp_path)
    assert r.status == "ok"
    assert (tmp_path / "nnunet_results" / "3d_fullres_fold_all" / "checkpoint_final.pth").is_file()


def test_mock_missing_input_fails(tmp_path):
    ms = _by_name(mock_manifests())
    r = run_adapter(ms["totalseg"], {"input_path": str(tmp_path / "nope.nii.gz"), "output_dir": str(tmp_path / "o")},
                    tmp_path)
    assert r.status == "failed" and "input not found" in r.stderr_tail


def test_dispatch_through_registry(tmp_path):
    reg = register_adapters(ToolRegistry(), mock_manifests())
    ct = _ct(tmp_path / "c.nii.gz")
    res = dispatch(ToolInvocation("totalseg", {"input_path": ct, "output_dir": str(tmp_path / "m")}), reg, tmp_path)
    assert res.ok and res.artifacts == [str(tmp_path / "m" / "c.nii.gz")]
    bad = dispatch(ToolInvocation("totalseg", {"input_path": ct}), reg, tmp_path)
    assert not bad.ok and "output_dir" in bad.summary


def test_write_and_reload_mock_manifests(tmp_path):
    write_manifests(mock_manifests(), tmp_path)
    again = load_manifests(tmp_path)
    assert [m.to_dict() for m in again] == [m.to_dict() for m in mock_manifests()]


def test_conditional_expected_outputs(tmp_path):
    m = manifest_from_dict({
        "tool_name": "w", "description": "d",
        "argv_template": [sys.executable, "-c", "import sys, pathlib; pathlib.Path(sys.argv[1], 'p.csv').write_text('x')",
                          "{out}"],
        "params": [{"name": "out", "kind": "path", "required": True}, {"name": "gt", "kind": "path"}],
        "expected_outputs": ["{out}/p.csv", {"when": "gt", "path": "{out}/metrics.json"}], "timeout_s": 10})
    (tmp_path / "o").mkdir()
    assert run_adapter(m, {"out": str(tmp_path / "o")}, tmp_path).status == "ok"
    r = run_adapter(m, {"out": str(tmp_path / "o"), "gt": "g.csv"}, tmp_path)
    assert r.status == "failed" and "metrics.json" in r.message
    with pytest.raises(ManifestError, match="expected_outputs"):
        manifest_from_dict({"tool_name": "w", "description": "d", "argv_template": ["a"],
                            "expected_outputs": [{"when": "gt"}]})
    with pytest.raises(ManifestError, match="nope"):
        manifest_from_dict({"tool_name": "w", "description": "d", "argv_template": ["a"],
                            "expected_outputs": [{"when": "nope", "path": "x"}]})
