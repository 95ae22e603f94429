"""Adapter manifests: declarative contracts for launching external executables as tools.

argv_template elements are either strings with `{param}` placeholders or
conditional groups `{"when": name, "argv": [...]}` / `{"unless": name, ...}`.
A group is emitted only when the named parameter is truthy (or falsy for
`unless`) and all of its placeholders have values.
"""

from __future__ import annotations

import json
import re
import sys
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Any

from ..toolspec import ParamSpec, ToolDescriptor

MANIFEST_SUFFIX = ".manifest.json"
PLACEHOLDER = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")
BUILTIN_TOOLS = ("nnunet_train", "nnunet_infer", "totalseg", "image_cls_train", "image_cls_infer")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class AdapterManifest:
    tool_name: str
    description: str
    argv_template: tuple[Any, ...]
    params: tuple[ParamSpec, ...] = ()
    expected_outputs: tuple[Any, ...] = ()  # path templates, or {"when": param, "path": template}
    timeout_s: float = 3600.0
    env_passthrough: tuple[str, ...] = ()
    success_exit_codes: frozenset[int] = frozenset({0})
    output_description: str = ""

    def descriptor(self) -> ToolDescriptor:
        return ToolDescriptor(self.tool_name, self.description, self.params,
                              self.output_description or "exit status, captured output tails and produced files")

    def to_dict(self) -> dict:
        return {"tool_name": self.tool_name, "description": self.description,
                "argv_template": list(self.argv_template), "params": [p.to_dict() for p in self.params],
                "expected_outputs": list(self.expected_outputs), "timeout_s": self.timeout_s,
                "env_passthrough": list(self.env_passthrough),
                "success_exit_codes": sorted(self.success_exit_codes),
                "output_description": self.output_description}


def _output_ok(o: Any) -> bool:
    return isinstance(o, str) or (isinstance(o, dict) and set(o) == {"when", "path"}
                                  and isinstance(o["when"], str) and isinstance(o["path"], str))


def placeholders(text: str) -> list[str]:
    return PLACEHOLDER.findall(text)


def _template_names(argv: Any, where: str, problems: list[str]) -> set[str]:
    names: set[str] = set()
    for i, el in enumerate(argv):
        if isinstance(el, str):
            names.update(placeholders(el))
        elif isinstance(el, dict):
            keys = set(el) - {"argv"}
            if len(keys) != 1 or next(iter(keys)) not in ("when", "unless") or not isinstance(el.get("argv"), list):
                problems.append(f"{where}[{i}]: group must be {{'when'|'unless': param, 'argv': [...]}}")
                continue
            names.add(el.get("when") or el.get("unless"))
            for s in el["argv"]:
                if not isinstance(s, str):
                    problems.append(f"{where}[{i}]: group elements must be strings")
                else:
                    names.update(placeholders(s))
        else:
            problems.append(f"{where}[{i}]: expected string or group, got {type(el).__name__}")
    return names


def manifest_from_dict(d: Any, source: str = "<manifest>") -> AdapterManifest:
    """Validate a manifest document; every problem is reported with its source and field."""
    if not isinstance(d, dict):
        raise ManifestError(f"{source}: manifest must be a JSON object")
    problems: list[str] = []
    for key in ("tool_name", "description", "argv_template"):
        if key not in d:
            problems.append(f"field '{key}' is required")
    known = {"tool_name", "description", "argv_template", "params", "expected_outputs", "timeout_s",
             "env_passthrough", "success_exit_codes", "output_description"}
    for key in sorted(set(d) - known):
        problems.append(f"field '{key}' is not a manifest field")
    if problems:
        raise ManifestError(f"{source}: " + "; ".join(problems))
    params = []
    for i, p in enumerate(d.get("params", [])):
        try:
            params.append(ParamSpec.from_dict(p))
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"field 'params'[{i}]: {exc}")
    argv = d["argv_template"]
    if not isinstance(argv, list) or not argv:
        problems.append("field 'argv_template': must be a non-empty list")
        argv = []
    declared = {p.name for p in params}
    used = _template_names(argv, "field 'argv_template'", problems)
    outputs = d.get("expected_outputs", [])
    if not isinstance(outputs, list) or not all(_output_ok(o) for o in outputs):
        problems.append("field 'expected_outputs': must be a list of path templates or "
                        "{\"when\": param, \"path\": template} objects")
        outputs = []
    for o in outputs:
        if isinstance(o, dict):
            used.add(o["when"])
            o = o["path"]
        used.update(placeholders(o))
    for name in sorted(used - declared):
        problems.append(f"placeholder '{{{name}}}' names no declared param")
    timeout = d.get("timeout_s", 3600.0)
    if not isinstance(timeout, (int, float)) or isinstance(timeout, bool) or timeout <= 0:
        problems.append("field 'timeout_s': must be a positive number")
    codes = d.get("success_exit_codes", [0])
    if not isinstance(codes, list) or not codes or not all(isinstance(c, int) for c in codes):
        problems.append("field 'success_exit_codes': must be a non-empty list of integers")
    if not isinstance(d.get("tool_name"), str) or not d.get("tool_name"):
        problems.append("field 'tool_name': must be a non-empty string")
    if problems:
        raise ManifestError(f"{source}: " + "; ".join(problems))
    return AdapterManifest(d["tool_name"], d["description"], tuple(argv), tuple(params), tuple(outputs),
                           float(timeout), tuple(d.get("env_passthrough", [])), frozenset(codes),
                           d.get("output_description", ""))


def load_manifest(path: str | Path) -> AdapterManifest:
    p = Path(path)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{p}: invalid JSON: {exc}") from None
    return manifest_from_dict(doc, str(p))


def load_manifests(directory: str | Path) -> list[AdapterManifest]:
    d = Path(directory)
    if not d.is_dir():
        raise ManifestError(f"manifest directory does not exist: {d}")
    out: list[AdapterManifest] = []
    seen: dict[str, Path] = {}
    for p in sorted(d.glob(f"*{MANIFEST_SUFFIX}")):
        m = load_manifest(p)
        if m.tool_name in seen:
            raise ManifestError(f"{p}: duplicate tool_name {m.tool_name!r} (already defined in {seen[m.tool_name]})")
        seen[m.tool_name] = p
        out.append(m)
    return out


def builtin_manifest_dir() -> Path:
    return Path(str(resources.files("medagents.adapters") / "manifests"))


def builtin_manifests() -> list[AdapterManifest]:
    return load_manifests(builtin_manifest_dir())


# ---------------------------------------------------------------- mock variants

def _mock_argv(tool: str) -> list:
    py = [sys.executable, "-m", "medagents.adapters.mock"]
    if tool == "nnunet_train":
        return py + ["train", "--kind", "nnunet", "--output", "nnunet_results/{configuration}_fold_{fold}",
                     "--data", "{dataset_dir}"]
    if tool == "nnunet_infer":
        return py + ["segment", "--input", "{input_dir}", "--output", "{output_dir}", "--labels", "3",
                     "--strip-channel"]
    if tool == "totalseg":
        return py + ["segment", "--input", "{input_path}", "--output", "{output_dir}",
                     {"when": "roi_subset", "argv": ["--roi", "{roi_subset}"]}]
    if tool == "image_cls_train":
        return py + ["train", "--kind", "image_cls", "--output", "{output_dir}", "--data", "{data_dir}",
                     "--classes", "{num_classes}"]
    if tool == "image_cls_infer":
        return py + ["classify", "--model", "{model_path}", "--input", "{input_dir}", "--output", "{output_dir}",
                     "--classes", "{num_classes}", {"when": "gt_csv", "argv": ["--gt", "{gt_csv}"]}]
    raise KeyError(tool)


_MOCK_OUTPUTS = {
    "nnunet_train": ["nnunet_results/{configuration}_fold_{fold}/checkpoint_final.pth"],
    "nnunet_infer": ["{output_dir}/*.nii.gz"],
    "totalseg": ["{output_dir}/*.nii.gz"],
    "image_cls_train": ["{output_dir}/best_model.pt", "{output_dir}/metrics.json"],
    "image_cls_infer": ["{output_dir}/predictions.csv", {"when": "gt_csv", "path": "{output_dir}/metrics.json"}],
}


def mock_manifests(timeout_s: float = 60.0) -> list[AdapterManifest]:
    """The built-in schemas wired to the deterministic mock executables (used for offline runs)."""
    out = []
    for m in builtin_manifests():
        out.append(replace(m, argv_template=tuple(_mock_argv(m.tool_name)),
                           expected_outputs=tuple(_MOCK_OUTPUTS[m.tool_name]), timeout_s=timeout_s,
                           env_passthrough=("PYTHONPATH",)))
    return out


def write_manifests(manifests: list[AdapterManifest], directory: str | Path) -> list[str]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for m in manifests:
        p = d / f"{m.tool_name}{MANIFEST_SUFFIX}"
        p.write_text(json.dumps(m.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        paths.append(str(p))
    return paths
