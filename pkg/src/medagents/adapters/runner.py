"""Launch manifest-described executables: argv substitution, restricted env, timeout, output checks."""

from __future__ import annotations

import glob
import json
import os
import shlex
import signal
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..toolspec import ToolRegistry, ToolResult, validate_invocation
from .manifest import PLACEHOLDER, AdapterManifest

TAIL_BYTES = 4096


@dataclass
class AdapterResult:
    exit_code: int | None
    stdout_tail: str
    stderr_tail: str
    produced_outputs: list[tuple[str, bool]] = field(default_factory=list)
    duration_ms: int = 0
    status: str = "ok"  # ok | failed | timeout
    message: str = ""
    argv: list[str] = field(default_factory=list)

    def existing_outputs(self) -> list[str]:
        return [p for p, ok in self.produced_outputs if ok]


def _render_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ",".join(_render_value(x) for x in v)
    return str(v)


def _substitute(template: str, args: dict) -> str | None:
    missing = [n for n in PLACEHOLDER.findall(template) if args.get(n) is None]
    if missing:
        return None
    return PLACEHOLDER.sub(lambda m: _render_value(args[m.group(1)]), template)


def build_argv(manifest: AdapterManifest, args: dict) -> list[str]:
    """One argv element per template element; values are never split or shell-interpreted."""
    argv: list[str] = []
    for el in manifest.argv_template:
        if isinstance(el, dict):
            key = el.get("when") or el.get("unless")
            val = args.get(key)
            present = bool(val) if not isinstance(val, (list, tuple)) else len(val) > 0
            if ("when" in el) != present:
                continue
            parts = [_substitute(s, args) for s in el["argv"]]
            if any(p is None for p in parts):
                continue
            argv.extend(parts)
            continue
        s = _substitute(el, args)
        if s is None:
            missing = [n for n in PLACEHOLDER.findall(el) if args.get(n) is None]
            raise ValueError(f"{manifest.tool_name}: no value for {missing} in argv element {el!r}")
        argv.append(s)
    return argv


def _tail(data: bytes) -> str:
    return data[-TAIL_BYTES:].decode("utf-8", errors="replace")


def _workspace_dir(workspace: Any) -> Path:
    if workspace is None:
        return Path.cwd()
    if isinstance(workspace, (str, os.PathLike)):
        return Path(workspace)
    return Path(workspace.run_dir)


def resolve_outputs(manifest: AdapterManifest, args: dict, cwd: Path) -> list[tuple[str, bool]]:
    out = []
    for tmpl in manifest.expected_outputs:
        if isinstance(tmpl, dict):
            if not args.get(tmpl["when"]):
                continue
            tmpl = tmpl["path"]
        s = _substitute(tmpl, args)
        if s is None:
            continue
        p = s if os.path.isabs(s) else str(cwd / s)
        if glob.has_magic(p):
            hits = sorted(glob.glob(p))
            out.extend((h, True) for h in hits) if hits else out.append((p, False))
        else:
            out.append((p, os.path.exists(p)))
    return out


def run_adapter(manifest: AdapterManifest, args: dict, workspace: Any = None) -> AdapterResult:
    args = validate_invocation(manifest.descriptor(), args)
    argv = build_argv(manifest, args)
    cwd = _workspace_dir(workspace)
    cwd.mkdir(parents=True, exist_ok=True)
    env = {k: os.environ[k] for k in manifest.env_passthrough if k in os.environ}
    env["PATH"] = os.environ.get("PATH", os.defpath)
    start = time.monotonic()
    try:
        proc = subprocess.Popen(argv, cwd=cwd, env=env, stdout=subprocess.PIPE, stderr=subprocess.PIPE,
                                start_new_session=True)
    except OSError as exc:
        return AdapterResult(None, "", str(exc), resolve_outputs(manifest, args, cwd), 0, "failed",
                             f"could not launch {argv[0]!r}: {exc}", argv)
    try:
        out, err = proc.communicate(timeout=manifest.timeout_s)
        timed_out = False
    except subprocess.TimeoutExpired:
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except (ProcessLookupError, PermissionError):
            proc.kill()
        out, err = proc.communicate()
        timed_out = True
    ms = int((time.monotonic() - start) * 1000)
    outputs = resolve_outputs(manifest, args, cwd)
    res = AdapterResult(proc.returncode, _tail(out), _tail(err), outputs, ms, argv=argv)
    if timed_out:
        res.status, res.message = "timeout", f"killed after timeout of {manifest.timeout_s:g} s"
    elif proc.returncode not in manifest.success_exit_codes:
        res.status, res.message = "failed", f"exit code {proc.returncode}"
    elif not all(ok for _, ok in outputs):
        missing = [p for p, ok in outputs if not ok]
        res.status, res.message = "failed", f"declared outputs missing: {missing}"
    else:
        res.message = f"exit code {proc.returncode}"
    return res


def adapter_executor(manifest: AdapterManifest):
    def execute(args: dict, workspace: Any) -> ToolResult:
        r = run_adapter(manifest, args, workspace)
        # no timings in the text: observations must be reproducible under replay
        lines = [f"{manifest.tool_name}: status {r.status} ({r.message})",
                 "arguments: " + json.dumps(validate_invocation(manifest.descriptor(), args), sort_keys=True,
                                            ensure_ascii=False),
                 "command: " + shlex.join(r.argv)]
        produced = r.existing_outputs()
        if produced:
            lines.append("outputs: " + ", ".join(produced))
        if r.status != "ok" and r.stderr_tail.strip():
            lines.append("stderr tail:\n" + r.stderr_tail.strip()[-1000:])
        elif r.stdout_tail.strip():
            lines.append("stdout tail:\n" + r.stdout_tail.strip()[-1000:])
        status = "ok" if r.status == "ok" else "failed"
        metrics = {"duration_ms": float(r.duration_ms)}
        if r.exit_code is not None:
            metrics["exit_code"] = float(r.exit_code)
        return ToolResult(status, "\n".join(lines), produced if status == "ok" else [], metrics)
    return execute


def register_adapters(registry: ToolRegistry, manifests: list[AdapterManifest]) -> ToolRegistry:
    for m in manifests:
        registry.register(m.descriptor(), adapter_executor(m))
    return registry
