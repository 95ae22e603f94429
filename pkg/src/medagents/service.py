"""Run/evaluate/catalog operations and the HTTP service that exposes them.

The functions here are what both front ends call: the FastAPI app below, and the CLI (in-process by
default, or over HTTP with `--server`).
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any, Sequence, Union

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .adapters import builtin_manifests, load_manifests
from .llm import BackendError, BackendProfile, open_backend
from .orchestration import (REPORT_HEADER, SPECIALIST_NAMES, CorpusError, EvaluationReport, build_default_team,
                            default_registry, evaluate_corpus, run_master, write_report)
from .orchestration.evaluation import write_records
from .orchestration.team import Team
from .workspace import MANIFEST, TRANSCRIPT, RunWorkspace, load_manifest, read_transcript

EXIT_CODES = {"Completed": 0, "BudgetExhausted": 2, "FatalError": 3}

# shorthands for --backend; anything else is a profile JSON file
SHORTHANDS = {
    "openai": BackendProfile("http", name="openai", model_id="gpt-4o", base_url="https://api.openai.com/v1",
                             api_key_env="OPENAI_API_KEY"),
    "local": BackendProfile("http", name="local", model_id="llama3.3", base_url="http://localhost:11434/v1"),
}


class ServiceError(ValueError):
    pass


def resolve_backend(spec: str | dict | BackendProfile, model: str | None = None) -> BackendProfile:
    if isinstance(spec, BackendProfile):
        prof = spec
    elif isinstance(spec, dict):
        prof = BackendProfile.from_dict(spec)
    elif spec in SHORTHANDS:
        prof = SHORTHANDS[spec]
    else:
        try:
            prof = BackendProfile.load(spec)
        except OSError as exc:
            raise ServiceError(f"backend {spec!r} is neither a known shorthand {sorted(SHORTHANDS)} "
                               f"nor a readable profile file ({exc.strerror})") from None
        except (ValueError, KeyError) as exc:
            raise ServiceError(f"backend profile {spec}: {exc}") from None
    if model:
        prof = replace(prof, model_id=model, name=prof.name and f"{prof.name}:{model}")
    return prof


def registry_for(manifest_dir: str | os.PathLike | None):
    return default_registry(load_manifests(manifest_dir) if manifest_dir else builtin_manifests())


def build_team(backend: BackendProfile, manifest_dir: str | os.PathLike | None = None,
               max_steps: int | None = None) -> Team:
    kw = {"max_steps": max_steps, "master_max_steps": max_steps} if max_steps else {}
    return build_default_team(registry_for(manifest_dir), open_backend(backend), **kw)


@dataclass
class RunResult:
    outcome: str
    detail: str
    final_answer: str
    exit_code: int
    run_id: str = ""
    run_dir: str = ""
    transcript_path: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def execute_run(prompt: str, backend: str | dict | BackendProfile, *, workspace: str | os.PathLike = "workspace",
                model: str | None = None, max_steps: int | None = None,
                manifest_dir: str | os.PathLike | None = None) -> RunResult:
    prof = resolve_backend(backend, model)
    try:
        team = build_team(prof, manifest_dir, max_steps)
    except BackendError as exc:
        return RunResult("FatalError", str(exc), "", EXIT_CODES["FatalError"])
    ws = RunWorkspace.create(workspace, prompt, prof.label)
    tr = run_master(prompt, team, workspace=ws)
    return RunResult(tr.outcome.kind, tr.outcome.detail, tr.answer, EXIT_CODES.get(tr.outcome.kind, 3),
                     ws.run_id, str(ws.run_dir), str(ws.transcript_path))


def execute_eval(corpus: str | os.PathLike, backends: Sequence[str | dict | BackendProfile],
                 report: str | os.PathLike, *, workspace: str | os.PathLike | None = None,
                 manifest_dir: str | os.PathLike | None = None, max_steps: int | None = None
                 ) -> list[EvaluationReport]:
    """One evaluate_corpus pass per backend; all rows land in one report CSV."""
    if not backends:
        raise ServiceError("at least one backend is required")
    profiles = [resolve_backend(b) for b in backends]
    reg = registry_for(manifest_dir)
    kw = {"max_steps": max_steps, "master_max_steps": max_steps} if max_steps else {}
    reports = []
    root = Path(workspace) if workspace else Path(report).resolve().parent / "eval_runs"
    for prof in profiles:
        try:
            backend = open_backend(prof)
        except BackendError as exc:
            raise ServiceError(f"backend {prof.label}: {exc}") from None
        team = build_default_team(reg, backend, **kw)
        rep = evaluate_corpus(corpus, team, workspace_root=root, backend_name=prof.label)
        write_records(rep, Path(report).with_name(Path(report).stem + f".{_safe(prof.label)}.records.jsonl"))
        reports.append(rep)
    write_report(reports, report)
    return reports


def _safe(label: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in label)


def catalog(manifest_dir: str | os.PathLike | None = None) -> list[dict]:
    reg = registry_for(manifest_dir)
    team = build_default_team(reg, BackendProfile("scripted"))
    out = []
    for d in team.registry.descriptors():
        kind = "specialist" if d.name in SPECIALIST_NAMES else "tool"
        out.append({"name": d.name, "kind": kind, "description": d.description,
                    "params": [p.to_dict() for p in d.params]})
    out.sort(key=lambda e: (e["kind"] != "specialist", e["name"]))
    return out


def find_run(workspace: str | os.PathLike, run_id: str) -> Path:
    if not run_id or "/" in run_id or run_id in (".", ".."):
        raise ServiceError(f"invalid run id {run_id!r}")
    d = Path(workspace) / "runs" / run_id
    if not (d / TRANSCRIPT).is_file():
        raise FileNotFoundError(f"no run {run_id!r} under {Path(workspace) / 'runs'}")
    return d


def run_record(run_dir: str | os.PathLike) -> dict:
    d = Path(run_dir)
    manifest = load_manifest(d) if (d / MANIFEST).is_file() else {}
    return {"run_id": d.name, "manifest": manifest,
            "steps": [s.to_dict() for s in read_transcript(d / TRANSCRIPT)]}


# ---------------------------------------------------------------- HTTP models

BackendSpec = Union[str, dict]


class RunRequest(BaseModel):
    prompt: str
    backend: BackendSpec = "local"
    model: str | None = None
    max_steps: int | None = Field(default=None, ge=1)


class RunResponse(BaseModel):
    outcome: str
    detail: str
    final_answer: str
    exit_code: int
    run_id: str
    run_dir: str
    transcript_path: str


class EvaluationRequest(BaseModel):
    corpus: str
    backends: list[BackendSpec] = Field(min_length=1)
    report: str
    max_steps: int | None = Field(default=None, ge=1)


class ReportRow(BaseModel):
    backend: str
    categories: dict[str, str]
    success_rate_pct: int
    prompt_pass_rate_pct: int


class EvaluationResponse(BaseModel):
    report_path: str
    header: list[str]
    rows: list[ReportRow]


class ToolInfo(BaseModel):
    name: str
    kind: str
    description: str
    params: list[dict[str, Any]]


class TranscriptResponse(BaseModel):
    run_id: str
    manifest: dict[str, Any]
    steps: list[dict[str, Any]]


def report_rows(reports: Sequence[EvaluationReport]) -> list[dict]:
    rows = []
    for r in reports:
        cells = r.row()
        rows.append({"backend": r.backend, "categories": dict(zip(REPORT_HEADER[1:-1], cells[1:-1])),
                     "success_rate_pct": r.success_rate_pct, "prompt_pass_rate_pct": r.prompt_pass_rate_pct})
    return rows


def create_app(workspace: str | os.PathLike = "workspace", manifest_dir: str | os.PathLike | None = None) -> FastAPI:
    app = FastAPI(title="medagents", version=__version__)
    ws_root = Path(workspace)

    @app.post("/runs", response_model=RunResponse)
    def post_run(req: RunRequest) -> RunResponse:
        try:
            res = execute_run(req.prompt, req.backend, workspace=ws_root, model=req.model,
                              max_steps=req.max_steps, manifest_dir=manifest_dir)
        except ServiceError as exc:
            raise HTTPException(400, str(exc)) from None
        return RunResponse(**res.to_dict())

    @app.post("/evaluations", response_model=EvaluationResponse)
    def post_evaluation(req: EvaluationRequest) -> EvaluationResponse:
        try:
            reps = execute_eval(req.corpus, req.backends, req.report, workspace=ws_root / "eval_runs",
                                manifest_dir=manifest_dir, max_steps=req.max_steps)
        except (CorpusError, ServiceError) as exc:
            raise HTTPException(400, str(exc)) from None
        return EvaluationResponse(report_path=str(req.report), header=list(REPORT_HEADER),
                                  rows=[ReportRow(**r) for r in report_rows(reps)])

    @app.get("/tools", response_model=list[ToolInfo])
    def get_tools() -> list[ToolInfo]:
        return [ToolInfo(**t) for t in catalog(manifest_dir)]

    @app.get("/transcripts/{run_id}", response_model=TranscriptResponse)
    def get_transcript(run_id: str) -> TranscriptResponse:
        try:
            return TranscriptResponse(**run_record(find_run(ws_root, run_id)))
        except ServiceError as exc:
            raise HTTPException(400, str(exc)) from None
        except FileNotFoundError as exc:
            raise HTTPException(404, str(exc)) from None
        except ValueError as exc:
            raise HTTPException(422, str(exc)) from None

    return app


def dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False)
