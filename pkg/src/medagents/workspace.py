"""Run directories: transcript.jsonl, manifest.json and nested specialist transcripts."""

from __future__ import annotations

import json
import os
import secrets
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

from .agent import AgentStep, AgentTranscript

TRANSCRIPT = "transcript.jsonl"
MANIFEST = "manifest.json"
SPECIALISTS = "specialists"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def new_run_id() -> str:
    return datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S") + "-" + secrets.token_hex(2)


@dataclass
class SpecialistRun:
    agent: str
    subtask: str
    transcript: str  # path relative to the run dir
    outcome: str
    detail: str = ""

    def to_dict(self) -> dict:
        return {"agent": self.agent, "subtask": self.subtask, "transcript": self.transcript,
                "outcome": self.outcome, "detail": self.detail}


@dataclass
class RunWorkspace:
    root: Path
    run_id: str
    prompt: str = ""
    backend: str = ""
    started_at: str = field(default_factory=_now)
    finished_at: str | None = None
    artifacts: list[str] = field(default_factory=list)
    specialist_runs: list[SpecialistRun] = field(default_factory=list)
    outcome: str = "Running"

    def __post_init__(self) -> None:
        self._lock = threading.Lock()
        self._seen: set[str] = set(self.artifacts)

    @classmethod
    def create(cls, root: str | os.PathLike, prompt: str = "", backend: str = "") -> "RunWorkspace":
        """Make a fresh runs/<timestamp>-<4hex>/ directory; an existing one is never reused."""
        base = Path(root).resolve() / "runs"
        base.mkdir(parents=True, exist_ok=True)
        for _ in range(64):
            rid = new_run_id()
            try:
                (base / rid).mkdir()
            except FileExistsError:
                continue
            ws = cls(Path(root).resolve(), rid, prompt, backend)
            ws.transcript_path.touch()
            ws.write_manifest()
            return ws
        raise RuntimeError(f"could not allocate a run directory under {base}")

    @property
    def run_dir(self) -> Path:
        return self.root / "runs" / self.run_id

    @property
    def transcript_path(self) -> Path:
        return self.run_dir / TRANSCRIPT

    @property
    def manifest_path(self) -> Path:
        return self.run_dir / MANIFEST

    def record_artifacts(self, paths: Iterable[str]) -> None:
        with self._lock:
            for p in paths:
                ap = os.path.abspath(p)
                if ap not in self._seen:
                    self._seen.add(ap)
                    self.artifacts.append(ap)

    def append_step(self, step: AgentStep) -> None:
        with self._lock, open(self.transcript_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(step.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")

    def save_specialist(self, transcript: AgentTranscript) -> str:
        """Write one specialist run as its own JSONL file; returns the path relative to the run dir."""
        with self._lock:
            n = len(self.specialist_runs)
            rel = f"{SPECIALISTS}/{n:02d}_{transcript.agent_name}.jsonl"
            path = self.run_dir / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", encoding="utf-8") as fh:
                for s in transcript.steps:
                    fh.write(json.dumps(s.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
            self.specialist_runs.append(SpecialistRun(transcript.agent_name, transcript.task_text, rel,
                                                      transcript.outcome.kind, transcript.outcome.detail))
        self.write_manifest()
        return rel

    def manifest(self) -> dict:
        return {"run_id": self.run_id, "prompt": self.prompt, "backend": self.backend,
                "started_at": self.started_at, "finished_at": self.finished_at,
                "artifacts": list(self.artifacts), "outcome": self.outcome,
                "specialist_runs": [r.to_dict() for r in self.specialist_runs]}

    def write_manifest(self) -> None:
        tmp = self.manifest_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(self.manifest(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        os.replace(tmp, self.manifest_path)

    def finish(self, transcript: AgentTranscript) -> None:
        self.record_artifacts(transcript.artifacts())
        self.outcome = transcript.outcome.kind
        self.finished_at = _now()
        self.write_manifest()


class TranscriptFormatError(ValueError):
    pass


def read_transcript(path: str | os.PathLike) -> list[AgentStep]:
    """Parse a transcript JSONL file; a malformed line raises an error naming its line number."""
    steps: list[AgentStep] = []
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise TranscriptFormatError(f"cannot read transcript {path}: {exc.strerror}") from None
    with fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                steps.append(AgentStep.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise TranscriptFormatError(f"{path}: line {n}: malformed step: {exc}") from None
    return steps


def load_manifest(run_dir: str | os.PathLike) -> dict:
    return json.loads((Path(run_dir) / MANIFEST).read_text(encoding="utf-8"))
