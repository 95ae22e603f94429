"""Prompt-corpus evaluation: one record per prompt, one report row per backend."""

from __future__ import annotations

import csv
import glob
import json
import os
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

from ..llm import Backend, BackendProfile, open_backend
from ..workspace import RunWorkspace
from .team import SPECIALIST_NAMES, Team, invoked_agents, run_master

CATEGORIES = (
    "Image Classification (Training)", "Image Classification (Inference)",
    "Regression (Training)", "Regression (Inference)",
    "Classification (Training)", "Classification (Inference)",
    "TotalSegmentator", "nnUNet", "Feature Importance", "EDA", "Radiomics",
)
REPORT_HEADER = ("backend",) + CATEGORIES + ("success_rate_pct",)


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class CorpusEntry:
    id: str
    category: str
    prompt: str
    expected_agents: tuple[str, ...]
    required_artifacts: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"id": self.id, "category": self.category, "prompt": self.prompt,
                "expected_agents": list(self.expected_agents), "required_artifacts": list(self.required_artifacts)}


def parse_corpus(doc: Any, source: str = "<corpus>") -> list[CorpusEntry]:
    if not isinstance(doc, list):
        raise CorpusError(f"{source}: corpus must be a JSON array")
    if not doc:
        raise CorpusError(f"{source}: corpus is empty")
    out, problems, seen = [], [], set()
    for i, e in enumerate(doc):
        where = f"entry {i}"
        if not isinstance(e, dict):
            problems.append(f"{where}: expected an object")
            continue
        where = f"entry {i} ({e.get('id', '?')})"
        miss = [k for k in ("id", "category", "prompt", "expected_agents") if k not in e]
        if miss:
            problems.append(f"{where}: missing field(s) {miss}")
            continue
        if e["id"] in seen:
            problems.append(f"{where}: duplicate id")
        seen.add(e["id"])
        if e["category"] not in CATEGORIES:
            problems.append(f"{where}: unknown category {e['category']!r}")
        agents = e["expected_agents"]
        if not isinstance(agents, list) or not agents:
            problems.append(f"{where}: expected_agents must be a non-empty list")
            agents = []
        bad = [a for a in agents if a not in SPECIALIST_NAMES]
        if bad:
            problems.append(f"{where}: unknown agent(s) {bad}")
        arts = e.get("required_artifacts", [])
        if not isinstance(arts, list) or not all(isinstance(a, str) for a in arts):
            problems.append(f"{where}: required_artifacts must be a list of path globs")
            arts = []
        if not isinstance(e["prompt"], str):
            problems.append(f"{where}: prompt must be a string")
        out.append(CorpusEntry(str(e["id"]), e["category"], str(e["prompt"]), tuple(agents), tuple(arts)))
    if problems:
        raise CorpusError(f"{source}: " + "; ".join(problems))
    return out


def load_corpus(path: str | os.PathLike) -> list[CorpusEntry]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CorpusError(f"cannot read corpus {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{path}: invalid JSON: {exc}") from None
    return parse_corpus(doc, str(path))


def is_subsequence(needle: Sequence[str], hay: Sequence[str]) -> bool:
    it = iter(hay)
    return all(any(x == y for y in it) for x in needle)


@dataclass(frozen=True)
class EvaluationRecord:
    prompt_id: str
    category: str
    expected_agents: tuple[str, ...]
    invoked_agents: tuple[str, ...]
    completed: bool
    required_artifacts_present: bool
    outcome: str = ""
    run_dir: str = ""
    missing_artifacts: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return (is_subsequence(self.expected_agents, self.invoked_agents) and self.completed
                and self.required_artifacts_present)

    def to_dict(self) -> dict:
        return {**asdict(self), "passed": self.passed}


def missing_artifacts(patterns: Sequence[str], run_dir: str | os.PathLike,
                      produced: Sequence[str] | None = None) -> list[str]:
    """Globs that match nothing; relative patterns resolve against the run directory.

    With `produced` given, a match only counts when the run indexed it (or wrote it inside the run
    directory), so leftovers from an earlier run cannot satisfy a later one.
    """
    made = None if produced is None else {os.path.abspath(p) for p in produced}
    root = os.path.abspath(run_dir) + os.sep
    out = []
    for pat in patterns:
        full = pat if os.path.isabs(pat) else os.path.join(run_dir, pat)
        hits = [os.path.abspath(h) for h in glob.glob(full)]
        if made is not None:
            hits = [h for h in hits if h in made or h.startswith(root)]
        if not hits:
            out.append(pat)
    return out


def pct(num: int, den: int) -> int:
    """100*num/den rounded half up."""
    q = Fraction(100 * num, den)
    return int(q + Fraction(1, 2)) if q >= 0 else -int(-q + Fraction(1, 2))


@dataclass
class EvaluationReport:
    backend: str
    records: list[EvaluationRecord]

    def category_results(self) -> dict[str, bool | None]:
        """Pass when every prompt of the category passed; None when the corpus has no such prompt."""
        out: dict[str, bool | None] = {}
        for c in CATEGORIES:
            recs = [r for r in self.records if r.category == c]
            out[c] = None if not recs else all(r.passed for r in recs)
        return out

    @property
    def success_rate_pct(self) -> int:
        res = [v for v in self.category_results().values() if v is not None]
        if not res:
            raise CorpusError("no evaluated categories; refusing to report a success rate")
        return pct(sum(res), len(res))

    @property
    def prompt_pass_rate_pct(self) -> int:
        return pct(sum(r.passed for r in self.records), len(self.records))

    def row(self) -> list[str]:
        cells = ["NA" if v is None else ("Pass" if v else "Fail") for v in self.category_results().values()]
        return [self.backend, *cells, str(self.success_rate_pct)]


def write_report(reports: Sequence[EvaluationReport], path: str | os.PathLike) -> str:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in reports:
            w.writerow(r.row())
    return str(p)


def write_records(report: EvaluationReport, path: str | os.PathLike) -> str:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8") as fh:
        for r in report.records:
            fh.write(json.dumps({"backend": report.backend, **r.to_dict()}, sort_keys=True) + "\n")
    return str(p)


def _label(backend: Backend | BackendProfile, name: str | None) -> str:
    if name:
        return name
    if isinstance(backend, BackendProfile):
        return backend.label
    return getattr(backend, "model_id", type(backend).__name__)


def evaluate_entry(entry: CorpusEntry, team: Team, workspace_root: str | os.PathLike,
                   backend_label: str = "") -> EvaluationRecord:
    ws = RunWorkspace.create(workspace_root, entry.prompt, backend_label)
    transcript = run_master(entry.prompt, team, workspace=ws)
    delegations_ok = all(r.outcome == "Completed" for r in ws.specialist_runs)
    missing = missing_artifacts(entry.required_artifacts, ws.run_dir, ws.artifacts)
    return EvaluationRecord(entry.id, entry.category, entry.expected_agents, tuple(invoked_agents(transcript)),
                            transcript.completed and delegations_ok, not missing, transcript.outcome.kind,
                            str(ws.run_dir), tuple(missing))


def evaluate_corpus(corpus_path: str | os.PathLike, team: Team, backend: Backend | BackendProfile | None = None,
                    report_path: str | os.PathLike | None = None, *, workspace_root: str | os.PathLike | None = None,
                    backend_name: str | None = None) -> EvaluationReport:
    """Run prompts sequentially in corpus order, each in its own run directory, with one backend instance."""
    entries = load_corpus(corpus_path)
    if backend is not None:
        team = team.with_backend(open_backend(backend) if isinstance(backend, BackendProfile) else backend)
    label = _label(backend if backend is not None else team.backend, backend_name)
    root = Path(workspace_root) if workspace_root else (
        Path(report_path).resolve().parent / "eval_runs" if report_path else Path.cwd() / "eval_runs")
    safe = "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in label)
    records = [evaluate_entry(e, team, root / safe, label) for e in entries]
    records.sort(key=lambda r: r.prompt_id)
    report = EvaluationReport(label, records)
    if report_path:
        write_report([report], report_path)
        write_records(report, Path(report_path).with_suffix(".records.jsonl"))
    return report
