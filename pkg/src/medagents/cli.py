"""Command-line front end.

    medagents run --prompt TEXT | --prompt-file F [--backend B] [--model M] [--workspace D] [--max-steps N]
                  [--manifest-dir D]
    medagents eval --corpus F --backend B [--backend B ...] --report OUT.csv
    medagents tools list
    medagents transcript show PATH|RUN_ID
    medagents fixtures build DIR
    medagents serve [--host H] [--port P]

With `--server URL` the run/eval/tools/transcript commands go to a running `medagents serve` instead of
executing in-process.

Exit codes: 0 success (for `run`, the master Completed), 1 usage or input error, 2 BudgetExhausted,
3 FatalError.
"""

from __future__ import annotations

import argparse
import json
import sys
import textwrap
from pathlib import Path
from typing import Sequence

from .orchestration import REPORT_HEADER, CorpusError
from .workspace import TRANSCRIPT, TranscriptFormatError, read_transcript


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit 2, which is reserved for BudgetExhausted
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _fail(msg: str, code: int = 1) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="medagents", description="Multi-agent ML workflow runner.")
    p.add_argument("--server", help="base URL of a running `medagents serve`; default runs in-process")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one prompt through the master agent")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--prompt")
    src.add_argument("--prompt-file")
    r.add_argument("--backend", default="local", help="profile JSON file, or 'openai' / 'local'")
    r.add_argument("--model", help="override the profile's model id")
    r.add_argument("--workspace", default="workspace")
    r.add_argument("--max-steps", type=int)
    r.add_argument("--manifest-dir", help="adapter manifests directory (default: built-in manifests)")

    e = sub.add_parser("eval", help="evaluate a prompt corpus against one or more backends")
    e.add_argument("--corpus", required=True)
    e.add_argument("--backend", action="append", required=True, help="repeat for several report rows")
    e.add_argument("--report", required=True)
    e.add_argument("--workspace", help="root for per-prompt run directories (default: next to the report)")
    e.add_argument("--max-steps", type=int)
    e.add_argument("--manifest-dir")

    t = sub.add_parser("tools", help="tool catalog")
    tsub = t.add_subparsers(dest="tools_cmd", required=True)
    tl = tsub.add_parser("list")
    tl.add_argument("--manifest-dir")
    tl.add_argument("--json", action="store_true")

    tr = sub.add_parser("transcript", help="transcript utilities")
    trsub = tr.add_subparsers(dest="transcript_cmd", required=True)
    ts = trsub.add_parser("show")
    ts.add_argument("path", help="transcript.jsonl, a run directory, or (with --server) a run id")

    f = sub.add_parser("fixtures", help="offline evaluation fixtures")
    fsub = f.add_subparsers(dest="fixtures_cmd", required=True)
    fb = fsub.add_parser("build")
    fb.add_argument("directory")

    s = sub.add_parser("serve", help="start the HTTP service")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8000)
    s.add_argument("--workspace", default="workspace")
    s.add_argument("--manifest-dir")
    return p


# ---------------------------------------------------------------- rendering

def render_steps(steps) -> str:
    blocks = []
    for s in steps:
        a = s.action.to_dict()
        lines = [f"Step {s.index + 1}  ({s.wall_time_ms} ms)"]
        if s.thought:
            lines.append(f"  thought: {s.thought}")
        if a["type"] == "tool_call":
            lines.append(f"  action: {a['tool']} {json.dumps(a['arguments'], ensure_ascii=False, sort_keys=True)}")
        elif a["type"] == "final_answer":
            lines.append(f"  final answer: {a['text']}")
        else:
            lines.append(f"  parse failure: {a['message']}")
        if s.observation:
            lines.append("  observation:")
            lines.append(textwrap.indent(s.observation, "    "))
        if s.sub_transcript:
            lines.append(f"  specialist transcript: {s.sub_transcript}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


def render_catalog_table(entries: list[dict]) -> str:
    out = []
    for kind, title in (("specialist", "Specialist agents"), ("tool", "Tools")):
        rows = [e for e in entries if e["kind"] == kind]
        out.append(f"{title} ({len(rows)}):")
        width = max((len(e["name"]) for e in rows), default=0)
        for e in rows:
            first = e["description"].strip().splitlines()[0] if e["description"].strip() else ""
            out.append(f"  {e['name']:<{width}}  {first}")
    return "\n".join(out)


def _print_rows(header: Sequence[str], rows: list[dict]) -> None:
    print(",".join(header))
    for r in rows:
        print(",".join([r["backend"], *r["categories"].values(), str(r["success_rate_pct"])]))


# ---------------------------------------------------------------- commands

def _prompt(args) -> str:
    if args.prompt is not None:
        return args.prompt
    try:
        return Path(args.prompt_file).read_text(encoding="utf-8")
    except OSError as exc:
        raise FileNotFoundError(f"cannot read prompt file {args.prompt_file}: {exc.strerror}") from None


def _backend_arg(spec: str):
    """Profiles are read client-side so a remote server gets the same content."""
    p = Path(spec)
    if p.is_file():
        return json.loads(p.read_text(encoding="utf-8"))
    return spec


def cmd_run(args) -> int:
    try:
        prompt = _prompt(args)
    except FileNotFoundError as exc:
        return _fail(str(exc))
    if args.server:
        body = {"prompt": prompt, "backend": _backend_arg(args.backend), "model": args.model,
                "max_steps": args.max_steps}
        res = _http("post", args.server, "/runs", body)
    else:
        from .service import ServiceError, execute_run
        try:
            res = execute_run(prompt, args.backend, workspace=args.workspace, model=args.model,
                              max_steps=args.max_steps, manifest_dir=args.manifest_dir).to_dict()
        except ServiceError as exc:
            return _fail(str(exc))
    if res["run_dir"]:
        print(f"run: {res['run_dir']}", file=sys.stderr)
    if res["outcome"] == "Completed":
        print(res["final_answer"])
    else:
        print(f"{res['outcome']}: {res['detail']}", file=sys.stderr)
    return int(res["exit_code"])


def cmd_eval(args) -> int:
    if args.server:
        body = {"corpus": str(Path(args.corpus).resolve()), "backends": [_backend_arg(b) for b in args.backend],
                "report": str(Path(args.report).resolve()), "max_steps": args.max_steps}
        res = _http("post", args.server, "/evaluations", body)
        _print_rows(res["header"], res["rows"])
        return 0
    from .service import ServiceError, execute_eval, report_rows
    try:
        reps = execute_eval(args.corpus, args.backend, args.report, workspace=args.workspace,
                            manifest_dir=args.manifest_dir, max_steps=args.max_steps)
    except (CorpusError, ServiceError) as exc:
        return _fail(str(exc))
    _print_rows(REPORT_HEADER, report_rows(reps))
    print(f"report: {args.report}", file=sys.stderr)
    return 0


def cmd_tools(args) -> int:
    if args.server:
        entries = _http("get", args.server, "/tools")
    else:
        from .service import catalog
        entries = catalog(args.manifest_dir)
    print(json.dumps(entries, indent=2) if args.json else render_catalog_table(entries))
    return 0


def cmd_transcript(args) -> int:
    if args.server:
        from .agent import AgentStep
        rec = _http("get", args.server, f"/transcripts/{args.path}")
        print(render_steps([AgentStep.from_dict(s) for s in rec["steps"]]))
        return 0
    p = Path(args.path)
    if p.is_dir():
        p = p / TRANSCRIPT
    try:
        steps = read_transcript(p)
    except TranscriptFormatError as exc:
        return _fail(str(exc))
    print(render_steps(steps))
    return 0


def cmd_fixtures(args) -> int:
    from .orchestration.fixtures import build_fixtures
    fx = build_fixtures(args.directory)
    print(f"corpus: {fx.corpus_path} ({len(fx.plans)} prompts)")
    print(f"correct backend profile: {fx.correct_profile_path}")
    print(f"broken backend profile: {fx.broken_profile_path}")
    print(f"adapter manifests: {fx.manifest_dir}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app
    uvicorn.run(create_app(args.workspace, args.manifest_dir), host=args.host, port=args.port)
    return 0


class _RemoteError(Exception):
    def __init__(self, code: int, msg: str):
        super().__init__(msg)
        self.code = code


def _http(method: str, base: str, path: str, body: dict | None = None):
    import httpx
    try:
        r = httpx.request(method.upper(), base.rstrip("/") + path, json=body, timeout=None)
    except httpx.HTTPError as exc:
        raise _RemoteError(1, f"cannot reach server {base}: {exc}") from None
    if r.status_code >= 400:
        try:
            detail = r.json().get("detail", r.text)
        except ValueError:
            detail = r.text
        raise _RemoteError(1, f"server returned {r.status_code}: {detail}")
    return r.json()


COMMANDS = {"run": cmd_run, "eval": cmd_eval, "tools": cmd_tools, "transcript": cmd_transcript,
            "fixtures": cmd_fixtures, "serve": cmd_serve}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "max_steps", None) is not None and args.max_steps < 1:
        return _fail("--max-steps must be >= 1")
    try:
        return COMMANDS[args.command](args)
    except _RemoteError as exc:
        return _fail(str(exc), exc.code)


if __name__ == "__main__":
    sys.exit(main())
