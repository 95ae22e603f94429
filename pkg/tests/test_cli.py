import json

import pytest

from medagents import cli
from medagents.agent import AgentStep, FinalAnswer, ToolCall


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_run_completed(fx, tmp_path, capsys):
    plan = fx.plan("eda_prompt_4")
    code, out, _ = run_cli(capsys, "run", "--prompt", plan.prompt, "--backend", str(fx.correct_profile_path),
                           "--manifest-dir", str(fx.manifest_dir), "--workspace", str(tmp_path))
    assert code == 0 and plan.final_answer in out
    runs = list((tmp_path / "runs").iterdir())
    assert len(runs) == 1 and (runs[0] / "transcript.jsonl").stat().st_size > 0
    assert (runs[0] / "manifest.json").is_file()


def test_run_prompt_file(fx, tmp_path, capsys):
    plan = fx.plan("fia_prompt_4")
    pf = tmp_path / "prompt.txt"
    pf.write_text(plan.prompt)
    code, _, _ = run_cli(capsys, "run", "--prompt-file", str(pf), "--backend", str(fx.correct_profile_path),
                         "--manifest-dir", str(fx.manifest_dir), "--workspace", str(tmp_path / "ws"))
    assert code == 0


@pytest.mark.parametrize("argv", [["run", "--prompt", "a", "--prompt-file", "b"], ["run"], ["frobnicate"],
                                  ["run", "--prompt", "a", "--max-steps", "zero"]])
def test_bad_flags_exit_1(argv, capsys):
    with pytest.raises(SystemExit) as ei:
        cli.main(argv)
    assert ei.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_missing_api_key_exits_3(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("OPENAI_API_KEY", raising=False)
    code, _, err = run_cli(capsys, "run", "--prompt", "hi", "--backend", "openai", "--workspace", str(tmp_path))
    assert code == 3 and "OPENAI_API_KEY" in err


def test_budget_exhausted_exits_2(fx, tmp_path, capsys):
    code, _, err = run_cli(capsys, "run", "--prompt", "hi", "--backend", str(fx.broken_profile_path),
                           "--max-steps", "2", "--workspace", str(tmp_path))
    assert code == 2 and "BudgetExhausted" in err


def test_unknown_backend_exits_1(tmp_path, capsys):
    code, _, err = run_cli(capsys, "run", "--prompt", "hi", "--backend", str(tmp_path / "nope.json"))
    assert code == 1 and "nope.json" in err


def test_eval_two_backends_two_rows(fx, tmp_path, capsys):
    corpus = tmp_path / "c.json"
    corpus.write_text(json.dumps([fx.plan(i).entry().to_dict() for i in ("eda_prompt_5", "img_infer_prompt_4")]))
    report = tmp_path / "report.csv"
    code, out, _ = run_cli(capsys, "eval", "--corpus", str(corpus), "--backend", str(fx.correct_profile_path),
                           "--backend", str(fx.broken_profile_path), "--report", str(report),
                           "--manifest-dir", str(fx.manifest_dir))
    assert code == 0
    rows = report.read_text().splitlines()
    assert len(rows) == 3 and rows[1].startswith("scripted-correct,") and rows[1].endswith(",100")
    assert rows[2].startswith("scripted-broken,") and rows[2].endswith(",0")
    assert out.splitlines() == rows


def test_eval_corpus_error_exits_1(tmp_path, capsys):
    bad = tmp_path / "c.json"
    bad.write_text("[]")
    code, _, err = run_cli(capsys, "eval", "--corpus", str(bad), "--backend", "local", "--report",
                           str(tmp_path / "r.csv"))
    assert code == 1 and "empty" in err


def test_tools_list(capsys):
    code, out, _ = run_cli(capsys, "tools", "list")
    assert code == 0 and "Specialist agents (8):" in out and "Tools (12):" in out
    code, out, _ = run_cli(capsys, "tools", "list", "--json")
    entries = json.loads(out)
    assert sum(e["kind"] == "specialist" for e in entries) == 8 and len(entries) == 20


def _steps():
    return [AgentStep(0, "look", ToolCall("eda", {"input_path": "a.csv"}), "eda finished"),
            AgentStep(1, "again", ToolCall("eda", {"input_path": "b.csv"}), "eda finished", sub_transcript="s.jsonl"),
            AgentStep(2, "done", FinalAnswer("all good"), "")]


def test_transcript_show_numbers_steps(tmp_path, capsys):
    p = tmp_path / "transcript.jsonl"
    p.write_text("".join(json.dumps(s.to_dict()) + "\n" for s in _steps()))
    code, out, _ = run_cli(capsys, "transcript", "show", str(tmp_path))
    assert code == 0
    heads = [line for line in out.splitlines() if line.startswith("Step ")]
    assert [h.split()[1] for h in heads] == ["1", "2", "3"]
    assert "final answer: all good" in out and "specialist transcript: s.jsonl" in out


def test_transcript_show_malformed_line(tmp_path, capsys):
    p = tmp_path / "t.jsonl"
    p.write_text(json.dumps(_steps()[0].to_dict()) + "\n{not json\n")
    code, _, err = run_cli(capsys, "transcript", "show", str(p))
    assert code == 1 and "line 2" in err
