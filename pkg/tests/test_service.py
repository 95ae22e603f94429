import json

import pytest
from fastapi.testclient import TestClient

from medagents import cli
from medagents.service import create_app


@pytest.fixture
def client(fx, tmp_path):
    return TestClient(create_app(tmp_path / "ws", fx.manifest_dir))


def test_tools_endpoint(client):
    r = client.get("/tools")
    assert r.status_code == 200
    kinds = [t["kind"] for t in r.json()]
    assert kinds.count("specialist") == 8 and kinds.count("tool") == 12


def test_run_and_transcript(fx, client):
    plan = fx.plan("totalsegmentator_prompt_3")
    r = client.post("/runs", json={"prompt": plan.prompt, "backend": fx.correct_profile().to_dict()})
    assert r.status_code == 200
    body = r.json()
    assert body["outcome"] == "Completed" and body["exit_code"] == 0
    t = client.get(f"/transcripts/{body['run_id']}")
    assert t.status_code == 200
    rec = t.json()
    assert rec["steps"][0]["action"]["tool"] == "totalsegmentator_agent"
    assert rec["manifest"]["run_id"] == body["run_id"] and rec["manifest"]["artifacts"]


def test_transcript_not_found_and_bad_requests(client):
    assert client.get("/transcripts/20990101T000000-abcd").status_code == 404
    assert client.post("/runs", json={"backend": "local"}).status_code == 422
    assert client.post("/runs", json={"prompt": "x", "backend": "/no/such/profile.json"}).status_code == 400


def test_evaluation_endpoint(fx, client, tmp_path):
    corpus = tmp_path / "c.json"
    corpus.write_text(json.dumps([fx.plan("irt_prompt_2").entry().to_dict()]))
    r = client.post("/evaluations", json={"corpus": str(corpus), "report": str(tmp_path / "r.csv"),
                                          "backends": [fx.correct_profile().to_dict()]})
    assert r.status_code == 200
    row = r.json()["rows"][0]
    assert row["success_rate_pct"] == 100 and row["categories"]["Regression (Inference)"] == "Pass"
    assert row["categories"]["EDA"] == "NA"
    corpus.write_text("[]")
    bad = client.post("/evaluations", json={"corpus": str(corpus), "report": str(tmp_path / "r.csv"),
                                            "backends": ["local"]})
    assert bad.status_code == 400 and "empty" in bad.json()["detail"]


def test_cli_thin_client_mode(fx, client, monkeypatch, capsys):
    def via_testclient(method, base, path, body=None):
        r = client.request(method.upper(), path, json=body)
        if r.status_code >= 400:
            raise cli._RemoteError(1, f"server returned {r.status_code}: {r.json().get('detail')}")
        return r.json()

    monkeypatch.setattr(cli, "_http", via_testclient)
    plan = fx.plan("nnunet_prompt_2_kits23")
    code = cli.main(["--server", "http://testserver", "run", "--prompt", plan.prompt,
                     "--backend", str(fx.correct_profile_path)])
    out = capsys.readouterr().out
    assert code == 0 and plan.final_answer in out
    assert cli.main(["--server", "http://testserver", "tools", "list"]) == 0
    assert "Tools (12):" in capsys.readouterr().out
    assert cli.main(["--server", "http://testserver", "transcript", "show", "nope"]) == 1
