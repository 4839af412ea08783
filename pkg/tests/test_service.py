"""HTTP adaptive-session service: lifecycle, errors, persistence, export."""

import io
import json
import os
import zipfile

import numpy as np
import pytest

pytest.importorskip("fastapi")
from fastapi.testclient import TestClient

from qmetro import artifacts as art
from qmetro.service import create_app


def adapt_doc(points: int = 50, pre_rounds: int = 5, x_opt=0.0) -> dict:
    task = {
        "name": "adapt",
        "pre_rounds": pre_rounds,
        "prior": {
            "type": "uniform",
            "range": [float(-np.pi / 4), float(3 * np.pi / 4)],
            "points": points,
        },
    }
    if x_opt is not None:
        task["x_opt"] = x_opt
    return {
        "schema": 1,
        "model": {"preset": "qubit-phase"},
        "dynamics": {"t1": 1.0, "steps": 20},
        "task": task,
    }


@pytest.fixture()
def client(tmp_path):
    app = create_app(str(tmp_path / "data"))
    with TestClient(app) as c:
        yield c


def test_create_session_payload(client):
    r = client.post("/sessions", json=adapt_doc())
    assert r.status_code == 201
    body = r.json()
    assert set(body) >= {
        "id", "x_opt", "u0", "round", "phase", "pre_rounds", "n_outcomes", "prior"
    }
    assert body["x_opt"] == 0.0
    assert body["u0"] == 0.0
    assert body["phase"] == "pre-estimation"
    assert body["n_outcomes"] == 2
    assert body["prior"]["points"] == 50


def test_create_rejects_bad_config(client):
    doc = adapt_doc()
    doc["task"] = {"name": "bounds"}
    r = client.post("/sessions", json=doc)
    assert r.status_code == 400
    assert "adapt" in r.json()["detail"]

    doc = adapt_doc()
    doc["dynamics"]["stepz"] = 1
    assert client.post("/sessions", json=doc).status_code == 400


def test_create_degenerate_search_is_422(client):
    doc = adapt_doc(x_opt=None)
    half = [[[0.5, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.5, 0.0]]]
    doc["objective"] = {"M": [half, half]}   # blind POVM, singular everywhere
    r = client.post("/sessions", json=doc)
    assert r.status_code == 422
    assert "singular" in r.json()["detail"]


def test_outcome_flow_and_phase_transition(client):
    sid = client.post("/sessions", json=adapt_doc(pre_rounds=2)).json()["id"]
    r1 = client.post(f"/sessions/{sid}/outcomes", json={"y": 0})
    assert r1.status_code == 200
    assert r1.json()["round"] == 1
    assert r1.json()["phase"] == "pre-estimation"
    assert r1.json()["u_next"] == 0.0

    r2 = client.post(f"/sessions/{sid}/outcomes", json={"y": 1})
    assert r2.json()["phase"] == "adaptive"
    assert r2.json()["u_next"] != 0.0

    snap = client.get(f"/sessions/{sid}").json()
    assert snap["round"] == 2
    assert snap["phase"] == "adaptive"
    assert len(snap["history"]) == 2
    assert snap["history"][1]["y"] == 1


def test_outcome_validation(client):
    sid = client.post("/sessions", json=adapt_doc()).json()["id"]
    assert client.post(f"/sessions/{sid}/outcomes", json={}).status_code == 422
    assert client.post(
        f"/sessions/{sid}/outcomes", json={"y": "zero"}
    ).status_code == 422
    r = client.post(f"/sessions/{sid}/outcomes", json={"y": 5})
    assert r.status_code == 422
    assert "0..1" in r.json()["detail"]


def test_round_mismatch_conflict(client):
    sid = client.post("/sessions", json=adapt_doc()).json()["id"]
    client.post(f"/sessions/{sid}/outcomes", json={"y": 0})
    ok = client.post(f"/sessions/{sid}/outcomes", json={"y": 0, "round": 1})
    assert ok.status_code == 200
    clash = client.post(f"/sessions/{sid}/outcomes", json={"y": 0, "round": 1})
    assert clash.status_code == 409
    assert "round 1" in clash.json()["detail"]
    # the conflicting submission did not advance the session
    assert client.get(f"/sessions/{sid}").json()["round"] == 2


def test_unknown_session_404(client):
    assert client.get("/sessions/deadbeef").status_code == 404
    assert client.post(
        "/sessions/deadbeef/outcomes", json={"y": 0}
    ).status_code == 404


def test_snapshot_downsamples_long_posteriors(client):
    sid = client.post("/sessions", json=adapt_doc(points=1200)).json()["id"]
    snap = client.get(f"/sessions/{sid}").json()
    assert snap["downsampled"]
    assert len(snap["posterior"]) == 512
    assert len(snap["axis"]) == 512
    assert snap["axis"][0] == pytest.approx(-np.pi / 4)
    assert snap["axis"][-1] == pytest.approx(3 * np.pi / 4)


def test_websocket_events(client):
    sid = client.post("/sessions", json=adapt_doc()).json()["id"]
    with client.websocket_connect(f"/sessions/{sid}/events") as ws:
        client.post(f"/sessions/{sid}/outcomes", json={"y": 1})
        event = ws.receive_json()
        assert event["round"] == 1
        assert event["y"] == 1
        assert "posterior" in event


def test_export_matches_replay_artifacts(client, tmp_path):
    from qmetro.config import parse_config
    from qmetro.tasks import run_task

    doc = adapt_doc(pre_rounds=4)
    sid = client.post("/sessions", json=doc).json()["id"]
    rng = np.random.default_rng(21)
    ys = rng.integers(0, 2, size=12)
    for y in ys:
        assert client.post(
            f"/sessions/{sid}/outcomes", json={"y": int(y)}
        ).status_code == 200

    r = client.get(f"/sessions/{sid}/export")
    assert r.status_code == 200
    assert r.headers["content-type"] == "application/zip"
    zf = zipfile.ZipFile(io.BytesIO(r.content))
    assert sorted(zf.namelist()) == ["pout.csv", "xout.csv", "y.csv"]

    outdir = tmp_path / "replay"
    run_task(parse_config(doc), output_dir=str(outdir), outcomes=ys)
    for name in ("y.csv", "xout.csv", "pout.csv"):
        assert zf.read(name) == (outdir / name).read_bytes()


def test_restart_resumes_sessions(tmp_path):
    data = str(tmp_path / "data")
    app = create_app(data)
    with TestClient(app) as c:
        sid = c.post("/sessions", json=adapt_doc(pre_rounds=3)).json()["id"]
        for y in (0, 1, 1, 0, 1):
            c.post(f"/sessions/{sid}/outcomes", json={"y": y})
        before = c.get(f"/sessions/{sid}").json()

    app2 = create_app(data)
    with TestClient(app2) as c:
        after = c.get(f"/sessions/{sid}").json()
        assert after["round"] == before["round"] == 5
        assert after["phase"] == before["phase"] == "adaptive"
        assert after["u"] == pytest.approx(before["u"])
        assert after["estimate"] == pytest.approx(before["estimate"])
        assert after["posterior"] == pytest.approx(before["posterior"])
        # the resumed session keeps accepting outcomes
        assert c.post(f"/sessions/{sid}/outcomes", json={"y": 0}).status_code == 200


def test_corrupt_log_is_skipped(tmp_path):
    data = tmp_path / "data"
    data.mkdir()
    (data / "junk.jsonl").write_text("not json\n")
    (data / "empty.jsonl").write_text("")
    app = create_app(str(data))
    with TestClient(app) as c:
        r = c.post("/sessions", json=adapt_doc())
        assert r.status_code == 201


def test_log_is_append_only_jsonl(tmp_path):
    data = str(tmp_path / "data")
    app = create_app(data)
    with TestClient(app) as c:
        sid = c.post("/sessions", json=adapt_doc()).json()["id"]
        c.post(f"/sessions/{sid}/outcomes", json={"y": 1})
    lines = [
        json.loads(line)
        for line in open(os.path.join(data, f"{sid}.jsonl"))
    ]
    assert lines[0]["event"] == "created"
    assert lines[0]["config"]["schema"] == 1
    assert lines[1] == {"event": "outcome", "y": 1}
