import io
from dataclasses import astuple, is_dataclass

import pytest
from fastapi.testclient import TestClient

from higgs.config import HiggsConfig
from higgs.service import SummaryService, create_app
from higgs.snapshot import read_snapshot, write_snapshot
from higgs.tree import build_tree

from conftest import WORKED_EDGES, exact_config


def _edges(rows):
    rows = [astuple(r) if is_dataclass(r) else r for r in rows]
    return {"edges": [{"src": s, "dst": d, "weight": w, "timestamp": t} for s, d, w, t in rows]}


@pytest.fixture
def client():
    return TestClient(create_app(SummaryService(cfg=exact_config())))


@pytest.fixture
def loaded(client):
    resp = client.post("/edges", json=_edges(WORKED_EDGES))
    assert resp.status_code == 200
    client.post("/finalize")
    return client


def test_health_and_config(client):
    assert client.get("/health").json() == {"status": "ok"}
    cfg = client.get("/config").json()
    assert cfg["f1"] == 32 and cfg["d1"] == 16


def test_insert_reports_counts(client):
    body = client.post("/edges", json=_edges(WORKED_EDGES[:3])).json()
    assert body == {"accepted": 3, "edge_count": 3, "leaf_count": 1}
    assert client.get("/stats").json()["finalized"] is False


def test_worked_queries(loaded):
    assert loaded.post("/query/edge", json={"src": 2, "dst": 3, "ts": 5, "te": 10}).json()["estimate"] == 3
    assert loaded.post("/query/vertex", json={"vertex": 4, "direction": "out", "ts": 1, "te": 11}).json()[
        "estimate"] == 6
    assert loaded.post("/query/path", json={"vertices": [2, 3, 7], "ts": 4, "te": 8}).json()["estimate"] == 3
    sub = loaded.post("/query/subgraph", json={"edges": [[2, 3], [3, 7]], "ts": 4, "te": 8}).json()
    assert sub == {"estimate": 3, "plan_size": 1}


def test_plan_endpoint(loaded):
    body = loaded.post("/plan", json={"ts": 3, "te": 9}).json()
    assert body["clipped"] == [3, 9]
    assert body["items"] == [{"level": 1, "start": 3, "end": 9, "filtered": True}]


def test_inverted_range_is_rejected(loaded):
    resp = loaded.post("/query/edge", json={"src": 2, "dst": 3, "ts": 10, "te": 5})
    assert resp.status_code == 422


def test_bad_direction_is_rejected(loaded):
    resp = loaded.post("/query/vertex", json={"vertex": 4, "direction": "up", "ts": 1, "te": 11})
    assert resp.status_code == 422


def test_writes_after_finalize_conflict(loaded):
    resp = loaded.post("/edges", json=_edges([(1, 2, 1, 20)]))
    assert resp.status_code == 409
    assert resp.json()["error"] == "FinalizedError"


def test_out_of_order_insert_conflicts(client):
    client.post("/edges", json=_edges([(1, 2, 1, 5)]))
    resp = client.post("/edges", json=_edges([(1, 2, 1, 4)]))
    assert resp.status_code == 409 and resp.json()["error"] == "OrderingError"


def test_delete_round_trip(client):
    client.post("/edges", json=_edges([(1, 2, 3, 5), (1, 2, 1, 6)]))
    body = client.post("/edges/delete", json=_edges([(1, 2, 3, 5)])).json()
    assert body == {"deleted": 1, "edge_count": 1}
    assert client.post("/query/edge", json={"src": 1, "dst": 2, "ts": 0, "te": 9}).json()["estimate"] == 1
    missing = client.post("/edges/delete", json=_edges([(7, 8, 1, 5)]))
    assert missing.status_code == 404


def test_textual_vertices(client):
    client.post("/edges", json=_edges([("alice", "bob", 2, 1), ("bob", "carol", 1, 4)]))
    assert client.post("/query/path", json={"vertices": ["alice", "bob", "carol"], "ts": 0, "te": 9}).json()[
        "estimate"] == 3
    before = len(client.app.state.service.vocab)
    assert client.post("/query/vertex", json={"vertex": "zed", "direction": "in", "ts": 0, "te": 9}).json()[
        "estimate"] == 0
    assert len(client.app.state.service.vocab) == before


def test_snapshot_download_matches_writer(loaded):
    data = loaded.get("/snapshot").content
    tree, _ = read_snapshot(data)
    buf = io.BytesIO()
    write_snapshot(tree, buf)
    assert buf.getvalue() == data


def test_snapshot_of_open_tree_is_refused(client):
    client.post("/edges", json=_edges(WORKED_EDGES[:2]))
    assert client.get("/snapshot").status_code == 400


def test_snapshot_upload_replaces_state():
    tree = build_tree(WORKED_EDGES, exact_config())
    buf = io.BytesIO()
    write_snapshot(tree, buf)
    client = TestClient(create_app(SummaryService(cfg=HiggsConfig())))
    stats = client.put("/snapshot", content=buf.getvalue()).json()
    assert stats["edge_count"] == 11 and stats["finalized"] is True
    assert client.get("/config").json()["f1"] == 32
    assert client.post("/query/edge", json={"src": 2, "dst": 3, "ts": 5, "te": 10}).json()["estimate"] == 3
    assert client.put("/snapshot", content=b"junk").status_code == 400


def test_pipelined_service_matches_inline():
    inline = TestClient(create_app(SummaryService(cfg=exact_config(theta=2, d1=2, candidates=1))))
    piped = TestClient(create_app(SummaryService(cfg=exact_config(theta=2, d1=2, candidates=1), parallel=True)))
    rows = [(i % 5, (i * 3) % 7, 1, i) for i in range(200)]
    for c in (inline, piped):
        c.post("/edges", json=_edges(rows))
        c.post("/finalize")
    q = {"vertex": 2, "direction": "out", "ts": 10, "te": 150}
    assert inline.post("/query/vertex", json=q).json() == piped.post("/query/vertex", json=q).json()
    assert inline.get("/stats").json() == piped.get("/stats").json()
