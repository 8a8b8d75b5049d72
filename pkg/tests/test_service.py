import numpy as np
import pytest
from fastapi.testclient import TestClient

from hrteam.geometry import Polytope2
from hrteam.gridworld import feature_dim
from hrteam.nets import Mlp, Policy
from hrteam.planner import PlannerConfig
from hrteam.scenes import HUMAN_HALF, ROBOT_HALF, Scene, save_scene
from hrteam.service import ServiceConfig, create_app
from hrteam.simulate import SimConfig


def predictor():
    return Policy(Mlp.init([feature_dim(7), 8, 5], np.random.default_rng(0), out_scale=0.0))


def make_client(busy="queue", horizon=2):
    cfg = ServiceConfig(sim=SimConfig(planner=PlannerConfig(horizon_max=horizon)), busy=busy)
    app = create_app(cfg, predictor=predictor())
    return TestClient(app), app


def test_create_get_delete_session():
    client, _ = make_client()
    r = client.post("/session", json={"scene": "env1", "mode": "no_support"})
    assert r.status_code == 200
    doc = r.json()
    sid = doc["id"]
    assert doc["snapshot"]["k"] == 0
    assert doc["snapshot"]["human"]["cell"] == [0, 0]
    assert doc["snapshot"]["robots"] == []

    got = client.get(f"/session/{sid}")
    assert got.status_code == 200
    assert got.json()["snapshot"] == doc["snapshot"]

    assert client.delete(f"/session/{sid}").status_code == 200
    assert client.get(f"/session/{sid}").status_code == 404


def test_unknown_session_and_bad_action():
    client, _ = make_client()
    assert client.get("/session/missing").status_code == 404
    assert client.post("/session/missing/act", json={"action": "east"}).status_code == 404
    r = client.post("/session", json={"scene": "env1", "mode": "no_support"})
    sid = r.json()["id"]
    assert client.post(f"/session/{sid}/act", json={"action": "fly"}).status_code == 422
    assert client.post("/session", json={"scene": "ghost.json", "mode": "no_support"}).status_code == 422
    assert client.post("/session", json={"scene": "env1", "mode": "warp"}).status_code == 422


def test_act_steps_the_world():
    client, _ = make_client()
    sid = client.post("/session", json={"scene": "env1", "mode": "no_support"}).json()["id"]

    r = client.post(f"/session/{sid}/act", json={"action": "east"})
    assert r.status_code == 200
    doc = r.json()
    assert doc["snapshot"]["k"] == 1
    assert doc["snapshot"]["human"]["cell"] == [1, 0]

    # bumping the west wall leaves the cell but still advances the clock
    r = client.post(f"/session/{sid}/act", json={"action": "west"})
    r = client.post(f"/session/{sid}/act", json={"action": "west"})
    doc = r.json()
    assert doc["snapshot"]["human"]["cell"] == [0, 0]
    assert doc["snapshot"]["k"] == 3


def test_armchair_act_returns_plan_and_prediction():
    client, _ = make_client()
    sid = client.post("/session", json={"scene": "env1", "mode": "armchair"}).json()["id"]
    doc = client.post(f"/session/{sid}/act", json={"action": "east"}).json()
    assert doc["plan"] is not None and doc["plan"]["status"] in ("OPTIMAL", "LIMIT")
    assert doc["prediction"] is not None
    assert len(doc["snapshot"]["robots"]) == 2


def test_solver_fallback_rides_in_the_payload(tmp_path):
    # robots parked out of network range: the first solve is infeasible
    scene = Scene(
        name="split",
        n_c=7,
        cell_size=1.0,
        obstacle_cells=(),
        terminal_cell=(6, 6),
        targets=(),
        human_start=(0, 0),
        robot_starts=((0.5, 0.0, 0.5, 0.0), (6.5, 0.0, 6.5, 0.0)),
        robot_body=Polytope2.box((0, 0), ROBOT_HALF),
        human_body=Polytope2.box((0, 0), HUMAN_HALF),
    )
    path = tmp_path / "split.json"
    save_scene(path, scene)
    client, _ = make_client()
    sid = client.post("/session", json={"scene": str(path), "mode": "armchair"}).json()["id"]
    r = client.post(f"/session/{sid}/act", json={"action": "east"})
    assert r.status_code == 200  # never a transport error
    doc = r.json()
    assert doc["plan"]["fallback"] is True
    assert doc["plan"]["status"] == "INFEASIBLE"


def test_mission_complete_answers_409():
    client, _ = make_client()
    # spawning on the terminal finishes the mission immediately
    r = client.post("/session", json={"scene": "env1", "mode": "no_support"})
    sid = r.json()["id"]
    # walk the human onto the terminal along the south then east walls
    for move in ["east"] * 6 + ["north"] * 6:
        doc = client.post(f"/session/{sid}/act", json={"action": move}).json()
    assert doc["snapshot"]["done"] and doc["snapshot"]["success"]
    assert client.post(f"/session/{sid}/act", json={"action": "east"}).status_code == 409


def test_busy_sessions_reject_when_configured():
    client, app = make_client(busy="reject")
    sid = client.post("/session", json={"scene": "env1", "mode": "no_support"}).json()["id"]
    sess = app.state.sessions[sid]
    assert sess.lock.acquire(blocking=False)
    try:
        r = client.post(f"/session/{sid}/act", json={"action": "east"})
        assert r.status_code == 409
    finally:
        sess.lock.release()
    assert client.post(f"/session/{sid}/act", json={"action": "east"}).status_code == 200


def test_sessions_are_isolated():
    client, _ = make_client()
    a = client.post("/session", json={"scene": "env1", "mode": "no_support"}).json()["id"]
    b = client.post("/session", json={"scene": "env1", "mode": "no_support"}).json()["id"]
    client.post(f"/session/{a}/act", json={"action": "east"})
    client.post(f"/session/{b}/act", json={"action": "north"})
    sa = client.get(f"/session/{a}").json()["snapshot"]
    sb = client.get(f"/session/{b}").json()["snapshot"]
    assert sa["human"]["cell"] == [1, 0]
    assert sb["human"]["cell"] == [0, 1]


def test_websocket_stream_pushes_step_payloads():
    client, _ = make_client()
    sid = client.post("/session", json={"scene": "env1", "mode": "no_support"}).json()["id"]
    with client.websocket_connect(f"/session/{sid}/stream") as ws:
        doc = client.post(f"/session/{sid}/act", json={"action": "east"}).json()
        pushed = ws.receive_json()
        assert pushed == doc


def test_config_validation():
    with pytest.raises(ValueError):
        ServiceConfig(busy="drop")
    with pytest.raises(ValueError):
        create_app(ServiceConfig())  # no predictor available
