"""Live mission sessions over HTTP, one sampling period per operator action.

The operator plays the human: each accepted action advances the world by one
period exactly as the simulator would, with the robots replanning (or
following their precomputed plan) underneath. Step payloads carry the
snapshot, the prediction, the plan summary, and the metric events, and are
also pushed to any WebSocket subscribers of the session.
"""

import asyncio
import queue
import threading
import uuid
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket
from pydantic import BaseModel

from . import gridworld as gw
from .nets import Policy
from .persist import load_net
from .planner import build_model, solve_build
from .prediction import predict
from .scenes import Scene, load_scene
from .simulate import (
    SimConfig,
    _assigned,
    _braking,
    _disconnected,
    _Geometry,
    _MissionLedger,
    _pair_collisions,
    _plan_summary,
    _transition_collisions,
)

Mode = Literal["armchair", "open_loop", "no_support"]
Action = Literal["north", "south", "west", "east", "collect"]


@dataclass(frozen=True)
class ServiceConfig:
    predictor_path: str | None = None
    sim: SimConfig = SimConfig()
    busy: str = "queue"  # or "reject": act during a solve answers 409

    def __post_init__(self):
        if self.busy not in ("queue", "reject"):
            raise ValueError("busy must be 'queue' or 'reject'")


class Mission:
    """Server-side world state; mirrors one simulator episode step for step."""

    def __init__(self, scene: Scene, mode: str, predictor, cfg: SimConfig):
        self.scene = scene
        self.mode = mode
        self.predictor = predictor
        self.cfg = cfg
        self.env = scene.grid_env()
        self.state = gw.encode_state(self.env, scene.human_start)
        self.spec = cfg.planner.spec
        self.geom = _Geometry(scene)
        self.ledger = _MissionLedger(self.geom)
        self.X = (
            np.zeros((0, 4))
            if mode == "no_support"
            else np.asarray(scene.robot_starts, dtype=float)
        )
        self.k = 0
        self.plan0 = None
        self.assign: set = set()
        if mode == "open_loop":
            pos0 = gw.cell_to_cartesian(self.env, self.state.cell)
            pred0 = predict(0, pos0, predictor, self.env, period=self.spec.T)
            self.plan0 = solve_build(build_model(scene, self.X, pred0, cfg=cfg.planner))
            self.assign = _assigned(self.plan0.b_tar, len(self.X))
        # start-configuration events
        pos = gw.cell_to_cartesian(self.env, self.state.cell)
        self.initial_events = [
            {"kind": "collision", "k": 0, "pair": list(p)}
            for p in _pair_collisions(self.geom, self.X[:, (0, 2)], pos)
        ]
        if _disconnected(self.geom, self.X[:, (0, 2)], pos):
            self.initial_events.append({"kind": "disconnection", "k": 0})
        collected = self.ledger.settle(0, self.state.cell, None, self.X[:, (0, 2)])
        self.initial_events += self.ledger.events
        if collected:
            self.state = replace(self.state, uncollected=self.state.uncollected - collected)

    @property
    def done(self) -> bool:
        return self.state.done

    def snapshot(self) -> dict:
        return {
            "k": self.k,
            "mode": self.mode,
            "scene": self.scene.name,
            "done": self.state.done,
            "success": self.state.cell == self.env.terminal,
            "human": {
                "cell": list(self.state.cell),
                "pos": gw.cell_to_cartesian(self.env, self.state.cell).tolist(),
                "uncollected": sorted(self.state.uncollected),
            },
            "robots": self.X.tolist(),
            "visited": sorted(set(self.geom.target_order) - self.ledger.uncollected),
        }

    def step(self, action: int) -> dict:
        human_pos = gw.cell_to_cartesian(self.env, self.state.cell)
        pred_doc = plan_doc = None
        if self.mode == "armchair":
            visited = tuple(sorted(set(self.geom.target_order) - self.ledger.uncollected))
            env_k = self.env
            for tid in visited:
                env_k = env_k.with_collected(tid)
            pred = predict(self.k, human_pos, self.predictor, env_k, period=self.spec.T)
            plan = solve_build(
                build_model(self.scene, self.X, pred, visited=visited, cfg=self.cfg.planner)
            )
            u = plan.inputs[:, 0, :] if plan.horizon >= 1 else np.zeros((len(self.X), 2))
            self.assign = _assigned(plan.b_tar, len(self.X))
            pred_doc = pred.to_jsonable()
            plan_doc = _plan_summary(plan)
        elif self.mode == "open_loop":
            if self.k < self.plan0.horizon and not self.plan0.fallback:
                u = self.plan0.inputs[:, self.k, :]
            else:
                u = _braking(self.X, self.spec)
            if self.k == 0:
                plan_doc = _plan_summary(self.plan0)
        else:
            u = np.zeros((0, 2))

        prev_robots = self.X[:, (0, 2)].copy()
        prev_human = human_pos
        self.state, _, _ = gw.step(self.env, self.state, action)
        if len(self.X):
            self.X = self.X @ self.spec.a_mat().T + u @ self.spec.b_mat().T
        self.k += 1

        human_next = gw.cell_to_cartesian(self.env, self.state.cell)
        events = _transition_collisions(
            self.geom, prev_robots, prev_human, self.X[:, (0, 2)],
            human_next, self.cfg.subsamples, self.k,
        )
        if _disconnected(self.geom, self.X[:, (0, 2)], human_next):
            events.append({"kind": "disconnection", "k": self.k})
        base = len(self.ledger.events)
        collected = self.ledger.settle(self.k, self.state.cell, action, self.X[:, (0, 2)], self.assign)
        events += self.ledger.events[base:]
        if collected:
            self.state = replace(self.state, uncollected=self.state.uncollected - collected)
        return {
            "snapshot": self.snapshot(),
            "prediction": pred_doc,
            "plan": plan_doc,
            "events": events,
        }


class Session:
    def __init__(self, mission: Mission):
        self.id = uuid.uuid4().hex
        self.mission = mission
        self.lock = threading.Lock()
        self.subscribers: list[queue.SimpleQueue] = []

    def broadcast(self, payload: dict) -> None:
        for q in list(self.subscribers):
            q.put(payload)


class CreateBody(BaseModel):
    scene: str
    mode: Mode


class ActBody(BaseModel):
    action: Action


def create_app(cfg: ServiceConfig | None = None, predictor: Policy | None = None) -> FastAPI:
    """Build the service; ``predictor`` overrides the configured policy file."""
    cfg = cfg or ServiceConfig()
    if predictor is None:
        if cfg.predictor_path is None:
            raise ValueError("a predictor policy (path or object) is required")
        predictor = Policy(load_net(cfg.predictor_path))

    app = FastAPI(title="hrteam service")
    sessions: dict[str, Session] = {}
    app.state.sessions = sessions

    def get_session(sid: str) -> Session:
        sess = sessions.get(sid)
        if sess is None:
            raise HTTPException(status_code=404, detail=f"unknown session {sid}")
        return sess

    @app.post("/session")
    def create_session(body: CreateBody):
        try:
            scene = load_scene(body.scene)
        except FileNotFoundError as err:
            raise HTTPException(status_code=422, detail=str(err))
        mission = Mission(scene, body.mode, predictor, cfg.sim)
        sess = Session(mission)
        sessions[sess.id] = sess
        return {
            "id": sess.id,
            "snapshot": mission.snapshot(),
            "events": mission.initial_events,
        }

    @app.get("/session/{sid}")
    def get_snapshot(sid: str):
        return {"id": sid, "snapshot": get_session(sid).mission.snapshot()}

    @app.delete("/session/{sid}")
    def delete_session(sid: str):
        get_session(sid)
        del sessions[sid]
        return {"deleted": sid}

    @app.post("/session/{sid}/act")
    def act(sid: str, body: ActBody):
        sess = get_session(sid)
        if cfg.busy == "reject":
            acquired = sess.lock.acquire(blocking=False)
            if not acquired:
                raise HTTPException(status_code=409, detail="a step is in flight")
        else:
            sess.lock.acquire()
        try:
            if sess.mission.done:
                raise HTTPException(status_code=409, detail="mission already complete")
            payload = sess.mission.step(gw.ACTION_NAMES.index(body.action))
        finally:
            sess.lock.release()
        sess.broadcast(payload)
        return payload

    @app.websocket("/session/{sid}/stream")
    async def stream(ws: WebSocket, sid: str):
        sess = sessions.get(sid)
        if sess is None:
            await ws.close(code=4404)
            return
        await ws.accept()
        q: queue.SimpleQueue = queue.SimpleQueue()
        sess.subscribers.append(q)
        try:
            while True:
                while True:
                    try:
                        payload = q.get_nowait()
                    except queue.Empty:
                        break
                    await ws.send_json(payload)
                try:
                    msg = await asyncio.wait_for(ws.receive(), timeout=0.05)
                except asyncio.TimeoutError:
                    continue
                if msg["type"] == "websocket.disconnect":
                    break
        finally:
            sess.subscribers.remove(q)

    return app
