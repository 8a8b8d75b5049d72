"""Closed-loop mission episodes and Monte Carlo statistics.

One episode runs the full loop: the synthetic human samples actions from its
own policy while the robots follow one of three modes (replanning every step,
executing a single precomputed plan, or staying out entirely). The world has
one shared target set: whoever collects a target first removes it for
everyone. Traces record raw states and inputs; every metric event is a pure
function of those records, so stored events can be audited by recomputation.
"""

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import gridworld as gw
from .geometry import Polytope2
from .planner import PlannerConfig, build_model, solve_build
from .ppo import Stat, bootstrap_ci
from .prediction import predict
from .scenes import Scene

TRACE_FORMAT = "hrteam-trace"
TRACE_VERSION = 1

MODES = ("armchair", "open_loop", "no_support")
METRICS = ("collisions", "disconnections", "targets", "redundant", "mission_time", "success")


class SimError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    planner: PlannerConfig = PlannerConfig()
    subsamples: int = 10  # collision checks per period; 1 = sampled steps only
    workers: int = 1

    def __post_init__(self):
        if self.subsamples < 1:
            raise SimError("subsamples must be >= 1")
        if self.workers < 1:
            raise SimError("workers must be >= 1")


def convex_intersect(p: Polytope2, q: Polytope2) -> bool:
    """Closed-set intersection test for convex polygons.

    Separating-axis theorem over both facet normal sets: disjoint iff some
    facet normal strictly separates the vertex projections. Touching
    boundaries therefore count as intersecting.
    """
    for axes, first, second in ((p.A, p, q), (q.A, q, p)):
        pa = axes @ first.vertices.T
        pb = axes @ second.vertices.T
        if np.any(pb.min(axis=1) > pa.max(axis=1)):
            return False
        if np.any(pa.min(axis=1) > pb.max(axis=1)):
            return False
    return True


# -- event detectors ---------------------------------------------------------


class _Geometry:
    """Scene shapes reused across every step of a replay."""

    def __init__(self, scene: Scene):
        self.scene = scene
        self.robot_body = scene.robot_body
        self.human_body = scene.human_body
        self.obstacles = scene.obstacle_polys()
        self.conn = scene.connectivity_poly()
        self.target_polys = scene.target_polys()
        self.target_order = tuple(t.id for t in scene.targets)
        self.cell_of = {t.id: t.cell for t in scene.targets}


def _pair_collisions(geom: _Geometry, robot_pos: np.ndarray, human_pos: np.ndarray):
    hits = []
    bodies = [geom.robot_body.translate(r) for r in robot_pos]
    human = geom.human_body.translate(human_pos)
    for i, bi in enumerate(bodies):
        for j in range(i + 1, len(bodies)):
            if convex_intersect(bi, bodies[j]):
                hits.append((f"robot{i}", f"robot{j}"))
        if convex_intersect(bi, human):
            hits.append((f"robot{i}", "human"))
        for o, obs in enumerate(geom.obstacles):
            if convex_intersect(bi, obs):
                hits.append((f"robot{i}", f"obstacle{o}"))
    return hits


def _transition_collisions(geom, prev_robots, prev_human, robots, human, subsamples, k):
    """Collision events on one period, deduplicated per colliding pair."""
    seen = set()
    events = []
    for s in range(1, subsamples + 1):
        t = s / subsamples
        rp = prev_robots + t * (robots - prev_robots) if len(robots) else robots
        hp = prev_human + t * (human - prev_human)
        for pair in _pair_collisions(geom, rp, hp):
            if pair not in seen:
                seen.add(pair)
                events.append({"kind": "collision", "k": k, "pair": list(pair)})
    return events


def _disconnected(geom: _Geometry, robot_pos: np.ndarray, human_pos: np.ndarray) -> bool:
    """Connectivity over all agents with links decided by the octagon."""
    n = len(robot_pos)
    if n == 0:
        return False
    points = list(robot_pos) + [human_pos]
    adj = {a: set() for a in range(n + 1)}
    for i in range(n + 1):
        for j in range(i + 1, n + 1):
            if geom.conn.contains(points[i] - points[j]):
                adj[i].add(j)
                adj[j].add(i)
    seen, queue = {0}, [0]
    while queue:
        a = queue.pop()
        for b in adj[a] - seen:
            seen.add(b)
            queue.append(b)
    return seen != set(range(n + 1))


class _MissionLedger:
    """Target bookkeeping shared by the live loop and trace recomputation.

    A visit is an entry made in order to collect: the human visits by
    collecting on a target cell, a robot visits by arriving inside a target
    box its currently executing plan assigns to it. The first visit collects
    the target for everyone; a later visit by another agent (a robot sent by
    a stale plan, typically) is redundant. Walkovers and unassigned
    pass-throughs are not visits and collect nothing.
    """

    def __init__(self, geom: _Geometry):
        self.geom = geom
        self.uncollected = set(geom.target_order)
        self.visits: set[tuple] = set()
        self.events: list[dict] = []

    def settle(self, k, human_cell, human_action_prev, robot_pos, assignments=()) -> set:
        """Apply one sampled step; returns target ids collected at this step."""
        collected = set()
        if human_action_prev == gw.COLLECT:
            for tid in self.geom.target_order:
                if self.geom.cell_of[tid] == tuple(human_cell) and tid in self.uncollected:
                    self._visit(k, "human", tid)
                    self.uncollected.discard(tid)
                    collected.add(tid)
        for i, rp in enumerate(robot_pos):
            for tid in self.geom.target_order:
                if (i, tid) in assignments and self.geom.target_polys[tid].contains(rp):
                    self._visit(k, f"robot{i}", tid)
                    if tid in self.uncollected:
                        self.uncollected.discard(tid)
                        collected.add(tid)
        return collected

    def _visit(self, k, agent, tid):
        if (agent, tid) in self.visits:
            return
        redundant = tid not in self.uncollected
        self.visits.add((agent, tid))
        self.events.append({"kind": "target_visit", "k": k, "agent": agent, "target": tid})
        if redundant:
            self.events.append({"kind": "redundant_visit", "k": k, "target": tid})


def _assigned(b_tar, n_robots) -> set:
    """Robot-target pairs a plan dispatches; the human's own claims excluded."""
    return {(int(i), int(e)) for i, e, _ in b_tar if int(i) < n_robots}


def recompute_events(scene: Scene, steps: list[dict], subsamples: int = 10) -> list[dict]:
    """Derive the full event list from raw step records alone."""
    geom = _Geometry(scene)
    ledger = _MissionLedger(geom)
    events: list[dict] = []

    def snapshot(rec):
        return (
            np.asarray(rec["robot_states"], dtype=float).reshape(-1, 4)[:, (0, 2)],
            np.asarray(rec["human_pos"], dtype=float),
        )

    robots, human = snapshot(steps[0])
    events += [
        {"kind": "collision", "k": 0, "pair": list(p)}
        for p in _pair_collisions(geom, robots, human)
    ]
    if _disconnected(geom, robots, human):
        events.append({"kind": "disconnection", "k": 0})
    ledger.settle(0, steps[0]["human_cell"], None, robots)
    events += ledger.events
    assign: set = set()
    for k in range(1, len(steps)):
        base = len(ledger.events)
        prev_robots, prev_human = robots, human
        robots, human = snapshot(steps[k])
        # the plan recorded alongside step k-1 drove the inputs into step k
        plan_doc = steps[k - 1].get("plan")
        if plan_doc is not None:
            assign = _assigned(plan_doc["b_tar"], len(robots))
        events += _transition_collisions(
            geom, prev_robots, prev_human, robots, human, subsamples, k
        )
        if _disconnected(geom, robots, human):
            events.append({"kind": "disconnection", "k": k})
        ledger.settle(k, steps[k]["human_cell"], steps[k - 1]["human_action"], robots, assign)
        events += ledger.events[base:]
    return events


# -- episode loop -------------------------------------------------------------


@dataclass
class EpisodeTrace:
    mode: str
    scene: str
    seed: int
    steps: list = field(default_factory=list)
    events: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)

    def to_meta(self) -> dict:
        return {
            "format": TRACE_FORMAT,
            "version": TRACE_VERSION,
            "mode": self.mode,
            "scene": self.scene,
            "seed": self.seed,
            "metrics": self.metrics,
            "events": self.events,
        }


def save_trace(path, trace: EpisodeTrace) -> None:
    p = Path(path)
    with p.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(trace.to_meta()) + "\n")
        for rec in trace.steps:
            fh.write(json.dumps(rec) + "\n")


def load_trace(path) -> EpisodeTrace:
    p = Path(path)
    with p.open("r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    meta = json.loads(lines[0])
    if meta.get("format") != TRACE_FORMAT:
        raise SimError(f"{p}: not a trace file")
    if meta.get("version", 0) > TRACE_VERSION:
        raise SimError(f"{p}: trace version {meta['version']} is newer than supported")
    steps = [json.loads(line) for line in lines[1:]]
    return EpisodeTrace(
        mode=meta["mode"],
        scene=meta["scene"],
        seed=meta["seed"],
        steps=steps,
        events=meta["events"],
        metrics=meta["metrics"],
    )


def _plan_summary(plan) -> dict:
    return {
        "status": plan.status,
        "fallback": plan.fallback,
        "objective": plan.objective,
        "b_tar": [list(key) for key in sorted(plan.b_tar)],
        "b_con": [list(key) for key in sorted(plan.b_con)],
        "b_hor": list(plan.b_hor),
    }


def _braking(x: np.ndarray, spec) -> np.ndarray:
    if len(x) == 0:
        return np.zeros((0, 2))
    return np.clip(-x[:, (1, 3)] / spec.T, -spec.a_max, spec.a_max)


def run_episode(mode, scene: Scene, actor, predictor, seed, cfg: SimConfig | None = None) -> EpisodeTrace:
    """Run one seeded mission to the terminal cell (or the budget).

    ``actor`` drives the human stochastically; ``predictor`` is the learned
    stand-in the planner consults. They differ on purpose: the gap between
    them is what forces replanning.
    """
    if mode not in MODES:
        raise SimError(f"unknown mode {mode!r}")
    cfg = cfg or SimConfig()
    rng = np.random.default_rng(seed)
    seed_label = int(seed) if np.isscalar(seed) else -1
    env = scene.grid_env()
    state = gw.encode_state(env, scene.human_start)
    spec = cfg.planner.spec
    A, B = spec.a_mat(), spec.b_mat()
    geom = _Geometry(scene)
    ledger = _MissionLedger(geom)
    X = (
        np.zeros((0, 4))
        if mode == "no_support"
        else np.asarray(scene.robot_starts, dtype=float)
    )

    trace = EpisodeTrace(mode=mode, scene=scene.name, seed=seed_label)
    events = trace.events
    schedule = None
    if mode == "open_loop":
        pos0 = gw.cell_to_cartesian(env, state.cell)
        pred0 = predict(0, pos0, predictor, env, period=spec.T)
        plan0 = solve_build(build_model(scene, X, pred0, cfg=cfg.planner))
        schedule = plan0

    def record(k, action=None, inputs=None, pred=None, plan=None):
        trace.steps.append(
            {
                "k": k,
                "human_cell": list(state.cell),
                "human_pos": gw.cell_to_cartesian(env, state.cell).tolist(),
                "human_action": action,
                "robot_states": X.tolist(),
                "inputs": None if inputs is None else np.asarray(inputs).tolist(),
                "prediction": pred,
                "plan": plan,
            }
        )

    # events on the start configuration
    human_pos = gw.cell_to_cartesian(env, state.cell)
    events += [
        {"kind": "collision", "k": 0, "pair": list(p)}
        for p in _pair_collisions(geom, X[:, (0, 2)], human_pos)
    ]
    if _disconnected(geom, X[:, (0, 2)], human_pos):
        events.append({"kind": "disconnection", "k": 0})
    base = len(ledger.events)
    collected0 = ledger.settle(0, state.cell, None, X[:, (0, 2)])
    events += ledger.events[base:]
    if collected0:
        state = replace(state, uncollected=state.uncollected - collected0)

    k = 0
    assign: set = set() if schedule is None else _assigned(schedule.b_tar, len(X))
    while not state.done:
        human_pos = gw.cell_to_cartesian(env, state.cell)
        pred_doc = plan_doc = None
        if mode == "armchair":
            visited = tuple(sorted(set(geom.target_order) - ledger.uncollected))
            env_k = env
            for tid in visited:
                env_k = env_k.with_collected(tid)
            pred = predict(k, human_pos, predictor, env_k, period=spec.T)
            plan = solve_build(build_model(scene, X, pred, visited=visited, cfg=cfg.planner))
            u = plan.inputs[:, 0, :] if plan.horizon >= 1 else np.zeros((len(X), 2))
            assign = _assigned(plan.b_tar, len(X))
            pred_doc = pred.to_jsonable()
            plan_doc = _plan_summary(plan)
        elif mode == "open_loop":
            if k == 0:
                pred_doc = pred0.to_jsonable()
                plan_doc = _plan_summary(schedule)
            if k < schedule.horizon and not schedule.fallback:
                u = schedule.inputs[:, k, :]
            else:
                u = _braking(X, spec)
        else:
            u = np.zeros((0, 2))

        feats = gw.features(env, state)
        action, _ = actor.sample(feats, rng)
        record(k, action=int(action), inputs=u, pred=pred_doc, plan=plan_doc)

        state, _, _ = gw.step(env, state, int(action))
        if len(X):
            X = X @ A.T + u @ B.T

        k += 1
        prev = trace.steps[-1]
        prev_robots = np.asarray(prev["robot_states"], dtype=float).reshape(-1, 4)[:, (0, 2)]
        prev_human = np.asarray(prev["human_pos"])
        human_next = gw.cell_to_cartesian(env, state.cell)
        events += _transition_collisions(
            geom, prev_robots, prev_human, X[:, (0, 2)], human_next, cfg.subsamples, k
        )
        if _disconnected(geom, X[:, (0, 2)], human_next):
            events.append({"kind": "disconnection", "k": k})
        base = len(ledger.events)
        collected = ledger.settle(k, state.cell, int(action), X[:, (0, 2)], assign)
        events += ledger.events[base:]
        if collected:
            state = replace(state, uncollected=state.uncollected - collected)

    record(k)
    trace.metrics = {
        "collisions": float(sum(e["kind"] == "collision" for e in events)),
        "disconnections": float(sum(e["kind"] == "disconnection" for e in events)),
        "targets": float(len(geom.target_order) - len(ledger.uncollected)),
        "redundant": float(sum(e["kind"] == "redundant_visit" for e in events)),
        "mission_time": float(state.steps),
        "success": float(state.cell == env.terminal),
    }
    return trace


# -- Monte Carlo --------------------------------------------------------------


@dataclass
class McStats:
    mode: str
    scene: str
    n: int
    stats: dict  # metric -> Stat

    def rows(self) -> list[tuple]:
        return [
            (self.mode, self.scene, m, s.mean, s.lo, s.hi, self.n)
            for m, s in self.stats.items()
        ]


def _episode_job(args):
    i, mode, scene, actor, predictor, child, cfg = args
    trace = run_episode(mode, scene, actor, predictor, child, cfg)
    return i, trace


def monte_carlo(
    mode,
    scene: Scene,
    actor,
    predictor,
    n: int,
    seed: int,
    cfg: SimConfig | None = None,
    traces_dir=None,
) -> McStats:
    """n independent episodes; bootstrap percentile CIs on every metric."""
    if n < 1:
        raise SimError("n must be >= 1")
    cfg = cfg or SimConfig()
    children = np.random.SeedSequence(seed).spawn(n)
    jobs = [
        (i, mode, scene, actor, predictor, children[i], cfg) for i in range(n)
    ]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            done = sorted(pool.map(_episode_job, jobs))
    else:
        done = [_episode_job(j) for j in jobs]
    traces = [t for _, t in done]
    for i, trace in enumerate(traces):
        trace.seed = i  # replayable via SeedSequence(seed).spawn(n)[i]
    if traces_dir is not None:
        out = Path(traces_dir)
        out.mkdir(parents=True, exist_ok=True)
        for i, trace in enumerate(traces):
            save_trace(out / f"{mode}_{scene.name}_{i:04d}.jsonl", trace)

    boot = np.random.default_rng([seed, len(METRICS)])
    stats = {}
    for metric in METRICS:
        values = np.array([t.metrics[metric] for t in traces])
        s = bootstrap_ci(values, boot)
        stats[metric] = Stat(s.mean, min(s.lo, s.mean), max(s.hi, s.mean))
    return McStats(mode=mode, scene=scene.name, n=n, stats=stats)
