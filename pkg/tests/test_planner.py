import json

import numpy as np
import pytest

from hrteam.gridworld import Target, feature_dim
from hrteam.planner import (
    PlannerConfig,
    PlannerError,
    RobotSpec,
    build_model,
    open_loop_plan,
    plan_step,
    solve_build,
)
from hrteam.nets import Mlp, Policy
from hrteam.prediction import HumanPrediction
from hrteam.scenes import HUMAN_HALF, ROBOT_HALF, Scene, load_scene
from planner_checks import assert_plan_invariants

from hrteam.geometry import Polytope2


def make_scene(targets=(), obstacles=(), human_start=(0, 2), robot_starts=((0.5, 0.0, 0.5, 0.0),)):
    return Scene(
        name="test",
        n_c=7,
        cell_size=1.0,
        obstacle_cells=tuple(obstacles),
        terminal_cell=(6, 6),
        targets=tuple(targets),
        human_start=human_start,
        robot_starts=tuple(robot_starts),
        robot_body=Polytope2.box((0, 0), ROBOT_HALF),
        human_body=Polytope2.box((0, 0), HUMAN_HALF),
    )


def parked(pos, horizon, terminal_step=None, claimed=None):
    """Human prediction that never moves: useful for hand-checkable models."""
    return HumanPrediction(
        waypoints=(tuple(pos),),
        positions=np.tile(np.asarray(pos, dtype=float), (horizon + 1, 1)),
        actions=(),
        claimed=dict(claimed or {}),
        terminal_step=terminal_step,
        truncated=terminal_step is None,
    )


# -- hand-solved single-robot model ------------------------------------------

# One robot at rest at (0.5, 0.5), one target box [2,3]x[0,1], human parked
# two cells north, four steps. The cheapest win is a single push at step 0
# carried for the rest of the horizon: position gain 3.5u reaches the box
# edge with u = 3/7, so the optimum is -gamma_t + gamma_u * 3/7.
HAND_OBJECTIVE = -5.0 + 0.01 * (3.0 / 7.0)


def hand_build(backend="builtin"):
    scene = make_scene(targets=(Target(id=1, kind="B", cell=(2, 0)),))
    cfg = PlannerConfig(robust=False, horizon_max=4, backend=backend)
    pred = parked((0.5, 2.5), horizon=4)
    return scene, cfg, pred, build_model(scene, scene.robot_starts, pred, cfg=cfg)


def test_hand_model_reaches_known_optimum():
    scene, cfg, pred, build = hand_build()
    plan = solve_build(build)
    assert plan.status == "OPTIMAL"
    assert not plan.fallback
    assert plan.objective == pytest.approx(HAND_OBJECTIVE, abs=1e-7)
    assert plan.b_tar == {(0, 1, 4): 1}
    assert plan.b_con == {(0, 1, ell): 1 for ell in range(5)}
    assert plan.b_hor == (0, 0, 0, 0, 0)
    assert plan.states[0, 4, 0] == pytest.approx(2.0, abs=1e-6)
    assert_plan_invariants(scene, cfg, pred, plan)


def test_hand_model_agrees_across_backends():
    _, _, _, build = hand_build(backend="scipy")
    plan = solve_build(build)
    assert plan.status == "OPTIMAL"
    assert plan.objective == pytest.approx(HAND_OBJECTIVE, abs=1e-6)
    assert plan.b_tar == {(0, 1, 4): 1}


def test_claimed_target_leaves_robot_idle():
    scene = make_scene(targets=(Target(id=1, kind="B", cell=(2, 0)),))
    cfg = PlannerConfig(robust=False, horizon_max=4)
    pred = parked((0.5, 2.5), horizon=4, claimed={1: 2})
    plan = solve_build(build_model(scene, scene.robot_starts, pred, cfg=cfg))
    assert plan.status == "OPTIMAL"
    assert plan.objective == pytest.approx(0.0, abs=1e-9)
    assert np.allclose(plan.inputs, 0.0, atol=1e-9)
    # the human's own visit is reported alongside the robots' decisions
    assert plan.b_tar == {(1, 1, 2): 1}


def test_visited_target_attracts_nobody():
    scene = make_scene(targets=(Target(id=1, kind="B", cell=(2, 0)),))
    cfg = PlannerConfig(robust=False, horizon_max=4)
    pred = parked((0.5, 2.5), horizon=4)
    plan = solve_build(build_model(scene, scene.robot_starts, pred, visited=(1,), cfg=cfg))
    assert plan.objective == pytest.approx(0.0, abs=1e-9)
    assert plan.b_tar == {}


def test_disconnected_start_brakes():
    scene = make_scene(
        robot_starts=((0.5, 0.0, 0.5, 1.0), (6.5, 0.0, 6.5, 0.0)),
    )
    pred = parked((0.5, 2.5), horizon=2)
    cfg = PlannerConfig(horizon_max=2)
    plan = solve_build(build_model(scene, scene.robot_starts, pred, cfg=cfg))
    assert plan.fallback
    assert plan.status == "INFEASIBLE"
    assert plan.horizon == 1
    assert plan.b_hor == (0, 0)
    assert plan.objective is None
    # braking kills the residual velocity in one step
    assert plan.inputs[0, 0] == pytest.approx([0.0, -1.0])
    assert plan.states[0, 1, 3] == pytest.approx(0.0)


def test_zero_length_prediction_is_a_null_plan():
    scene = make_scene(
        targets=(Target(id=1, kind="B", cell=(1, 1)),),
        human_start=(6, 6),
        robot_starts=((5.5, 0.0, 6.5, 0.0), (6.5, 0.0, 5.5, 0.0)),
    )
    pred = parked((6.5, 6.5), horizon=0, terminal_step=0)
    plan = solve_build(build_model(scene, scene.robot_starts, pred, cfg=PlannerConfig()))
    assert plan.status == "OPTIMAL"
    assert plan.horizon == 0
    assert plan.inputs.shape == (2, 0, 2)
    assert plan.b_hor == (1,)
    assert plan.b_tar == {}
    assert plan.objective == pytest.approx(0.0, abs=1e-12)


def test_resting_team_stays_put():
    # No targets and a parked human: zero input is feasible and optimal.
    scene = make_scene(human_start=(0, 0), robot_starts=((2.5, 0.0, 0.5, 0.0), (0.5, 0.0, 2.5, 0.0)))
    cfg = PlannerConfig(horizon_max=5)
    pred = parked((0.5, 0.5), horizon=5)
    plan = solve_build(build_model(scene, scene.robot_starts, pred, cfg=cfg))
    assert plan.status == "OPTIMAL"
    assert plan.objective == pytest.approx(0.0, abs=1e-9)
    assert np.allclose(plan.inputs, 0.0, atol=1e-7)
    assert_plan_invariants(scene, cfg, pred, plan)


def walking_pred(cells, terminal_step=None, claimed=None):
    pos = np.asarray([(c[0] + 0.5, c[1] + 0.5) for c in cells], dtype=float)
    return HumanPrediction(
        waypoints=tuple(map(tuple, pos)),
        positions=pos,
        actions=(),
        claimed=dict(claimed or {}),
        terminal_step=terminal_step,
        truncated=terminal_step is None,
    )


def test_walking_human_pushes_robot_out_of_the_way():
    # Human marches east under the resting robot at (2.5, 0.5); the robot has
    # to clear the moving safety region while the net stays connected.
    scene = make_scene(human_start=(0, 0), robot_starts=((2.5, 0.0, 0.5, 0.0), (0.5, 0.0, 2.5, 0.0)))
    cfg = PlannerConfig(horizon_max=3)
    pred = walking_pred([(0, 0), (1, 0), (2, 0), (3, 0)])
    plan = solve_build(build_model(scene, scene.robot_starts, pred, cfg=cfg))
    assert plan.status == "OPTIMAL"
    assert not plan.fallback
    # the lead robot gave way: it cannot still be at its start at step 2
    assert abs(plan.states[0, 2, 0] - 2.5) + abs(plan.states[0, 2, 2] - 0.5) > 0.4
    assert_plan_invariants(scene, cfg, pred, plan)


def test_mission_ends_at_the_terminal_step():
    scene = load_scene("env1")
    cfg = PlannerConfig(horizon_max=5)
    pred = walking_pred(
        [(4, 6), (5, 6), (6, 6), (6, 6), (6, 6), (6, 6)], terminal_step=2
    )
    starts = ((4.5, 0.0, 5.5, 0.0), (5.5, 0.0, 4.5, 0.0))
    plan = solve_build(build_model(scene, starts, pred, cfg=cfg))
    assert plan.status == "OPTIMAL"
    assert plan.b_hor == (0, 0, 1, 1, 1, 1)
    assert all(ell <= 2 for (_, _, ell) in plan.b_tar)
    assert all(ell <= 2 for (_, _, ell) in plan.b_con)
    assert_plan_invariants(scene, cfg, pred, plan)


def test_two_robots_split_nearby_targets():
    scene = load_scene("env2")
    cfg = PlannerConfig(horizon_max=3)
    # human walks north along the west wall toward the grouped targets
    pred = walking_pred([(0, 0), (0, 1), (0, 2), (0, 3)], claimed={3: 3})
    plan = solve_build(build_model(scene, scene.robot_starts, pred, cfg=cfg))
    assert plan.status == "OPTIMAL"
    robot_visits = {e for (a, e, ell) in plan.b_tar if a < 2}
    assert 3 not in robot_visits  # claimed by the human
    assert len(robot_visits) >= 1
    assert (2, 3, 3) in plan.b_tar  # the human's own claim is carried through
    assert_plan_invariants(scene, cfg, pred, plan)


def test_plan_is_deterministic():
    scene = make_scene(human_start=(0, 0), robot_starts=((2.5, 0.0, 0.5, 0.0), (0.5, 0.0, 2.5, 0.0)))
    cfg = PlannerConfig(horizon_max=3)
    pred = walking_pred([(0, 0), (1, 0), (2, 0), (3, 0)])
    docs = []
    for _ in range(2):
        plan = solve_build(build_model(scene, scene.robot_starts, pred, cfg=cfg))
        docs.append(json.dumps(plan.to_jsonable(), sort_keys=True))
    assert docs[0] == docs[1]


def test_bad_inputs_are_rejected():
    scene = make_scene()
    pred = parked((0.5, 2.5), horizon=2)
    with pytest.raises(PlannerError):
        build_model(scene, np.zeros((2, 3)), pred)
    empty = HumanPrediction(
        waypoints=(), positions=np.zeros((0, 2)), actions=(),
        claimed={}, terminal_step=None, truncated=False,
    )
    with pytest.raises(PlannerError):
        build_model(scene, scene.robot_starts, empty)
    with pytest.raises(PlannerError):
        PlannerConfig(gamma_t=0.0)
    with pytest.raises(PlannerError):
        PlannerConfig(horizon_max=-1)


def north_policy(env):
    """Zero-logit net: argmax always picks action 0, a step north."""
    rng = np.random.default_rng(0)
    n = feature_dim(env.n_c)
    return Policy(Mlp.init([n, 8, 5], rng, out_scale=0.0))


def test_plan_step_closes_the_loop():
    scene = load_scene("env1")
    cfg = PlannerConfig(horizon_max=3)
    policy = north_policy(scene.grid_env())
    first, plan = plan_step(
        0, scene, scene.robot_starts, (0.5, 0.5), policy, cfg=cfg
    )
    assert first.shape == (2, 2)
    assert not plan.fallback
    assert plan.horizon == 3
    assert np.all(np.abs(first) <= cfg.spec.a_max + 1e-9)


def test_open_loop_plan_runs_from_scene_starts():
    scene = load_scene("env2")
    cfg = PlannerConfig(horizon_max=2)
    plan = open_loop_plan(scene, north_policy(scene.grid_env()), cfg=cfg)
    assert plan.horizon == 2
    assert plan.status in ("OPTIMAL", "LIMIT")


def test_fallback_plan_clips_braking():
    from hrteam.planner import _fallback_plan

    spec = RobotSpec()
    plan = _fallback_plan(np.array([[1.0, 2.5, 1.0, -2.5]]), spec, "LIMIT")
    assert plan.fallback and plan.status == "LIMIT"
    assert plan.inputs[0, 0] == pytest.approx([-2.5, 2.5])
    assert plan.states[0, 1, 1] == pytest.approx(0.0)
