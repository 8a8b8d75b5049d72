"""Independent plan validity checker.

Rebuilds the geometry straight from the scene (not from the planner's
internals) and verifies every contract a returned plan must satisfy.
"""

import numpy as np

from hrteam.geometry import minkowski_sum, pontryagin_diff, safety_region
from hrteam.planner import PlannerConfig
from hrteam.prediction import HumanPrediction
from hrteam.scenes import Scene

TOL = 1e-6


def assert_plan_invariants(
    scene: Scene, cfg: PlannerConfig, pred: HumanPrediction, plan
) -> None:
    assert not plan.fallback, f"fallback plan ({plan.status})"
    n_a = plan.states.shape[0]
    nbar = plan.horizon
    A, B = cfg.spec.a_mat(), cfg.spec.b_mat()

    # dynamics recursion and state bounds
    for i in range(n_a):
        for ell in range(nbar):
            resid = plan.states[i, ell + 1] - A @ plan.states[i, ell] - B @ plan.inputs[i, ell]
            assert np.max(np.abs(resid)) <= TOL, f"dynamics residual {resid}"
            assert np.max(np.abs(plan.inputs[i, ell])) <= cfg.spec.a_max + TOL
        for ell in range(1, nbar + 1):
            v = plan.states[i, ell][[1, 3]]
            assert np.max(np.abs(v)) <= cfg.spec.v_max + TOL

    body = scene.robot_body
    arena_eroded = pontryagin_diff(scene.arena(), body)
    mirrored = body.reflect()
    obstacle_pieces = [minkowski_sum(o, mirrored) for o in scene.obstacle_polys()]
    human_shape = scene.human_body
    if cfg.robust:
        human_shape = safety_region(human_shape, 1.0, cfg.spec.T)
    human_piece = minkowski_sum(human_shape, mirrored)
    pair_piece = minkowski_sum(body, mirrored)
    conn = scene.connectivity_poly()
    conn_h = conn
    if cfg.robust:
        conn_h = pontryagin_diff(conn, safety_region(scene.human_body, 1.0, cfg.spec.T))

    yh = np.asarray(pred.positions)
    pos = plan.states[:, :, [0, 2]]

    # free space: arena, obstacles, the human's region, and pairwise gaps
    for i in range(n_a):
        for ell in range(1, nbar + 1):
            p = pos[i, ell]
            assert arena_eroded.contains(p, TOL), f"robot {i} leaves the arena at {ell}"
            for o, piece in enumerate(obstacle_pieces):
                assert not piece.contains(p, tol=-(cfg.margin - TOL)), (
                    f"robot {i} inside obstacle {o} at step {ell}: {p}"
                )
            hp = human_piece.translate(yh[ell])
            assert not hp.contains(p, tol=-(cfg.margin - TOL)), (
                f"robot {i} inside the human region at step {ell}: {p}"
            )
            for j in range(i + 1, n_a):
                rel = p - pos[j, ell]
                assert not pair_piece.contains(rel, tol=-(cfg.margin - TOL)), (
                    f"robots {i},{j} overlap at step {ell}"
                )

    # target implications and once-only collection
    polys = scene.target_polys()
    per_target: dict[int, int] = {}
    for (agent, e, ell), v in plan.b_tar.items():
        assert v == 1
        per_target[e] = per_target.get(e, 0) + 1
        if agent < n_a:
            assert polys[e].contains(pos[agent, ell], TOL), (
                f"b_tar {agent},{e},{ell} outside target"
            )
        else:
            assert pred.claimed.get(e) == ell
    assert all(c <= 1 for c in per_target.values()), f"target claimed twice: {per_target}"

    # connectivity memberships plus whole-team traversal per mission step
    ts = pred.terminal_step
    l_f = ts if ts is not None and ts <= nbar else None
    l_mis = l_f if l_f is not None else nbar
    for (i, j, ell), v in plan.b_con.items():
        assert v == 1
        if j < n_a:
            rel = pos[i, ell] - pos[j, ell]
            assert conn.contains(rel, TOL), f"b_con {i},{j},{ell} outside region"
        elif ell == 0:
            assert conn.contains(pos[i, 0] - yh[0], TOL)
        else:
            at = ell - 1 if cfg.robust else ell
            rel = pos[i, at] - yh[at]
            assert conn_h.contains(rel, TOL), f"human link {i} step {ell} outside"
    for ell in range(l_mis + 1):
        adj = {a: set() for a in range(n_a + 1)}
        for (i, j, e2) in plan.b_con:
            if e2 == ell:
                adj[i].add(j)
                adj[j].add(i)
        seen = {0}
        queue = [0]
        while queue:
            a = queue.pop()
            for b in adj[a] - seen:
                seen.add(b)
                queue.append(b)
        assert seen == set(range(n_a + 1)), f"team disconnected at step {ell}: {adj}"

    # mission-over bookkeeping
    expect_hor = tuple(
        1 if l_f is not None and ell >= l_f else 0 for ell in range(nbar + 1)
    )
    assert plan.b_hor == expect_hor
    assert all(ell <= l_mis for (_, _, ell) in plan.b_tar), "reward after mission end"
