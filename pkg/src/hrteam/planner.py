"""Receding-horizon team optimization around the human prediction.

One mixed-integer model per planning step: double-integrator robots pick
inputs, target visits, and connectivity links over the prediction horizon.
The human enters as fixed position data; robots must keep the network
connected to it, stay out of its safety region, avoid obstacles and each
other, and split the uncollected targets against an effort cost.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    Polytope2,
    minkowski_sum,
    pontryagin_diff,
    safety_region,
)
from .milp import MilpModel, MilpResult
from .prediction import HumanPrediction, predict
from .scenes import Scene

log = logging.getLogger(__name__)


class PlannerError(ValueError):
    pass


@dataclass(frozen=True)
class RobotSpec:
    """Double integrator sampled every T seconds; state [r_x, v_x, r_y, v_y]."""

    T: float = 1.0
    v_max: float = 2.5
    a_max: float = 5.0

    def a_mat(self) -> np.ndarray:
        T = self.T
        return np.array(
            [[1, T, 0, 0], [0, 1, 0, 0], [0, 0, 1, T], [0, 0, 0, 1]], dtype=float
        )

    def b_mat(self) -> np.ndarray:
        T = self.T
        return np.array(
            [[T * T / 2, 0], [T, 0], [0, T * T / 2], [0, T]], dtype=float
        )


@dataclass(frozen=True)
class PlannerConfig:
    gamma_u: float = 0.01
    gamma_t: float = 5.0
    horizon_max: int = 15
    margin: float = 1e-3  # clearance added to every avoidance facet
    robust: bool = True  # safety region + shrunk human connectivity
    spec: RobotSpec = RobotSpec()
    # Absolute optimality gap. Plans tied on collections differ only in input
    # cost, a gamma_u-scale residue the search would otherwise grind on for
    # thousands of nodes; anything well under gamma_t keeps the discrete
    # decisions exact.
    gap: float = 0.05
    node_limit: int = 200_000
    time_limit: float | None = None
    backend: str = "builtin"

    def __post_init__(self):
        if self.gamma_u <= 0 or self.gamma_t <= 0:
            raise PlannerError("objective weights must be positive")
        if self.horizon_max < 0:
            raise PlannerError("horizon_max must be nonnegative")


@dataclass(frozen=True, eq=False)
class TeamPlan:
    """Solved trajectories and decisions for one planning step.

    Robots are agents 0..n_a-1, the human is agent n_a. ``b_tar`` and
    ``b_con`` hold only active entries: (agent, target id, step) -> 1 and
    (i, j, step) -> 1 with i < j. ``fallback`` marks the braking plan used
    when the model could not be solved.
    """

    status: str
    horizon: int
    states: np.ndarray  # (n_a, horizon + 1, 4)
    inputs: np.ndarray  # (n_a, horizon, 2)
    b_tar: dict = field(default_factory=dict)
    b_con: dict = field(default_factory=dict)
    b_hor: tuple = ()
    objective: float | None = None
    nodes: int = 0
    fallback: bool = False

    def to_jsonable(self) -> dict:
        return {
            "status": self.status,
            "fallback": self.fallback,
            "horizon": self.horizon,
            "objective": self.objective,
            "nodes": self.nodes,
            "states": self.states.tolist(),
            "inputs": self.inputs.tolist(),
            "b_tar": [list(k) for k in sorted(self.b_tar)],
            "b_con": [list(k) for k in sorted(self.b_con)],
            "b_hor": list(self.b_hor),
        }


def _chebyshev_to_box(p: np.ndarray, box: Polytope2) -> float:
    lo, hi = box.bounding_box()
    d = np.maximum(np.maximum(lo - p, p - hi), 0.0)
    return float(d.max())


class _Build:
    """One model build; holds the variable index maps for extraction."""

    def __init__(self, scene: Scene, robot_states, prediction, visited, cfg):
        self.scene = scene
        self.cfg = cfg
        self.pred = prediction
        self.visited = set(visited)
        self.x0 = np.asarray(robot_states, dtype=float)
        self.n_a = self.x0.shape[0]
        if self.x0.shape != (self.n_a, 4):
            raise PlannerError("robot states must be (n_a, 4)")
        if len(prediction.positions) == 0:
            raise PlannerError("empty prediction")
        self.nbar = min(prediction.horizon, cfg.horizon_max)
        self.yh = np.asarray(prediction.positions[: self.nbar + 1], dtype=float)
        ts = prediction.terminal_step
        self.l_f = ts if ts is not None and ts <= self.nbar else None
        # mission steps: rewards and connectivity apply through l_mis
        self.l_mis = self.l_f if self.l_f is not None else self.nbar
        self.model = MilpModel()
        self.x_idx: dict = {}
        self.u_idx: dict = {}
        self.tar_idx: dict = {}
        self.con_idx: dict = {}
        self._geometry()
        self._variables()
        self._dynamics()
        self._free_space()
        self._targets()
        self._connectivity()

    # -- geometry ----------------------------------------------------------

    def _geometry(self):
        scene, cfg = self.scene, self.cfg
        body = scene.robot_body
        arena = scene.arena()
        bounds = pontryagin_diff(arena, body)
        if bounds is None:
            raise PlannerError("arena erodes to empty for the robot body")
        self.pos_lo, self.pos_hi = bounds.bounding_box()
        mirrored = body.reflect()
        self.obstacle_pieces = [
            minkowski_sum(o, mirrored) for o in scene.obstacle_polys()
        ]
        human = scene.human_body
        if cfg.robust:
            human = safety_region(human, v=1.0, T=cfg.spec.T)
        self.human_piece = minkowski_sum(human, mirrored)
        self.pair_piece = minkowski_sum(body, mirrored)
        conn = scene.connectivity_poly()
        self.conn = conn
        if cfg.robust:
            shrunk = pontryagin_diff(conn, safety_region(scene.human_body, 1.0, cfg.spec.T))
            if shrunk is None:
                raise PlannerError("connectivity region erodes to empty")
            self.conn_h = shrunk
        else:
            self.conn_h = conn

    # -- variables -----------------------------------------------------------

    def _variables(self):
        m, cfg = self.model, self.cfg
        v = cfg.spec.v_max
        # per-axis step displacement is at most T * (v + v') / 2 <= T * v_max,
        # so positions live in a box growing by that much per step; tighter
        # variable bounds shrink every big-M derived from them
        reach = v * cfg.spec.T
        for i in range(self.n_a):
            for ell in range(self.nbar + 1):
                for c in range(4):
                    if ell == 0:
                        lo = hi = self.x0[i, c]
                    elif c in (0, 2):
                        lo = max(self.pos_lo[c // 2], self.x0[i, c] - reach * ell)
                        hi = min(self.pos_hi[c // 2], self.x0[i, c] + reach * ell)
                    else:
                        lo, hi = -v, v
                    self.x_idx[i, ell, c] = m.add_var(f"x_{i}_{ell}_{c}", lo, hi)
            for ell in range(self.nbar):
                for c in range(2):
                    up = m.add_var(
                        f"up_{i}_{ell}_{c}", 0.0, cfg.spec.a_max, obj=cfg.gamma_u
                    )
                    dn = m.add_var(
                        f"un_{i}_{ell}_{c}", 0.0, cfg.spec.a_max, obj=cfg.gamma_u
                    )
                    self.u_idx[i, ell, c] = (up, dn)

    def _dynamics(self):
        A = self.cfg.spec.a_mat()
        B = self.cfg.spec.b_mat()
        m = self.model
        for i in range(self.n_a):
            for ell in range(self.nbar):
                for r in range(4):
                    terms = [(self.x_idx[i, ell + 1, r], 1.0)]
                    terms += [
                        (self.x_idx[i, ell, c], -A[r, c])
                        for c in range(4)
                        if A[r, c] != 0.0
                    ]
                    for c in range(2):
                        if B[r, c] != 0.0:
                            up, dn = self.u_idx[i, ell, c]
                            terms += [(up, -B[r, c]), (dn, B[r, c])]
                    m.add_constr(f"dyn_{i}_{ell}_{r}", terms, "==", 0.0)

    # -- free space ----------------------------------------------------------

    def _avoid(self, prefix, piece, i, ell, group):
        point = [
            [(self.x_idx[i, ell, 0], 1.0)],
            [(self.x_idx[i, ell, 2], 1.0)],
        ]
        self.model.add_avoidance(
            prefix, piece.A, piece.b, point, margin=self.cfg.margin, group=group
        )

    def _free_space(self):
        for i in range(self.n_a):
            for ell in range(1, self.nbar + 1):
                for o, piece in enumerate(self.obstacle_pieces):
                    self._avoid(
                        f"obs_{i}_{o}_{ell}", piece, i, ell, f"g_obs_{i}_{o}_{ell}"
                    )
                piece = self.human_piece.translate(self.yh[ell])
                self._avoid(f"hum_{i}_{ell}", piece, i, ell, f"g_hum_{i}_{ell}")
            # pairwise robot separation on the relative position
            for j in range(i + 1, self.n_a):
                for ell in range(1, self.nbar + 1):
                    point = [
                        [(self.x_idx[i, ell, 0], 1.0), (self.x_idx[j, ell, 0], -1.0)],
                        [(self.x_idx[i, ell, 2], 1.0), (self.x_idx[j, ell, 2], -1.0)],
                    ]
                    self.model.add_avoidance(
                        f"sep_{i}_{j}_{ell}",
                        self.pair_piece.A,
                        self.pair_piece.b,
                        point,
                        margin=self.cfg.margin,
                        group=f"g_sep_{i}_{j}_{ell}",
                    )

    # -- targets ---------------------------------------------------------------

    def _targets(self):
        m, cfg, scene = self.model, self.cfg, self.scene
        reach = cfg.spec.v_max * cfg.spec.T
        polys = scene.target_polys()
        self.open_targets = [
            t
            for t in scene.targets
            if t.id not in self.visited and t.id not in self.pred.claimed
        ]
        for t in self.open_targets:
            box = polys[t.id]
            made = []
            for i in range(self.n_a):
                start = self.x0[i, (0, 2)]
                for ell in range(self.nbar + 1):
                    if ell > self.l_mis:
                        break
                    if _chebyshev_to_box(start, box) > reach * ell + 1e-9:
                        continue  # not reachable this early
                    if ell == 0:
                        if not box.contains(start):
                            continue
                        b = m.add_binary(f"tar_{i}_{t.id}_0", obj=-cfg.gamma_t, priority=2)
                    else:
                        b = m.add_binary(
                            f"tar_{i}_{t.id}_{ell}", obj=-cfg.gamma_t, priority=2
                        )
                        for f in range(len(box.b)):
                            terms = [
                                (self.x_idx[i, ell, 0], box.A[f, 0]),
                                (self.x_idx[i, ell, 2], box.A[f, 1]),
                            ]
                            m.add_implication(
                                f"tarf_{i}_{t.id}_{ell}_{f}",
                                b,
                                terms,
                                "<=",
                                float(box.b[f]),
                            )
                    self.tar_idx[i, t.id, ell] = b
                    made.append(b)
            if made:
                # exactly-one over (robot, step, or skip): the slack binary
                # turns the target's whole fate into a single disjunction the
                # solver can split in one branching instead of variable by
                # variable
                skip = m.add_binary(f"skip_{t.id}", priority=2)
                m.add_constr(
                    f"once_{t.id}",
                    [(b, 1.0) for b in made] + [(skip, 1.0)],
                    "==",
                    1.0,
                )
                m.add_choice(made + [skip])

    # -- connectivity ------------------------------------------------------------

    def _link_terms(self, i, j, ell):
        return [
            [(self.x_idx[i, ell, 0], 1.0), (self.x_idx[j, ell, 0], -1.0)],
            [(self.x_idx[i, ell, 2], 1.0), (self.x_idx[j, ell, 2], -1.0)],
        ]

    def _connectivity(self):
        m = self.model
        n = self.n_a
        human0 = self.yh[0]
        for ell in range(self.l_mis + 1):
            # robot-robot links
            for i in range(n):
                for j in range(i + 1, n):
                    b = m.add_binary(f"con_{i}_{j}_{ell}", priority=1)
                    self.con_idx[i, j, ell] = b
                    if ell == 0:
                        rel = self.x0[i, (0, 2)] - self.x0[j, (0, 2)]
                        val = 1.0 if self.conn.contains(rel) else 0.0
                        m.add_constr(f"confix_{i}_{j}_0", [(b, 1.0)], "==", val)
                    else:
                        dx, dy = self._link_terms(i, j, ell)
                        for f in range(len(self.conn.b)):
                            terms = [
                                (k, self.conn.A[f, 0] * c) for k, c in dx
                            ] + [(k, self.conn.A[f, 1] * c) for k, c in dy]
                            m.add_implication(
                                f"conf_{i}_{j}_{ell}_{f}",
                                b,
                                terms,
                                "<=",
                                float(self.conn.b[f]),
                            )
            # human links; the robust form implies membership one step early
            for i in range(n):
                b = m.add_binary(f"con_{i}_h_{ell}", priority=1)
                self.con_idx[i, n, ell] = b
                if ell == 0:
                    rel = self.x0[i, (0, 2)] - human0
                    val = 1.0 if self.conn.contains(rel) else 0.0
                    m.add_constr(f"conhfix_{i}_0", [(b, 1.0)], "==", val)
                else:
                    at = ell - 1 if self.cfg.robust else ell
                    region = self.conn_h
                    yh = self.yh[at]
                    for f in range(len(region.b)):
                        terms = [
                            (self.x_idx[i, at, 0], region.A[f, 0]),
                            (self.x_idx[i, at, 2], region.A[f, 1]),
                        ]
                        rhs = float(region.b[f] + region.A[f] @ yh)
                        m.add_implication(
                            f"conhf_{i}_{ell}_{f}", b, terms, "<=", rhs
                        )
            # degree condition per robot pair, plus the human anchor
            for i in range(n):
                for j in range(i + 1, n):
                    deg_terms = []
                    for p in range(n):
                        for q in range(p + 1, n):
                            if p in (i, j) or q in (i, j):
                                w = float((p in (i, j)) + (q in (i, j)))
                                deg_terms.append((self.con_idx[p, q, ell], w))
                    m.add_constr(
                        f"deg_{i}_{j}_{ell}", deg_terms, ">=", float(n)
                    )
            m.add_constr(
                f"anchor_{ell}",
                [(self.con_idx[i, n, ell], 1.0) for i in range(n)],
                ">=",
                1.0,
            )
            m.add_choice([self.con_idx[i, n, ell] for i in range(n)])

    # -- extraction -------------------------------------------------------------

    def extract(self, res: MilpResult) -> TeamPlan:
        x = res.x
        states = np.empty((self.n_a, self.nbar + 1, 4))
        inputs = np.zeros((self.n_a, self.nbar, 2))
        for (i, ell, c), j in self.x_idx.items():
            states[i, ell, c] = x[j]
        for (i, ell, c), (up, dn) in self.u_idx.items():
            inputs[i, ell, c] = x[up] - x[dn]
        b_tar = {
            (i, e, ell): 1
            for (i, e, ell), j in self.tar_idx.items()
            if x[j] > 0.5
        }
        for e, step in self.pred.claimed.items():
            if e not in self.visited and step <= self.nbar:
                b_tar[self.n_a, e, step] = 1
        b_con = {
            key: 1 for key, j in self.con_idx.items() if x[j] > 0.5
        }
        b_hor = tuple(
            1 if self.l_f is not None and ell >= self.l_f else 0
            for ell in range(self.nbar + 1)
        )
        return TeamPlan(
            status=res.status,
            horizon=self.nbar,
            states=states,
            inputs=inputs,
            b_tar=b_tar,
            b_con=b_con,
            b_hor=b_hor,
            objective=res.objective,
            nodes=res.nodes,
        )


def build_model(
    scene: Scene,
    robot_states,
    prediction: HumanPrediction,
    visited=(),
    cfg: PlannerConfig | None = None,
) -> _Build:
    """Assemble the team MILP; returns the build with its variable maps."""
    return _Build(scene, robot_states, prediction, visited, cfg or PlannerConfig())


def _fallback_plan(robot_states, spec: RobotSpec, status: str) -> TeamPlan:
    """Brake to zero velocity in one step; used when the solve fails."""
    x0 = np.asarray(robot_states, dtype=float)
    n = x0.shape[0]
    inputs = np.empty((n, 1, 2))
    states = np.empty((n, 2, 4))
    A, B = spec.a_mat(), spec.b_mat()
    for i in range(n):
        u = np.clip(-x0[i, (1, 3)] / spec.T, -spec.a_max, spec.a_max)
        inputs[i, 0] = u
        states[i, 0] = x0[i]
        states[i, 1] = A @ x0[i] + B @ u
    return TeamPlan(
        status=status,
        horizon=1,
        states=states,
        inputs=inputs,
        b_hor=(0, 0),
        fallback=True,
    )


def solve_build(build: _Build) -> TeamPlan:
    cfg = build.cfg
    res = build.model.solve(
        gap=cfg.gap,
        node_limit=cfg.node_limit,
        time_limit=cfg.time_limit,
        backend=cfg.backend,
    )
    if res.status == "INFEASIBLE" or res.x is None:
        log.warning("solve failed (%s); braking fallback engaged", res.status)
        return _fallback_plan(build.x0, cfg.spec, res.status)
    return build.extract(res)


def plan_step(
    k: int,
    scene: Scene,
    robot_states,
    human_position,
    policy,
    visited=(),
    cfg: PlannerConfig | None = None,
) -> tuple[np.ndarray, TeamPlan]:
    """Predict, build, solve; returns the first inputs and the full plan."""
    cfg = cfg or PlannerConfig()
    env = scene.grid_env()
    for tid in visited:
        env = env.with_collected(tid)
    pred = predict(k, human_position, policy, env, period=cfg.spec.T)
    build = _Build(scene, robot_states, pred, visited, cfg)
    plan = solve_build(build)
    if plan.horizon >= 1:
        first = plan.inputs[:, 0, :].copy()
    else:
        first = np.zeros((build.n_a, 2))
    return first, plan


def open_loop_plan(
    scene: Scene, policy, cfg: PlannerConfig | None = None
) -> TeamPlan:
    """Solve once from the scene's start configuration."""
    cfg = cfg or PlannerConfig()
    env = scene.grid_env()
    start = (np.asarray(scene.human_start, dtype=float) + 0.5) * scene.cell_size
    pred = predict(0, start, policy, env, period=cfg.spec.T)
    build = _Build(scene, np.asarray(scene.robot_starts, dtype=float), pred, (), cfg)
    return solve_build(build)
