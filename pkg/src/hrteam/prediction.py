"""Most-likely human rollout and its constant-velocity trajectory.

The planner needs the human's future positions in meters. We roll the
recovered policy forward greedily (argmax action, deterministic dynamics)
until the terminal cell, convert the visited cell centers to a waypoint
polyline, and sample it at the planning period. Collect actions repeat the
current waypoint so one grid action always costs one sample period.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .gridworld import (
    COLLECT,
    GridEnv,
    GridState,
    cartesian_to_cell,
    cell_to_cartesian,
    encode_state,
    features,
    step,
)

log = logging.getLogger(__name__)

# Horizon cap per prediction; longer rollouts are cut and flagged.
HORIZON_MAX = 25
# Human motion model: meters per second and seconds per planning step.
HUMAN_SPEED = 1.0
SAMPLE_PERIOD = 1.0


@dataclass(frozen=True, eq=False)
class HumanPrediction:
    """One prediction: waypoints from the rollout, positions sampled in time.

    ``positions`` has ``horizon + 1`` rows; ``terminal_step`` is the sample
    index where the human enters the terminal cell, or None when that does
    not happen within the horizon. ``claimed`` maps target ids the rollout
    collects to their sample step (which may exceed ``horizon`` when the
    rollout is longer than the cap). ``truncated`` means the rollout itself
    ended (step cap or move budget) before reaching the terminal cell.
    """

    waypoints: tuple[tuple[float, float], ...]
    positions: np.ndarray
    actions: tuple[int, ...]
    claimed: dict[int, int]
    terminal_step: int | None
    truncated: bool

    @property
    def horizon(self) -> int:
        return len(self.positions) - 1

    def to_jsonable(self) -> dict:
        return {
            "waypoints": [list(w) for w in self.waypoints],
            "positions": self.positions.tolist(),
            "actions": list(self.actions),
            "claimed": {str(t): s for t, s in sorted(self.claimed.items())},
            "terminal_step": self.terminal_step,
            "truncated": self.truncated,
        }


def most_likely_rollout(
    env: GridEnv, state: GridState, policy, max_iters: int | None = None
) -> tuple[list[np.ndarray], list[int], dict[int, int], bool]:
    """Greedy policy propagation from ``state`` until the terminal cell.

    Returns (waypoints, actions, claimed target id -> waypoint index,
    reached terminal). The dynamics are deterministic, so the most likely
    next state is just the transition; argmax ties break toward the lowest
    action index, making the rollout unique. ``max_iters`` guards against
    policies that cycle (default 4 * n_c**2).
    """
    if max_iters is None:
        max_iters = 4 * env.n_c**2
    waypoints = [cell_to_cartesian(env, state.cell)]
    actions: list[int] = []
    claimed: dict[int, int] = {}
    reached = state.cell == env.terminal
    for _ in range(max_iters):
        if state.done or reached:
            break
        a = int(policy.argmax(features(env, state)))
        if a == COLLECT:
            tgt = env.target_at(state.cell)
            if tgt is not None and tgt.id in state.uncollected:
                claimed[tgt.id] = len(actions) + 1
        state, _, _ = step(env, state, a)
        actions.append(a)
        waypoints.append(cell_to_cartesian(env, state.cell))
        reached = state.cell == env.terminal
    return waypoints, actions, claimed, reached


def _segment_times(waypoints, v: float, period: float) -> np.ndarray:
    """Cumulative traversal time per waypoint.

    Distinct waypoints are covered at speed ``v``; a repeated waypoint
    (collect) holds the position for one full period.
    """
    times = [0.0]
    for a, b in zip(waypoints[:-1], waypoints[1:]):
        seg = float(np.linalg.norm(np.asarray(b, float) - np.asarray(a, float)))
        times.append(times[-1] + (seg / v if seg > 1e-12 else period))
    return np.asarray(times)


def get_traj(waypoints, v: float, period: float, horizon: int) -> np.ndarray:
    """Sample the waypoint polyline every ``period`` seconds at speed ``v``.

    Returns ``horizon + 1`` positions; once the polyline is exhausted the
    last waypoint is held.
    """
    if len(waypoints) == 0:
        raise ValueError("need at least one waypoint")
    if v <= 0 or period <= 0:
        raise ValueError("speed and period must be positive")
    pts = np.asarray(waypoints, dtype=float).reshape(len(waypoints), 2)
    times = _segment_times(pts, v, period)
    out = np.empty((horizon + 1, 2))
    for ell in range(horizon + 1):
        t = ell * period
        if t >= times[-1]:
            out[ell] = pts[-1]
            continue
        j = int(np.searchsorted(times, t, side="right")) - 1
        span = times[j + 1] - times[j]
        frac = (t - times[j]) / span
        out[ell] = pts[j] + frac * (pts[j + 1] - pts[j])
    return out


def predict(
    k: int,
    position,
    policy,
    env: GridEnv,
    v: float = HUMAN_SPEED,
    period: float = SAMPLE_PERIOD,
    horizon_max: int = HORIZON_MAX,
) -> HumanPrediction:
    """Predict the human trajectory from a Cartesian measurement at step ``k``.

    The measurement is snapped to its grid cell (nearest free cell if it
    falls inside an obstacle), rolled out with the policy, and sampled as a
    constant-velocity trajectory. Pure: identical inputs give identical
    predictions.
    """
    cell = cartesian_to_cell(env, position)
    if cell in env.obstacles:
        free = (c for c in np.ndindex(env.n_c, env.n_c) if c not in env.obstacles)
        p = np.asarray(position, dtype=float)
        cell = min(free, key=lambda c: (np.linalg.norm(cell_to_cartesian(env, c) - p), c))
        log.warning("step %d: measurement %s inside an obstacle, snapped to %s", k, position, cell)
    state = encode_state(env, cell)
    waypoints, actions, claimed_wp, reached = most_likely_rollout(env, state, policy)
    times = _segment_times(waypoints, v, period)
    needed = math.ceil(times[-1] / period - 1e-9)
    nbar = min(needed, horizon_max)
    positions = get_traj(waypoints, v, period, nbar)
    claimed = {
        tid: math.ceil(times[wp] / period - 1e-9) for tid, wp in claimed_wp.items()
    }
    terminal_step = needed if reached and needed <= horizon_max else None
    return HumanPrediction(
        waypoints=tuple((float(w[0]), float(w[1])) for w in waypoints),
        positions=positions,
        actions=tuple(actions),
        claimed=claimed,
        terminal_step=terminal_step,
        truncated=not reached,
    )
