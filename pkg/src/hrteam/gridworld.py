"""Grid MDP the human operator acts in.

Square grid of 1 m cells over the arena. The state the policy sees is five
stacked binary maps (position, uncollected type-A targets, uncollected type-B
targets, obstacles, terminal), flattened x-major. Transitions are
deterministic; all episode randomness comes from the policy and from
environment generation.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, replace

import numpy as np

NORTH, SOUTH, WEST, EAST, COLLECT = range(5)
ACTION_NAMES = ("north", "south", "west", "east", "collect")
ACTION_COUNT = 5
_MOVES = {NORTH: (0, 1), SOUTH: (0, -1), WEST: (-1, 0), EAST: (1, 0)}

FEATURE_PLANES = 4


@dataclass(frozen=True)
class RewardSpec:
    collect_a: float = 0.5
    collect_b: float = 1.0
    collision: float = -1.0
    move: float = -0.1
    fail: float = -20.0


@dataclass(frozen=True)
class Target:
    id: int
    kind: str  # "A" | "B"
    cell: tuple[int, int]
    collected: bool = False


@dataclass(frozen=True)
class GridEnv:
    n_c: int
    cell_size: float
    obstacles: frozenset[tuple[int, int]]
    terminal: tuple[int, int]
    targets: tuple[Target, ...]
    budget: int = 50
    rewards: RewardSpec = RewardSpec()

    def __post_init__(self):
        cells = [t.cell for t in self.targets] + [self.terminal] + list(self.obstacles)
        if len(set(cells)) != len(cells):
            raise ValueError("obstacle, terminal, and target cells must be disjoint")
        for c in cells:
            if not self.in_grid(c):
                raise ValueError(f"cell {c} outside the {self.n_c}x{self.n_c} grid")
        kinds = {t.kind for t in self.targets}
        if not kinds <= {"A", "B"}:
            raise ValueError("target kind must be 'A' or 'B'")

    def in_grid(self, cell: tuple[int, int]) -> bool:
        return 0 <= cell[0] < self.n_c and 0 <= cell[1] < self.n_c

    def target_at(self, cell: tuple[int, int]) -> Target | None:
        for t in self.targets:
            if t.cell == cell:
                return t
        return None

    def with_collected(self, target_id: int) -> "GridEnv":
        new = tuple(
            replace(t, collected=True) if t.id == target_id else t for t in self.targets
        )
        return replace(self, targets=new)

    def with_rewards(self, rewards: RewardSpec) -> "GridEnv":
        return replace(self, rewards=rewards)


@dataclass(frozen=True)
class GridState:
    cell: tuple[int, int]
    uncollected: frozenset[int]
    steps: int = 0
    done: bool = False

    def with_uncollected(self, uncollected: frozenset[int]) -> "GridState":
        return replace(self, uncollected=uncollected)


@functools.lru_cache(maxsize=64)
def _padded_static(env: GridEnv) -> np.ndarray:
    """Blocked and terminal maps on a (3n-2)^2 canvas, arena at offset n-1.

    The padding lets any agent-centered window be cut as a plain slice;
    everything beyond the arena reads as blocked.
    """
    n = env.n_c
    side = 3 * n - 2
    blocked = np.ones((side, side))
    blocked[n - 1 : 2 * n - 1, n - 1 : 2 * n - 1] = 0.0
    for cx, cy in env.obstacles:
        blocked[n - 1 + cx, n - 1 + cy] = 1.0
    ter = np.zeros((side, side))
    ter[n - 1 + env.terminal[0], n - 1 + env.terminal[1]] = 1.0
    return np.stack([blocked, ter])


def encode_state(env: GridEnv, cell: tuple[int, int], steps: int = 0) -> GridState:
    if not env.in_grid(cell) or cell in env.obstacles:
        raise ValueError(f"cannot place the human at {cell}")
    uncollected = frozenset(t.id for t in env.targets if not t.collected)
    return GridState(cell=cell, uncollected=uncollected, steps=steps, done=cell == env.terminal)


def feature_dim(n_c: int) -> int:
    return FEATURE_PLANES * (2 * n_c - 1) ** 2


def features(env: GridEnv, state: GridState) -> np.ndarray:
    """Egocentric encoding: [A targets, B targets, blocked, terminal] planes on
    a (2n_c-1)^2 window centered on the agent. Cells outside the arena read as
    blocked. Centering makes 'target underfoot' or 'wall one cell east' a fixed
    input index wherever the agent stands, which a plain dense net can exploit;
    absolute-position planes bury those cues in position-specific conjunctions.
    """
    n = env.n_c
    w = 2 * n - 1
    cx, cy = state.cell
    planes = np.zeros((FEATURE_PLANES, w, w))
    # world cell (x, y) lands at window index (x - cx + n - 1, y - cy + n - 1)
    ox, oy = n - 1 - cx, n - 1 - cy
    for t in env.targets:
        if t.id in state.uncollected:
            planes[0 if t.kind == "A" else 1][t.cell[0] + ox, t.cell[1] + oy] = 1.0
    planes[2:] = _padded_static(env)[:, cx : cx + w, cy : cy + w]
    return planes.reshape(-1)


def step(env: GridEnv, state: GridState, action: int) -> tuple[GridState, float, bool]:
    """Deterministic transition. Every action pays the movement cost; bumping a
    wall or obstacle adds the collision penalty and leaves the position fixed;
    collect claims an uncollected target on the current cell."""
    if state.done:
        raise ValueError("episode already finished")
    if not 0 <= action < ACTION_COUNT:
        raise ValueError(f"unknown action {action}")
    r = env.rewards
    reward = r.move
    cell = state.cell
    uncollected = state.uncollected
    if action == COLLECT:
        tgt = env.target_at(cell)
        if tgt is not None and tgt.id in uncollected:
            reward += r.collect_a if tgt.kind == "A" else r.collect_b
            uncollected = uncollected - {tgt.id}
    else:
        dx, dy = _MOVES[action]
        nxt = (cell[0] + dx, cell[1] + dy)
        if env.in_grid(nxt) and nxt not in env.obstacles:
            cell = nxt
        else:
            reward += r.collision
    steps = state.steps + 1
    done = cell == env.terminal
    if not done and steps >= env.budget:
        reward += r.fail
        done = True
    return GridState(cell=cell, uncollected=uncollected, steps=steps, done=done), reward, done


# -- coordinate bridge -------------------------------------------------------


def cell_to_cartesian(env: GridEnv, cell: tuple[int, int]) -> np.ndarray:
    if not env.in_grid(cell):
        raise ValueError(f"cell {cell} outside grid")
    return (np.asarray(cell, dtype=float) + 0.5) * env.cell_size


def cartesian_to_cell(env: GridEnv, pos) -> tuple[int, int]:
    p = np.asarray(pos, dtype=float) / env.cell_size
    side = env.n_c
    if np.any(p < 0) or np.any(p > side):
        raise ValueError(f"position {pos} outside the arena")
    cx, cy = (int(min(v, side - 1)) for v in np.floor(p))
    return (cx, cy)


# -- environment generation --------------------------------------------------

# Fixed layout shared by every generated environment: four obstacles around the
# center block, terminal in the far corner.
DEFAULT_OBSTACLES = frozenset({(2, 2), (4, 2), (2, 4), (4, 4)})
DEFAULT_TERMINAL = (6, 6)
DEFAULT_N_C = 7
MAX_TARGETS = 4


def random_env(
    rng: np.random.Generator,
    n_c: int = DEFAULT_N_C,
    obstacles: frozenset[tuple[int, int]] = DEFAULT_OBSTACLES,
    terminal: tuple[int, int] = DEFAULT_TERMINAL,
    budget: int = 50,
) -> tuple[GridEnv, GridState]:
    """Sample a mission: target count n_t ~ U{0..4}, type split n_B ~ U{0..n_t},
    cells uniform over free cells, start uniform over non-target free cells."""
    n_t = int(rng.integers(0, MAX_TARGETS + 1))
    n_b = int(rng.integers(0, n_t + 1))
    free = [
        (x, y)
        for x in range(n_c)
        for y in range(n_c)
        if (x, y) not in obstacles and (x, y) != terminal
    ]
    picks = rng.choice(len(free), size=n_t + 1, replace=False)
    target_cells = [free[i] for i in picks[:n_t]]
    start = free[picks[n_t]]
    targets = tuple(
        Target(id=i, kind="A" if i < n_t - n_b else "B", cell=c)
        for i, c in enumerate(target_cells)
    )
    env = GridEnv(
        n_c=n_c,
        cell_size=1.0,
        obstacles=obstacles,
        terminal=terminal,
        targets=targets,
        budget=budget,
    )
    return env, encode_state(env, start)
