"""Arena descriptions shared by the grid layer and the continuous planner.

A scene states the world once, in meters: the arena polytope, grid-aligned
obstacle and target cells, body shapes, and start states. The grid side
derives cell annotations from it; the planner derives polytopes. Scenes
serialize to a versioned JSON document with every polytope as a vertex list.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Polytope2, regular_octagon
from .gridworld import GridEnv, Target

FORMAT_NAME = "hrteam-scene"
FORMAT_VERSION = 1

# Paper-scale bodies: squares for robots, a slightly rectangular human.
ROBOT_HALF = (0.25, 0.25)
HUMAN_HALF = (0.205, 0.145)
CONNECTIVITY_RADIUS = 4.0


@dataclass(frozen=True)
class Scene:
    name: str
    n_c: int
    cell_size: float
    obstacle_cells: tuple[tuple[int, int], ...]
    terminal_cell: tuple[int, int]
    targets: tuple[Target, ...]
    human_start: tuple[int, int]
    robot_starts: tuple[tuple[float, float, float, float], ...]
    robot_body: Polytope2
    human_body: Polytope2
    connectivity_radius: float = CONNECTIVITY_RADIUS
    budget: int = 50

    @property
    def side(self) -> float:
        return self.n_c * self.cell_size

    def arena(self) -> Polytope2:
        s = self.side
        return Polytope2.from_vertices([(0, 0), (s, 0), (s, s), (0, s)])

    def cell_box(self, cell: tuple[int, int]) -> Polytope2:
        c = (np.asarray(cell, dtype=float) + 0.5) * self.cell_size
        h = self.cell_size / 2
        return Polytope2.box(c, (h, h))

    def obstacle_polys(self) -> list[Polytope2]:
        return [self.cell_box(c) for c in self.obstacle_cells]

    def terminal_poly(self) -> Polytope2:
        return self.cell_box(self.terminal_cell)

    def target_polys(self) -> dict[int, Polytope2]:
        return {t.id: self.cell_box(t.cell) for t in self.targets}

    def connectivity_poly(self) -> Polytope2:
        return regular_octagon(self.connectivity_radius)

    def grid_env(self) -> GridEnv:
        return GridEnv(
            n_c=self.n_c,
            cell_size=self.cell_size,
            obstacles=frozenset(self.obstacle_cells),
            terminal=self.terminal_cell,
            targets=self.targets,
            budget=self.budget,
        )

    def to_jsonable(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "name": self.name,
            "n_c": self.n_c,
            "cell_size": self.cell_size,
            "arena": self.arena().vertices.tolist(),
            "obstacles": [
                {"cell": list(c), "vertices": self.cell_box(c).vertices.tolist()}
                for c in self.obstacle_cells
            ],
            "terminal": {
                "cell": list(self.terminal_cell),
                "vertices": self.terminal_poly().vertices.tolist(),
            },
            "targets": [
                {
                    "id": t.id,
                    "kind": t.kind,
                    "cell": list(t.cell),
                    "vertices": self.cell_box(t.cell).vertices.tolist(),
                }
                for t in self.targets
            ],
            "human": {
                "start_cell": list(self.human_start),
                "body": self.human_body.vertices.tolist(),
            },
            "robots": {
                "starts": [list(s) for s in self.robot_starts],
                "body": self.robot_body.vertices.tolist(),
            },
            "connectivity_radius": self.connectivity_radius,
            "budget": self.budget,
        }


def _body_from_vertices(vertices) -> Polytope2:
    return Polytope2.from_vertices(vertices)


def scene_from_jsonable(d: dict) -> Scene:
    if d.get("format") != FORMAT_NAME:
        raise ValueError(f"not a {FORMAT_NAME} document")
    if d.get("version") != FORMAT_VERSION:
        raise ValueError(
            f"unsupported scene version {d.get('version')!r}; "
            f"this build reads version {FORMAT_VERSION}"
        )
    targets = tuple(
        Target(id=t["id"], kind=t["kind"], cell=tuple(t["cell"]))
        for t in d["targets"]
    )
    return Scene(
        name=d["name"],
        n_c=d["n_c"],
        cell_size=d["cell_size"],
        obstacle_cells=tuple(tuple(o["cell"]) for o in d["obstacles"]),
        terminal_cell=tuple(d["terminal"]["cell"]),
        targets=targets,
        human_start=tuple(d["human"]["start_cell"]),
        robot_starts=tuple(tuple(s) for s in d["robots"]["starts"]),
        robot_body=_body_from_vertices(d["robots"]["body"]),
        human_body=_body_from_vertices(d["human"]["body"]),
        connectivity_radius=d["connectivity_radius"],
        budget=d["budget"],
    )


def save_scene(path, scene: Scene) -> None:
    Path(path).write_text(json.dumps(scene.to_jsonable(), indent=1) + "\n")


def load_scene(path_or_name) -> Scene:
    """Load a scene file, or one of the named built-ins ("env1", "env2")."""
    key = str(path_or_name)
    if key in BUILTIN_SCENES:
        return BUILTIN_SCENES[key]()
    p = Path(path_or_name)
    if not p.exists():
        raise FileNotFoundError(f"scene file not found: {p}")
    return scene_from_jsonable(json.loads(p.read_text()))


# ---------------------------------------------------------------------------
# Built-in layouts. The obstacle block, terminal corner, and start corner are
# shared; the two layouts differ in how the four targets are spread.


def _base(name: str, targets: tuple[Target, ...]) -> Scene:
    return Scene(
        name=name,
        n_c=7,
        cell_size=1.0,
        obstacle_cells=((2, 2), (4, 2), (2, 4), (4, 4)),
        terminal_cell=(6, 6),
        targets=targets,
        # robots rest outside the human's inflated safety region at the start
        human_start=(0, 0),
        robot_starts=((2.5, 0.0, 0.5, 0.0), (0.5, 0.0, 2.5, 0.0)),
        robot_body=Polytope2.box((0, 0), ROBOT_HALF),
        human_body=Polytope2.box((0, 0), HUMAN_HALF),
    )


def env1() -> Scene:
    """Sparse layout: the B targets sit near the start-terminal diagonal,
    the A targets in the far corners."""
    return _base(
        "env1",
        (
            Target(id=1, kind="B", cell=(1, 1)),
            Target(id=2, kind="B", cell=(3, 3)),
            Target(id=3, kind="A", cell=(5, 1)),
            Target(id=4, kind="A", cell=(1, 5)),
        ),
    )


def env2() -> Scene:
    """Grouped layout: all four targets in one 2x2 block left of center."""
    return _base(
        "env2",
        (
            Target(id=1, kind="B", cell=(1, 3)),
            Target(id=2, kind="B", cell=(1, 4)),
            Target(id=3, kind="A", cell=(0, 3)),
            Target(id=4, kind="A", cell=(0, 4)),
        ),
    )


BUILTIN_SCENES = {"env1": env1, "env2": env2}
