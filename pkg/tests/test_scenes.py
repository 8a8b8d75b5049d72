"""Scene construction and JSON round-trips."""

import json

import numpy as np
import pytest

from hrteam.scenes import (
    FORMAT_VERSION,
    env1,
    env2,
    load_scene,
    save_scene,
    scene_from_jsonable,
)


def test_builtin_scenes_are_consistent():
    for scene in (env1(), env2()):
        env = scene.grid_env()
        assert env.n_c == 7
        assert len(scene.targets) == 4
        assert {t.kind for t in scene.targets} == {"A", "B"}
        assert scene.human_start not in env.obstacles
        # start states sit inside the arena with zero velocity
        for rx, vx, ry, vy in scene.robot_starts:
            assert scene.arena().contains((rx, ry))
            assert vx == vy == 0.0


def test_cell_box_geometry():
    scene = env1()
    box = scene.cell_box((2, 3))
    assert box.contains((2.5, 3.5))
    assert box.contains((2.9, 3.9))
    assert not box.contains((3.1, 3.5))


def test_connectivity_octagon_apothem():
    # radius-4 octagon: apothem 4*cos(pi/8) ~ 3.6955
    c = env1().connectivity_poly()
    assert c.contains((0.0, 3.695))
    assert not c.contains((0.0, 3.696))


def test_scene_round_trip(tmp_path):
    path = tmp_path / "scene.json"
    save_scene(path, env2())
    loaded = load_scene(path)
    ref = env2()
    assert loaded.name == ref.name
    assert loaded.obstacle_cells == ref.obstacle_cells
    assert loaded.targets == ref.targets
    assert loaded.robot_starts == ref.robot_starts
    assert np.allclose(loaded.human_body.vertices, ref.human_body.vertices)
    assert loaded.grid_env() == ref.grid_env()


def test_load_scene_by_name_and_missing_path():
    assert load_scene("env1").name == "env1"
    with pytest.raises(FileNotFoundError):
        load_scene("no_such_scene.json")


def test_rejects_future_version(tmp_path):
    doc = env1().to_jsonable()
    doc["version"] = FORMAT_VERSION + 1
    with pytest.raises(ValueError, match="version"):
        scene_from_jsonable(doc)
    doc["format"] = "something-else"
    with pytest.raises(ValueError, match="not a"):
        scene_from_jsonable(doc)


def test_scene_json_is_plain_data(tmp_path):
    path = tmp_path / "s.json"
    save_scene(path, env1())
    doc = json.loads(path.read_text())
    assert doc["arena"] == [[0.0, 0.0], [7.0, 0.0], [7.0, 7.0], [0.0, 7.0]]
    assert all(len(o["vertices"]) == 4 for o in doc["obstacles"])
