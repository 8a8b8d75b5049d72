"""On-disk formats: network files, demonstration sets, result tables, config.

Everything is text (JSON, JSON-lines, CSV, key=value) so experiment artifacts
stay auditable. Loaders fail loudly with the offending path and line.
"""

import csv
import json
from pathlib import Path

import numpy as np

from .gridworld import step as grid_step
from .nets import Mlp
from .ppo import DemoDataset, GridTask, Trajectory


def save_net(path, net: Mlp, meta: dict | None = None) -> None:
    Path(path).write_text(json.dumps(net.to_dict(meta)) + "\n")


def load_net(path) -> Mlp:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"network file not found: {p}")
    return Mlp.from_dict(json.loads(p.read_text()))


def save_demos(path, demos: DemoDataset, task: GridTask | None = None) -> None:
    """One JSON line per trajectory: env seed plus (cell, action, reward) steps.

    The cells and rewards are derivable from the seed and actions; writing
    them out makes the files greppable and lets loaders cross-check replays.
    """
    task = task or GridTask()
    with open(path, "w") as fh:
        for traj in demos.trajectories:
            env, state = task.sample(np.random.default_rng(traj.env_seed))
            steps = []
            for action in traj.actions:
                cell = list(state.cell)
                state, reward, _ = grid_step(env, state, action)
                steps.append([cell, action, reward])
            fh.write(
                json.dumps(
                    {
                        "env_seed": traj.env_seed,
                        "steps": steps,
                        "reached_terminal": traj.reached_terminal,
                    }
                )
                + "\n"
            )


def load_demos(path) -> DemoDataset:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"demo file not found: {p}")
    trajectories = []
    with open(p) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                traj = Trajectory(
                    env_seed=int(rec["env_seed"]),
                    actions=[int(s[1]) for s in rec["steps"]],
                    reached_terminal=bool(rec["reached_terminal"]),
                )
            except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
                raise ValueError(f"{p}:{lineno}: bad demo record: {exc}") from exc
            trajectories.append(traj)
    return DemoDataset(trajectories)


RESULT_COLUMNS = ("mode", "scene", "metric", "mean", "ci_lo", "ci_hi", "n")


def save_results_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] for k in RESULT_COLUMNS})


def load_results_csv(path) -> list[dict]:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"results file not found: {p}")
    rows = []
    with open(p, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
            raise ValueError(f"{p}: unexpected columns {reader.fieldnames}")
        for rec in reader:
            rows.append(
                {
                    "mode": rec["mode"],
                    "scene": rec["scene"],
                    "metric": rec["metric"],
                    "mean": float(rec["mean"]),
                    "ci_lo": float(rec["ci_lo"]),
                    "ci_hi": float(rec["ci_hi"]),
                    "n": int(rec["n"]),
                }
            )
    return rows


def parse_config(path) -> dict[str, str]:
    """Read a `key = value` text file; # starts a comment, blanks ignored."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    out: dict[str, str] = {}
    for lineno, raw in enumerate(p.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{p}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValueError(f"{p}:{lineno}: empty key")
        if key in out:
            raise ValueError(f"{p}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out
