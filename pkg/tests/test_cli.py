import json

import numpy as np
import pytest

from hrteam.cli import main
from hrteam.gridworld import feature_dim
from hrteam.nets import Mlp, Policy
from hrteam.persist import load_demos, load_net, load_results_csv, save_net

PPO_TINY = """
gamma = 0.99
eps_clip = 0.2
epochs = 1
rollout = 128
minibatches = 2
steps = 256
gae_lambda = 0.95
value_coef = 0.5
entropy_coef = 0.01
lr = 0.001
"""

AIRL_TINY = """
disc_lr = 0.001
gen_lr = 0.001
disc_batch = 64
gen_batch = 128
steps = 256
eps_clip = 0.2
gamma = 0.99
ppo_epochs = 1
gae_lambda = 0.95
value_coef = 0.5
entropy_coef = 0.01
minibatches = 2
"""


def save_zero_policy(path):
    net = Mlp.init([feature_dim(7), 8, 5], np.random.default_rng(0), out_scale=0.0)
    save_net(path, net)
    return path


def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as info:
        main(["simulate", "--help"])
    assert info.value.code == 0
    assert "--mode" in capsys.readouterr().out


def test_usage_errors_exit_two(capsys):
    with pytest.raises(SystemExit) as info:
        main(["simulate", "--bogus"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main(["not-a-command"])
    assert info.value.code == 2


def test_missing_files_exit_one_and_name_the_path(tmp_path, capsys):
    rc = main([
        "simulate", "--mode", "no_support", "--scene", "nowhere.json",
        "--n", "1", "--out", str(tmp_path / "r.csv"),
    ])
    assert rc == 1
    assert "nowhere.json" in capsys.readouterr().err

    rc = main(["eval-policy", "--policy", str(tmp_path / "ghost.json"), "--n", "1"])
    assert rc == 1
    assert "ghost.json" in capsys.readouterr().err


def test_plan_once_prints_plan_json(tmp_path, capsys):
    policy = save_zero_policy(tmp_path / "pol.json")
    rc = main([
        "plan-once", "--scene", "env1", "--policy", str(policy),
        "--horizon-max", "2",
    ])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["status"] in ("OPTIMAL", "LIMIT", "INFEASIBLE")
    assert doc["horizon"] == 2
    assert len(doc["b_hor"]) == 3


def test_gen_demos_and_eval(tmp_path, capsys):
    policy = save_zero_policy(tmp_path / "pol.json")
    demos = tmp_path / "demos.jsonl"
    rc = main(["gen-demos", "--policy", str(policy), "--count", "3",
               "--seed", "1", "--out", str(demos)])
    assert rc == 0
    assert load_demos(demos).count == 3

    out = tmp_path / "eval.csv"
    rc = main(["eval-policy", "--policy", str(policy), "--n", "2",
               "--seed", "0", "--out", str(out)])
    assert rc == 0
    rows = load_results_csv(out)
    assert {r["metric"] for r in rows} >= {"length", "terminal_rate"}


def test_simulate_cli_is_deterministic(tmp_path):
    policy = save_zero_policy(tmp_path / "pol.json")
    outs = []
    for name in ("a.csv", "b.csv"):
        out = tmp_path / name
        rc = main([
            "simulate", "--mode", "no_support", "--scene", "env1",
            "--n", "2", "--seed", "5", "--out", str(out),
            "--actor", str(policy),
        ])
        assert rc == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    rows = load_results_csv(tmp_path / "a.csv")
    assert {r["mode"] for r in rows} == {"no_support"}
    assert {r["scene"] for r in rows} == {"env1"}


def test_training_pipeline_end_to_end(tmp_path):
    # deliberately tiny budgets: exercises config parsing and artifact I/O
    ppo_cfg = tmp_path / "ppo.cfg"
    ppo_cfg.write_text(PPO_TINY)
    pol_path = tmp_path / "pistar.json"
    rc = main(["train-human", "--config", str(ppo_cfg), "--out", str(pol_path),
               "--seed", "0", "--progress", "0"])
    assert rc == 0
    net = load_net(pol_path)
    assert Policy(net).action_count == 5

    demos = tmp_path / "demos.jsonl"
    assert main(["gen-demos", "--policy", str(pol_path), "--count", "4",
                 "--seed", "2", "--out", str(demos)]) == 0

    airl_cfg = tmp_path / "airl.cfg"
    airl_cfg.write_text(AIRL_TINY)
    pihat = tmp_path / "pihat.json"
    reward = tmp_path / "reward.json"
    rc = main(["airl-train", "--demos", str(demos), "--config", str(airl_cfg),
               "--seed", "0", "--progress", "0",
               "--out-policy", str(pihat), "--out-reward", str(reward)])
    assert rc == 0
    assert load_net(pihat).to_dict()["sizes"][-1] == 5
    assert load_net(reward).to_dict()["sizes"][-1] == 1


def test_bad_config_exits_one(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("gamma 0.9\n")
    rc = main(["train-human", "--config", str(cfg), "--out", str(tmp_path / "x.json")])
    assert rc == 1
    assert "key = value" in capsys.readouterr().err
