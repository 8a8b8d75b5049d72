"""Command line entry points for training, simulation, and the live service.

Every command is seeded explicitly; nothing reads the wall clock. Paths to
policies default to the packaged artifacts so the simulation and service
commands work out of the box.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .airl import AirlConfig, airl_train
from .nets import Policy
from .persist import (
    load_demos,
    load_net,
    parse_config,
    save_demos,
    save_net,
    save_results_csv,
)
from .planner import PlannerConfig, open_loop_plan
from .ppo import PpoConfig, evaluate_policy, generate_demos, train_ppo
from .scenes import load_scene
from .simulate import MODES, SimConfig, monte_carlo

ASSET_DIR = Path(__file__).parent / "assets"
DEFAULT_ACTOR = ASSET_DIR / "pi_star.json"
DEFAULT_PREDICTOR = ASSET_DIR / "pi_hat.json"


def _load_policy(path) -> Policy:
    return Policy(load_net(path))


def _planner_config(args) -> PlannerConfig:
    return PlannerConfig(
        horizon_max=args.horizon_max,
        backend=args.backend,
        time_limit=args.time_limit,
        robust=not args.no_robust,
    )


def _add_planner_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--horizon-max", type=int, default=15, help="plan length cap")
    p.add_argument("--backend", choices=("builtin", "scipy"), default="builtin")
    p.add_argument("--time-limit", type=float, default=None, help="seconds per solve")
    p.add_argument("--no-robust", action="store_true",
                   help="disable the velocity-inflated human margins")


def cmd_train_human(args) -> int:
    cfg = PpoConfig.from_mapping(parse_config(args.config))
    rng = np.random.default_rng(args.seed)
    policy = train_ppo(cfg, rng=rng, progress_every=args.progress)
    save_net(args.out, policy.net, meta={"kind": "policy", "seed": args.seed})
    print(f"trained human policy ({cfg.steps} steps) -> {args.out}")
    return 0


def cmd_gen_demos(args) -> int:
    policy = _load_policy(args.policy)
    rng = np.random.default_rng(args.seed)
    demos = generate_demos(policy, args.count, rng)
    save_demos(args.out, demos)
    print(f"wrote {demos.count} demonstrations -> {args.out}")
    return 0


def cmd_airl_train(args) -> int:
    demos = load_demos(args.demos)
    cfg = AirlConfig.from_mapping(parse_config(args.config))
    rng = np.random.default_rng(args.seed)
    reward_net, policy = airl_train(demos, cfg, rng=rng, progress_every=args.progress)
    save_net(args.out_policy, policy.net, meta={"kind": "policy", "seed": args.seed})
    save_net(args.out_reward, reward_net, meta={"kind": "reward", "seed": args.seed})
    print(f"recovered policy -> {args.out_policy}, reward -> {args.out_reward}")
    return 0


def cmd_eval_policy(args) -> int:
    policy = _load_policy(args.policy)
    rng = np.random.default_rng(args.seed)
    stats = evaluate_policy(policy, args.n, rng, stochastic=not args.deterministic)
    rows = []
    for name, stat in stats.rows():
        print(f"{name:>18}: {stat.mean:8.3f}  [{stat.lo:.3f}, {stat.hi:.3f}]")
        rows.append({
            "mode": "eval", "scene": "random-grid", "metric": name,
            "mean": stat.mean, "ci_lo": stat.lo, "ci_hi": stat.hi, "n": stats.n,
        })
    if args.out:
        save_results_csv(args.out, rows)
        print(f"wrote {args.out}")
    return 0


def cmd_simulate(args) -> int:
    scene = load_scene(args.scene)
    actor = _load_policy(args.actor)
    predictor = None
    if args.mode != "no_support":
        predictor = _load_policy(args.predictor)
    cfg = SimConfig(
        planner=_planner_config(args),
        subsamples=args.subsamples,
        workers=args.workers,
    )
    stats = monte_carlo(
        args.mode, scene, actor, predictor, args.n, args.seed,
        cfg=cfg, traces_dir=args.traces,
    )
    rows = []
    for mode, scene_name, metric, mean, lo, hi, n in stats.rows():
        print(f"{metric:>15}: {mean:8.3f}  [{lo:.3f}, {hi:.3f}]  (n={n})")
        rows.append({
            "mode": mode, "scene": scene_name, "metric": metric,
            "mean": mean, "ci_lo": lo, "ci_hi": hi, "n": n,
        })
    save_results_csv(args.out, rows)
    print(f"wrote {args.out}")
    return 0


def cmd_plan_once(args) -> int:
    scene = load_scene(args.scene)
    policy = _load_policy(args.policy)
    plan = open_loop_plan(scene, policy, cfg=_planner_config(args))
    print(json.dumps(plan.to_jsonable(), indent=2, sort_keys=True))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    cfg = ServiceConfig(
        predictor_path=str(args.predictor),
        sim=SimConfig(planner=_planner_config(args)),
        busy=args.busy,
    )
    app = create_app(cfg)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hrteam",
        description="Human-robot teaming: train the models, simulate missions, serve live sessions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-human", help="train the synthetic human on ground-truth rewards")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--progress", type=int, default=50, help="log every N updates; 0 silences")
    p.set_defaults(func=cmd_train_human)

    p = sub.add_parser("gen-demos", help="sample demonstration missions from a policy")
    p.add_argument("--policy", required=True)
    p.add_argument("--count", type=int, default=8000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_demos)

    p = sub.add_parser("airl-train", help="recover reward and policy from demonstrations")
    p.add_argument("--demos", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--progress", type=int, default=50)
    p.add_argument("--out-policy", required=True)
    p.add_argument("--out-reward", required=True)
    p.set_defaults(func=cmd_airl_train)

    p = sub.add_parser("eval-policy", help="mission statistics for a policy on random grids")
    p.add_argument("--policy", required=True)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--deterministic", action="store_true", help="argmax actions")
    p.add_argument("--out", default=None, help="optional results CSV")
    p.set_defaults(func=cmd_eval_policy)

    p = sub.add_parser("simulate", help="Monte Carlo closed-loop missions")
    p.add_argument("--mode", choices=MODES, required=True)
    p.add_argument("--scene", required=True, help="scene JSON path or builtin name")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="results CSV")
    p.add_argument("--traces", default=None, help="directory for per-episode traces")
    p.add_argument("--actor", default=DEFAULT_ACTOR, help="human policy file")
    p.add_argument("--predictor", default=DEFAULT_PREDICTOR, help="planner's human model")
    p.add_argument("--subsamples", type=int, default=10)
    p.add_argument("--workers", type=int, default=1)
    _add_planner_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("plan-once", help="solve one team plan from the scene start")
    p.add_argument("--scene", required=True)
    p.add_argument("--policy", default=DEFAULT_PREDICTOR)
    _add_planner_flags(p)
    p.set_defaults(func=cmd_plan_once)

    p = sub.add_parser("serve", help="run the live-session HTTP service")
    p.add_argument("--predictor", default=DEFAULT_PREDICTOR)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=int(os.environ.get("HRTEAM_PORT", "8000")))
    p.add_argument("--busy", choices=("queue", "reject"), default="queue")
    _add_planner_flags(p)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
