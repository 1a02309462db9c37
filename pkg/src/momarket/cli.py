"""Command-line entry points: train, eval, sweep, calibrate, gen-scenario."""

from __future__ import annotations

import argparse
import json
import sys

import torch

from . import choice, harness, scenario as scen
from .learner import TrainConfig
from .policies import ControlMode


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--mode", choices=["reb", "price", "joint"], default="joint")
    p.add_argument("--operators", type=int, choices=[1, 2], default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fleet-split", default=None, help="ratio a:b of the total fleet")
    p.add_argument("--no-competitor-prices", action="store_true",
                   help="hide competitor prices from the observations")
    p.add_argument("--out", default=None, help="output directory")


def _base_config(args, policies=None) -> harness.ExperimentConfig:
    return harness.ExperimentConfig(
        scenario_path=args.scenario,
        mode=ControlMode.parse(args.mode),
        operators=args.operators,
        policies=tuple(policies) if policies else ("nc",) * args.operators,
        eval_runs=getattr(args, "runs", 10),
        seed=args.seed,
        fleet_split=harness.parse_split(args.fleet_split) if args.fleet_split else None,
        observe_competitor_prices=not args.no_competitor_prices,
        stochastic_eval=getattr(args, "stochastic_eval", False),
        out_dir=args.out,
        train=TrainConfig(
            episodes=getattr(args, "episodes", None) or TrainConfig.episodes,
            actor_lr=getattr(args, "actor_lr", None) or TrainConfig.actor_lr,
            critic_lr=getattr(args, "critic_lr", None) or TrainConfig.critic_lr,
            reward_scale=getattr(args, "reward_scale", None) or TrainConfig.reward_scale,
            hidden=getattr(args, "hidden", None) or TrainConfig.hidden,
        ),
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="momarket",
        description="Competitive mobility-on-demand market simulator and trainer")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train operators and write checkpoints")
    _add_common(p_train)
    p_train.add_argument("--episodes", type=int, default=None)
    p_train.add_argument("--actor-lr", type=float, dest="actor_lr", default=None)
    p_train.add_argument("--critic-lr", type=float, dest="critic_lr", default=None)
    p_train.add_argument("--reward-scale", type=float, dest="reward_scale", default=None)
    p_train.add_argument("--hidden", type=int, default=None)
    p_train.add_argument("--progress-every", type=int, default=0)

    p_eval = sub.add_parser("eval", help="evaluate policies over seeded runs")
    _add_common(p_eval)
    p_eval.add_argument("--policy", action="append", dest="policy", default=None,
                        help="per-operator policy: nc, ud, or a checkpoint path "
                             "(repeat per operator)")
    p_eval.add_argument("--runs", type=int, default=10)
    p_eval.add_argument("--stochastic-eval", action="store_true", dest="stochastic_eval")

    p_sweep = sub.add_parser("sweep", help="evaluate along one axis with paired seeds")
    _add_common(p_sweep)
    p_sweep.add_argument("--axis", required=True,
                         choices=list(harness.SWEEP_AXES))
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated values (fleet splits as a:b; "
                              "wage profiles as JSON lists; info_sharing as on/off)")
    p_sweep.add_argument("--policy", action="append", dest="policy", default=None)
    p_sweep.add_argument("--runs", type=int, default=10)

    p_cal = sub.add_parser("calibrate", help="calibrate the choice-model base utility")
    p_cal.add_argument("--scenario", required=True)
    p_cal.add_argument("--operators", type=int, choices=[1, 2], default=2)
    p_cal.add_argument("--write", action="store_true",
                       help="write the value back into the scenario file")

    p_gen = sub.add_parser("gen-scenario", help="generate a synthetic scenario file")
    p_gen.add_argument("--regions", type=int, required=True)
    p_gen.add_argument("--horizon", type=int, default=20)
    p_gen.add_argument("--cv", type=float, required=True)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--demand-per-region", type=float, default=30.0)
    p_gen.add_argument("--fleet", type=int, default=None)
    p_gen.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    torch.set_num_threads(1)

    if args.command == "train":
        config = _base_config(args)
        harness.train_experiment(config, progress_every=args.progress_every)
        print(f"checkpoints and curves written to {args.out}")
        return 0

    if args.command == "eval":
        policies = args.policy or ["nc"] * args.operators
        if len(policies) != args.operators:
            parser.error("need one --policy per operator")
        config = _base_config(args, policies)
        rows = harness.run_evaluation(config)
        print(json.dumps(harness.aggregate(rows), indent=1, sort_keys=True))
        return 0

    if args.command == "sweep":
        policies = args.policy or ["nc"] * args.operators
        config = _base_config(args, policies)
        if args.axis == "wage_profile":
            values = [json.loads(args.values)]
        elif args.axis == "info_sharing":
            values = [v.strip() == "on" for v in args.values.split(",")]
        elif args.axis == "fleet_size":
            values = [int(v) for v in args.values.split(",")]
        else:
            values = [v.strip() for v in args.values.split(",")]
        results = harness.run_sweep(config, args.axis, values)
        print(json.dumps({k: harness.aggregate(v) for k, v in results.items()},
                         indent=1, sort_keys=True))
        return 0

    if args.command == "calibrate":
        s = scen.load_scenario(args.scenario)
        value = choice.calibrate_base_utility(s, args.operators)
        print(f"base_utility for {args.operators} operator(s): {value!r}")
        if args.write:
            scen.write_scenario(s.with_base_utility(value), args.scenario)
            print(f"written back to {args.scenario}")
        return 0

    if args.command == "gen-scenario":
        s = scen.generate_synthetic_scenario(
            args.regions, args.horizon, args.cv, args.seed,
            demand_per_region=args.demand_per_region,
            total_fleet=args.fleet)
        scen.write_scenario(s, args.out)
        print(f"scenario with realized demand CV {scen.regional_demand_cv(s):.3f} "
              f"written to {args.out}")
        return 0

    return 1


if __name__ == "__main__":
    sys.exit(main())
