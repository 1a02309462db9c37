"""Experiment orchestration: seeded evaluation, training runs, sweeps,
metric aggregation, and CSV/JSON persistence.

metrics.csv column order (one row per run and operator, plus a 'total' row):
    run, seed, op, reward, reb_cost, reb_trips, served, assigned_demand,
    pool_size, mean_rho, mean_wait_min, mean_queue
Conventions (also written as '#' comment lines in the file): mean_rho is the
unweighted mean of price scalars over regions and steps; mean_wait_min
averages over served passengers only (0.0 when none were served); mean_queue
averages queue length over regions and steps; assigned_demand counts
passengers who chose the operator; pool_size counts the whole potential pool.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import choice, scenario as scen
from .learner import (CurvePoint, LearnedPolicy, OperatorLearner, TrainConfig,
                      train_dual)
from .market import MarketEnv
from .policies import (ControlMode, NoControlPolicy, Policy,
                       UniformDistributionPolicy, observe)

METRIC_COLUMNS = [
    "run", "seed", "op", "reward", "reb_cost", "reb_trips", "served",
    "assigned_demand", "pool_size", "mean_rho", "mean_wait_min", "mean_queue",
]

CSV_HEADER_COMMENTS = [
    "# momarket evaluation metrics v1",
    "# mean_rho: unweighted mean price scalar over regions and steps",
    "# mean_wait_min: mean wait of served passengers (0.0 if none served)",
    "# mean_queue: mean queue length over regions and steps",
    "# assigned_demand: passengers who chose this operator; pool_size: full potential pool",
]


@dataclass(frozen=True)
class ExperimentConfig:
    scenario_path: str | None = None
    scenario: scen.Scenario | None = None
    mode: ControlMode = ControlMode.JOINT
    operators: int = 2
    policies: tuple[str, ...] = ("nc", "nc")   # 'nc' | 'ud' | checkpoint path
    eval_runs: int = 10
    seed: int = 0
    seeds: tuple[int, ...] | None = None       # per-run seeds; derived from seed if None
    fleet_split: tuple[int, int] | None = None
    observe_competitor_prices: bool = True
    stochastic_eval: bool = False
    out_dir: str | None = None
    train: TrainConfig = field(default_factory=TrainConfig)

    def run_seeds(self) -> list[int]:
        if self.seeds is not None:
            if len(self.seeds) < self.eval_runs:
                raise ValueError("fewer seeds than eval_runs")
            return list(self.seeds[: self.eval_runs])
        return [self.seed * 1_000_003 + 17 * r for r in range(self.eval_runs)]


@dataclass
class MetricsRow:
    run: int
    seed: int
    op: str              # '0', '1', or 'total'
    reward: float
    reb_cost: float
    reb_trips: int
    served: int
    assigned_demand: int
    pool_size: int
    mean_rho: float
    mean_wait_min: float
    mean_queue: float

    def as_record(self) -> list:
        return [getattr(self, c) for c in METRIC_COLUMNS]


def resolve_scenario(config: ExperimentConfig) -> scen.Scenario:
    if config.scenario is not None:
        s = config.scenario
    elif config.scenario_path is not None:
        s = scen.load_scenario(config.scenario_path)
    else:
        raise ValueError("config needs a scenario or a scenario_path")
    if config.fleet_split is not None:
        total = sum(s.fleet_sizes)
        s = replace(s, fleet_sizes=scen.split_fleet(total, config.fleet_split))
    if config.operators == 1:
        # a monopolist runs the whole fleet
        s = replace(s, fleet_sizes=(sum(s.fleet_sizes), 0))
    # the base utility is operator-count specific, so always calibrate for
    # the configured market size
    s = s.with_base_utility(choice.calibrate_base_utility(s, config.operators))
    return s


def resolve_policy(spec: str, s: scen.Scenario, config: ExperimentConfig) -> Policy:
    if spec == "nc":
        return NoControlPolicy()
    if spec == "ud":
        return UniformDistributionPolicy()
    learner = OperatorLearner.load(spec, s)
    return LearnedPolicy(learner, deterministic=not config.stochastic_eval)


def evaluate_policies(
    s: scen.Scenario,
    policies: list[Policy],
    config: ExperimentConfig,
) -> list[MetricsRow]:
    """Run eval_runs seeded episodes and emit one row per (run, operator)
    plus per-run totals."""
    n_ops = len(policies)
    env = MarketEnv(s, n_operators=n_ops, seed=0)
    lookahead = config.train.lookahead
    rows: list[MetricsRow] = []
    for run, seed in enumerate(config.run_seeds()):
        env.reset(seed)
        policy_rngs = [np.random.default_rng([seed, 23, o]) for o in range(n_ops)]
        reward = np.zeros(n_ops)
        reb_cost = np.zeros(n_ops)
        reb_trips = np.zeros(n_ops, dtype=np.int64)
        served = np.zeros(n_ops, dtype=np.int64)
        assigned = np.zeros(n_ops, dtype=np.int64)
        pool = 0
        waits: list[list[int]] = [[] for _ in range(n_ops)]
        rho_means: list[list[float]] = [[] for _ in range(n_ops)]
        queue_means: list[list[float]] = [[] for _ in range(n_ops)]
        while not env.done:
            actions = []
            for o, policy in enumerate(policies):
                obs = observe(env, o, lookahead, config.observe_competitor_prices)
                actions.append(policy.act(obs, policy_rngs[o]))
            outcomes = env.advance(actions)
            pool += outcomes[0].pool_size
            for o, out in enumerate(outcomes):
                reward[o] += out.reward
                reb_cost[o] += out.reb_cost
                reb_trips[o] += int(out.rebalanced.sum())
                served[o] += int(out.served.sum())
                assigned[o] += int(out.assigned.sum())
                waits[o].extend(out.wait_minutes)
                rho_means[o].append(float(out.price_scalars.mean()))
                queue_means[o].append(float(out.queue_after.mean()))
        for o in range(n_ops):
            rows.append(MetricsRow(
                run=run, seed=seed, op=str(o),
                reward=float(reward[o]), reb_cost=float(reb_cost[o]),
                reb_trips=int(reb_trips[o]), served=int(served[o]),
                assigned_demand=int(assigned[o]), pool_size=pool,
                mean_rho=float(np.mean(rho_means[o])),
                mean_wait_min=float(np.mean(waits[o])) if waits[o] else 0.0,
                mean_queue=float(np.mean(queue_means[o])),
            ))
        all_waits = [w for ws in waits for w in ws]
        rows.append(MetricsRow(
            run=run, seed=seed, op="total",
            reward=float(reward.sum()), reb_cost=float(reb_cost.sum()),
            reb_trips=int(reb_trips.sum()), served=int(served.sum()),
            assigned_demand=int(assigned.sum()), pool_size=pool,
            mean_rho=float(np.mean([np.mean(r) for r in rho_means])),
            mean_wait_min=float(np.mean(all_waits)) if all_waits else 0.0,
            mean_queue=float(np.sum([np.mean(q) for q in queue_means])),
        ))
    return rows


def run_evaluation(config: ExperimentConfig) -> list[MetricsRow]:
    """Resolve scenario and policies, evaluate, and persist CSV + JSON."""
    s = resolve_scenario(config)
    policies = [resolve_policy(p, s, config) for p in config.policies[: config.operators]]
    if len(policies) != config.operators:
        raise ValueError("need one policy spec per operator")
    rows = evaluate_policies(s, policies, config)
    if config.out_dir is not None:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_metrics_csv(out / "metrics.csv", rows)
        with open(out / "summary.json", "w") as f:
            json.dump(summarize(config, rows), f, indent=1, sort_keys=True)
            f.write("\n")
    return rows


def aggregate(rows: list[MetricsRow]) -> dict:
    """Mean and unbiased sd per metric, grouped by operator label."""
    if not rows:
        raise ValueError("no rows to aggregate")
    out: dict = {}
    for op in sorted({r.op for r in rows}):
        group = [r for r in rows if r.op == op]
        stats = {}
        for name in METRIC_COLUMNS[3:]:
            vals = np.array([getattr(r, name) for r in group], dtype=np.float64)
            stats[name] = {
                "mean": float(vals.mean()),
                "sd": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0,
                "n": len(vals),
            }
        out[op] = stats
    return out


def summarize(config: ExperimentConfig, rows: list[MetricsRow]) -> dict:
    return {
        "config": {
            "scenario_path": config.scenario_path,
            "mode": config.mode.value,
            "operators": config.operators,
            "policies": list(config.policies[: config.operators]),
            "eval_runs": config.eval_runs,
            "seed": config.seed,
            "fleet_split": list(config.fleet_split) if config.fleet_split else None,
            "observe_competitor_prices": config.observe_competitor_prices,
            "stochastic_eval": config.stochastic_eval,
        },
        "metrics": aggregate(rows),
    }


def write_metrics_csv(path, rows: list[MetricsRow]) -> None:
    lines = list(CSV_HEADER_COMMENTS)
    lines.append(",".join(METRIC_COLUMNS))
    for r in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in r.as_record()))
    Path(path).write_text("\n".join(lines) + "\n")


def write_curves_csv(path, curves: list[CurvePoint]) -> None:
    lines = ["episode,op,train_reward,actor_loss,critic_loss"]
    for c in curves:
        lines.append(f"{c.episode},{c.operator},{c.train_reward!r},"
                     f"{c.actor_loss!r},{c.critic_loss!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def train_experiment(config: ExperimentConfig, episodes: int | None = None,
                     progress_every: int = 0) -> tuple[list[OperatorLearner], list[CurvePoint]]:
    """Train every operator in the configured market; persist checkpoints and
    training curves when an output directory is set."""
    s = resolve_scenario(config)
    cfg = replace(config.train,
                  observe_competitor_prices=config.observe_competitor_prices)
    env = MarketEnv(s, n_operators=config.operators, seed=0)
    learners = [OperatorLearner(s, config.mode, cfg, seed=config.seed * 977 + o)
                for o in range(config.operators)]
    n_episodes = episodes if episodes is not None else cfg.episodes
    curves = train_dual(env, learners, n_episodes, seed=config.seed,
                        progress_every=progress_every)
    if config.out_dir is not None:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for o, learner in enumerate(learners):
            learner.save(out / f"checkpoint_op{o}.npz")
        write_curves_csv(out / "curves.csv", curves)
    return learners, curves


SWEEP_AXES = ("fleet_size", "fleet_split", "wage_profile", "info_sharing")


def sweep_config(base: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    """Derive the per-value config for a sweep axis; seeds stay shared so
    comparisons are paired."""
    if axis == "fleet_size":
        total = int(value)
        base_s = base.scenario if base.scenario is not None else scen.load_scenario(base.scenario_path)
        ratio = base.fleet_split if base.fleet_split is not None else (1, 1)
        sizes = scen.split_fleet(total, ratio) if base.operators == 2 else (total, 0)
        return replace(base, scenario=replace(base_s, fleet_sizes=sizes), fleet_split=None,
                       out_dir=_sub_out(base, axis, total))
    if axis == "fleet_split":
        split = parse_split(value)
        return replace(base, fleet_split=split, out_dir=_sub_out(base, axis, f"{split[0]}-{split[1]}"))
    if axis == "wage_profile":
        base_s = base.scenario if base.scenario is not None else scen.load_scenario(base.scenario_path)
        wages = np.asarray(value, dtype=np.float64)
        if wages.shape != (base_s.n_regions,):
            raise ValueError("wage profile must list one wage per region")
        s2 = replace(base_s, region_wage_mean=wages, base_utility=None)
        return replace(base, scenario=s2, out_dir=_sub_out(base, axis, "custom"))
    if axis == "info_sharing":
        return replace(base, observe_competitor_prices=bool(value),
                       out_dir=_sub_out(base, axis, "on" if value else "off"))
    raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def _sub_out(base: ExperimentConfig, axis: str, value) -> str | None:
    if base.out_dir is None:
        return None
    return str(Path(base.out_dir) / f"{axis}={value}")


def parse_split(value) -> tuple[int, int]:
    if isinstance(value, str):
        a, b = value.split(":")
        return int(a), int(b)
    a, b = value
    return int(a), int(b)


def run_sweep(base: ExperimentConfig, axis: str, values: list) -> dict:
    """One evaluation per axis value with shared seeds; returns value -> rows."""
    results = {}
    for value in values:
        cfg = sweep_config(base, axis, value)
        results[str(value)] = run_evaluation(cfg)
    return results
