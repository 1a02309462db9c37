"""Per-operator advantage actor-critic with Beta/Dirichlet action heads.

Both operators train simultaneously and independently in the shared market:
no parameter sharing, per-episode Monte-Carlo returns, and a critic-only
warmup phase. Action sampling goes through a numpy Generator so episode
streams are reproducible; log-densities are recomputed in torch at update
time, which is all the score-function gradient needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch

from . import nets
from .market import Action, MarketEnv
from .policies import ControlMode, Observation, Policy, observe
from .scenario import Scenario


class TrainingDiverged(RuntimeError):
    def __init__(self, episode: int, detail: str):
        super().__init__(f"training diverged at episode {episode}: {detail}")
        self.episode = episode


@dataclass(frozen=True)
class TrainConfig:
    actor_lr: float = 2e-4
    critic_lr: float = 4e-4
    discount: float = 0.97
    reward_scale: float = 4000.0
    grad_clip: float = 1000.0
    critic_warmup_episodes: int = 50
    episodes: int = 150_000
    lookahead: int = 6
    feature_scale: float = 0.01
    observe_competitor_prices: bool = True
    hidden: int = 256
    od_price_features: bool = False

    def __post_init__(self):
        if not (0 < self.discount < 1):
            raise ValueError("discount must lie in (0, 1)")
        for name in ("actor_lr", "critic_lr", "reward_scale", "grad_clip",
                     "lookahead", "feature_scale", "hidden"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def feature_dim(self, n_regions: int) -> int:
        if self.od_price_features:
            return self.lookahead + 4 + 2 * n_regions
        return self.lookahead + 6


def origin_fare_weights(s: Scenario) -> np.ndarray:
    """Per-origin destination weights for aggregating fare matrices into one
    mean fare per origin: time-aggregated reference demand, row-normalized."""
    w = s.ref_demand.sum(axis=2)
    np.fill_diagonal(w, 0.0)
    out = np.zeros_like(w)
    for i in range(w.shape[0]):
        total = w[i].sum()
        if total > 0:
            out[i] = w[i] / total
        else:
            out[i, np.arange(w.shape[0]) != i] = 1.0 / (w.shape[0] - 1)
    return out


def encode_observation(obs: Observation, cfg: TrainConfig,
                       fare_weights: np.ndarray) -> np.ndarray:
    """Per-region feature rows, everything scaled by feature_scale except the
    normalized step channel."""
    n = obs.idle.shape[0]
    arr = np.zeros((n, cfg.lookahead))
    width = min(cfg.lookahead, obs.arrivals.shape[1])
    arr[:, :width] = obs.arrivals[:, :width]

    cols = [obs.idle[:, None], arr, obs.queue_lengths[:, None], obs.last_demand[:, None]]
    if cfg.od_price_features:
        cols.append(obs.own_prices)
        if obs.competitor_prices is not None and cfg.observe_competitor_prices:
            cols.append(obs.competitor_prices)
        else:
            cols.append(np.zeros((n, n)))
    else:
        own_mean = (fare_weights * obs.own_prices).sum(axis=1)
        cols.append(own_mean[:, None])
        if obs.competitor_prices is not None and cfg.observe_competitor_prices:
            comp_mean = (fare_weights * obs.competitor_prices).sum(axis=1)
        else:
            comp_mean = np.zeros(n)
        cols.append(comp_mean[:, None])
    feats = np.concatenate(cols, axis=1) * cfg.feature_scale
    step_col = np.full((n, 1), obs.step / obs.horizon)
    return np.concatenate([feats, step_col], axis=1)


def compute_returns(rewards, discount: float, reward_scale: float = 4000.0) -> np.ndarray:
    """Discounted returns of the scaled reward stream, terminal value zero."""
    out = np.zeros(len(rewards))
    running = 0.0
    for k in range(len(rewards) - 1, -1, -1):
        running = rewards[k] / reward_scale + discount * running
        out[k] = running
    return out


@dataclass
class Trajectory:
    features: list[np.ndarray] = field(default_factory=list)
    price_scalars: list[np.ndarray] = field(default_factory=list)
    weights: list[np.ndarray] = field(default_factory=list)   # None entries in pricing mode
    rewards: list[float] = field(default_factory=list)

    def append(self, feats, action: Action, reward: float):
        self.features.append(feats)
        self.price_scalars.append(action.price_scalars)
        self.weights.append(action.weights)
        self.rewards.append(reward)


class OperatorLearner:
    """Actor + critic + optimizers for one operator (no sharing across operators)."""

    def __init__(self, s: Scenario, mode: ControlMode, cfg: TrainConfig, seed: int = 0):
        self.scenario = s
        self.mode = mode
        self.cfg = cfg
        self.fare_weights = origin_fare_weights(s)
        self.a_hat = nets.normalized_adjacency(s.adjacency)
        self.episodes_seen = 0
        n_feat = cfg.feature_dim(s.n_regions)
        torch.manual_seed(seed)
        self.actor = nets.ActorNet(n_feat, cfg.hidden, nets.head_size(mode.value)).double()
        self.critic = nets.CriticNet(n_feat, cfg.hidden).double()
        self.actor_opt = torch.optim.Adam(self.actor.parameters(), lr=cfg.actor_lr)
        self.critic_opt = torch.optim.Adam(self.critic.parameters(), lr=cfg.critic_lr)

    # -- forward passes ----------------------------------------------------

    def encode(self, obs: Observation) -> np.ndarray:
        return encode_observation(obs, self.cfg, self.fare_weights)

    def head_params(self, features: torch.Tensor) -> dict[str, torch.Tensor]:
        """Distribution parameters per region: Beta (alpha, beta) for prices
        and/or the Dirichlet concentration, depending on the mode."""
        out = self.actor(features, self.a_hat)
        if self.mode is ControlMode.PRICING:
            return {"alpha": out[..., 0], "beta": out[..., 1]}
        if self.mode is ControlMode.REBALANCING:
            return {"concentration": out[..., 0]}
        return {"alpha": out[..., 0], "beta": out[..., 1], "concentration": out[..., 2]}

    def act(self, obs: Observation, rng: np.random.Generator,
            deterministic: bool = False, features: np.ndarray | None = None) -> Action:
        feats = torch.from_numpy(self.encode(obs) if features is None else features)
        with torch.no_grad():
            params = self.head_params(feats)
        n = obs.idle.shape[0]
        if "alpha" in params:
            alpha = params["alpha"].numpy()
            beta = params["beta"].numpy()
            if deterministic:
                scalars = alpha / (alpha + beta)
            else:
                scalars = rng.beta(alpha, beta)
            scalars = np.clip(scalars, nets.SCALAR_EPS, 1.0)
        else:
            scalars = np.full(n, 0.5)
        if "concentration" in params:
            conc = params["concentration"].numpy()
            if deterministic:
                weights = conc / conc.sum()
            else:
                weights = rng.dirichlet(conc)
                weights = np.clip(weights, 1e-12, None)
                weights = weights / weights.sum()
        else:
            weights = None
        return Action(price_scalars=scalars, weights=weights)

    def log_probs(self, features: torch.Tensor, scalars: torch.Tensor,
                  weights: torch.Tensor | None) -> torch.Tensor:
        """Log policy density of each step's action; sum of the live heads'
        component log-densities."""
        params = self.head_params(features)
        total = torch.zeros(features.shape[0], dtype=features.dtype)
        if "alpha" in params:
            total = total + nets.beta_log_prob(params["alpha"], params["beta"], scalars).sum(dim=-1)
        if "concentration" in params:
            total = total + nets.dirichlet_log_prob(params["concentration"], weights)
        return total

    def values(self, features: torch.Tensor) -> torch.Tensor:
        return self.critic(features, self.a_hat)

    # -- updates -------------------------------------------------------------

    def a2c_update(self, traj: Trajectory) -> dict[str, float]:
        """One Monte-Carlo A2C update from a complete episode. During the
        critic warmup only the critic moves; actor parameters stay bit-identical."""
        cfg = self.cfg
        self.episodes_seen += 1
        feats = torch.from_numpy(np.stack(traj.features))          # (T, N, F)
        returns = torch.from_numpy(
            compute_returns(traj.rewards, cfg.discount, cfg.reward_scale))

        values = self.values(feats)
        critic_loss = ((returns - values) ** 2).mean()
        self.critic_opt.zero_grad()
        critic_loss.backward()
        torch.nn.utils.clip_grad_norm_(self.critic.parameters(), cfg.grad_clip)
        self.critic_opt.step()

        actor_loss_val = 0.0
        if self.episodes_seen > cfg.critic_warmup_episodes:
            scalars = torch.from_numpy(np.stack(traj.price_scalars))
            if self.mode is ControlMode.PRICING:
                weights = None
            else:
                weights = torch.from_numpy(np.stack(traj.weights))
            advantage = (returns - values).detach()
            log_probs = self.log_probs(feats, scalars, weights)
            actor_loss = -(log_probs * advantage).mean()
            self.actor_opt.zero_grad()
            actor_loss.backward()
            torch.nn.utils.clip_grad_norm_(self.actor.parameters(), cfg.grad_clip)
            self.actor_opt.step()
            actor_loss_val = float(actor_loss.detach())

        losses = {"critic_loss": float(critic_loss.detach()), "actor_loss": actor_loss_val}
        if not all(math.isfinite(v) for v in losses.values()):
            raise TrainingDiverged(self.episodes_seen, f"non-finite loss {losses}")
        for p in list(self.actor.parameters()) + list(self.critic.parameters()):
            if not torch.isfinite(p).all():
                raise TrainingDiverged(self.episodes_seen, "non-finite parameters")
        return losses

    # -- persistence -----------------------------------------------------------

    def save(self, path) -> None:
        arrays = {
            "version": np.array([1]),
            "mode": np.array(self.mode.value),
            "hidden": np.array([self.cfg.hidden]),
            "lookahead": np.array([self.cfg.lookahead]),
            "od_price_features": np.array([int(self.cfg.od_price_features)]),
            "observe_competitor_prices": np.array([int(self.cfg.observe_competitor_prices)]),
            "feature_scale": np.array([self.cfg.feature_scale]),
        }
        for prefix, module in (("actor", self.actor), ("critic", self.critic)):
            for name, tensor in module.state_dict().items():
                arrays[f"{prefix}.{name}"] = tensor.numpy()
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path, s: Scenario) -> "OperatorLearner":
        data = np.load(path, allow_pickle=False)
        if int(data["version"][0]) != 1:
            raise ValueError(f"unsupported checkpoint version {data['version']}")
        cfg = TrainConfig(
            hidden=int(data["hidden"][0]),
            lookahead=int(data["lookahead"][0]),
            od_price_features=bool(data["od_price_features"][0]),
            observe_competitor_prices=bool(data["observe_competitor_prices"][0]),
            feature_scale=float(data["feature_scale"][0]),
        )
        mode = ControlMode.parse(str(data["mode"]))
        learner = cls(s, mode, cfg)
        for prefix, module in (("actor", learner.actor), ("critic", learner.critic)):
            state = {name: torch.from_numpy(data[f"{prefix}.{name}"])
                     for name in module.state_dict()}
            module.load_state_dict(state)
        return learner


class LearnedPolicy(Policy):
    def __init__(self, learner: OperatorLearner, deterministic: bool = True):
        self.learner = learner
        self.deterministic = deterministic

    def act(self, obs: Observation, rng: np.random.Generator) -> Action:
        return self.learner.act(obs, rng, deterministic=self.deterministic)


@dataclass
class CurvePoint:
    episode: int
    operator: int
    train_reward: float
    actor_loss: float
    critic_loss: float


def train_dual(
    env: MarketEnv,
    learners: list[OperatorLearner],
    episodes: int,
    seed: int = 0,
    progress_every: int = 0,
) -> list[CurvePoint]:
    """Simultaneous independent training of every operator in a shared market.

    Each episode both operators act from their own observations, then update
    from their own trajectories. Returns per-episode training curves.
    """
    if len(learners) != env.n_operators:
        raise ValueError("one learner per operator required")
    curves: list[CurvePoint] = []
    policy_rngs = [np.random.default_rng([seed, 7001, o]) for o in range(len(learners))]
    for episode in range(episodes):
        env.reset(np.random.default_rng([seed, 11, episode]).integers(2 ** 62))
        trajs = [Trajectory() for _ in learners]
        while not env.done:
            actions = []
            feats = []
            for o, learner in enumerate(learners):
                obs = observe(env, o, learner.cfg.lookahead,
                              learner.cfg.observe_competitor_prices)
                feats.append(learner.encode(obs))
                actions.append(learner.act(obs, policy_rngs[o], features=feats[o]))
            outcomes = env.advance(actions)
            for o in range(len(learners)):
                trajs[o].append(feats[o], actions[o], outcomes[o].reward)
        for o, learner in enumerate(learners):
            losses = learner.a2c_update(trajs[o])
            curves.append(CurvePoint(
                episode=episode,
                operator=o,
                train_reward=float(sum(trajs[o].rewards)),
                actor_loss=losses["actor_loss"],
                critic_loss=losses["critic_loss"],
            ))
        if progress_every and (episode + 1) % progress_every == 0:
            recent = [c.train_reward for c in curves[-2 * len(learners) * progress_every:]]
            print(f"episode {episode + 1}/{episodes} mean train reward "
                  f"{np.mean(recent):.1f}", flush=True)
    return curves
