"""Policy interface, operator-visible observations, and the non-learned baselines."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .market import Action, MarketEnv


class ControlMode(enum.Enum):
    REBALANCING = "reb"     # price scalars pinned at 0.5 (reference fares)
    PRICING = "price"       # no-rebalance sentinel, flows forced to zero
    JOINT = "joint"

    @classmethod
    def parse(cls, text: str) -> "ControlMode":
        for mode in cls:
            if text in (mode.value, mode.name.lower()):
                return mode
        raise ValueError(f"unknown control mode {text!r}")


@dataclass(frozen=True)
class Observation:
    """The slice of the market one operator may see. Competitor idle counts,
    queues and demand are never included; competitor prices only when the
    information-sharing toggle is on."""

    adjacency: np.ndarray          # bool (N, N)
    idle: np.ndarray               # int (N,)
    arrivals: np.ndarray           # int (N, lookahead)
    own_prices: np.ndarray         # float (N, N), previous-step fares
    competitor_prices: np.ndarray | None
    queue_lengths: np.ndarray      # int (N,)
    last_demand: np.ndarray        # int (N,)
    step: int
    horizon: int


def observe(env: MarketEnv, operator: int, lookahead: int = 6,
            include_competitor_prices: bool = True) -> Observation:
    op = env.operators[operator]
    n = env.scenario.n_regions
    arr = np.zeros((n, lookahead), dtype=np.int64)
    width = min(lookahead, op.arrivals.shape[1])
    arr[:, :width] = op.arrivals[:, :width]
    competitor = None
    if include_competitor_prices and env.n_operators > 1:
        rival = env.operators[1 - operator]
        competitor = rival.last_prices.copy()
    return Observation(
        adjacency=env.scenario.adjacency,
        idle=op.idle.copy(),
        arrivals=arr,
        own_prices=op.last_prices.copy(),
        competitor_prices=competitor,
        queue_lengths=op.queue_lengths(),
        last_demand=op.last_demand.copy(),
        step=env.t,
        horizon=env.scenario.horizon,
    )


class Policy:
    def act(self, obs: Observation, rng: np.random.Generator) -> Action:
        raise NotImplementedError


class NoControlPolicy(Policy):
    """Reference fares (scalar 0.5) and no rebalancing."""

    def act(self, obs: Observation, rng: np.random.Generator) -> Action:
        n = obs.idle.shape[0]
        return Action(price_scalars=np.full(n, 0.5), weights=None)


class UniformDistributionPolicy(Policy):
    """Reference fares and an even desired idle-vehicle spread."""

    def act(self, obs: Observation, rng: np.random.Generator) -> Action:
        n = obs.idle.shape[0]
        return Action(price_scalars=np.full(n, 0.5), weights=np.full(n, 1.0 / n))


def restrict_action(mode: ControlMode, price_scalars: np.ndarray,
                    weights: np.ndarray | None) -> Action:
    """Apply the control-mode constraints, making invalid combinations
    unrepresentable: rebalancing-only pins scalars at 0.5, pricing-only
    replaces weights with the no-rebalance sentinel."""
    n = price_scalars.shape[0]
    if mode is ControlMode.REBALANCING:
        return Action(price_scalars=np.full(n, 0.5), weights=weights)
    if mode is ControlMode.PRICING:
        return Action(price_scalars=price_scalars, weights=None)
    return Action(price_scalars=price_scalars, weights=weights)
