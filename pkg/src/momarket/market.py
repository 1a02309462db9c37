"""Discrete-time market engine: fares, FCFS matching, queue/vehicle dynamics,
rewards, and the per-tick control loop (price & desired distribution ->
demand assignment -> rebalancing execution)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import choice, flow
from .scenario import Scenario


class EngineFault(RuntimeError):
    """Internal consistency violation; signals an engine bug, never bad input."""


@dataclass
class Action:
    """Per-operator control: origin price scalars in (0, 1] and desired
    idle-share weights on the simplex. weights=None is the no-rebalance
    sentinel, resolved to the operator's current idle distribution at flow
    time (which makes the zero flow optimal)."""

    price_scalars: np.ndarray
    weights: np.ndarray | None

    def validate(self, n_regions: int) -> None:
        p = self.price_scalars
        if p.shape != (n_regions,) or np.any(p <= 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
            raise ValueError("price scalars must lie in (0, 1]")
        if self.weights is not None:
            w = self.weights
            if w.shape != (n_regions,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                raise ValueError("weights must be a probability vector")


@dataclass
class OperatorState:
    fleet: int
    idle: np.ndarray              # int (N,)
    arrivals: np.ndarray          # int (N, H): vehicles landing in 1..H steps
    queues: list[list[choice.Passenger]]
    last_prices: np.ndarray       # float (N, N), fares quoted last step
    last_demand: np.ndarray       # int (N,), assigned requests per origin last step
    profit: float = 0.0

    def total_vehicles(self) -> int:
        return int(self.idle.sum() + self.arrivals.sum())

    def queue_lengths(self) -> np.ndarray:
        return np.array([len(q) for q in self.queues], dtype=np.int64)


@dataclass
class StepOutcome:
    served: np.ndarray            # int (N, N), passengers dispatched this step
    rebalanced: np.ndarray        # int (N, N)
    reward: float
    reb_cost: float
    expired: int
    wait_minutes: list[int]       # per served passenger
    assigned: np.ndarray          # int (N,), requests assigned to this operator by origin
    pool_size: int                # potential passengers drawn system-wide this step
    queue_after: np.ndarray       # int (N,)
    price_scalars: np.ndarray     # copy of the applied action


def compute_fares(s: Scenario, price_scalars: np.ndarray, t: int) -> np.ndarray:
    """Fare matrix price_cap * scalar(origin) * ref_price; in (0, cap*ref]."""
    p = np.asarray(price_scalars, dtype=np.float64)
    if np.any(p <= 0) or np.any(p > 1):
        raise ValueError("price scalars must lie in (0, 1]")
    return s.price_cap * p[:, None] * s.ref_price[:, :, t]


def match_passengers(
    op: OperatorState,
    t: int,
    travel_time: np.ndarray,
    step_minutes: int,
) -> tuple[np.ndarray, list[int]]:
    """Serve queued passengers FCFS per region while idle vehicles remain.

    A served passenger consumes one idle vehicle at the origin and schedules
    its arrival at the destination after the travel time. Returns the served
    matrix and the wait (minutes) of each served passenger.
    """
    n = op.idle.shape[0]
    served = np.zeros((n, n), dtype=np.int64)
    waits: list[int] = []
    for i in range(n):
        queue = op.queues[i]
        if not queue:
            continue
        queue.sort(key=lambda p: (p.arrival_step, p.seq))
        k = min(int(op.idle[i]), len(queue))
        for p in queue[:k]:
            served[i, p.destination] += 1
            op.arrivals[p.destination, travel_time[i, p.destination] - 1] += 1
            waits.append((t - p.arrival_step) * step_minutes)
        op.idle[i] -= k
        if op.idle[i] < 0:
            raise EngineFault("matching consumed more vehicles than available")
        op.queues[i] = queue[k:]
    return served, waits


def expire_waiting(op: OperatorState, t: int) -> int:
    """Drop queued passengers whose deadline has passed (after matching)."""
    expired = 0
    for i, queue in enumerate(op.queues):
        keep = [p for p in queue if p.deadline_step > t]
        expired += len(queue) - len(keep)
        op.queues[i] = keep
    return expired


def step_vehicles(op: OperatorState) -> None:
    """Land vehicles due next step into the idle pools and shift the arrival buffer."""
    op.idle += op.arrivals[:, 0]
    op.arrivals[:, :-1] = op.arrivals[:, 1:]
    op.arrivals[:, -1] = 0


def compute_reward(
    s: Scenario,
    served: np.ndarray,
    rebalanced: np.ndarray,
    fares: np.ndarray,
    t: int,
) -> tuple[float, float]:
    """Profit = trip revenue minus trip and rebalancing costs; also returns
    the rebalancing cost alone."""
    c = s.op_cost[:, :, t]
    trip = float((served * (fares - c)).sum())
    reb = float((rebalanced * c).sum())
    return trip - reb, reb


def no_rebalance_weights(idle: np.ndarray) -> np.ndarray:
    """Weights equal to the current idle distribution: desired <= idle holds
    everywhere, so the optimal flow is zero."""
    total = idle.sum()
    if total == 0:
        return np.full(idle.shape[0], 1.0 / idle.shape[0])
    return idle / total


class MarketEnv:
    """One episode-stepped market shared by all operators.

    Single-threaded per instance; run several instances with independent RNG
    streams for parallel episodes.
    """

    def __init__(self, s: Scenario, n_operators: int = 2,
                 fleet_sizes: tuple[int, ...] | None = None, seed: int = 0):
        if s.base_utility is None:
            raise ValueError("scenario base_utility is not calibrated")
        self.scenario = s
        self.n_operators = n_operators
        fleets = fleet_sizes if fleet_sizes is not None else s.fleet_sizes[:n_operators]
        if len(fleets) != n_operators:
            raise ValueError("need one fleet size per operator")
        self.fleet_sizes = tuple(int(m) for m in fleets)
        self.horizon_buffer = max(s.max_travel_steps, 1)
        self.reset(seed)

    def reset(self, seed: int) -> None:
        s = self.scenario
        n = s.n_regions
        self.rng = np.random.default_rng(seed)
        self.t = 0
        self._seq = 0
        self.operators = []
        ref_fares = s.price_cap * 0.5 * s.ref_price[:, :, 0]
        for fleet in self.fleet_sizes:
            base, extra = divmod(fleet, n)
            idle = np.full(n, base, dtype=np.int64)
            idle[:extra] += 1
            self.operators.append(OperatorState(
                fleet=fleet,
                idle=idle,
                arrivals=np.zeros((n, self.horizon_buffer), dtype=np.int64),
                queues=[[] for _ in range(n)],
                last_prices=ref_fares.copy(),
                last_demand=np.zeros(n, dtype=np.int64),
            ))

    @property
    def done(self) -> bool:
        return self.t >= self.scenario.horizon

    def advance(self, actions: list[Action], rng: np.random.Generator | None = None) -> list[StepOutcome]:
        """Run one tick: fares from the actions, demand generation and FCFS
        matching, expiry, min-cost-flow rebalancing, then transition to t+1."""
        if self.done:
            raise EngineFault("advance called past the horizon")
        if len(actions) != self.n_operators:
            raise ValueError("need one action per operator")
        s = self.scenario
        n = s.n_regions
        t = self.t
        rng = self.rng if rng is None else rng
        for a in actions:
            a.validate(n)

        fares = [compute_fares(s, a.price_scalars, t) for a in actions]

        passengers, pool_size = choice.draw_requests(s, t, fares, rng, seq_start=self._seq)
        if passengers:
            self._seq = passengers[-1].seq + 1

        assigned = [np.zeros(n, dtype=np.int64) for _ in range(self.n_operators)]
        for p in passengers:
            self.operators[p.operator].queues[p.origin].append(p)
            assigned[p.operator][p.origin] += 1

        outcomes = []
        for o, op in enumerate(self.operators):
            served, waits = match_passengers(op, t, s.travel_time, s.step_minutes)
            expired = expire_waiting(op, t)

            a = actions[o]
            weights = a.weights if a.weights is not None else no_rebalance_weights(op.idle)
            desired = flow.desired_counts(weights, int(op.idle.sum()))
            y = flow.solve_min_cost_flow(
                flow.RebalanceProblem(op.idle.copy(), desired, s.op_cost[:, :, t]))
            flow.execute_flows(op, y, s.travel_time)

            reward, reb_cost = compute_reward(s, served, y, fares[o], t)
            op.profit += reward
            op.last_prices = fares[o]
            op.last_demand = assigned[o]
            step_vehicles(op)
            if op.total_vehicles() != op.fleet:
                raise EngineFault(
                    f"fleet conservation broken for operator {o}: "
                    f"{op.total_vehicles()} != {op.fleet}")
            outcomes.append(StepOutcome(
                served=served,
                rebalanced=y,
                reward=reward,
                reb_cost=reb_cost,
                expired=expired,
                wait_minutes=waits,
                assigned=assigned[o],
                pool_size=pool_size,
                queue_after=op.queue_lengths(),
                price_scalars=a.price_scalars.copy(),
            ))
        self.t += 1
        return outcomes
