"""Passenger pool generation and the wage-sensitive logit mode choice.

Each potential passenger weighs every live operator against an outside option
(utility fixed at zero): riding has a base utility, a travel-time cost scaled
by the passenger's own hourly wage, and a fare cost scaled by mean-wage/wage
(income effect). Pool sizes are Poisson with rate twice the reference demand,
and the base utility is calibrated so that exactly the reference demand books
an operator at reference fares.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import Scenario

WAGE_QUAD_NODES = 64


@dataclass(frozen=True)
class Passenger:
    origin: int
    destination: int
    arrival_step: int
    wage: float
    operator: int           # chosen operator index
    deadline_step: int
    seq: int                # global creation order; breaks FCFS ties

    def wait_steps(self, now: int) -> int:
        return now - self.arrival_step


@dataclass(frozen=True)
class ChoiceContext:
    fares: tuple[float, ...]      # one per live operator
    travel_time_hours: float
    mean_wage: float
    base_utility: float
    time_disutility: float


def utility(ctx: ChoiceContext, wage: float, option: int) -> float:
    """Utility of riding with `option`; the outside option is normalized to zero."""
    return (ctx.base_utility
            - ctx.time_disutility * wage * ctx.travel_time_hours
            - (ctx.mean_wage / wage) * ctx.fares[option])


def choice_probabilities(utilities) -> np.ndarray:
    """Softmax over options (caller appends the outside option's 0 utility)."""
    u = np.asarray(utilities, dtype=np.float64)
    z = np.exp(u - u.max())
    return z / z.sum()


def sample_wage(s: Scenario, region: int, rng: np.random.Generator) -> float:
    """Lognormal hourly wage with mean region_wage_mean[region] and shape wage_sigma."""
    mu = np.log(s.region_wage_mean[region]) - 0.5 * s.wage_sigma ** 2
    return float(np.exp(mu + s.wage_sigma * rng.standard_normal()))


def generate_requests(
    s: Scenario,
    t: int,
    fares: list[np.ndarray],
    rng: np.random.Generator,
    seq_start: int = 0,
) -> list[Passenger]:
    """Draw the potential pool and return only passengers who chose an operator.

    For every off-diagonal OD pair the pool is Poisson(2 * ref_demand[i,j,t]);
    each member draws a wage, evaluates all live operators plus the outside
    option, and samples a choice. The RNG consumption (pool, wages, choices)
    does not depend on fares, so paired seeds see identical pools.
    """
    passengers, _ = draw_requests(s, t, fares, rng, seq_start)
    return passengers


def draw_requests(
    s: Scenario,
    t: int,
    fares: list[np.ndarray],
    rng: np.random.Generator,
    seq_start: int = 0,
) -> tuple[list[Passenger], int]:
    """generate_requests plus the size of the potential pool drawn."""
    if s.base_utility is None:
        raise ValueError("scenario base_utility is not calibrated")
    n = s.n_regions
    rate = 2.0 * s.ref_demand[:, :, t]
    pools = rng.poisson(rate)
    np.fill_diagonal(pools, 0)

    total = int(pools.sum())
    if total == 0:
        return [], 0
    pairs = np.argwhere(pools > 0)
    counts = pools[pairs[:, 0], pairs[:, 1]]
    origins = np.repeat(pairs[:, 0], counts)
    dests = np.repeat(pairs[:, 1], counts)

    mu = np.log(s.region_wage_mean) - 0.5 * s.wage_sigma ** 2
    wages = np.exp(mu[origins] + s.wage_sigma * rng.standard_normal(total))

    hours = s.travel_time[origins, dests] * (s.step_minutes / 60.0)
    v_bar = s.mean_wage
    n_ops = len(fares)
    utils = np.zeros((total, n_ops + 1))
    time_term = s.time_disutility * wages * hours
    for o in range(n_ops):
        p = fares[o][origins, dests]
        utils[:, o] = s.base_utility - time_term - (v_bar / wages) * p
    # last column stays 0: the outside option

    z = np.exp(utils - utils.max(axis=1, keepdims=True))
    cum = np.cumsum(z / z.sum(axis=1, keepdims=True), axis=1)
    draws = rng.random(total)
    chosen = (draws[:, None] > cum).sum(axis=1)

    out: list[Passenger] = []
    seq = seq_start
    deadline = t + s.max_wait_steps
    for k in np.flatnonzero(chosen < n_ops):
        out.append(Passenger(
            origin=int(origins[k]),
            destination=int(dests[k]),
            arrival_step=t,
            wage=float(wages[k]),
            operator=int(chosen[k]),
            deadline_step=deadline,
            seq=seq,
        ))
        seq += 1
    return out, total


def _wage_quadrature(mean: float, sigma: float, nodes: int = WAGE_QUAD_NODES):
    """Gauss-Hermite nodes/weights for E over a lognormal(mean, sigma) wage."""
    if sigma == 0:
        return np.array([mean]), np.array([1.0])
    x, w = np.polynomial.hermite.hermgauss(nodes)
    mu = np.log(mean) - 0.5 * sigma ** 2
    wages = np.exp(mu + sigma * np.sqrt(2.0) * x)
    return wages, w / np.sqrt(np.pi)


def expected_acceptance(
    s: Scenario,
    n_operators: int,
    price_scalar: float = 0.5,
    base_utility: float | None = None,
) -> float:
    """Expected fraction of the potential pool booking any operator.

    Closed-form logit shares averaged over the wage distribution with fixed
    Gauss-Hermite quadrature; no sampling. All operators are assumed to quote
    price_scalar uniformly (0.5 recovers the reference fares under cap 2).
    """
    b0 = s.base_utility if base_utility is None else base_utility
    if b0 is None:
        raise ValueError("base_utility required")
    n, horizon = s.n_regions, s.horizon
    v_bar = s.mean_wage
    off = ~np.eye(n, dtype=bool)
    hours = s.travel_time * (s.step_minutes / 60.0)

    pool_total = 0.0
    accept_total = 0.0
    for i in range(n):
        wages, weights = _wage_quadrature(s.region_wage_mean[i], s.wage_sigma)
        pool_ij = 2.0 * s.ref_demand[i]              # (N, T)
        mask = off[i][:, None] & (pool_ij > 0)
        if not mask.any():
            continue
        fare = s.price_cap * price_scalar * s.ref_price[i]   # (N, T)
        # utility per (wage node, destination, step)
        u = (b0
             - s.time_disutility * wages[:, None, None] * hours[i][None, :, None]
             - (v_bar / wages)[:, None, None] * fare[None, :, :])
        e = np.exp(u)
        share = n_operators * e / (n_operators * e + 1.0)
        share_mean = np.tensordot(weights, share, axes=1)    # (N, T)
        accept_total += float((pool_ij * share_mean)[mask].sum())
        pool_total += float(pool_ij[mask].sum())
    if pool_total == 0:
        raise ValueError("ref_demand is all zero")
    return accept_total / pool_total


def calibrate_base_utility(s: Scenario, n_operators: int, rel_tol: float = 1e-3) -> float:
    """Base utility at which expected bookings at reference fares equal reference demand.

    The pool is twice the reference demand, so the target acceptance rate is
    exactly one half. Deterministic bisection; raises if no root lies in
    [-50, 50].
    """
    lo, hi = -50.0, 50.0
    f_lo = expected_acceptance(s, n_operators, base_utility=lo) - 0.5
    f_hi = expected_acceptance(s, n_operators, base_utility=hi) - 0.5
    if f_lo > 0 or f_hi < 0:
        raise ValueError("calibration bracket failure: no base_utility in [-50, 50]")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = expected_acceptance(s, n_operators, base_utility=mid) - 0.5
        if abs(f_mid) <= 0.5 * rel_tol:
            return mid
        if f_mid < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
