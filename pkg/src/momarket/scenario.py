"""Immutable world description: graph, travel times, demand, prices, wages, fleets.

The scenario file format is a single JSON document with explicit array
dimensions (see FILE_FORMAT below). Travel times in a file may be edge-level;
the all-pairs shortest-path closure is computed at load time, so the
`travel_time` matrix on a constructed Scenario always satisfies the triangle
inequality.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

FORMAT_TAG = "momarket-scenario-v1"

FILE_FORMAT = """\
Scenario file (JSON), keys:
  format            "momarket-scenario-v1"
  units             informational header, e.g. {"currency": "USD", "wage": "USD/hour",
                    "time": "steps of <step_minutes> minutes"}
  n_regions         int
  horizon           int, steps per episode
  step_minutes      int (3)
  max_wait_steps    int (2); max_wait_steps * step_minutes must equal 6
  price_cap         float, fare = price_cap * scalar * ref_price
  time_disutility   float, utility weight on wage * travel-hours
  base_utility      float or null (filled by calibration)
  wage_sigma        float, lognormal shape of passenger wages
  region_wage_mean  [n_regions] floats, USD/hour
  fleet_sizes       [2] ints, vehicles per operator
  adjacency         [n_regions][n_regions] 0/1, no self-loops, strongly connected
  travel_time       [n_regions][n_regions] ints, steps; may be edge-level
                    (entries on non-adjacent pairs are ignored); closure at load
  cost_per_step     float, optional; used when op_cost is absent
  op_cost           [n][n][horizon] floats, optional (default cost_per_step * travel_time)
  ref_demand        [n][n][horizon] floats, expected requests per step
  ref_price         [n][n] or [n][n][horizon] floats; 2-D is broadcast over the horizon
  dims              written dimensions of each tensor, checked at load
"""


class ScenarioFormatError(ValueError):
    """Scenario file is missing fields or is not shaped as documented."""


class ScenarioValidationError(ValueError):
    """Scenario data violates a structural invariant."""


@dataclass(frozen=True)
class Scenario:
    n_regions: int
    adjacency: np.ndarray        # bool (N, N)
    travel_time: np.ndarray      # int (N, N), shortest-path steps
    op_cost: np.ndarray          # float (N, N, T), per-vehicle travel cost
    ref_demand: np.ndarray       # float (N, N, T), expected requests per step
    ref_price: np.ndarray        # float (N, N, T), historical fares
    region_wage_mean: np.ndarray  # float (N,), USD/hour
    wage_sigma: float
    fleet_sizes: tuple[int, ...]
    horizon: int = 20
    step_minutes: int = 3
    max_wait_steps: int = 2
    price_cap: float = 2.0
    time_disutility: float = 0.71
    base_utility: float | None = None
    cost_per_step: float | None = None  # remembered for round-trip when op_cost is defaulted

    def __post_init__(self):
        for name in ("adjacency", "travel_time", "op_cost", "ref_demand",
                     "ref_price", "region_wage_mean"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    @property
    def mean_wage(self) -> float:
        """Scenario-wide wage: mean of region wages weighted by outbound reference demand."""
        outbound = self.ref_demand.sum(axis=(1, 2))
        total = outbound.sum()
        if total <= 0:
            return float(np.mean(self.region_wage_mean))
        return float(np.dot(outbound, self.region_wage_mean) / total)

    @property
    def max_travel_steps(self) -> int:
        return int(self.travel_time.max())

    def travel_hours(self, origin: int, destination: int) -> float:
        return self.travel_time[origin, destination] * self.step_minutes / 60.0

    def with_base_utility(self, value: float) -> "Scenario":
        return replace(self, base_utility=float(value))


def shortest_path_closure(adjacency: np.ndarray, edge_time: np.ndarray) -> np.ndarray:
    """All-pairs shortest travel times over the adjacency edges (Floyd-Warshall)."""
    n = adjacency.shape[0]
    big = np.iinfo(np.int64).max // 4
    dist = np.full((n, n), big, dtype=np.int64)
    np.fill_diagonal(dist, 0)
    for i in range(n):
        for j in range(n):
            if i != j and adjacency[i, j]:
                dist[i, j] = edge_time[i, j]
    for k in range(n):
        dist = np.minimum(dist, dist[:, k:k + 1] + dist[k:k + 1, :])
    return dist


def _strongly_connected(adjacency: np.ndarray) -> bool:
    n = adjacency.shape[0]

    def reach(out_edges):
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v in np.flatnonzero(out_edges[u]):
                if v not in seen:
                    seen.add(int(v))
                    stack.append(int(v))
        return len(seen) == n

    return reach(adjacency) and reach(adjacency.T)


def _nonneg_finite_violations(name: str, arr: np.ndarray) -> list[str]:
    out = []
    bad = ~np.isfinite(arr)
    for idx in np.argwhere(bad):
        out.append(f"{name}{''.join(f'[{k}]' for k in idx)} not finite")
    neg = np.isfinite(arr) & (arr < 0)
    for idx in np.argwhere(neg):
        out.append(f"{name}{''.join(f'[{k}]' for k in idx)} < 0")
    return out


def validate_scenario(s: Scenario) -> list[str]:
    """Return a list of invariant violations; empty iff the scenario is valid."""
    v: list[str] = []
    n, t = s.n_regions, s.horizon
    if n < 2:
        v.append("n_regions < 2")
        return v
    shapes = {
        "adjacency": (s.adjacency, (n, n)),
        "travel_time": (s.travel_time, (n, n)),
        "op_cost": (s.op_cost, (n, n, t)),
        "ref_demand": (s.ref_demand, (n, n, t)),
        "ref_price": (s.ref_price, (n, n, t)),
        "region_wage_mean": (s.region_wage_mean, (n,)),
    }
    for name, (arr, want) in shapes.items():
        if arr.shape != want:
            v.append(f"{name} has shape {arr.shape}, expected {want}")
    if v:
        return v

    if np.any(np.diag(s.adjacency)):
        v.append("adjacency has self-loops")
    if not _strongly_connected(s.adjacency):
        v.append("graph not strongly connected")

    for i in range(n):
        if s.travel_time[i, i] != 0:
            v.append(f"travel_time[{i}][{i}] != 0: self travel time")
    off = ~np.eye(n, dtype=bool)
    for i, j in np.argwhere(off & (s.travel_time < 1)):
        v.append(f"travel_time[{i}][{j}] < 1")
    closure = shortest_path_closure(s.adjacency | off, s.travel_time)
    if np.any(s.travel_time > closure):
        i, j = np.argwhere(s.travel_time > closure)[0]
        v.append(f"travel_time[{i}][{j}] violates the triangle inequality")

    v += _nonneg_finite_violations("op_cost", s.op_cost)
    v += _nonneg_finite_violations("ref_demand", s.ref_demand)
    v += _nonneg_finite_violations("ref_price", s.ref_price)
    for i in range(n):
        for step in np.flatnonzero(s.ref_demand[i, i, :] > 0):
            v.append(f"ref_demand[{i}][{i}][{step}] > 0: self-trip demand")

    if np.any(s.region_wage_mean <= 0) or not np.all(np.isfinite(s.region_wage_mean)):
        v.append("region_wage_mean must be positive and finite")
    if not (np.isfinite(s.wage_sigma) and s.wage_sigma >= 0):
        v.append("wage_sigma < 0")
    if any(m < 0 for m in s.fleet_sizes):
        v.append("fleet_sizes < 0")
    if s.max_wait_steps * s.step_minutes != 6:
        v.append("max_wait_steps * step_minutes != 6 minutes")
    if not (np.isfinite(s.price_cap) and s.price_cap > 0):
        v.append("price_cap <= 0")
    if s.horizon < 1:
        v.append("horizon < 1")
    if s.base_utility is not None and not np.isfinite(s.base_utility):
        v.append("base_utility not finite")
    return v


def _require(data: dict, key: str):
    if key not in data:
        raise ScenarioFormatError(f"missing field '{key}'")
    return data[key]


def _build(data: dict) -> Scenario:
    n = int(_require(data, "n_regions"))
    horizon = int(data.get("horizon", 20))
    adjacency = np.asarray(_require(data, "adjacency"), dtype=bool)
    edge_time = np.asarray(_require(data, "travel_time"), dtype=np.int64)
    if adjacency.shape != (n, n) or edge_time.shape != (n, n):
        raise ScenarioFormatError("adjacency/travel_time must be n_regions x n_regions")

    for i in range(n):
        if edge_time[i, i] != 0:
            raise ScenarioValidationError(f"travel_time[{i}][{i}] != 0: self travel time")
    travel_time = shortest_path_closure(adjacency, edge_time)
    if np.any(travel_time >= np.iinfo(np.int64).max // 8):
        raise ScenarioValidationError("graph not strongly connected")

    ref_demand = np.asarray(_require(data, "ref_demand"), dtype=np.float64)
    ref_price = np.asarray(_require(data, "ref_price"), dtype=np.float64)
    if ref_price.ndim == 2:
        ref_price = np.repeat(ref_price[:, :, None], horizon, axis=2)

    cost_per_step = data.get("cost_per_step")
    if "op_cost" in data:
        op_cost = np.asarray(data["op_cost"], dtype=np.float64)
        if op_cost.ndim == 2:
            op_cost = np.repeat(op_cost[:, :, None], horizon, axis=2)
    else:
        if cost_per_step is None:
            raise ScenarioFormatError("missing field 'op_cost' (or 'cost_per_step')")
        op_cost = np.repeat((float(cost_per_step) * travel_time.astype(np.float64))[:, :, None],
                            horizon, axis=2)

    dims = data.get("dims", {})
    for name, arr in (("ref_demand", ref_demand), ("ref_price", ref_price), ("op_cost", op_cost)):
        if name in dims and tuple(dims[name]) != arr.shape:
            raise ScenarioFormatError(f"declared dims for {name} {dims[name]} != data shape {list(arr.shape)}")

    s = Scenario(
        n_regions=n,
        adjacency=adjacency,
        travel_time=travel_time,
        op_cost=op_cost,
        ref_demand=ref_demand,
        ref_price=ref_price,
        region_wage_mean=np.asarray(_require(data, "region_wage_mean"), dtype=np.float64),
        wage_sigma=float(_require(data, "wage_sigma")),
        fleet_sizes=tuple(int(m) for m in _require(data, "fleet_sizes")),
        horizon=horizon,
        step_minutes=int(data.get("step_minutes", 3)),
        max_wait_steps=int(data.get("max_wait_steps", 2)),
        price_cap=float(data.get("price_cap", 2.0)),
        time_disutility=float(data.get("time_disutility", 0.71)),
        base_utility=None if data.get("base_utility") is None else float(data["base_utility"]),
        cost_per_step=None if cost_per_step is None else float(cost_per_step),
    )
    violations = validate_scenario(s)
    if violations:
        raise ScenarioValidationError("; ".join(violations))
    return s


def load_scenario(path: str | Path) -> Scenario:
    """Load and validate a scenario file; raises on parse or invariant failures."""
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ScenarioFormatError(f"cannot parse scenario file {path}: {e}") from e
    if not isinstance(data, dict):
        raise ScenarioFormatError("scenario file must hold a JSON object")
    return _build(data)


def write_scenario(s: Scenario, path: str | Path) -> None:
    """Write a validated scenario; load_scenario(write_scenario(s)) round-trips bit-exactly."""
    violations = validate_scenario(s)
    if violations:
        raise ScenarioValidationError("; ".join(violations))
    doc = {
        "format": FORMAT_TAG,
        "units": {
            "currency": "USD",
            "wage": "USD/hour",
            "time": f"steps of {s.step_minutes} minutes",
        },
        "n_regions": s.n_regions,
        "horizon": s.horizon,
        "step_minutes": s.step_minutes,
        "max_wait_steps": s.max_wait_steps,
        "price_cap": s.price_cap,
        "time_disutility": s.time_disutility,
        "base_utility": s.base_utility,
        "wage_sigma": s.wage_sigma,
        "region_wage_mean": s.region_wage_mean.tolist(),
        "fleet_sizes": list(s.fleet_sizes),
        "adjacency": s.adjacency.astype(int).tolist(),
        "travel_time": s.travel_time.tolist(),
        "cost_per_step": s.cost_per_step,
        "op_cost": s.op_cost.tolist(),
        "ref_demand": s.ref_demand.tolist(),
        "ref_price": s.ref_price.tolist(),
        "dims": {
            "adjacency": [s.n_regions, s.n_regions],
            "travel_time": [s.n_regions, s.n_regions],
            "op_cost": list(s.op_cost.shape),
            "ref_demand": list(s.ref_demand.shape),
            "ref_price": list(s.ref_price.shape),
        },
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def _ring_with_chords(n: int) -> np.ndarray:
    adj = np.zeros((n, n), dtype=bool)
    for i in range(n):
        adj[i, (i + 1) % n] = adj[(i + 1) % n, i] = True
    if n >= 4:
        half = n // 2
        for i in range(half):
            j = (i + half) % n
            if not adj[i, j] and i != j:
                adj[i, j] = adj[j, i] = True
    return adj


def generate_synthetic_scenario(
    n_regions: int,
    horizon: int,
    demand_cv: float,
    seed: int,
    *,
    demand_per_region: float = 30.0,
    total_fleet: int | None = None,
    fleet_split: tuple[int, int] | None = None,
    base_fare: float = 4.0,
    fare_per_step: float = 3.0,
    cost_per_step: float = 1.0,
    wage_range: tuple[float, float] = (16.0, 24.0),
    wage_sigma: float = 0.25,
) -> Scenario:
    """Ring-plus-chords world whose regional outbound demand hits demand_cv exactly.

    Deterministic in its arguments. The coefficient of variation is the
    population std/mean of per-region total outbound demand.
    """
    if n_regions < 2:
        raise ValueError("n_regions must be >= 2")
    if demand_cv < 0:
        raise ValueError("demand_cv must be >= 0")
    cv_max = float(np.sqrt(n_regions - 1))
    if demand_cv > cv_max - 0.05:
        raise ValueError(
            f"demand_cv {demand_cv} unreachable with {n_regions} regions (max {cv_max:.3f})")

    rng = np.random.default_rng(seed)
    adjacency = _ring_with_chords(n_regions)
    edge_time = np.where(adjacency, 1, 0).astype(np.int64)
    travel_time = shortest_path_closure(adjacency, edge_time)

    # Regional totals: blend a unit-mean rough pattern into uniformity so the
    # sample CV equals demand_cv exactly while every total stays positive.
    if demand_cv == 0:
        totals = np.full(n_regions, demand_per_region)
    else:
        sigma0 = 1.0
        for _ in range(12):
            raw = rng.lognormal(mean=0.0, sigma=sigma0, size=n_regions)
            u = raw / raw.mean()
            cv0 = float(u.std())
            if cv0 >= demand_cv:
                break
            sigma0 = min(sigma0 * 1.5, 4.0)
        else:
            raise ValueError(f"demand_cv {demand_cv} unreachable with {n_regions} regions")
        lam = demand_cv / cv0
        totals = demand_per_region * (1.0 - lam + lam * u)

    dest_share = np.zeros((n_regions, n_regions))
    for i in range(n_regions):
        share = rng.dirichlet(4.0 * np.ones(n_regions - 1))
        dest_share[i, [j for j in range(n_regions) if j != i]] = share
    time_share = rng.dirichlet(20.0 * np.ones(horizon))

    per_episode = totals[:, None] * dest_share           # (N, N), sums to totals per row
    ref_demand = per_episode[:, :, None] * time_share[None, None, :]

    price_mult = rng.uniform(0.9, 1.1, size=n_regions)
    ref_price_2d = (base_fare + fare_per_step * travel_time) * price_mult[:, None]
    np.fill_diagonal(ref_price_2d, 0.0)
    ref_price = np.repeat(ref_price_2d[:, :, None], horizon, axis=2)

    op_cost = np.repeat((cost_per_step * travel_time.astype(np.float64))[:, :, None],
                        horizon, axis=2)

    wages = rng.uniform(wage_range[0], wage_range[1], size=n_regions)

    if total_fleet is None:
        total_fleet = max(4, int(round(0.12 * totals.sum())))
    if fleet_split is None:
        fleet_split = (total_fleet // 2, total_fleet - total_fleet // 2)

    s = Scenario(
        n_regions=n_regions,
        adjacency=adjacency,
        travel_time=travel_time,
        op_cost=op_cost,
        ref_demand=ref_demand,
        ref_price=ref_price,
        region_wage_mean=wages,
        wage_sigma=wage_sigma,
        fleet_sizes=tuple(fleet_split),
        horizon=horizon,
        cost_per_step=cost_per_step,
    )
    violations = validate_scenario(s)
    if violations:
        raise ScenarioValidationError("; ".join(violations))
    return s


def regional_demand_cv(s: Scenario) -> float:
    """Population std/mean of per-region total outbound reference demand."""
    totals = s.ref_demand.sum(axis=(1, 2))
    return float(totals.std() / totals.mean())


def split_fleet(total: int, ratio: tuple[int, int]) -> tuple[int, int]:
    """Split a total fleet by an a:b ratio, first operator rounded down."""
    a, b = ratio
    if a < 0 or b < 0 or a + b == 0:
        raise ValueError(f"bad fleet split ratio {ratio}")
    first = int(total * a / (a + b))
    return first, total - first
