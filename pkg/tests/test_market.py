from dataclasses import replace

import numpy as np
import pytest

from momarket import (Action, EngineFault, MarketEnv, NoControlPolicy,
                      OperatorState, UniformDistributionPolicy, compute_fares,
                      compute_reward, expire_waiting, match_passengers,
                      observe, step_vehicles)
from momarket.choice import Passenger
from momarket.scenario import Scenario, generate_synthetic_scenario
from momarket.choice import calibrate_base_utility


def make_op(n=2, idle=(2, 1), horizon=3, fleet=None):
    idle = np.array(idle, dtype=np.int64)
    return OperatorState(
        fleet=int(idle.sum()) if fleet is None else fleet,
        idle=idle,
        arrivals=np.zeros((n, horizon), dtype=np.int64),
        queues=[[] for _ in range(n)],
        last_prices=np.zeros((n, n)),
        last_demand=np.zeros(n, dtype=np.int64),
    )


def pax(origin, dest, arrival, seq, wait_cap=2, operator=0):
    return Passenger(origin=origin, destination=dest, arrival_step=arrival,
                     wage=20.0, operator=operator,
                     deadline_step=arrival + wait_cap, seq=seq)


TAU = np.array([[0, 1], [1, 0]])


class TestFares:
    def test_reference_recovered_at_half(self, tiny_scenario):
        s = replace(tiny_scenario, ref_price=np.full_like(tiny_scenario.ref_price, 8.4))
        fares = compute_fares(s, np.full(2, 0.5), 0)
        assert np.allclose(fares, 8.4)

    def test_cap_at_one(self, tiny_scenario):
        s = replace(tiny_scenario, ref_price=np.full_like(tiny_scenario.ref_price, 8.4))
        assert np.allclose(compute_fares(s, np.full(2, 1.0), 0), 16.8)

    def test_arithmetic(self, tiny_scenario):
        s = replace(tiny_scenario, ref_price=np.full_like(tiny_scenario.ref_price, 10.0))
        assert np.allclose(compute_fares(s, np.full(2, 0.75), 0), 15.0)

    def test_out_of_range_rejected(self, tiny_scenario):
        with pytest.raises(ValueError):
            compute_fares(tiny_scenario, np.array([0.0, 0.5]), 0)
        with pytest.raises(ValueError):
            compute_fares(tiny_scenario, np.array([1.1, 0.5]), 0)


class TestMatching:
    def test_fcfs_with_one_vehicle(self):
        op = make_op(idle=(1, 0))
        op.queues[0] = [pax(0, 1, 0, 0), pax(0, 1, 0, 1), pax(0, 1, 0, 2)]
        served, waits = match_passengers(op, 0, TAU, 3)
        assert served[0, 1] == 1
        assert [p.seq for p in op.queues[0]] == [1, 2]
        assert waits == [0]

    def test_no_idle_leaves_queues(self):
        op = make_op(idle=(0, 0))
        op.queues[0] = [pax(0, 1, 0, 0)]
        served, waits = match_passengers(op, 0, TAU, 3)
        assert served.sum() == 0 and waits == []
        assert len(op.queues[0]) == 1

    def test_arrival_order_priority(self):
        # queue holds arrivals from steps 4, 2, 3 out of order; two vehicles
        op = make_op(idle=(2, 0))
        op.queues[0] = [pax(0, 1, 4, 10), pax(0, 1, 2, 3), pax(0, 1, 3, 7)]
        served, waits = match_passengers(op, 4, TAU, 3)
        assert served[0, 1] == 2
        assert [p.arrival_step for p in op.queues[0]] == [4]
        assert sorted(waits) == [3, 6]  # arrived at 2 and 3, served at 4

    def test_wait_minutes_recorded(self):
        op = make_op(idle=(1, 0))
        op.queues[0] = [pax(0, 1, 1, 0)]
        _, waits = match_passengers(op, 3, TAU, 3)
        assert waits == [6]

    def test_monotone_in_idle(self):
        for extra in range(4):
            op = make_op(idle=(extra, 0))
            op.queues[0] = [pax(0, 1, 0, s) for s in range(3)]
            served, _ = match_passengers(op, 0, TAU, 3)
            assert served.sum() == min(extra, 3)


class TestExpiry:
    def test_past_deadline_expired(self):
        op = make_op()
        op.queues[0] = [pax(0, 1, arrival=0, seq=0)]  # deadline 2
        assert expire_waiting(op, 2) == 1
        assert op.queues[0] == []

    def test_fresh_passenger_retained(self):
        op = make_op()
        op.queues[0] = [pax(0, 1, arrival=2, seq=0)]
        assert expire_waiting(op, 2) == 0
        assert len(op.queues[0]) == 1

    def test_mixed_queue_filters_exactly(self):
        op = make_op()
        members = [pax(0, 1, arrival=a, seq=i) for i, a in enumerate([0, 1, 2, 3, 4])]
        op.queues[0] = list(members)
        # at t=4 deadlines are 2,3,4,5,6: the first three are <= 4
        assert expire_waiting(op, 4) == 3
        assert [p.arrival_step for p in op.queues[0]] == [3, 4]


class TestVehicleStep:
    def test_dispatch_and_land(self):
        op = make_op(idle=(5, 0), fleet=5)
        op.idle[0] -= 2
        op.arrivals[1, 0] += 2   # landing next step
        step_vehicles(op)
        assert op.idle.tolist() == [3, 2]
        assert op.arrivals.sum() == 0
        assert op.total_vehicles() == 5


class TestRewards:
    def test_zero(self, tiny_scenario):
        z = np.zeros((2, 2), dtype=np.int64)
        fares = compute_fares(tiny_scenario, np.full(2, 0.5), 0)
        reward, reb = compute_reward(tiny_scenario, z, z, fares, 0)
        assert reward == 0.0 and reb == 0.0

    def test_one_trip_one_rebalance(self, tiny_scenario):
        s = replace(tiny_scenario,
                    ref_price=np.full_like(tiny_scenario.ref_price, 5.0),
                    op_cost=np.full_like(tiny_scenario.op_cost, 3.0))
        served = np.array([[0, 1], [0, 0]])
        reb = np.array([[0, 0], [1, 0]])
        fares = compute_fares(s, np.full(2, 1.0), 0)  # fare 10
        reward, reb_cost = compute_reward(s, served, reb, fares, 0)
        assert reward == pytest.approx(10 - 3 - 3)
        assert reb_cost == pytest.approx(3.0)

    def test_pure_rebalancing_negative(self, tiny_scenario):
        reb = np.array([[0, 2], [0, 0]])
        fares = compute_fares(tiny_scenario, np.full(2, 0.5), 0)
        reward, _ = compute_reward(tiny_scenario, np.zeros((2, 2), dtype=int), reb, fares, 0)
        assert reward < 0


def hand_traced_scenario():
    """2 regions, exactly one deterministic passenger 0->1 at step 0."""
    n, t = 2, 2
    demand = np.zeros((n, n, t))
    demand[0, 1, 0] = 0.0  # pool drawn below via a huge base utility and rate
    return Scenario(
        n_regions=n,
        adjacency=np.array([[False, True], [True, False]]),
        travel_time=np.array([[0, 1], [1, 0]]),
        op_cost=np.full((n, n, t), 2.0),
        ref_demand=demand,
        ref_price=np.full((n, n, t), 6.0),
        region_wage_mean=np.array([20.0, 20.0]),
        wage_sigma=0.0,
        fleet_sizes=(1, 0),
        horizon=t,
        base_utility=50.0,
    )


class TestAdvance:
    def test_zero_demand_zero_flow(self):
        s = hand_traced_scenario()
        env = MarketEnv(s, n_operators=1, seed=1)
        out = env.advance([Action(price_scalars=np.full(2, 0.5), weights=None)])[0]
        assert out.served.sum() == 0
        assert out.rebalanced.sum() == 0
        assert out.reward == 0.0

    def test_hand_traced_single_passenger(self):
        # demand rate chosen so Poisson(2*d) is enormous, base utility huge:
        # every pool member books; idle=1 so exactly one passenger is served.
        s = hand_traced_scenario()
        d = np.array(s.ref_demand)
        d[0, 1, 0] = 4.0
        s = replace(s, ref_demand=d)
        env = MarketEnv(s, n_operators=1, seed=1)
        out = env.advance([Action(price_scalars=np.full(2, 0.5), weights=None)])[0]
        assert out.served[0, 1] == 1
        # fare = 2 * 0.5 * 6 = 6, cost 2 -> reward 4
        assert out.reward == pytest.approx(6.0 - 2.0)
        # travel time is one step, so the vehicle lands at region 1 for t=1
        assert env.operators[0].idle.tolist() == [0, 1]
        assert env.operators[0].arrivals.sum() == 0
        assert env.operators[0].total_vehicles() == 1

    def test_identical_seeds_identical_streams(self, high_cv_scenario):
        results = []
        for _ in range(2):
            env = MarketEnv(high_cv_scenario, n_operators=2, seed=77)
            ud = UniformDistributionPolicy()
            rng = np.random.default_rng(0)
            stream = []
            while not env.done:
                acts = [ud.act(observe(env, o), rng) for o in range(2)]
                outs = env.advance(acts)
                stream.append([(o.reward, o.served.sum(), o.rebalanced.sum(),
                                o.expired, tuple(o.wait_minutes)) for o in outs])
            results.append(stream)
        assert results[0] == results[1]

    def test_reward_recomputes_exactly(self, high_cv_scenario):
        s = high_cv_scenario
        env = MarketEnv(s, n_operators=2, seed=5)
        ud = UniformDistributionPolicy()
        rng = np.random.default_rng(0)
        t = 0
        while not env.done:
            acts = [ud.act(observe(env, o), rng) for o in range(2)]
            outs = env.advance(acts)
            for o, out in enumerate(outs):
                fares = compute_fares(s, out.price_scalars, t)
                expected, reb = compute_reward(s, out.served, out.rebalanced, fares, t)
                assert out.reward == expected
                assert out.reb_cost == reb
            t += 1

    def test_conservation_and_queue_dynamics(self, high_cv_scenario):
        env = MarketEnv(high_cv_scenario, n_operators=2, seed=9)
        nc = NoControlPolicy()
        ud = UniformDistributionPolicy()
        rng = np.random.default_rng(0)
        prev_queue = [op.queue_lengths().sum() for op in env.operators]
        while not env.done:
            acts = [nc.act(observe(env, 0), rng), ud.act(observe(env, 1), rng)]
            outs = env.advance(acts)
            for o, op in enumerate(env.operators):
                assert op.total_vehicles() == op.fleet
                out = outs[o]
                q_now = op.queue_lengths().sum()
                assert q_now == (prev_queue[o] + out.assigned.sum()
                                 - out.served.sum() - out.expired)
                prev_queue[o] = q_now
                # nobody past deadline stays queued
                for i, queue in enumerate(op.queues):
                    for p in queue:
                        assert p.deadline_step > env.t - 1

    def test_advance_past_horizon_faults(self, tiny_scenario):
        env = MarketEnv(tiny_scenario, n_operators=1, seed=0)
        a = Action(price_scalars=np.full(2, 0.5), weights=None)
        while not env.done:
            env.advance([a])
        with pytest.raises(EngineFault):
            env.advance([a])

    def test_symmetric_duopoly_expected_outcomes(self, tiny_scenario):
        # Same policy, same fleets, shared market: per-operator means agree
        # within 2% over 10^4 paired episodes.
        env = MarketEnv(tiny_scenario, n_operators=2, seed=0)
        ud = UniformDistributionPolicy()
        rng = np.random.default_rng(0)
        totals = np.zeros(2)
        served = np.zeros(2)
        for ep in range(10_000):
            env.reset(ep)
            while not env.done:
                acts = [ud.act(observe(env, o), rng) for o in range(2)]
                outs = env.advance(acts)
                for o, out in enumerate(outs):
                    totals[o] += out.reward
                    served[o] += out.served.sum()
        assert abs(totals[0] - totals[1]) / max(abs(totals.mean()), 1e-9) < 0.02
        assert abs(served[0] - served[1]) / served.mean() < 0.02
