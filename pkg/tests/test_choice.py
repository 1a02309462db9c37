import math

import numpy as np
import pytest

from momarket import (ChoiceContext, calibrate_base_utility,
                      choice_probabilities, expected_acceptance,
                      generate_requests, sample_wage, utility)
from momarket.choice import draw_requests
from momarket.market import compute_fares
from momarket.scenario import generate_synthetic_scenario


def ctx(fares, hours, mean_wage=20.0, base=0.0, time_w=0.71):
    return ChoiceContext(fares=tuple(fares), travel_time_hours=hours,
                         mean_wage=mean_wage, base_utility=base,
                         time_disutility=time_w)


class TestUtility:
    def test_all_terms_vanish(self):
        assert utility(ctx([0.0], 0.0), wage=20.0, option=0) == 0.0

    def test_direct_arithmetic(self):
        # base 5, wage 20 = mean wage, 0.1h trip, fare 10:
        # 5 - 0.71*20*0.1 - (20/20)*10 = -6.42
        u = utility(ctx([10.0], 0.1, mean_wage=20.0, base=5.0), wage=20.0, option=0)
        assert u == pytest.approx(-6.42, abs=1e-12)

    def test_time_term_linear_in_wage(self):
        u1 = utility(ctx([0.0], 0.2), wage=10.0, option=0)
        u2 = utility(ctx([0.0], 0.2), wage=20.0, option=0)
        assert u2 == pytest.approx(2 * u1)


class TestChoiceProbabilities:
    def test_symmetric(self):
        p = choice_probabilities([0.0, 0.0, 0.0])
        assert np.allclose(p, 1 / 3)

    def test_dominated_option(self):
        p = choice_probabilities([0.0, -1e9, 0.0])
        assert p[1] == pytest.approx(0.0, abs=1e-300)
        assert p[0] == pytest.approx(0.5) and p[2] == pytest.approx(0.5)

    def test_closed_form_logistic(self):
        p = choice_probabilities([1.0, 0.0])
        assert p[0] == pytest.approx(math.e / (1 + math.e), abs=1e-15)
        assert p[1] == pytest.approx(1 / (1 + math.e), abs=1e-15)

    def test_valid_distribution_for_any_finite_utilities(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            u = rng.uniform(-1e6, 1e6, size=rng.integers(2, 6))
            p = choice_probabilities(u)
            assert abs(p.sum() - 1.0) <= 1e-12
            assert np.all(p >= 0)

    def test_identical_fares_give_equal_operator_shares(self):
        c = ctx([7.5, 7.5], 0.05, base=3.0)
        u0 = utility(c, 18.0, 0)
        u1 = utility(c, 18.0, 1)
        p = choice_probabilities([u0, u1, 0.0])
        assert p[0] == pytest.approx(p[1], abs=1e-15)


class TestSampleWage:
    def test_degenerate_sigma_zero(self, tiny_scenario):
        from dataclasses import replace
        s = replace(tiny_scenario, wage_sigma=0.0)
        rng = np.random.default_rng(1)
        assert sample_wage(s, 0, rng) == pytest.approx(s.region_wage_mean[0])

    def test_lognormal_mean_parameterization(self):
        # Monte-Carlo check of the (mean, sigma) parameterization
        rng = np.random.default_rng(7)
        mean, sigma = 17.76, 0.25
        mu = np.log(mean) - 0.5 * sigma ** 2
        draws = np.exp(mu + sigma * rng.standard_normal(1_000_000))
        assert abs(draws.mean() - mean) / mean < 0.01

    def test_region_means_ordered(self, small_scenario):
        from dataclasses import replace
        s = replace(small_scenario,
                    region_wage_mean=np.array([10.0, 30.0, 20.0, 20.0]))
        rng = np.random.default_rng(3)
        lo = np.mean([sample_wage(s, 0, rng) for _ in range(4000)])
        hi = np.mean([sample_wage(s, 1, rng) for _ in range(4000)])
        assert lo < hi


class TestGenerateRequests:
    def test_zero_demand_gives_empty_pool(self, tiny_scenario):
        from dataclasses import replace
        s = replace(tiny_scenario, ref_demand=np.zeros_like(tiny_scenario.ref_demand))
        fares = [compute_fares(tiny_scenario, np.full(2, 0.5), 0)] * 2
        assert generate_requests(s, 0, fares, np.random.default_rng(0)) == []

    def test_prohibitive_fares_send_everyone_outside(self, small_scenario):
        n = small_scenario.n_regions
        fares = [np.full((n, n), 1e9)] * 2
        out = generate_requests(small_scenario, 0, fares, np.random.default_rng(5))
        assert out == []

    def test_reproducible_bit_exact(self, small_scenario):
        n = small_scenario.n_regions
        fares = [compute_fares(small_scenario, np.full(n, 0.5), 0)] * 2
        a = generate_requests(small_scenario, 0, fares, np.random.default_rng(9))
        b = generate_requests(small_scenario, 0, fares, np.random.default_rng(9))
        assert a == b

    def test_symmetric_duopoly_shares_match_closed_form(self, high_cv_scenario):
        # Monte-Carlo over >= 1e5 pooled passengers vs the closed-form
        # per-OD expectation: each operator books half of the accepted share.
        from momarket.choice import _wage_quadrature
        s = high_cv_scenario
        n = s.n_regions
        fares = [compute_fares(s, np.full(n, 0.5), 0)] * 2
        rng = np.random.default_rng(17)
        pools = np.zeros((n, n))
        booked = np.zeros((2, n, n))
        draws = 0
        while draws < 120_000:
            passengers, drawn = draw_requests(s, 0, fares, rng)
            draws += drawn
            pools += 2.0 * s.ref_demand[:, :, 0]   # expected pool per draw round
            for p in passengers:
                booked[p.operator, p.origin, p.destination] += 1
        # closed-form per-OD share of one operator, wage integral by quadrature
        share0 = np.zeros((n, n))
        for i in range(n):
            wages, weights = _wage_quadrature(s.region_wage_mean[i], s.wage_sigma)
            for j in range(n):
                if i == j:
                    continue
                hours = s.travel_time[i, j] * s.step_minutes / 60.0
                u = (s.base_utility - s.time_disutility * wages * hours
                     - (s.mean_wage / wages) * fares[0][i, j])
                e = np.exp(u)
                share0[i, j] = float(np.dot(weights, e / (2 * e + 1.0)))
        for i in range(n):
            for j in range(n):
                if i == j or pools[i, j] < 2000:
                    continue  # skip pairs with too few samples for a tight bound
                for o in range(2):
                    mc = booked[o, i, j] / pools[i, j]
                    se = np.sqrt(share0[i, j] * (1 - share0[i, j]) / pools[i, j])
                    assert mc == pytest.approx(share0[i, j], abs=max(5 * se, 0.01))
        # overall acceptance and an even operator split
        rate = booked.sum() / pools.sum()
        assert rate == pytest.approx(expected_acceptance(s, 2), abs=0.01)
        assert booked[0].sum() / booked.sum() == pytest.approx(0.5, abs=0.01)

    def test_passenger_fields(self, small_scenario):
        n = small_scenario.n_regions
        fares = [compute_fares(small_scenario, np.full(n, 0.5), 3)] * 2
        out = generate_requests(small_scenario, 3, fares, np.random.default_rng(2))
        assert out, "expected a nonempty pool"
        seqs = [p.seq for p in out]
        assert seqs == sorted(seqs)
        for p in out:
            assert p.origin != p.destination
            assert p.wage > 0
            assert p.operator in (0, 1)
            assert p.arrival_step == 3
            assert p.deadline_step == 3 + small_scenario.max_wait_steps


class TestCalibration:
    def test_monopoly_logistic_root_is_zero(self, tiny_scenario):
        # With zero fares and no time disutility the share is sigmoid(base),
        # so the monopoly calibration root is exactly 0.
        from dataclasses import replace
        s = replace(tiny_scenario, ref_price=np.zeros_like(tiny_scenario.ref_price),
                    time_disutility=0.0, base_utility=None)
        assert calibrate_base_utility(s, 1) == pytest.approx(0.0, abs=1e-3)
        # duopoly: 2e^b/(2e^b+1) = 1/2  =>  b = -ln 2
        assert calibrate_base_utility(s, 2) == pytest.approx(-math.log(2), abs=1e-3)

    def test_sf_shaped_rejection_rate_by_simulation(self):
        s = generate_synthetic_scenario(10, 20, 1.3, seed=5, total_fleet=374)
        s = s.with_base_utility(calibrate_base_utility(s, 2))
        n = s.n_regions
        rng = np.random.default_rng(100)
        pool = 0
        accepted = 0
        t = 0
        while pool < 100_000:
            fares = [compute_fares(s, np.full(n, 0.5), t)] * 2
            passengers, drawn = draw_requests(s, t, fares, rng)
            pool += drawn
            accepted += len(passengers)
            t = (t + 1) % s.horizon
        rejection = 1.0 - accepted / pool
        assert 0.49 <= rejection <= 0.51

    def test_share_drops_when_fares_rise(self, high_cv_scenario):
        at_ref = expected_acceptance(high_cv_scenario, 2, price_scalar=0.5)
        raised = expected_acceptance(high_cv_scenario, 2, price_scalar=0.6)
        assert at_ref == pytest.approx(0.5, abs=1e-3)
        assert raised < 0.5

    def test_share_strictly_decreasing_on_grid(self, high_cv_scenario):
        grid = np.linspace(0.05, 1.0, 25)
        values = [expected_acceptance(high_cv_scenario, 2, price_scalar=g) for g in grid]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_bracket_failure_raises(self, tiny_scenario):
        from dataclasses import replace
        # astronomically expensive trips: no base utility in [-50, 50] reaches 50%
        s = replace(tiny_scenario, ref_price=tiny_scenario.ref_price * 1e6,
                    base_utility=None)
        with pytest.raises(ValueError, match="bracket"):
            calibrate_base_utility(s, 2)
