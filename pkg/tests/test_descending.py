import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from procure.descending import (
    CostScaledDemand,
    DemandStateError,
    ExactDemand,
    FamilyExactDemand,
    LexicographicSchedule,
    RoundRobinSchedule,
    ScriptedSchedule,
    cost_scaled_demand,
    random_scripted_schedules,
    run_descending,
    run_descending_from_online,
)
from procure.online import order_random
from procure.scoring import UnsupportedRuleError, make_rule
from procure.sealed_bid import exact_opt
from procure.valuation import AdditiveOracle, AdversarialFamilyOracle
from procure.verification import lowerbound_report
from conftest import brute_force_opt, random_oracle


class TestExactDemand:
    def test_tie_goes_to_smaller_set(self):
        oracle = AdditiveOracle([10.0])
        demand = ExactDemand(oracle)
        assert demand(frozenset({0}), [10.0], None) == frozenset()
        assert demand(frozenset({0}), [9.5], None) == frozenset({0})

    def test_family_initial_prices_exclude_specials(self):
        oracle = AdversarialFamilyOracle(3)
        demand = ExactDemand(oracle)
        prices = [oracle.marginal(i, ()) for i in range(oracle.n)]
        demanded = demand(frozenset(range(oracle.n)), prices, None)
        assert not ({3, 4} <= demanded)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6))
    def test_matches_enumeration(self, seed):
        oracle, _ = random_oracle(seed, 2, 7)
        rng = np.random.default_rng(seed)
        prices = [float(rng.uniform(0, 1.2 * max(oracle.marginal(i, ()), 1.0))) for i in range(oracle.n)]
        active = frozenset(int(i) for i in rng.choice(oracle.n, size=max(1, oracle.n - 1), replace=False))
        demanded = ExactDemand(oracle)(active, prices, None)
        brute, _ = brute_force_opt(oracle, prices, prefer_small=True, candidates=active)
        assert tuple(sorted(demanded)) == brute


class TestFamilyExactDemand:
    @pytest.mark.parametrize("L", [3, 4])
    def test_agrees_with_generic_exact_demand(self, L):
        oracle = AdversarialFamilyOracle(L)
        n = oracle.n
        generic = ExactDemand(oracle)
        analytic = FamilyExactDemand(oracle)
        rng = np.random.default_rng(L)
        price_grids = [[oracle.marginal(i, ()) for i in range(n)]]
        for _ in range(60):
            price_grids.append([float(rng.uniform(0, L + 1)) for _ in range(n)])
        for prices in price_grids:
            for r in (n, n - 1, n - 2):
                for active in itertools.combinations(range(n), r):
                    a = frozenset(active)
                    assert analytic(a, prices, None) == generic(a, prices, None), (prices, active)


class TestCostScaledDemand:
    def test_first_call_is_empty(self):
        oracle = AdditiveOracle([10.0])
        state = CostScaledDemand(oracle)
        assert cost_scaled_demand(state, None, {0}, [4.0]) == frozenset()

    def test_adds_when_marginal_exceeds_twice_price(self):
        oracle = AdditiveOracle([10.0])
        state = CostScaledDemand(oracle)
        assert cost_scaled_demand(state, 0, {0}, [4.0]) == frozenset({0})

    def test_keeps_when_marginal_below_twice_price(self):
        oracle = AdditiveOracle([10.0])
        state = CostScaledDemand(oracle)
        assert cost_scaled_demand(state, 0, {0}, [6.0]) == frozenset()

    def test_state_reuse_rejected(self):
        oracle = AdditiveOracle([10.0])
        state = CostScaledDemand(oracle)
        run_descending(oracle, [3.0], state, LexicographicSchedule(), 0.5)
        with pytest.raises(DemandStateError):
            run_descending(oracle, [3.0], state, LexicographicSchedule(), 0.5)


class TestRunDescending:
    def test_single_seller_exact_oracle_trace(self):
        oracle = AdditiveOracle([10.0])
        out = run_descending(oracle, [3.0], ExactDemand(oracle), LexicographicSchedule(), 0.5)
        assert out.winners == (0,)
        assert out.payments == (9.5,)

    def test_all_bids_above_initial_marginals(self):
        oracle = AdditiveOracle([2.0, 3.0])
        out = run_descending(oracle, [10.0, 10.0], ExactDemand(oracle), LexicographicSchedule(), 0.25)
        assert out.winners == ()
        assert out.payments == (0.0, 0.0)

    def test_invalid_epsilon(self):
        oracle = AdditiveOracle([1.0])
        with pytest.raises(ValueError):
            run_descending(oracle, [0.5], ExactDemand(oracle), LexicographicSchedule(), 0.0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6))
    def test_ir_by_construction(self, seed):
        oracle, costs = random_oracle(seed, 2, 8)
        eps = max(max(oracle.marginal(i, ()) for i in range(oracle.n)), 1.0) / 30.0
        out = run_descending(oracle, costs, CostScaledDemand(oracle), LexicographicSchedule(), eps)
        for i in out.winners:
            assert out.payments[i] >= costs[i]

    def test_round_robin_and_scripted_schedules_run(self):
        oracle, costs = random_oracle(7, 3, 6)
        eps = 0.5
        for schedule in [RoundRobinSchedule(oracle.n), ScriptedSchedule(range(oracle.n))]:
            out = run_descending(oracle, costs, CostScaledDemand(oracle), schedule, eps)
            assert all(out.payments[i] >= costs[i] for i in out.winners)


class TestCostScaledDescendingBound:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10**6))
    def test_cost_scaled_keeps_half_bound(self, seed):
        oracle, costs = random_oracle(seed, 2, 9)
        n = oracle.n
        eps = max(max(oracle.marginal(i, ()) for i in range(n)), 1.0) / 40.0
        w, _ = exact_opt(oracle, costs)
        f_opt, c_opt = oracle.value(w), sum(costs[i] for i in w)
        schedules = [LexicographicSchedule(), RoundRobinSchedule(n)] + random_scripted_schedules(n, 5, seed)
        for schedule in schedules:
            out = run_descending(oracle, costs, CostScaledDemand(oracle), schedule, eps)
            welfare = out.value - sum(costs[i] for i in out.winners)
            assert welfare >= 0.5 * f_opt - c_opt - n * eps - 1e-9

    def test_nas_under_cost_scaled(self):
        for seed in range(10):
            oracle, costs = random_oracle(seed + 60, 2, 9)
            eps = max(max(oracle.marginal(i, ()) for i in range(oracle.n)), 1.0) / 40.0
            out = run_descending(oracle, costs, CostScaledDemand(oracle), LexicographicSchedule(), eps)
            assert out.total_payment <= out.value + 1e-9


class TestFamilyReproduction:
    @pytest.mark.parametrize("L", [10, 50])
    def test_exact_collapses_cost_scaled_survives(self, L):
        res = lowerbound_report(L, epsilon=1.0 / (2 * L))
        assert res["exact_oracle_welfare"] <= 2.0 + 1e-9
        assert res["cost_scaled_welfare"] >= L / 2.0 - 1.0 - 1e-9
        assert res["opt_welfare"] == L - 1

    def test_opt_welfare_matches_brute_force_at_small_l(self):
        oracle = AdversarialFamilyOracle(10)
        _, welfare = exact_opt(oracle, oracle.bids())
        assert welfare == pytest.approx(9.0)

    def test_epsilon_precondition(self):
        with pytest.raises(ValueError):
            lowerbound_report(10, epsilon=0.2)


class TestOnlineConversion:
    def test_single_seller_admitted_at_half(self):
        oracle = AdditiveOracle([10.0])
        out = run_descending_from_online(make_rule("cost-scaled", 1), oracle, [3.0], (0,))
        assert out.winners == (0,)
        assert out.payments == (5.0,)

    def test_rejection_branch(self):
        oracle = AdditiveOracle([10.0])
        out = run_descending_from_online(make_rule("cost-scaled", 1), oracle, [6.0], (0,))
        assert out.winners == ()
        assert out.payments == (0.0,)

    def test_round_indexed_rule_rejected(self):
        oracle = AdditiveOracle([1.0])
        with pytest.raises(UnsupportedRuleError):
            run_descending_from_online(make_rule("distorted", 1), oracle, [0.1], (0,))

    @settings(max_examples=80, deadline=None)
    @given(st.integers(0, 10**6), st.sampled_from(("greedy-margin", "greedy-rate", "roi", "cost-scaled")))
    def test_matches_posted_price(self, seed, rule_name):
        from procure.online import run_posted_price

        oracle, costs = random_oracle(seed, 2, 10)
        rule = make_rule(rule_name, oracle.n)
        order = order_random(oracle.n, seed + 2)
        posted = run_posted_price(rule, oracle, costs, order)
        converted = run_descending_from_online(rule, oracle, costs, order)
        assert posted.winners == converted.winners
        assert posted.payments == converted.payments

    def test_epsilon_stepping_demo_mode(self):
        oracle = AdditiveOracle([10.0])
        out = run_descending_from_online(make_rule("cost-scaled", 1), oracle, [3.0], (0,), step_epsilon=0.75)
        assert out.winners == (0,)
        assert 5.0 - 0.75 < out.payments[0] <= 5.0 + 1e-12
