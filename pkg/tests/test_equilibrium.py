import math
from dataclasses import replace

import numpy as np
import pytest

from fogmarket import (DegenerateInstanceError, MarketInstance, ServiceSpec,
                       pareto_check, solve_eg, solve_geg, verify_equilibrium)
from conftest import make_instance, random_instance


def rel_diff(a, b):
    return np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a)))


class TestGoldenSingleNode:
    def test_geg(self, appendix_f_instance):
        sol = solve_geg(appendix_f_instance)
        assert sol.prices[0, 0] == pytest.approx(1.25, abs=1e-3)
        assert sol.utilities == pytest.approx([1.0, 8.0], abs=1e-3)
        assert sol.allocation.ravel() == pytest.approx([0.2, 0.8], abs=1e-3)
        assert sol.surplus[0] == pytest.approx(0.75, abs=1e-3)
        assert sol.meta.converged

    def test_eg(self, appendix_f_instance):
        sol = solve_eg(appendix_f_instance)
        assert sol.prices[0, 0] == pytest.approx(2.0, abs=1e-3)
        assert sol.utilities == pytest.approx([1.0, 5.0], abs=1e-3)
        assert sol.allocation.ravel() == pytest.approx([0.5, 0.5], abs=1e-3)

    def test_verifier_accepts_geg(self, appendix_f_instance):
        report = verify_equilibrium(appendix_f_instance,
                                    solve_geg(appendix_f_instance))
        assert report.ok

    def test_verifier_flags_eg_waste(self, appendix_f_instance):
        report = verify_equilibrium(appendix_f_instance,
                                    solve_eg(appendix_f_instance))
        assert report.budget.passed
        assert report.clearing.passed
        assert report.satisfaction.passed
        assert report.market_equilibrium
        assert not report.non_wastefulness.passed
        assert not report.ok

    def test_third_equilibrium_point(self, appendix_f_instance):
        # another market-clearing point: neither program's optimum
        x = np.array([[[0.375]], [[0.625]]])
        p = np.array([[1.6]])
        report = verify_equilibrium(appendix_f_instance, x, p)
        assert report.market_equilibrium
        assert not report.non_wastefulness.passed


class TestGoldenTwoNodes:
    def test_geg(self, appendix_g_instance):
        sol = solve_geg(appendix_g_instance)
        assert sol.prices.ravel() == pytest.approx([0.7843, 0.3137], abs=2e-3)
        assert sol.utilities == pytest.approx([1.0, 6.375], abs=1e-3)
        assert sol.allocation[0].ravel() == pytest.approx([0.125, 0.0], abs=1e-3)
        assert sol.allocation[1].ravel() == pytest.approx([0.875, 1.0], abs=1e-3)

    def test_eg(self, appendix_g_instance):
        sol = solve_eg(appendix_g_instance)
        assert sol.prices.ravel() == pytest.approx([3.0, 1.0], abs=1e-3)
        assert sol.utilities == pytest.approx([1.0, 2.0], abs=1e-3)

    def test_non_frugal_point_flagged(self, appendix_g_instance):
        x = np.array([[[0.0], [1.0]], [[1.0], [0.0]]])
        p = np.array([[1.0], [2.0]])
        report = verify_equilibrium(appendix_g_instance, x, p)
        assert report.budget.passed
        assert report.clearing.passed
        assert report.satisfaction.passed
        assert report.market_equilibrium
        assert not report.frugality.passed
        svc0 = report.frugality.details["services"][0]
        assert svc0["spend"] == pytest.approx(2.0, abs=1e-9)
        assert svc0["frugal_spend"] == pytest.approx(0.125, abs=1e-9)

    def test_geg_dominates_eg(self, appendix_f_instance, appendix_g_instance):
        for inst in (appendix_f_instance, appendix_g_instance):
            geg = solve_geg(inst).utilities
            eg = solve_eg(inst).utilities
            assert (geg >= eg - 1e-6).all()


class TestManipulationScenario:
    def test_three_equilibria(self, appendix_i_instances):
        from fogmarket import utilities
        truthful, mild, bold = appendix_i_instances
        sol = solve_geg(truthful)
        assert sol.prices.ravel() == pytest.approx([1.0, 1.0], abs=1e-3)
        assert sol.utilities == pytest.approx([4.0, 4.0], abs=1e-3)

        sol_mild = solve_geg(mild)
        assert sol_mild.prices.ravel() == pytest.approx([4 / 3, 2 / 3], abs=1e-3)
        assert utilities(truthful, sol_mild.allocation) == pytest.approx(
            [3.0, 5.0], abs=1e-3)

        sol_bold = solve_geg(bold)
        assert sol_bold.prices.ravel() == pytest.approx([1.5, 0.5], abs=1e-3)
        assert utilities(truthful, sol_bold.allocation) == pytest.approx(
            [2.6666, 5.3333], abs=1e-3)


class TestPareto:
    def test_geg_allocation_optimal(self, appendix_f_instance):
        sol = solve_geg(appendix_f_instance)
        result = pareto_check(appendix_f_instance, sol.allocation)
        assert result.is_pareto_optimal
        assert result.improvement <= 1e-5

    def test_eg_allocation_dominated(self, appendix_f_instance):
        sol = solve_eg(appendix_f_instance)
        result = pareto_check(appendix_f_instance, sol.allocation)
        assert not result.is_pareto_optimal
        assert result.improvement == pytest.approx(3.0, abs=1e-5)
        from fogmarket import utilities
        before = utilities(appendix_f_instance, sol.allocation)
        after = utilities(appendix_f_instance, result.certificate)
        assert (after >= before - 1e-9).all()
        assert after[1] > before[1] + 1.0

    def test_single_service_everything(self):
        inst = make_instance([ServiceSpec(budget=1.0, base_demand=[[0.5, 0.25]])])
        allocation = np.ones((1, 1, 2))
        assert pareto_check(inst, allocation).is_pareto_optimal


class TestProperties:
    def test_eg_equals_geg_without_limits(self):
        rng = np.random.default_rng(10)
        for _ in range(5):
            inst = random_instance(rng, finite_limit_prob=0.0)
            geg = solve_geg(inst)
            eg = solve_eg(inst)
            assert rel_diff(geg.utilities, eg.utilities) < 1e-5

    def test_utility_uniqueness_across_inits(self):
        rng = np.random.default_rng(11)
        for trial in range(5):
            inst = random_instance(rng)
            a = solve_geg(inst)
            b = solve_geg(inst, init="random", seed=trial)
            assert rel_diff(a.utilities, b.utilities) < 1e-5

    def test_scale_freeness(self):
        rng = np.random.default_rng(12)
        for trial in range(3):
            inst = random_instance(rng, min_services=2)
            factor = 3.7
            scaled = MarketInstance(
                tuple(replace(s, budget=s.budget * factor)
                      for s in inst.services), inst.capacities)
            base = solve_geg(inst)
            big = solve_geg(scaled)
            assert rel_diff(base.utilities, big.utilities) < 1e-4
            assert np.max(np.abs(base.allocation - big.allocation)) < 1e-4
            assert np.max(np.abs(big.prices - factor * base.prices)
                          / np.maximum(1.0, factor * base.prices)) < 1e-4

    def test_dual_consistency(self):
        rng = np.random.default_rng(13)
        for _ in range(5):
            inst = random_instance(rng)
            sol = solve_geg(inst)
            load = sol.allocation.sum(axis=0)
            slackness = np.abs((load - 1.0) * sol.prices)
            assert float(slackness.max()) <= 1e-6 * max(1.0, float(sol.prices.max()))

    def test_surplus_identity(self):
        rng = np.random.default_rng(14)
        for _ in range(5):
            inst = random_instance(rng)
            sol = solve_geg(inst)
            raw = sol.request_rates.sum(axis=1)
            assert np.max(np.abs(sol.mu * raw - (inst.budgets - sol.spend))) < 1e-5

    def test_degenerate_instance_named(self):
        # an empty allowed set passes construction but can never gain utility
        lonely = ServiceSpec(budget=1.0, base_demand=[[0.1], [0.1]],
                             allowed_nodes=())
        inst = make_instance([lonely], np.ones((2, 1)))
        with pytest.raises(DegenerateInstanceError, match="service 0"):
            solve_geg(inst)

    def test_requires_normalized_instance(self):
        inst = MarketInstance((ServiceSpec(budget=1.0, base_demand=[[0.1]]),),
                              np.array([[2.0]]))
        with pytest.raises(ValueError, match="normalized"):
            solve_geg(inst)


class TestSolutionIO:
    def test_round_trip(self, tmp_path, appendix_g_instance):
        from fogmarket import load_solution, save_solution
        sol = solve_geg(appendix_g_instance)
        path = tmp_path / "sol.json"
        save_solution(sol, path)
        again = load_solution(path)
        np.testing.assert_array_equal(again.allocation, sol.allocation)
        np.testing.assert_array_equal(again.prices, sol.prices)
        assert again.meta.scheme == "geg"
        assert again.meta.iterations == sol.meta.iterations
