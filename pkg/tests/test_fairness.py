import math

import numpy as np
import pytest

from fogmarket import (ServiceSpec, audit, envy_free_index,
                       proportionality_check, sharing_incentive_check,
                       solve_geg, solve_prop, solve_swm, utilization)
from fogmarket.fairness import budget_shares, write_audit_csv
from conftest import make_instance, random_instance


@pytest.fixture(scope="module")
def geg_samples():
    rng = np.random.default_rng(40)
    samples = []
    for _ in range(8):
        inst = random_instance(rng, min_services=2)
        samples.append((inst, solve_geg(inst).allocation))
    return samples


class TestEnvyFreeIndex:
    def test_geg_is_envy_free(self, geg_samples):
        for inst, allocation in geg_samples:
            assert envy_free_index(inst, allocation) >= 1 - 1e-4

    def test_prop_is_envy_free_exactly(self):
        inst = make_instance([
            ServiceSpec(budget=3.0, base_demand=[[0.1, 0.3]]),
            ServiceSpec(budget=1.0, base_demand=[[0.2, 0.1]]),
        ])
        assert envy_free_index(inst, solve_prop(inst)) == pytest.approx(
            1.0, abs=1e-12)

    def test_swm_can_starve(self):
        # one node, fast service dominates welfare; the slow one envies
        inst = make_instance([
            ServiceSpec(budget=1.0, base_demand=[[1.0]]),
            ServiceSpec(budget=1.0, base_demand=[[0.1]]),
        ])
        ef = envy_free_index(inst, solve_swm(inst))
        assert ef < 1.0
        assert ef == pytest.approx(0.0, abs=1e-9)

    def test_single_service_defaults_to_one(self):
        inst = make_instance([ServiceSpec(budget=1.0, base_demand=[[0.5]])])
        assert envy_free_index(inst, np.ones((1, 1, 1))) == 1.0


class TestSharingIncentive:
    def test_geg_margins_nonnegative(self, geg_samples):
        for inst, allocation in geg_samples:
            assert sharing_incentive_check(inst, allocation).min() >= -1e-5

    def test_prop_margins_zero(self):
        rng = np.random.default_rng(41)
        inst = random_instance(rng, min_services=2)
        margins = sharing_incentive_check(inst, solve_prop(inst))
        assert margins == pytest.approx(np.zeros(inst.num_services), abs=1e-12)

    def test_swm_can_break_sharing_incentive(self):
        inst = make_instance([
            ServiceSpec(budget=1.0, base_demand=[[1.0]]),
            ServiceSpec(budget=1.0, base_demand=[[0.1]]),
        ])
        margins = sharing_incentive_check(inst, solve_swm(inst))
        assert margins.min() < -1e-3


class TestProportionality:
    def test_geg_meets_budget_shares(self, geg_samples):
        for inst, allocation in geg_samples:
            ratios = proportionality_check(inst, allocation)
            assert np.all(ratios >= budget_shares(inst) - 1e-5)

    def test_prop_without_limits_is_exact(self):
        inst = make_instance([
            ServiceSpec(budget=3.0, base_demand=[[0.1], [0.3]]),
            ServiceSpec(budget=1.0, base_demand=[[0.2], [0.1]]),
        ], np.ones((2, 1)))
        ratios = proportionality_check(inst, solve_prop(inst))
        assert ratios == pytest.approx(budget_shares(inst), abs=1e-12)

    def test_single_service_with_slack_capacity(self):
        inst = make_instance(
            [ServiceSpec(budget=1.0, base_demand=[[0.1]], utility_limit=2.0)])
        ratios = proportionality_check(inst, np.ones((1, 1, 1)))
        assert ratios[0] == pytest.approx(1.0)


class TestUtilization:
    def test_empty_allocation(self):
        inst = make_instance([ServiceSpec(budget=1.0, base_demand=[[0.1, 0.2]])])
        assert np.all(utilization(inst, np.zeros((1, 1, 2))) == 0.0)

    def test_prop_uses_everything(self):
        rng = np.random.default_rng(42)
        inst = random_instance(rng, min_services=2)
        assert utilization(inst, solve_prop(inst)) == pytest.approx(
            np.ones((inst.num_nodes, inst.num_resources)))

    def test_geg_fills_nodes_wanted_by_unsatiated_services(self, geg_samples):
        # a slack node would hand an unsatiated service free utility
        from fogmarket import utilities
        for inst, allocation in geg_samples:
            hungry = utilities(inst, allocation) < inst.utility_limits - 1e-4
            if not hungry.any():
                continue
            demanded = inst.active_nodes[hungry].any(axis=0)
            use = utilization(inst, allocation)
            assert np.all(use.max(axis=1)[demanded] >= 1 - 1e-4)

    def test_geg_fills_every_node_in_scarce_regime(self):
        rng = np.random.default_rng(44)
        for _ in range(5):
            inst = random_instance(rng, min_services=2, finite_limit_prob=0.0)
            allocation = solve_geg(inst).allocation
            demanded = inst.active_nodes.any(axis=0)
            use = utilization(inst, allocation)
            assert np.all(use.max(axis=1)[demanded] >= 1 - 1e-4)

    def test_zero_price_on_slack_items(self, geg_samples):
        for inst, _ in geg_samples:
            sol = solve_geg(inst)
            use = utilization(inst, sol.allocation)
            slack = use < 1 - 1e-3
            assert np.all(sol.prices[slack] <= 1e-3)


class TestAuditReport:
    def test_report_and_csv(self, tmp_path):
        rng = np.random.default_rng(43)
        inst = random_instance(rng, min_services=2)
        sol = solve_geg(inst)
        report = audit(inst, sol.allocation, scheme="geg", seed=7)
        assert report.ef_index >= 1 - 1e-4
        assert report.min_sharing_margin >= -1e-5
        assert report.min_proportionality_gap >= -1e-5
        path = tmp_path / "audit.csv"
        write_audit_csv([report], path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == ("scheme,seed,ef_index,min_sharing_margin,"
                            "min_proportionality_gap,mean_utilization")
        assert lines[1].startswith("geg,7,")
