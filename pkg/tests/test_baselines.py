import math

import numpy as np
import pytest

from fogmarket import (Scheme, ServiceSpec, run_scheme, solve_geg, solve_mm,
                       solve_prop, solve_swm, utilities)
from fogmarket.market import is_feasible
from conftest import make_instance, random_instance
from oracles import enumerate_lp_max


class TestProp:
    def test_equal_budgets(self):
        services = [ServiceSpec(budget=1.0, base_demand=[[0.1, 0.2]])
                    for _ in range(8)]
        inst = make_instance(services)
        x = solve_prop(inst)
        assert np.allclose(x, 1 / 8)

    def test_budget_shares(self):
        inst = make_instance([
            ServiceSpec(budget=3.0, base_demand=[[0.1]]),
            ServiceSpec(budget=1.0, base_demand=[[0.2]]),
        ])
        x = solve_prop(inst)
        assert x.ravel() == pytest.approx([0.75, 0.25])

    def test_single_service_gets_everything(self):
        inst = make_instance([ServiceSpec(budget=2.0, base_demand=[[0.1], [0.4]])],
                             np.ones((2, 1)))
        assert np.allclose(solve_prop(inst), 1.0)


def swm_oracle_value(instance):
    """Vertex enumeration on the welfare epigraph LP."""
    from fogmarket.baselines import _epigraph_lp
    lp, _ = _epigraph_lp(instance, maxmin=False)
    val, _ = enumerate_lp_max(lp.c, lp.a_ub, lp.b_ub, lp.bounds)
    return val


def mm_oracle_value(instance):
    from fogmarket.baselines import _epigraph_lp
    lp, _ = _epigraph_lp(instance, maxmin=True)
    val, _ = enumerate_lp_max(lp.c, lp.a_ub, lp.b_ub, lp.bounds)
    return val


class TestSwm:
    def test_two_node_instance(self, appendix_g_instance):
        x = solve_swm(appendix_g_instance)
        u = utilities(appendix_g_instance, x)
        assert u.sum() == pytest.approx(7.375, abs=1e-8)
        assert u == pytest.approx([1.0, 6.375], abs=1e-8)
        assert u.sum() == pytest.approx(swm_oracle_value(appendix_g_instance),
                                        abs=1e-8)

    def test_single_service_capacity_bound(self):
        inst = make_instance(
            [ServiceSpec(budget=1.0, base_demand=[[0.5, 0.25], [0.2, 0.4]])],
            np.ones((2, 2)))
        u = utilities(inst, solve_swm(inst))
        assert u[0] == pytest.approx(1 / 0.5 + 1 / 0.4, abs=1e-8)

    def test_identical_services_value(self):
        svc = ServiceSpec(budget=1.0, base_demand=[[0.25, 0.5]])
        inst = make_instance([svc, svc])
        u = utilities(inst, solve_swm(inst))
        assert u.sum() == pytest.approx(swm_oracle_value(inst), abs=1e-8)


class TestMm:
    def test_identical_services_split(self):
        svc = ServiceSpec(budget=1.0, base_demand=[[0.2]])
        inst = make_instance([svc, svc])
        u = utilities(inst, solve_mm(inst))
        assert u.min() == pytest.approx(2.5, abs=1e-8)  # half of the solo rate

    def test_two_node_instance_against_oracle(self, appendix_g_instance):
        u = utilities(appendix_g_instance, solve_mm(appendix_g_instance))
        assert u.min() == pytest.approx(mm_oracle_value(appendix_g_instance),
                                        abs=1e-8)

    def test_maxmin_beats_other_schemes_on_min(self):
        rng = np.random.default_rng(31)
        for _ in range(5):
            inst = random_instance(rng, min_services=2)
            floor = utilities(inst, solve_mm(inst)).min()
            for scheme in (Scheme.PROP, Scheme.SWM, Scheme.GEG):
                other = run_scheme(inst, scheme).utilities.min()
                assert floor >= other - 1e-6


class TestOrderingInvariants:
    def test_total_utility_ordering(self):
        rng = np.random.default_rng(32)
        for _ in range(5):
            inst = random_instance(rng, min_services=2)
            swm_total = utilities(inst, solve_swm(inst)).sum()
            geg_total = solve_geg(inst).utilities.sum()
            mm_total = utilities(inst, solve_mm(inst)).sum()
            assert swm_total >= geg_total - 1e-5
            assert geg_total >= mm_total - 1e-5

    def test_outputs_feasible_and_truncated(self):
        rng = np.random.default_rng(33)
        for _ in range(5):
            inst = random_instance(rng)
            for scheme in (Scheme.PROP, Scheme.SWM, Scheme.MM):
                run = run_scheme(inst, scheme)
                assert is_feasible(inst, run.allocation, tol=1e-7)
                assert np.all(run.utilities <= inst.utility_limits + 1e-9)


class TestRunScheme:
    def test_equilibrium_schemes_carry_solution(self, appendix_f_instance):
        run = run_scheme(appendix_f_instance, "geg")
        assert run.equilibrium is not None
        assert run.equilibrium.prices.ravel()[0] == pytest.approx(1.25, abs=1e-3)

    def test_unknown_scheme_rejected(self, appendix_f_instance):
        with pytest.raises(ValueError):
            run_scheme(appendix_f_instance, "nope")
