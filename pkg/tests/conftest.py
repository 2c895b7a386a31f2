import numpy as np
import pytest

from fogmarket import MarketInstance, ServiceSpec, solve_geg


def make_instance(services, capacities=None):
    if capacities is None:
        m, r = services[0].base_demand.shape
        capacities = np.ones((m, r))
    return MarketInstance(tuple(services), capacities)


def random_instance(rng: np.random.Generator, max_nodes=6, max_services=5,
                    max_resources=3, min_nodes=1, min_services=1,
                    finite_limit_prob=2 / 3, limit_range=(0.4, 3.0),
                    allow_exclusions=True) -> MarketInstance:
    """Random normalized instance exercising limits, zero demands, and
    allowed-node subsets."""
    m = int(rng.integers(min_nodes, max_nodes + 1))
    n = int(rng.integers(min_services, max_services + 1))
    r = int(rng.integers(1, max_resources + 1))
    services = []
    for _ in range(n):
        demand = rng.uniform(0.05, 0.6, size=(m, r))
        if r > 1 and rng.random() < 0.15:
            # zero one coordinate; the row keeps another positive entry
            demand[int(rng.integers(m)), int(rng.integers(r))] = 0.0
        allowed = None
        if allow_exclusions and m > 1 and rng.random() < 0.2:
            dropped = int(rng.integers(m))
            allowed = tuple(j for j in range(m) if j != dropped)
        limit = (float(rng.uniform(*limit_range))
                 if rng.random() < finite_limit_prob else np.inf)
        services.append(ServiceSpec(
            budget=float(rng.uniform(0.5, 2.0)),
            base_demand=demand,
            utility_limit=limit,
            allowed_nodes=allowed,
        ))
    return make_instance(services, np.ones((m, r)))


@pytest.fixture(scope="session", autouse=True)
def warmup():
    """Compile the jitted kernel and load the LP backend once per session."""
    svc = ServiceSpec(budget=1.0, base_demand=[[1.0]], utility_limit=2.0)
    solve_geg(make_instance([svc]))


@pytest.fixture()
def appendix_f_instance():
    return make_instance([
        ServiceSpec(budget=1.0, base_demand=[[0.2]], utility_limit=1.0),
        ServiceSpec(budget=1.0, base_demand=[[0.1]], utility_limit=10.0),
    ])


@pytest.fixture()
def appendix_g_instance():
    return make_instance([
        ServiceSpec(budget=3.0, base_demand=[[1 / 8], [1 / 2]], utility_limit=1.0),
        ServiceSpec(budget=1.0, base_demand=[[1 / 5], [1 / 2]]),
    ])


@pytest.fixture()
def appendix_i_instances():
    """Truthful preference profile plus the two misreported variants."""
    svc1 = ServiceSpec(budget=1.0, base_demand=[[1 / 4], [1.0]])
    truthful = make_instance([
        svc1, ServiceSpec(budget=1.0, base_demand=[[1 / 4], [1 / 4]])])
    misreport_mild = make_instance([
        svc1, ServiceSpec(budget=1.0, base_demand=[[1 / 4], [1 / 2]])])
    misreport_bold = make_instance([
        svc1, ServiceSpec(budget=1.0, base_demand=[[1 / 12], [1 / 4]])])
    return truthful, misreport_mild, misreport_bold
