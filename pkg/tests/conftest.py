import numpy as np
import pytest

from wlsbp.graph import MeasurementGraph
from wlsbp.scenario import ScenarioSpec, generate


def two_node_graph() -> MeasurementGraph:
    """x1 observed directly (z=0); edge measures x1 - x2 = 2."""
    return MeasurementGraph.build(
        [1, 1],
        [dict(node=1, A=1.0, R=1.0, z=0.0)],
        [dict(i=1, j=2, B_ij=1.0, B_ji=-1.0, R=1.0, z=2.0)],
    )


@pytest.fixture
def two_node():
    return two_node_graph()


def chain_edges(n):
    return [(k, k + 1) for k in range(1, n)]


def bare_graph(n, edges, dims=None):
    """Structure-only graph: unit self measurement on node 1, unit edge couplings."""
    dims = dims or [1] * n
    selfs = [dict(node=1, A=np.eye(dims[0]), R=np.eye(dims[0]), z=np.zeros(dims[0]))]
    es = []
    for i, j in edges:
        m = max(dims[i - 1], dims[j - 1])
        es.append(dict(i=i, j=j, B_ij=np.ones((m, dims[i - 1])), B_ji=-np.ones((m, dims[j - 1])),
                       R=np.eye(m), z=np.zeros(m)))
    return MeasurementGraph.build(dims, selfs, es)


def floyd_warshall(n, edges):
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0)
    for i, j in edges:
        d[i - 1, j - 1] = d[j - 1, i - 1] = 1
    for k in range(n):
        d = np.minimum(d, d[:, [k]] + d[[k], :])
    return d


def random_instance(seed, topology="random_connected", n_range=(5, 31), max_dim=1, **kw):
    """Seeded instance with a random size (and random dims when max_dim > 1)."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(*n_range))
    dims = 1 if max_dim == 1 else tuple(int(d) for d in rng.integers(1, max_dim + 1, size=n))
    return generate(ScenarioSpec(topology, n=n, dims=dims, seed=seed, **kw))


def complete_info(n, r):
    """Information system on K_n with unit diagonal and constant coupling ``r``.

    Built directly rather than from measurements, so it can leave the
    walk-summable regime (e.g. n=3, r=0.6 is PD with rho(|R|) = 1.2).
    """
    from wlsbp.assembly import InformationSystem

    nb = tuple(tuple(j for j in range(n) if j != i) for i in range(n))
    off = {(i, j): np.array([[r]]) for i in range(n) for j in range(n) if i != j}
    gam = {(i, j): np.array([[abs(r)]]) for i in range(n) for j in range(n) if i != j}
    return InformationSystem(
        n=n, dims=(1,) * n, alpha=tuple(np.ones(1) for _ in range(n)),
        psi_diag=tuple(np.eye(1) for _ in range(n)), psi_off=off, gamma=gam,
        self_info=tuple(np.eye(1) * (1 - (n - 1) * abs(r)) for _ in range(n)), neighbors=nb)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
