import sys
import itertools
from functools import reduce

import numpy as np
import pytest

from spingate.model import SpinNetwork, build_single_excitation, eigendecompose
from spingate.network import GraphTopology, standard_gateway, standard_topology
from spingate.spectral import assemble_eigendata, exact_lines

X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0 + 0j, -1.0])
I2 = np.eye(2, dtype=complex)


def dense_hamiltonian(network):
    """Independent dense 2^N construction from explicit Kronecker products."""
    n = network.node_count

    def op(ops):
        return reduce(np.kron, [ops.get(k, I2) for k in range(n)])

    h = np.zeros((2**n, 2**n), dtype=complex)
    for (i, j), c in network.couplings.items():
        h += c * (op({i: X, j: X}) + op({i: Y, j: Y}) + network.delta * op({i: Z, j: Z}))
    for i, b in network.fields.items():
        h += b * op({i: Z})
    return h


def brute_closure(topology, seed):
    """Apply the rule to every infected node until nothing changes."""
    infected = set(seed)
    changed = True
    while changed:
        changed = False
        for m in list(infected):
            healthy = [n for n in range(topology.node_count) if topology.has_edge(m, n) and n not in infected]
            if len(healthy) == 1:
                infected.add(healthy[0])
                changed = True
    return infected


def random_network(topology, rng, c_range=(-2.0, -0.5), b_range=(-1.0, 1.0), delta=0.5):
    couplings = {e: rng.uniform(*c_range) for e in topology.sorted_edges()}
    fields = {n: rng.uniform(*b_range) for n in range(topology.node_count)}
    return SpinNetwork(topology, couplings, fields, delta)


def lattice_network(kind, dims, seed, delta=0.5):
    topo = standard_topology(kind, dims)
    return random_network(topo, np.random.default_rng(seed), delta=delta), standard_gateway(kind, dims)


def random_connected_graph(rng, n_max=10, p=None):
    n = int(rng.integers(1, n_max + 1))
    order = rng.permutation(n)
    edges = {tuple(sorted((int(order[k]), int(order[rng.integers(0, k)])))) for k in range(1, n)}
    p = rng.uniform(0.0, 0.5) if p is None else p
    for m, k in itertools.combinations(range(n), 2):
        if rng.random() < p:
            edges.add((m, k))
    return GraphTopology(n, frozenset(edges))


def exact_eigendata(network, gateway):
    eig = eigendecompose(build_single_excitation(network))
    return eig, assemble_eigendata(exact_lines(eig, gateway.sorted()), gateway.sorted())


def max_error(network, result):
    ec = max((abs(result.couplings[e] - c) for e, c in network.couplings.items()), default=0.0)
    eb = max(abs(result.fields[n] - b) for n, b in network.fields.items())
    return max(ec, eb, abs(result.ground_energy - network.ground_energy()))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
