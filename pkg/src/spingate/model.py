"""Hamiltonian construction in the single-excitation sector and in full space.

The physical Hamiltonian is

    H = sum_{(m,n) in E} c_mn (X_m X_n + Y_m Y_n + delta Z_m Z_n) + sum_n b_n Z_n

with standard Pauli matrices.  With |n> the state where only spin n is up,
the single-excitation matrix has

    <m|H|n> = 2 c_mn                                   (edges)
    <m|H|m> = delta (S - 2 sum_{n in N(m)} c_mn) + 2 b_m - B

where S = sum over edges of c and B = sum of b.  The all-down energy is
E0 = delta S - B.  We call J_mn = <m|H|n> = 2 c_mn the coupling matrix
element; it is what the reconstruction recovers directly.

Full-space bit ordering: node 0 is the leftmost tensor factor and the local
basis is (up, down), so basis index ``i`` has node ``k`` up iff bit
``N - 1 - k`` of ``i`` is 0.  The all-down state is index ``2**N - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .errors import ConvergenceFailure, InputError, TooLarge
from .network import GraphTopology

FERROMAGNETIC = "ferromagnetic"
ANTIFERROMAGNETIC = "antiferromagnetic"
CONVENTIONS = (FERROMAGNETIC, ANTIFERROMAGNETIC)

FULL_SPACE_CAP = 12

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass(frozen=True)
class SpinNetwork:
    topology: GraphTopology
    couplings: Mapping  # (m, n) with m < n -> c_mn
    fields: Mapping  # node -> b_n
    delta: float = 0.0
    convention: str = FERROMAGNETIC

    def __post_init__(self):
        if self.convention not in CONVENTIONS:
            raise InputError(f"unknown sign convention {self.convention!r}")
        couplings = {}
        for (m, n), c in self.couplings.items():
            key = (m, n) if m < n else (n, m)
            couplings[key] = float(c)
        if set(couplings) != set(self.topology.edges):
            missing = sorted(set(self.topology.edges) - set(couplings))
            extra = sorted(set(couplings) - set(self.topology.edges))
            raise InputError(f"couplings do not match edges (missing {missing}, extra {extra})")
        fields = {int(k): float(v) for k, v in self.fields.items()}
        if set(fields) != set(range(self.topology.node_count)):
            raise InputError("every node needs a field value (0 allowed)")
        # the normalization step fixes |J| only, so the sign must be uniform
        if self.convention == FERROMAGNETIC and any(c >= 0 for c in couplings.values()):
            raise InputError("ferromagnetic convention requires every coupling < 0")
        if self.convention == ANTIFERROMAGNETIC and any(c <= 0 for c in couplings.values()):
            raise InputError("antiferromagnetic convention requires every coupling > 0")
        object.__setattr__(self, "couplings", couplings)
        object.__setattr__(self, "fields", fields)
        object.__setattr__(self, "delta", float(self.delta))

    @property
    def node_count(self) -> int:
        return self.topology.node_count

    def coupling_sum(self) -> float:
        return float(sum(self.couplings.values()))

    def field_sum(self) -> float:
        return float(sum(self.fields.values()))

    def ground_energy(self) -> float:
        """Energy of the all-down state."""
        return self.delta * self.coupling_sum() - self.field_sum()


def _unchecked_network(topology, couplings, fields, delta):
    # bypasses the sign checks; used for the zero Hamiltonian and tests of it
    net = object.__new__(SpinNetwork)
    object.__setattr__(net, "topology", topology)
    object.__setattr__(net, "couplings", {tuple(sorted(k)): float(v) for k, v in couplings.items()})
    object.__setattr__(net, "fields", {int(k): float(v) for k, v in fields.items()})
    object.__setattr__(net, "delta", float(delta))
    object.__setattr__(net, "convention", FERROMAGNETIC)
    return net


@dataclass(frozen=True)
class SingleExcitationMatrix:
    """<m|H|n> on the single-excitation basis, plus the all-down energy."""

    matrix: np.ndarray
    ground_energy: float

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class Eigensystem:
    eigenvalues: np.ndarray  # ascending
    vectors: np.ndarray  # vectors[n, j] = <n|E_j>
    ground_energy: float

    @property
    def shifted(self) -> np.ndarray:
        return self.eigenvalues - self.ground_energy


@dataclass(frozen=True)
class FullSpaceMatrix:
    matrix: sp.csr_matrix
    node_count: int

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def build_single_excitation(network: SpinNetwork) -> SingleExcitationMatrix:
    n = network.node_count
    delta = network.delta
    s_total = network.coupling_sum()
    b_total = network.field_sum()
    m = np.zeros((n, n))
    neighbor_sum = np.zeros(n)
    for (i, j), c in network.couplings.items():
        m[i, j] = m[j, i] = 2.0 * c
        neighbor_sum[i] += c
        neighbor_sum[j] += c
    for i in range(n):
        m[i, i] = delta * (s_total - 2.0 * neighbor_sum[i]) + 2.0 * network.fields[i] - b_total
    return SingleExcitationMatrix(m, delta * s_total - b_total)


def _site_operator(ops: dict, n: int) -> sp.csr_matrix:
    out = sp.identity(1, dtype=complex, format="csr")
    eye = sp.identity(2, dtype=complex, format="csr")
    for k in range(n):
        out = sp.kron(out, sp.csr_matrix(ops[k]) if k in ops else eye, format="csr")
    return out


def build_full_space(network: SpinNetwork) -> FullSpaceMatrix:
    """Dense-in-spirit 2^N Hamiltonian (stored sparse) from Pauli tensor products."""
    n = network.node_count
    if n > FULL_SPACE_CAP:
        raise TooLarge(f"full-space oracle limited to {FULL_SPACE_CAP} spins, got {n}")
    dim = 2**n
    h = sp.csr_matrix((dim, dim), dtype=complex)
    for (i, j), c in sorted(network.couplings.items()):
        h = h + c * (
            _site_operator({i: PAULI_X, j: PAULI_X}, n)
            + _site_operator({i: PAULI_Y, j: PAULI_Y}, n)
            + network.delta * _site_operator({i: PAULI_Z, j: PAULI_Z}, n)
        )
    for i, b in sorted(network.fields.items()):
        if b != 0.0:
            h = h + b * _site_operator({i: PAULI_Z}, n)
    if h.nnz and abs(h.imag).max() > 1e-12:
        raise AssertionError("full-space Hamiltonian should be real")
    return FullSpaceMatrix(sp.csr_matrix(h.real), n)


def single_excitation_index(node: int, node_count: int) -> int:
    """Full-space basis index of |node> (only ``node`` up)."""
    return (2**node_count - 1) - 2 ** (node_count - 1 - node)


def all_down_index(node_count: int) -> int:
    return 2**node_count - 1


def total_z(node_count: int) -> sp.csr_matrix:
    out = sp.csr_matrix((2**node_count, 2**node_count), dtype=complex)
    for k in range(node_count):
        out = out + _site_operator({k: PAULI_Z}, node_count)
    return sp.csr_matrix(out.real)


def project_full_to_single(full: FullSpaceMatrix) -> SingleExcitationMatrix:
    n = full.node_count
    idx = [single_excitation_index(k, n) for k in range(n)]
    block = full.matrix[idx][:, idx].toarray()
    e0 = full.matrix[all_down_index(n), all_down_index(n)]
    return SingleExcitationMatrix(np.asarray(block, dtype=float), float(e0))


def eigendecompose(matrix: SingleExcitationMatrix) -> Eigensystem:
    """Symmetric eigendecomposition with a deterministic sign gauge.

    Each eigenvector's largest-magnitude component (first one on ties) is
    made positive.
    """
    m = np.asarray(matrix.matrix, dtype=float)
    if not np.allclose(m, m.T, atol=1e-12 * max(1.0, np.abs(m).max(initial=0.0))):
        raise InputError("matrix is not symmetric")
    try:
        w, v = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    pivots = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[pivots, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    v = v * signs
    scale = max(1.0, np.linalg.norm(m, 2)) if m.size else 1.0
    resid = np.linalg.norm(m @ v - v * w, axis=0)
    if resid.size and resid.max() > 1e-10 * scale:
        raise ConvergenceFailure(f"eigen residual {resid.max():.3e} exceeds tolerance")
    return Eigensystem(w, v, float(matrix.ground_energy))


def spectral_radius_bound(
    max_coupling: float, max_field: float, topology: GraphTopology, delta: float = 0.0
) -> float:
    """Gershgorin bound on max_j |E_j - E0| given |c| <= max_coupling, |b| <= max_field.

    Row m of the shifted matrix has diagonal -2 delta sum_{N(m)} c + 2 b_m and
    off-diagonals 2 c, so its disc reaches 2 deg(m) |c| (|delta| + 1) + 2 |b|.
    """
    c = abs(max_coupling)
    b = abs(max_field)
    return max(
        2.0 * topology.degree(m) * c * (abs(delta) + 1.0) + 2.0 * b
        for m in range(topology.node_count)
    )
