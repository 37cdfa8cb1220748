"""Recover every coupling and field from gateway eigendata.

Only shifted frequencies omega_j = E_j - E0 are used.  With W[n] the row
<n|E_j> over all lines j, the observed single-excitation operator has

    H[m, n] = sum_j omega_j W[m, j] W[n, j]            (m != n)
    d[m]    = sum_j omega_j W[m, j]**2 = H[m, m] - E0

Along each forcing step (mu, nu) the eigen-equation projected on <mu| gives

    r_j = (omega_j - d[mu]) W[mu, j] - sum_{m known, m != mu} H[mu, m] W[m, j]
        = J[mu, nu] W[nu, j]

so normalizing r fixes |J[mu, nu]| and the row of nu.  The sign of J comes
from the declared convention (J < 0 for ferromagnetic couplings).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    LineCountDeficit,
    NonEdgeViolation,
    NormFailure,
    ReconstructionError,
    ZeroPivot,
)
from .model import ANTIFERROMAGNETIC, FERROMAGNETIC
from .network import ForcingStep, GatewaySet, GraphTopology, forcing_sequence


@dataclass
class ReconstructionTolerances:
    nonedge: float = 1e-6  # relative to the frequency scale
    zero_pivot: float = 1e-9  # relative to the frequency scale
    orthogonality: float = 1e-6  # leak of a new row onto the known rows
    row_norm: float = 1e-6  # gateway rows must be complete
    reorthogonalize: bool = True


@dataclass
class ReconstructionState:
    frequencies: np.ndarray
    rows: dict  # node -> (J,) components
    diagonals: dict  # node -> d[node] (shifted)
    elements: dict  # (m, n), m < n, both known -> observed H[m, n]
    order: list  # nodes in the order they became known
    perturbation: dict = field(default_factory=dict)  # (m, n) -> known applied block entry
    steps: list = field(default_factory=list)
    scale: float = 1.0
    max_nonedge: float = 0.0

    def element(self, m: int, n: int) -> float:
        return self.elements.get((m, n) if m < n else (n, m), 0.0)

    @property
    def known(self) -> set:
        return set(self.rows)


@dataclass
class ReconstructionResult:
    matrix_elements: dict  # edge (m, n) -> J = <m|H|n>
    fields: dict  # node -> b
    ground_energy: float
    eigenvalues: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def couplings(self) -> dict:
        return {e: j / 2.0 for e, j in self.matrix_elements.items()}

    def to_dict(self) -> dict:
        """JSON-ready form with 1-based node ids."""
        return {
            "version": 1,
            "edges": [
                {"m": m + 1, "n": n + 1, "J": j, "c": j / 2.0}
                for (m, n), j in sorted(self.matrix_elements.items())
            ],
            "nodes": [{"id": n + 1, "b": b} for n, b in sorted(self.fields.items())],
            "E0": self.ground_energy,
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "diagnostics": self.diagnostics,
        }


def _scale(frequencies) -> float:
    w = np.asarray(frequencies, float)
    return float(max(np.abs(w).max(initial=0.0), 1e-300)) if w.size else 1.0


def _perturbation_entries(known_perturbation, gateway_nodes):
    if known_perturbation is None:
        return {}
    block = np.asarray(known_perturbation, float)
    if block.shape != (len(gateway_nodes), len(gateway_nodes)):
        raise ReconstructionError(f"perturbation block shape {block.shape} does not match the gateway")
    out = {}
    for i, m in enumerate(gateway_nodes):
        for k, n in enumerate(gateway_nodes):
            if m <= n and block[i, k] != 0.0:
                out[(m, n)] = float(block[i, k])
    return out


def couplings_within_gateway(
    eigendata,
    gateway: GatewaySet,
    topology: GraphTopology,
    tolerances: ReconstructionTolerances | None = None,
    known_perturbation=None,
) -> ReconstructionState:
    """Initial state: gateway rows, their shifted diagonals and in-gateway elements.

    ``known_perturbation`` is an applied gateway block (sorted gateway
    order) that is part of the observed operator; non-edge entries must
    match it instead of vanishing.
    """
    tol = tolerances or ReconstructionTolerances()
    nodes = gateway.sorted()
    if list(eigendata.gateway) != nodes:
        raise ReconstructionError(f"eigendata covers nodes {eigendata.gateway}, gateway is {nodes}")
    if eigendata.line_count != topology.node_count:
        raise LineCountDeficit(eigendata.line_count, topology.node_count)
    omega = np.asarray(eigendata.frequencies, float)
    scale = _scale(omega)
    comps = np.asarray(eigendata.components, float)
    norms = np.sum(comps**2, axis=1)
    worst = float(np.max(np.abs(norms - 1.0)))
    if worst > tol.row_norm:
        raise NormFailure(f"gateway rows are not normalized (max |norm - 1| = {worst:.3e})")
    perturbation = _perturbation_entries(known_perturbation, nodes)
    block = (comps * omega) @ comps.T
    rows = {n: comps[i].copy() for i, n in enumerate(nodes)}
    diagonals = {n: float(block[i, i]) for i, n in enumerate(nodes)}
    elements = {}
    max_nonedge = 0.0
    for i, m in enumerate(nodes):
        for k in range(i + 1, len(nodes)):
            n = nodes[k]
            value = float(block[i, k])
            if topology.has_edge(m, n):
                elements[(m, n)] = value
                continue
            applied = perturbation.get((m, n), 0.0)
            max_nonedge = max(max_nonedge, abs(value - applied))
            if applied:
                elements[(m, n)] = applied
    if max_nonedge > tol.nonedge * scale:
        raise NonEdgeViolation(
            f"non-edge element {max_nonedge:.3e} inside the gateway (tolerance {tol.nonedge * scale:.1e}); "
            "topology or eigendata is wrong"
        )
    return ReconstructionState(
        frequencies=omega,
        rows=rows,
        diagonals=diagonals,
        elements=elements,
        order=list(nodes),
        perturbation=perturbation,
        scale=scale,
        max_nonedge=max_nonedge,
    )


def _zero_pivot(mu, nu, pivot):
    raise ZeroPivot(
        f"step ({mu + 1}, {nu + 1}): pivot {pivot:.3e} vanishes; degenerate data or a "
        "near-zero coupling on a forcing edge"
    )


def propagate_step(
    state: ReconstructionState,
    step: ForcingStep,
    topology: GraphTopology,
    convention: str = FERROMAGNETIC,
    tolerances: ReconstructionTolerances | None = None,
) -> ReconstructionState:
    """Learn the row of the forced node and the couplings that join it to known nodes.

    Mutates and returns ``state``.
    """
    tol = tolerances or ReconstructionTolerances()
    if convention not in (FERROMAGNETIC, ANTIFERROMAGNETIC):
        raise ReconstructionError(f"unknown convention {convention!r}")
    mu, nu = step
    known = state.known
    if mu not in known or nu in known:
        raise ReconstructionError(f"step ({mu + 1}, {nu + 1}) out of order")
    if topology.neighbors(mu) - known != {nu}:
        raise ReconstructionError(f"{nu + 1} is not the unique unknown neighbour of {mu + 1}")
    omega = state.frequencies
    r = (omega - state.diagonals[mu]) * state.rows[mu]
    for m in state.order:
        if m != mu:
            h = state.element(mu, m)
            if h != 0.0:
                r = r - h * state.rows[m]
    raw = float(np.linalg.norm(r))
    floor = tol.zero_pivot * state.scale
    if raw < floor:
        _zero_pivot(mu, nu, raw)
    leak = 0.0
    if raw > 0.0:
        basis = np.array([state.rows[m] for m in state.order])
        overlap = basis @ r
        leak = float(np.linalg.norm(overlap)) / raw
        if leak > tol.orthogonality:
            raise NormFailure(
                f"step ({mu + 1}, {nu + 1}): residual overlaps the known rows by {leak:.3e}; "
                "eigendata is inconsistent"
            )
        if tol.reorthogonalize:
            r = r - overlap @ basis
    pivot = float(np.linalg.norm(r))
    if pivot < floor:
        _zero_pivot(mu, nu, pivot)
    j_mu_nu = -pivot if convention == FERROMAGNETIC else pivot
    row = r / j_mu_nu
    state.rows[nu] = row
    state.diagonals[nu] = float(np.sum(omega * row**2))
    state.elements[(min(mu, nu), max(mu, nu))] = j_mu_nu
    cross = 0.0
    for m in state.order:
        if m == mu:
            cross = abs(float(np.sum(omega * row * state.rows[m])) - j_mu_nu)
            continue
        value = float(np.sum(omega * row * state.rows[m]))
        if topology.has_edge(m, nu):
            state.elements[(min(m, nu), max(m, nu))] = value
        else:
            state.max_nonedge = max(state.max_nonedge, abs(value))
    if state.max_nonedge > tol.nonedge * state.scale:
        raise NonEdgeViolation(
            f"after step ({mu + 1}, {nu + 1}) a non-edge element reached {state.max_nonedge:.3e}"
        )
    state.order.append(nu)
    state.steps.append(
        {"mu": mu + 1, "nu": nu + 1, "pivot": pivot, "raw_norm": raw, "leak": leak, "pivot_consistency": cross}
    )
    return state


def recover_fields(state: ReconstructionState, topology: GraphTopology, delta: float) -> dict:
    """b_m = (d[m] - P[m, m] + delta * sum_{n in N(m)} J[m, n]) / 2 for every node.

    P is the applied perturbation; J excludes it.
    """
    if len(state.rows) != topology.node_count:
        raise ReconstructionError("schedule incomplete: not every row is known")
    fields = {}
    for m in range(topology.node_count):
        neighbor_sum = sum(
            state.element(m, n) - state.perturbation.get((min(m, n), max(m, n)), 0.0)
            for n in topology.neighbors(m)
        )
        applied = state.perturbation.get((m, m), 0.0)
        fields[m] = 0.5 * (state.diagonals[m] - applied + delta * neighbor_sum)
    return fields


def recover_ground_energy(matrix_elements: dict, fields: dict, delta: float) -> float:
    """E0 = delta * sum_edges c - sum_n b, with c = J / 2."""
    return delta * sum(j / 2.0 for j in matrix_elements.values()) - sum(fields.values())


def full_reconstruct(
    eigendata,
    topology: GraphTopology,
    gateway: GatewaySet,
    delta: float,
    convention: str = FERROMAGNETIC,
    tolerances: ReconstructionTolerances | None = None,
    known_perturbation=None,
) -> ReconstructionResult:
    sequence = forcing_sequence(topology, gateway)
    state = couplings_within_gateway(eigendata, gateway, topology, tolerances, known_perturbation)
    for step in sequence:
        propagate_step(state, step, topology, convention, tolerances)
    edges = {e: state.element(*e) for e in topology.sorted_edges()}
    # an in-gateway edge also carries any applied off-diagonal lift entry
    for e, applied in state.perturbation.items():
        if e in edges and e[0] != e[1]:
            edges[e] -= applied
    fields = recover_fields(state, topology, delta)
    e0 = recover_ground_energy(edges, fields, delta)
    diagnostics = {
        "steps": state.steps,
        "max_nonedge": state.max_nonedge,
        "min_pivot": min((s["pivot"] for s in state.steps), default=None),
        "max_leak": max((s["leak"] for s in state.steps), default=0.0),
        "max_pivot_consistency": max((s["pivot_consistency"] for s in state.steps), default=0.0),
        "frequency_scale": state.scale,
    }
    return ReconstructionResult(edges, fields, e0, state.frequencies + e0, diagnostics)
