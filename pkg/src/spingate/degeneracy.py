"""Detecting and lifting single-excitation degeneracies from the gateway.

A lift is a Hermitian block acting on the single-excitation amplitudes of
gateway nodes only; it annihilates the all-down state, so it leaves the
ground energy E0 untouched and conserves the excitation number.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import Exhausted, InputError, NoProgress, RankDeficient
from .model import Eigensystem, SingleExcitationMatrix, eigendecompose

CONSTRUCTIVE = "constructive"
RANDOM_FIELD = "random_field"


def default_group_tol(eigenvalues) -> float:
    w = np.asarray(eigenvalues, float)
    spread = float(w.max() - w.min()) if w.size else 0.0
    return 1e-8 * spread if spread > 0 else 1e-12


def cluster_eigenvalues(eigenvalues, group_tol: float | None = None) -> list:
    """Index groups of ascending eigenvalues whose adjacent gaps are < group_tol."""
    w = np.asarray(eigenvalues, float)
    if w.size == 0:
        return []
    tol = default_group_tol(w) if group_tol is None else group_tol
    groups = [[0]]
    for j in range(1, len(w)):
        if w[j] - w[j - 1] < tol:
            groups[-1].append(j)
        else:
            groups.append([j])
    return groups


def min_positive_gap(eigenvalues, group_tol: float | None = None) -> float:
    """Smallest gap between distinct levels (inf when there is one level)."""
    groups = cluster_eigenvalues(eigenvalues, group_tol)
    w = np.asarray(eigenvalues, float)
    gaps = [w[b[0]] - w[a[-1]] for a, b in zip(groups[:-1], groups[1:])]
    return float(min(gaps)) if gaps else float("inf")


@dataclass(frozen=True)
class DegenerateGroup:
    energy: float
    members: tuple
    gateway_block: np.ndarray  # |C| x D, rows in sorted gateway order

    @property
    def multiplicity(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class LiftOperator:
    gateway: tuple  # sorted gateway nodes
    block: np.ndarray  # Hermitian |C| x |C| (already multiplied by scale)
    scale: float
    provenance: str

    def embed(self, node_count: int) -> np.ndarray:
        out = np.zeros((node_count, node_count))
        idx = np.array(self.gateway)
        out[np.ix_(idx, idx)] = self.block
        return out

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.block, 2))


def find_degeneracies(eig: Eigensystem, gateway, group_tol: float | None = None) -> list:
    nodes = sorted(gateway)
    groups = []
    for members in cluster_eigenvalues(eig.eigenvalues, group_tol):
        if len(members) < 2:
            continue
        groups.append(
            DegenerateGroup(
                float(np.mean(eig.eigenvalues[members])),
                tuple(members),
                eig.vectors[np.ix_(nodes, members)].copy(),
            )
        )
    return groups


def check_rank(group: DegenerateGroup, gateway, rel_tol: float = 1e-8) -> np.ndarray:
    """Singular values of the gateway block; raises unless it has full column rank."""
    d = group.multiplicity
    if d > len(gateway):
        raise RankDeficient(
            f"{d}-fold degeneracy at {group.energy:.6g} exceeds gateway size {len(gateway)}"
        )
    s = np.linalg.svd(group.gateway_block, compute_uv=False)
    if s.size < d or s[-1] <= rel_tol * max(1.0, s[0]):
        raise RankDeficient(
            f"gateway block of the {d}-fold level at {group.energy:.6g} has singular values "
            f"{np.array2string(s, precision=3)}; the gateway cannot be infecting"
        )
    return s


def _current(h_single: SingleExcitationMatrix, total: np.ndarray) -> Eigensystem:
    return eigendecompose(SingleExcitationMatrix(h_single.matrix + total, h_single.ground_energy))


def _group_block(group: DegenerateGroup) -> np.ndarray:
    """Lift block giving first-order shifts 1..D on the group, unit operator norm."""
    phi = group.gateway_block
    q, r = np.linalg.qr(phi)
    r_inv = np.linalg.inv(r)
    eps = np.arange(1, phi.shape[1] + 1, dtype=float)
    # S maps the orthonormal columns of q onto phi; B = S^-T diag(eps) S^-1 on that span
    block = q @ r_inv.T @ np.diag(eps) @ r_inv @ q.T
    block = 0.5 * (block + block.T)
    return block / np.linalg.norm(block, 2)


def constructive_lift(
    h_single: SingleExcitationMatrix,
    gateway,
    *,
    group_tol: float | None = None,
    lam_fraction: float = 0.5,
    max_iterations: int | None = None,
):
    """Lift every degeneracy with gateway-supported blocks, one level at a time.

    Each round takes the lowest degenerate level, builds a block whose
    first-order shifts on it are distinct, scales it to ``lam_fraction`` of
    the current minimum gap (and within the remaining norm budget, so the
    total stays below the original minimum gap), and re-diagonalizes exactly.
    If a previously separated pair would close, the scale is halved.

    Returns ``(operators, eigensystem_after)``.
    """
    nodes = tuple(sorted(gateway))
    n = h_single.size
    eig = eigendecompose(h_single)
    tol = default_group_tol(eig.eigenvalues) if group_tol is None else group_tol
    budget = min_positive_gap(eig.eigenvalues, tol)
    spent = 0.0
    total = np.zeros((n, n))
    ops = []
    cap = 2 * n if max_iterations is None else max_iterations
    for _ in range(cap):
        groups = find_degeneracies(eig, nodes, tol)
        if not groups:
            return ops, eig
        group = groups[0]
        check_rank(group, nodes)
        block = _group_block(group)
        gap = min_positive_gap(eig.eigenvalues, tol)
        if np.isfinite(gap):
            lam = lam_fraction * min(gap, budget - spent)
        else:
            # a single fully degenerate level: no gap to protect
            lam = lam_fraction * max(1.0, float(np.abs(eig.eigenvalues).max()))
        separated = [j for j in range(n - 1) if eig.eigenvalues[j + 1] - eig.eigenvalues[j] >= tol]
        for _halving in range(30):
            op = LiftOperator(nodes, lam * block, lam, CONSTRUCTIVE)
            trial_total = total + op.embed(n)
            trial = _current(h_single, trial_total)
            w = trial.eigenvalues
            closed = any(w[j + 1] - w[j] < tol for j in separated)
            split = np.diff(w[list(group.members)]).min() >= tol
            if not closed and split:
                break
            lam *= 0.5
        else:
            raise NoProgress(f"could not split the level at {group.energy:.6g} without closing another gap")
        ops.append(op)
        total = trial_total
        spent += op.norm
        eig = trial
    if find_degeneracies(eig, nodes, tol):
        raise NoProgress(f"degeneracies remain after {cap} lift iterations")
    return ops, eig


def random_field_lift(
    h_single: SingleExcitationMatrix,
    gateway,
    strength: float,
    seed: int,
    max_retries: int = 32,
    group_tol: float | None = None,
) -> LiftOperator:
    """Random diagonal gateway field, redrawn until the spectrum is simple."""
    nodes = tuple(sorted(gateway))
    eig = eigendecompose(h_single)
    tol = default_group_tol(eig.eigenvalues) if group_tol is None else group_tol
    if not find_degeneracies(eig, nodes, tol):
        return LiftOperator(nodes, np.zeros((len(nodes), len(nodes))), 0.0, RANDOM_FIELD)
    gap = min_positive_gap(eig.eigenvalues, tol)
    if strength < 0 or (np.isfinite(gap) and strength > 0.5 * gap):
        raise InputError(f"strength {strength} must lie in [0, {0.5 * gap:.6g}] (half the minimum gap)")
    rng = np.random.default_rng(seed)
    n = h_single.size
    for _ in range(max_retries):
        block = np.diag(rng.uniform(-strength, strength, size=len(nodes)))
        op = LiftOperator(nodes, block, strength, RANDOM_FIELD)
        trial = _current(h_single, op.embed(n))
        if not find_degeneracies(trial, nodes, tol):
            return op
    raise Exhausted(f"no simple spectrum after {max_retries} random gateway fields of strength {strength}")


def total_block(operators, gateway) -> np.ndarray:
    nodes = sorted(gateway)
    out = np.zeros((len(nodes), len(nodes)))
    for op in operators:
        if list(op.gateway) != nodes:
            raise InputError("lift operators act on a different gateway")
        out = out + op.block
    return out


def lift_report(h_single: SingleExcitationMatrix, gateway, operators, group_tol=None) -> dict:
    """JSON-ready summary of a lift (1-based node ids)."""
    nodes = sorted(gateway)
    before = eigendecompose(h_single)
    tol = default_group_tol(before.eigenvalues) if group_tol is None else group_tol
    block = total_block(operators, nodes) if operators else np.zeros((len(nodes), len(nodes)))
    after = _current(h_single, _embed(block, nodes, h_single.size))
    return {
        "version": 1,
        "gateway": [n + 1 for n in nodes],
        "group_tolerance": tol,
        "groups_before": [
            {"energy": g.energy, "multiplicity": g.multiplicity}
            for g in find_degeneracies(before, nodes, tol)
        ],
        "groups_after": [
            {"energy": g.energy, "multiplicity": g.multiplicity}
            for g in find_degeneracies(after, nodes, tol)
        ],
        "operators": [
            {"provenance": op.provenance, "scale": op.scale, "norm": op.norm, "block": op.block.tolist()}
            for op in operators
        ],
        "total_block": block.tolist(),
        "total_norm": float(np.linalg.norm(block, 2)),
        "min_gap_before": _finite(min_positive_gap(before.eigenvalues, tol)),
        "min_gap_after": _finite(min_positive_gap(after.eigenvalues, tol)),
    }


def _embed(block, nodes, n):
    out = np.zeros((n, n))
    out[np.ix_(nodes, nodes)] = block
    return out


def _finite(x):
    return None if not np.isfinite(x) else float(x)
