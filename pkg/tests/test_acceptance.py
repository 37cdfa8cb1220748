"""Acceptance criteria 1-10.  Each test prints one PASS/FAIL line; the
lines are repeated in the terminal summary (see conftest.py)."""

import itertools
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import brute_closure, exact_eigendata, lattice_network, random_connected_graph, random_network
from spingate.degeneracy import (
    cluster_eigenvalues,
    constructive_lift,
    default_group_tol,
    find_degeneracies,
    min_positive_gap,
    total_block,
)
from spingate.errors import NotInfecting, PipelineError
from spingate.model import (
    SingleExcitationMatrix,
    SpinNetwork,
    build_full_space,
    build_single_excitation,
    eigendecompose,
    project_full_to_single,
)
from spingate.network import GatewaySet, forcing_sequence, is_infecting, standard_gateway, standard_topology
from spingate.pipeline import RunConfig, run_pipeline
from spingate.reconstruct import full_reconstruct

RESULTS = {}


def verdict(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[number] = line
    print(line)
    assert ok, line


def pipeline_config(mode, gen, **kw):
    doc = {"version": 1, "mode": mode, "network": {"generate": gen}}
    doc.update(kw)
    return RunConfig.from_dict(doc)


def uniform(kind, dims, delta=0.5):
    topo = standard_topology(kind, dims)
    return SpinNetwork(topo, {e: -1.0 for e in topo.edges}, {n: 0.0 for n in range(topo.node_count)}, delta)


def test_criterion_01_oracle_equivalence():
    rng = np.random.default_rng(101)
    start, worst = time.perf_counter(), 0.0
    for k in range(50):
        topo = random_connected_graph(rng, n_max=10)
        net = random_network(topo, rng, delta=(0.0, 0.5, 1.0)[k % 3])
        proj = project_full_to_single(build_full_space(net))
        ref = build_single_excitation(net)
        worst = max(worst, np.abs(proj.matrix - ref.matrix).max(), abs(proj.ground_energy - ref.ground_energy))
    elapsed = time.perf_counter() - start
    verdict(1, worst <= 1e-12 and elapsed < 60, f"50 networks, max entry diff {worst:.1e} (<= 1e-12), {elapsed:.1f}s (< 60s)")


def test_criterion_02_exact_eigendata_round_trip():
    start, worst = time.perf_counter(), 0.0
    for kind, dims in [("chain", (20,)), ("grid2d", (5, 5)), ("grid3d", (3, 3, 3))]:
        for seed in range(20):
            net, gw = lattice_network(kind, dims, seed)
            _, est = exact_eigendata(net, gw)
            res = full_reconstruct(est, net.topology, gw, net.delta)
            err = max(
                max(abs(res.couplings[e] - c) for e, c in net.couplings.items()),
                max(abs(res.fields[n] - b) for n, b in net.fields.items()),
                abs(res.ground_energy - net.ground_energy()),
            )
            worst = max(worst, err)
    elapsed = time.perf_counter() - start
    verdict(2, worst < 1e-8 and elapsed < 60, f"chain20/grid5x5/cube3x3x3 x 20 seeds, max error {worst:.1e} (< 1e-8), {elapsed:.1f}s")


def test_criterion_03_exact_signal_round_trip():
    start = time.perf_counter()
    errors = [
        run_pipeline(pipeline_config("exact_signal", {"kind": "grid2d", "dims": [3, 3], "seed": s})).max_error
        for s in range(20)
    ]
    elapsed = time.perf_counter() - start
    worst = max(errors)
    verdict(3, worst < 1e-6 and elapsed < 120, f"3x3 grid x 20 seeds, max error {worst:.1e} (< 1e-6), {elapsed:.1f}s")


def test_criterion_04_shot_noise_scaling():
    levels = [10**4, 10**5, 10**6]
    medians = []
    for shots in levels:
        cfg = pipeline_config("shots", {"kind": "grid2d", "dims": [3, 3]}, shots=shots)
        medians.append(float(np.median([run_pipeline(cfg.with_seed(s)).max_error for s in range(20)])))
    slope = float(np.polyfit(np.log10(levels), np.log10(medians), 1)[0])
    monotone = all(a > b for a, b in zip(medians, medians[1:]))
    verdict(
        4,
        monotone and abs(slope + 0.5) <= 0.15,
        f"medians {', '.join(f'{m:.2e}' for m in medians)}; slope {slope:.3f} (-0.5 +/- 0.15)",
    )


def test_criterion_05_ground_energy_shift_invariance():
    net, gw = lattice_network("grid2d", (3, 3), 5)
    _, est = exact_eigendata(net, gw)
    base = full_reconstruct(est, net.topology, gw, net.delta)
    worst = {"c": 0.0, "b": 0.0, "E0": 0.0}
    for kappa in (1.0, -17.3):
        res = full_reconstruct(est.shifted_by(kappa), net.topology, gw, net.delta)
        worst["c"] = max(worst["c"], max(abs(res.couplings[e] - base.couplings[e]) for e in base.couplings))
        worst["b"] = max(worst["b"], max(abs(res.fields[n] - base.fields[n]) for n in base.fields))
        worst["E0"] = max(worst["E0"], abs(res.ground_energy - base.ground_energy))
    detail = ", ".join(f"max change {k} {v:.1e}" for k, v in worst.items())
    verdict(5, max(worst.values()) <= 1e-12, detail + " (<= 1e-12)")


def infecting_subset(topo, rng):
    order = [int(n) for n in rng.permutation(topo.node_count)]
    chosen = []
    for n in order:
        chosen.append(n)
        if is_infecting(topo, chosen):
            return sorted(chosen)
    return sorted(chosen)


def test_criterion_06_no_dark_states():
    rng = np.random.default_rng(606)
    worst, lifted = np.inf, 0
    for k in range(100):
        topo = random_connected_graph(rng, n_max=10)
        delta = float(rng.choice([0.0, 0.5, 1.0]))
        # every other network is uniform, which is where degeneracies live
        ranges = ((-1.0, -1.0), (0.0, 0.0)) if k % 2 else ((-2.0, -0.5), (-1.0, 1.0))
        net = random_network(topo, rng, *ranges, delta=delta)
        gw = infecting_subset(topo, rng)
        assert is_infecting(topo, gw)
        h = build_single_excitation(net)
        eig = eigendecompose(h)
        if find_degeneracies(eig, gw):
            _, eig = constructive_lift(h, gw)
            lifted += 1
        worst = min(worst, np.linalg.norm(eig.vectors[gw], axis=0).min())
    verdict(6, worst > 1e-10, f"100 networks ({lifted} needed a lift), min gateway norm {worst:.2e} (> 1e-10)")


def test_criterion_07_degeneracy_bound():
    rows = []
    ok = True
    for dims in [(2, 2), (2, 3), (3, 3), (3, 4), (4, 4)]:
        for delta in (0.0, 0.5, 1.0):
            eig = eigendecompose(build_single_excitation(uniform("grid2d", dims, delta)))
            mult = max(len(g) for g in cluster_eigenvalues(eig.eigenvalues))
            side = len(standard_gateway("grid2d", dims).members)
            ok &= mult <= side
            rows.append(f"{dims[0]}x{dims[1]}/{delta}:{mult}<={side}")
    verdict(7, ok, "max multiplicity vs |C|: " + " ".join(rows))


def test_criterion_08_constructive_lift():
    cases = [("cycle", 4), ("grid2d", [3, 3])]
    details, ok = [], True
    for kind, dims in cases:
        net = uniform(kind, tuple(dims) if isinstance(dims, list) else (dims,))
        gw = standard_gateway(kind, dims).sorted()
        h = build_single_excitation(net)
        before = eigendecompose(h).eigenvalues
        gap0 = min_positive_gap(before, default_group_tol(before))
        ops, after = constructive_lift(h, gw)
        spread = after.eigenvalues[-1] - after.eigenvalues[0]
        simple = np.diff(after.eigenvalues).min() > 1e-6 * spread
        outside = [n for n in range(net.node_count) if n not in gw]
        supported = all(not np.any(op.embed(net.node_count)[outside]) for op in ops) and bool(ops)
        small = np.linalg.norm(total_block(ops, gw), 2) < gap0

        gen = {"kind": kind, "dims": dims, "c_range": [-1, -1], "b_range": [0, 0], "delta": 0.5}
        try:
            run_pipeline(pipeline_config("exact_signal", gen))
            failed_before = False
        except PipelineError:
            failed_before = True
        err = run_pipeline(pipeline_config("exact_signal", gen, lift={"policy": "constructive"})).max_error
        case_ok = simple and supported and small and failed_before and err < 1e-6
        ok &= case_ok
        details.append(
            f"{kind}: simple={simple} on-C={supported} norm<gap={small} failed-unlifted={failed_before} error {err:.1e}"
        )
    verdict(8, ok, "; ".join(details))


def test_criterion_09_infection_correctness():
    rng = np.random.default_rng(909)
    checked = 0
    ok = True
    for _ in range(200):
        topo = random_connected_graph(rng, n_max=10)
        for size in range(1, min(3, topo.node_count) + 1):
            for subset in itertools.combinations(range(topo.node_count), size):
                closure = brute_closure(topo, subset)
                gw = GatewaySet.of(subset)
                try:
                    seq = forcing_sequence(topo, gw)
                    infected = set(subset)
                    for mu, nu in seq:
                        neighbours = {n for n in range(topo.node_count) if topo.has_edge(mu, n)}
                        ok &= mu in infected and neighbours - infected == {nu}
                        infected.add(nu)
                    ok &= len(closure) == topo.node_count and infected == closure
                except NotInfecting as exc:
                    ok &= len(closure) < topo.node_count and set(exc.closure) == closure
                checked += 1
    verdict(9, bool(ok), f"{checked} (graph, gateway) pairs agree with brute-force closure")


def test_criterion_10_determinism(tmp_path):
    cfg = {
        "version": 1,
        "mode": "shots",
        "network": {"generate": {"kind": "cycle", "dims": 4, "c_range": [-1, -1], "b_range": [0, 0]}},
        "shots": 100000,
        "lift": {"policy": "auto_random"},
    }
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    outputs = []
    for k in range(2):
        out = tmp_path / f"r{k}.json"
        proc = subprocess.run(
            [sys.executable, "-m", "spingate.cli", "pipeline", "--config", str(path), "--seeds", "1..3", "-o", str(out)],
            capture_output=True,
        )
        assert proc.returncode == 0, proc.stderr
        doc = json.loads(out.read_text())
        for run in doc["runs"]:
            run.pop("timings")
        outputs.append(json.dumps(doc, indent=2).encode())
    verdict(10, outputs[0] == outputs[1], f"two CLI runs, {len(outputs[0])} bytes each, identical modulo timings")
