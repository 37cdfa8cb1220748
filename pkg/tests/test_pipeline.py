import json

import numpy as np
import pytest

from conftest import dense_hamiltonian
from spingate import io
from spingate.errors import BadSpec, InvalidConfig, LineCountDeficit, NotInfecting, PipelineError, TopologyMismatch
from spingate.model import build_single_excitation, project_full_to_single, build_full_space
from spingate.network import GatewaySet, standard_topology
from spingate.pipeline import GeneratorSpec, RunConfig, Tolerances, compare, generate_network, run_pipeline
from spingate.reconstruct import ReconstructionResult


def config(**kw):
    doc = {"version": 1, "mode": "exact_signal", "network": {"generate": {"kind": "grid2d", "dims": [3, 3], "seed": 1}}}
    doc.update(kw)
    return RunConfig.from_dict(doc)


CYCLE = {"generate": {"kind": "cycle", "dims": 4, "c_range": [-1, -1], "b_range": [0, 0], "delta": 0.5}}


def test_grid_exact_signal():
    rep = run_pipeline(config(network={"generate": {"kind": "grid2d", "dims": [4, 4], "seed": 7}}))
    assert rep.data["comparison"]["summary"]["max_abs_c"] < 1e-6
    assert rep.data["spectral"]["spectral"]["line_count"] == 16


def test_chain_exact_eigendata():
    rep = run_pipeline(config(mode="exact_eigendata", network={"generate": {"kind": "chain", "dims": 10, "seed": 3}}))
    assert rep.max_error < 1e-8
    assert rep.data["sampling"] is None


@pytest.mark.parametrize("mode", ["exact_eigendata", "exact_signal"])
def test_uniform_cycle_needs_a_lift(mode):
    with pytest.raises(PipelineError) as info:
        run_pipeline(config(mode=mode, network=CYCLE))
    assert info.value.stage == "reconstruct"
    assert isinstance(info.value.cause, LineCountDeficit)
    for policy in ("auto_random", "constructive"):
        rep = run_pipeline(config(mode=mode, network=CYCLE, lift={"policy": policy}))
        assert rep.max_error < 1e-6
        assert rep.data["lift"]["applied"]


def test_lift_skipped_when_not_needed():
    rep = run_pipeline(config(lift={"policy": "constructive"}))
    assert rep.data["lift"] == {"policy": "constructive", "degenerate_groups": 0, "applied": False}


def test_generator():
    spec = GeneratorSpec("grid2d", (3, 3), (-2.0, -0.5), (-1.0, 1.0), 0.5, 11)
    a, b = generate_network(spec), generate_network(spec)
    assert a.couplings == b.couplings and a.fields == b.fields
    assert all(-2.0 <= c <= -0.5 for c in a.couplings.values())
    assert all(-1.0 <= x <= 1.0 for x in a.fields.values())
    proj = project_full_to_single(build_full_space(a))
    assert np.abs(proj.matrix - build_single_excitation(a).matrix).max() < 1e-12
    assert abs(dense_hamiltonian(a)[-1, -1].real - a.ground_energy()) < 1e-12
    with pytest.raises(BadSpec):
        GeneratorSpec("chain", (3,), (-1.0, 0.5))
    with pytest.raises(BadSpec):
        GeneratorSpec("chain", (3,), (-1.0, -2.0))
    with pytest.raises(BadSpec):
        GeneratorSpec("chain", (3,), b_range=(1.0, 0.0))
    with pytest.raises(BadSpec):
        generate_network(GeneratorSpec("torus", (3,)))


def truth_result(net):
    j = {e: 2 * c for e, c in net.couplings.items()}
    return ReconstructionResult(j, dict(net.fields), net.ground_energy(), np.zeros(net.node_count))


def test_compare():
    net = generate_network(GeneratorSpec("chain", (4,), seed=2))
    table = compare(net, truth_result(net))
    assert table.summary["max_abs"] == 0.0
    res = truth_result(net)
    res.matrix_elements[(1, 2)] += 2e-3
    table = compare(net, res)
    errs = {(e["m"], e["n"]): e["abs"] for e in table.edges}
    assert abs(errs[(2, 3)] - 1e-3) < 1e-15
    assert errs[(1, 2)] == 0.0 and errs[(3, 4)] == 0.0
    other = generate_network(GeneratorSpec("chain", (5,), seed=2))
    with pytest.raises(TopologyMismatch):
        compare(other, res)


def strip(doc):
    return json.dumps({k: v for k, v in doc.items() if k != "timings"}, sort_keys=True)


def test_deterministic_reports():
    cfg = config(mode="shots", shots=10000, seed=4)
    assert strip(run_pipeline(cfg).to_dict()) == strip(run_pipeline(cfg).to_dict())
    cfg = config(network=CYCLE, lift={"policy": "auto_random", "seed": 2})
    assert io.dumps(run_pipeline(cfg).data) == io.dumps(run_pipeline(cfg).data)


def test_mode_ordering():
    for seed in range(3):
        gen = {"generate": {"kind": "grid2d", "dims": [3, 3], "seed": seed}}
        e_eig = run_pipeline(config(mode="exact_eigendata", network=gen)).max_error
        e_sig = run_pipeline(config(mode="exact_signal", network=gen)).max_error
        shots = [run_pipeline(config(mode="shots", shots=10**5, seed=s, network=gen)).max_error for s in range(5)]
        assert e_eig <= e_sig <= np.median(shots)


def test_non_infecting_gateway_fails_fast():
    with pytest.raises(PipelineError) as info:
        run_pipeline(config(gateway=[1]))
    assert info.value.stage == "infect"
    assert isinstance(info.value.cause, NotInfecting)
    assert info.value.exit_code == 1
    assert info.value.to_dict()["cause"]["closure"] == [1]


def test_config_validation():
    with pytest.raises(InvalidConfig):
        config(mode="fourier")
    with pytest.raises(InvalidConfig):
        config(mode="shots")
    with pytest.raises(InvalidConfig):
        config(tolerances={"nonsense": 1})
    with pytest.raises(InvalidConfig):
        RunConfig.from_dict({"version": 2, "mode": "exact_signal", "network": {"file": "x"}})
    with pytest.raises(InvalidConfig) as info:
        config(sampling={"oversample": -1})
    assert info.value.path == "/sampling/oversample"


def test_network_file_config(tmp_path):
    net = generate_network(GeneratorSpec("grid2d", (3, 3), seed=5))
    io.write_network(tmp_path / "net.json", net, GatewaySet.of([0, 3, 6]))
    (tmp_path / "run.json").write_text(json.dumps({"version": 1, "mode": "exact_signal", "network": {"file": "net.json"}}))
    rep = run_pipeline(RunConfig.from_file(tmp_path / "run.json"))
    assert rep.max_error < 1e-6
    assert rep.data["network"]["gateway"] == [1, 4, 7]


def test_seed_override_and_env_tolerances():
    cfg = config(mode="shots", shots=1000).with_seed(9)
    assert cfg.seed == 9 and cfg.generate.seed == 9 and cfg.echo["network"]["generate"]["seed"] == 9
    env = io.tolerance_overrides({"SPINGATE_TOLERANCES": '{"imag_tol": 0.5}'})
    cfg = RunConfig.from_dict({"version": 1, "mode": "exact_signal", "network": CYCLE}, env_tolerances=env)
    assert cfg.tolerances.imag_tol == 0.5
    assert Tolerances().for_shots(10**4).nonedge == 2.0
    assert Tolerances().for_shots("exact").nonedge == 1e-6
