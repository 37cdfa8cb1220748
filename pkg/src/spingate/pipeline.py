"""End-to-end runs: truth network, experiments, estimation, reconstruction, comparison.

A run configuration is a JSON document::

    {
      "version": 1,
      "network": {"generate": {"kind": "grid2d", "dims": [4, 4],
                               "c_range": [-2, -0.5], "b_range": [-1, 1],
                               "delta": 0.5, "seed": 7}},
      "gateway": "standard",
      "mode": "exact_signal",
      "sampling": {"oversample": 2.0, "samples_per_line": 8},
      "lift": {"policy": "none"},
      "tolerances": {}
    }

``network`` may instead be ``{"file": "net.json"}`` (relative to the config
file).  ``gateway`` is ``"standard"`` or a list of 1-based ids; a network
file's own gateway wins when the config leaves it out.  ``mode`` is
``exact_eigendata``, ``exact_signal`` or ``shots`` (then ``shots`` and
``seed`` are used).
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .degeneracy import (
    constructive_lift,
    default_group_tol,
    find_degeneracies,
    lift_report,
    min_positive_gap,
    random_field_lift,
    total_block,
)
from .dynamics import EXACT, ExperimentConfig, nyquist_times, simulate_tomography
from .errors import BadSpec, InvalidConfig, PipelineError, SpinGateError, TopologyMismatch
from .model import (
    SingleExcitationMatrix,
    SpinNetwork,
    build_single_excitation,
    eigendecompose,
    spectral_radius_bound,
)
from .network import GatewaySet, forcing_sequence, standard_gateway, standard_topology
from .reconstruct import ReconstructionResult, ReconstructionTolerances, full_reconstruct
from .spectral import SpectralOptions, assemble_eigendata, estimate_lines, exact_lines

MODES = ("exact_eigendata", "exact_signal", "shots")
LIFT_POLICIES = ("none", "auto_random", "constructive")

RUN_SCHEMA = {
    "type": "object",
    "required": ["version", "network", "mode"],
    "additionalProperties": False,
    "properties": {
        "version": {"const": io.FORMAT_VERSION},
        "network": {
            "type": "object",
            "minProperties": 1,
            "maxProperties": 1,
            "properties": {
                "file": {"type": "string"},
                "generate": {
                    "type": "object",
                    "required": ["kind", "dims"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"enum": ["chain", "cycle", "grid2d", "grid3d"]},
                        "dims": {
                            "anyOf": [
                                {"type": "integer", "minimum": 1},
                                {"type": "array", "items": {"type": "integer", "minimum": 1}},
                            ]
                        },
                        "c_range": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                        "b_range": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                        "delta": {"type": "number"},
                        "seed": {"type": "integer", "minimum": 0},
                    },
                },
            },
            "additionalProperties": False,
        },
        "gateway": {
            "anyOf": [
                {"const": "standard"},
                {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
            ]
        },
        "mode": {"enum": list(MODES)},
        "shots": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "sampling": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "oversample": {"type": "number", "exclusiveMinimum": 0},
                "samples_per_line": {"type": "integer", "minimum": 1},
                "bound": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "lift": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "policy": {"enum": list(LIFT_POLICIES)},
                "strength": {"type": "number", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "tolerances": {"type": "object"},
    },
}


@dataclass
class Tolerances:
    """Every numerical knob of a run in one place."""

    group_tol: float | None = None  # None: 1e-8 * spectral spread
    rel_tol: float = 1e-8
    gap_ratio: float = 10.0
    noise_factor: float = 3.0  # shot mode singular-value threshold, x median
    merge_rel_tol: float = 1e-6
    merge_abs_tol: float = 1e-9
    cond_cap: float = 1e10
    imag_tol: float = 1e-6
    nonedge: float = 1e-6
    zero_pivot: float = 1e-9
    orthogonality: float = 1e-6
    row_norm: float = 1e-6
    reorthogonalize: bool = True
    # shot mode: consistency tolerances become max(default, noise_scale / sqrt(shots))
    noise_scale: float = 200.0

    @classmethod
    def from_dict(cls, doc: dict) -> "Tolerances":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - names)
        if unknown:
            raise InvalidConfig(f"unknown tolerance keys {unknown}")
        return cls(**doc)

    def for_shots(self, shots) -> "Tolerances":
        if shots == EXACT:
            return self
        floor = self.noise_scale / np.sqrt(shots)
        return dataclasses.replace(
            self,
            imag_tol=max(self.imag_tol, floor),
            nonedge=max(self.nonedge, floor),
            orthogonality=max(self.orthogonality, floor),
            row_norm=max(self.row_norm, floor),
        )

    def reconstruction(self) -> ReconstructionTolerances:
        return ReconstructionTolerances(
            nonedge=self.nonedge,
            zero_pivot=self.zero_pivot,
            orthogonality=self.orthogonality,
            row_norm=self.row_norm,
            reorthogonalize=self.reorthogonalize,
        )


@dataclass
class GeneratorSpec:
    kind: str
    dims: tuple
    c_range: tuple = (-2.0, -0.5)
    b_range: tuple = (-1.0, 1.0)
    delta: float = 0.5
    seed: int = 0

    def __post_init__(self):
        self.dims = (self.dims,) if isinstance(self.dims, int) else tuple(self.dims)
        self.c_range = tuple(float(x) for x in self.c_range)
        self.b_range = tuple(float(x) for x in self.b_range)
        c_lo, c_hi = self.c_range
        b_lo, b_hi = self.b_range
        if not c_lo <= c_hi < 0:
            raise BadSpec(f"coupling range must satisfy c_lo <= c_hi < 0, got {self.c_range}")
        if not b_lo <= b_hi:
            raise BadSpec(f"field range must be ordered, got {self.b_range}")

    @property
    def max_coupling(self) -> float:
        return max(abs(c) for c in self.c_range)

    @property
    def max_field(self) -> float:
        return max(abs(b) for b in self.b_range)


@dataclass
class RunConfig:
    mode: str
    generate: GeneratorSpec | None = None
    network_file: str | None = None
    gateway: object = None  # None, "standard" or 1-based ids
    shots: int | None = None
    seed: int = 0
    oversample: float = 2.0
    samples_per_line: int = 8
    bound: float | None = None
    lift_policy: str = "none"
    lift_strength: float | None = None
    lift_seed: int = 0
    tolerances: Tolerances = field(default_factory=Tolerances)
    echo: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: dict, base_dir=None, env_tolerances: dict | None = None) -> "RunConfig":
        io.validate(doc, RUN_SCHEMA, "run config", error=InvalidConfig)
        net = doc["network"]
        generate = GeneratorSpec(**net["generate"]) if "generate" in net else None
        network_file = None
        if "file" in net:
            p = Path(net["file"])
            network_file = str(p if p.is_absolute() or base_dir is None else Path(base_dir) / p)
        if doc["mode"] == "shots" and "shots" not in doc:
            raise InvalidConfig("mode 'shots' needs a 'shots' count", path="/shots")
        sampling = doc.get("sampling", {})
        lift = doc.get("lift", {})
        tol = dict(env_tolerances or {})
        tol.update(doc.get("tolerances", {}))
        return cls(
            mode=doc["mode"],
            generate=generate,
            network_file=network_file,
            gateway=doc.get("gateway"),
            shots=doc.get("shots"),
            seed=doc.get("seed", 0),
            oversample=float(sampling.get("oversample", 2.0)),
            samples_per_line=int(sampling.get("samples_per_line", 8)),
            bound=sampling.get("bound"),
            lift_policy=lift.get("policy", "none"),
            lift_strength=lift.get("strength"),
            lift_seed=lift.get("seed", 0),
            tolerances=Tolerances.from_dict(tol),
            echo=doc,
        )

    @classmethod
    def from_file(cls, path, env_tolerances: dict | None = None) -> "RunConfig":
        doc = io.read_json(path)
        return cls.from_dict(doc, Path(path).parent, env_tolerances)

    def with_seed(self, seed: int) -> "RunConfig":
        """Same run with the generator seed and the shot seed both set to ``seed``."""
        echo = dict(self.echo)
        generate = self.generate
        if generate is not None:
            generate = dataclasses.replace(generate, seed=seed)
            echo["network"] = {"generate": dict(echo["network"]["generate"], seed=seed)}
        echo["seed"] = seed
        return dataclasses.replace(self, generate=generate, seed=seed, echo=echo)

    @property
    def shot_count(self):
        return self.shots if self.mode == "shots" else EXACT


def generate_network(spec: GeneratorSpec) -> SpinNetwork:
    """Couplings uniform in ``c_range`` (edges in sorted order), then fields uniform in ``b_range``."""
    try:
        topology = standard_topology(spec.kind, spec.dims)
    except SpinGateError as exc:
        raise BadSpec(str(exc)) from exc
    rng = np.random.default_rng(spec.seed)
    couplings = {e: float(rng.uniform(*spec.c_range)) for e in topology.sorted_edges()}
    fields = {n: float(rng.uniform(*spec.b_range)) for n in range(topology.node_count)}
    return SpinNetwork(topology, couplings, fields, spec.delta)


@dataclass
class ErrorTable:
    edges: list  # dicts with m, n (1-based), true, estimate, abs, rel
    nodes: list
    ground_energy: dict
    summary: dict

    def to_dict(self) -> dict:
        return {"edges": self.edges, "nodes": self.nodes, "E0": self.ground_energy, "summary": self.summary}


def _entry(true, est):
    err = abs(est - true)
    return {"true": true, "estimate": est, "abs": err, "rel": err / abs(true) if true != 0 else None}


def compare(truth: SpinNetwork, result: ReconstructionResult) -> ErrorTable:
    """Per-edge and per-node errors of a reconstruction against the truth network."""
    if set(result.matrix_elements) != set(truth.couplings) or set(result.fields) != set(truth.fields):
        raise TopologyMismatch("reconstruction and truth do not share a topology")
    couplings = result.couplings
    edges = [dict(m=m + 1, n=n + 1, **_entry(truth.couplings[(m, n)], couplings[(m, n)])) for m, n in sorted(truth.couplings)]
    nodes = [dict(id=n + 1, **_entry(truth.fields[n], result.fields[n])) for n in sorted(truth.fields)]
    e0 = _entry(truth.ground_energy(), result.ground_energy)

    def stats(rows, prefix):
        abs_err = [r["abs"] for r in rows]
        rel_err = [r["rel"] for r in rows if r["rel"] is not None]
        return {
            f"max_abs_{prefix}": max(abs_err, default=0.0),
            f"mean_abs_{prefix}": float(np.mean(abs_err)) if abs_err else 0.0,
            f"max_rel_{prefix}": max(rel_err, default=0.0),
        }

    summary = {**stats(edges, "c"), **stats(nodes, "b"), "abs_E0": e0["abs"], "rel_E0": e0["rel"]}
    summary["max_abs"] = max(summary["max_abs_c"], summary["max_abs_b"], e0["abs"])
    return ErrorTable(edges, nodes, e0, summary)


@dataclass
class Report:
    data: dict
    timings: dict
    truth: SpinNetwork | None = None
    result: ReconstructionResult | None = None
    dataset: object = None
    estimate: object = None
    true_eigensystem: object = None

    def to_dict(self) -> dict:
        return {**self.data, "timings": self.timings}

    @property
    def max_error(self) -> float:
        return self.data["comparison"]["summary"]["max_abs"]


class _Stages:
    def __init__(self):
        self.timings = {}

    def run(self, name, fn, *args, **kwargs):
        start = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        except PipelineError:
            raise
        except (SpinGateError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            raise PipelineError(name, exc) from exc
        finally:
            self.timings[name] = time.perf_counter() - start


def _load(config: RunConfig):
    if config.generate is not None:
        network = generate_network(config.generate)
        file_gateway = None
    else:
        network, file_gateway = io.read_network(config.network_file)
    if config.gateway == "standard" or (config.gateway is None and file_gateway is None):
        if config.generate is None:
            raise InvalidConfig("a network file without a gateway needs an explicit gateway list")
        gateway = standard_gateway(config.generate.kind, config.generate.dims)
    elif config.gateway is None:
        gateway = file_gateway
    else:
        gateway = GatewaySet.of(g - 1 for g in config.gateway)
    gateway.validate(network.topology)
    return network, gateway


def _bound(config: RunConfig, network: SpinNetwork, lift_block) -> float:
    if config.bound is not None:
        bound = float(config.bound)
    elif config.generate is not None:
        bound = spectral_radius_bound(
            config.generate.max_coupling, config.generate.max_field, network.topology, network.delta
        )
    else:
        bound = spectral_radius_bound(
            max((abs(c) for c in network.couplings.values()), default=0.0),
            max(abs(b) for b in network.fields.values()),
            network.topology,
            network.delta,
        )
    # the lift adds at most its largest absolute row sum to any Gershgorin disc
    bound += float(np.abs(lift_block).sum(axis=1).max(initial=0.0))
    return bound if bound > 0 else 1.0


def _lift(config: RunConfig, h: SingleExcitationMatrix, gateway: GatewaySet, group_tol):
    nodes = gateway.sorted()
    eig = eigendecompose(h)
    groups = find_degeneracies(eig, nodes, group_tol)
    record = {"policy": config.lift_policy, "degenerate_groups": len(groups), "applied": False}
    zero = np.zeros((len(nodes), len(nodes)))
    if config.lift_policy == "none" or not groups:
        return zero, record
    if config.lift_policy == "constructive":
        ops, _ = constructive_lift(h, nodes, group_tol=group_tol)
    else:
        gap = min_positive_gap(eig.eigenvalues, group_tol)
        strength = config.lift_strength
        if strength is None:
            strength = 0.25 * gap if np.isfinite(gap) else 1.0
        ops = [random_field_lift(h, nodes, strength, config.lift_seed, group_tol=group_tol)]
    record.update(applied=True, report=lift_report(h, nodes, ops, group_tol))
    return total_block(ops, nodes), record


def run_pipeline(config: RunConfig) -> Report:
    stages = _Stages()
    tol = config.tolerances.for_shots(config.shot_count)
    network, gateway = stages.run("load", _load, config)
    nodes = gateway.sorted()
    n = network.node_count
    sequence = stages.run("infect", forcing_sequence, network.topology, gateway)

    h = build_single_excitation(network)
    true_eig = eigendecompose(h)
    group_tol = tol.group_tol if tol.group_tol is not None else default_group_tol(true_eig.eigenvalues)
    block, lift_record = stages.run("lift", _lift, config, h, gateway, group_tol)

    def simulate():
        embedded = np.zeros((n, n))
        embedded[np.ix_(nodes, nodes)] = block
        eig = eigendecompose(SingleExcitationMatrix(h.matrix + embedded, h.ground_energy))
        if config.mode == "exact_eigendata":
            return eig, None, None
        bound = _bound(config, network, block)
        times = nyquist_times(bound, n, config.oversample, config.samples_per_line)
        cfg = ExperimentConfig(tuple(nodes), tuple(nodes), times, config.shot_count, config.seed)
        return eig, simulate_tomography(eig, cfg, gateway), bound

    eig, dataset, bound = stages.run("simulate", simulate)

    def spectral():
        if dataset is None:
            lines = exact_lines(eig, nodes, group_tol)
            diag = {"line_count": len(lines), "source": "exact eigendata"}
        else:
            band = config.oversample * bound
            if config.mode == "shots":
                opts = SpectralOptions.for_shots(dataset.times, n, band)
                opts.noise_factor = tol.noise_factor
            else:
                opts = SpectralOptions(
                    rel_tol=tol.rel_tol,
                    gap_ratio=tol.gap_ratio,
                    merge_rel_tol=tol.merge_rel_tol,
                    merge_abs_tol=tol.merge_abs_tol,
                    cond_cap=tol.cond_cap,
                    max_abs_frequency=bound,
                )
            lines, diag = estimate_lines(dataset, opts)
        diag["expected_line_count"] = n
        est = assemble_eigendata(lines, nodes, imag_tol=tol.imag_tol)
        est.diagnostics.update(spectral=diag)
        return est

    estimate = stages.run("spectral", spectral)
    result = stages.run(
        "reconstruct",
        full_reconstruct,
        estimate,
        network.topology,
        gateway,
        network.delta,
        network.convention,
        tol.reconstruction(),
        block if lift_record["applied"] else None,
    )
    table = stages.run("compare", compare, network, result)

    sampling = None
    if dataset is not None:
        sampling = {
            "bound": bound,
            "oversample": config.oversample,
            "dt": dataset.dt,
            "samples": len(dataset.times),
            "shots": config.shot_count,
            "seed": config.seed,
        }
    data = {
        "version": io.FORMAT_VERSION,
        "config": config.echo,
        "network": {
            "node_count": n,
            "edge_count": len(network.topology.edges),
            "delta": network.delta,
            "gateway": [g + 1 for g in nodes],
            "forcing_sequence": [[mu + 1, nu + 1] for mu, nu in sequence],
        },
        "sampling": sampling,
        "lift": lift_record,
        "spectral": estimate.diagnostics,
        "result": result.to_dict(),
        "comparison": table.to_dict(),
    }
    return Report(io.plain(data), stages.timings, network, result, dataset, estimate, true_eig)


def run_sweep(config: RunConfig, seeds) -> list:
    return [run_pipeline(config.with_seed(s)) for s in seeds]
