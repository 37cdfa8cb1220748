"""File formats: network JSON, dataset CSV + sidecar, eigendata, results.

Node ids are 1-based in every file and 0-based in memory.  Every document
carries a ``version`` field.
"""

from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path

import jsonschema
import numpy as np

from .dynamics import EXACT, TomographyDataset
from .errors import InputError
from .model import CONVENTIONS, FERROMAGNETIC, SpinNetwork
from .network import GatewaySet, GraphTopology
from .spectral import EigendataEstimate

FORMAT_VERSION = 1
TOLERANCE_ENV = "SPINGATE_TOLERANCES"

NETWORK_SCHEMA = {
    "type": "object",
    "required": ["version", "nodes", "edges"],
    "additionalProperties": False,
    "properties": {
        "version": {"const": FORMAT_VERSION},
        "delta": {"type": "number"},
        "convention": {"enum": list(CONVENTIONS)},
        "nodes": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id"],
                "additionalProperties": False,
                "properties": {"id": {"type": "integer", "minimum": 1}, "b": {"type": "number"}},
            },
        },
        "edges": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["m", "n", "c"],
                "additionalProperties": False,
                "properties": {
                    "m": {"type": "integer", "minimum": 1},
                    "n": {"type": "integer", "minimum": 1},
                    "c": {"type": "number"},
                },
            },
        },
        "gateway": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
    },
}

EIGENDATA_SCHEMA = {
    "type": "object",
    "required": ["version", "frequencies", "gateway_components"],
    "properties": {
        "version": {"const": FORMAT_VERSION},
        "frequencies": {"type": "array", "items": {"type": "number"}},
        "gateway_components": {
            "type": "object",
            "patternProperties": {"^[1-9][0-9]*$": {"type": "array", "items": {"type": "number"}}},
            "additionalProperties": False,
        },
        "diagnostics": {"type": "object"},
    },
}

DATASET_META_SCHEMA = {
    "type": "object",
    "required": ["version", "shots", "dt", "gateway", "node_count"],
    "properties": {
        "version": {"const": FORMAT_VERSION},
        "shots": {"anyOf": [{"const": EXACT}, {"type": "integer", "minimum": 1}]},
        "seed": {"type": ["integer", "null"]},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "bound": {"type": ["number", "null"]},
        "gateway": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "node_count": {"type": "integer", "minimum": 1},
    },
}


def plain(obj):
    """Recursively convert numpy types to JSON-ready Python; non-finite floats become None."""
    if isinstance(obj, dict):
        return {str(k) if not isinstance(k, str) else k: plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (complex, np.complexfloating)):
        return [plain(obj.real), plain(obj.imag)]
    return obj


def dumps(obj) -> str:
    return json.dumps(plain(obj), indent=2) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def parse_json(text: str, source: str = "<string>", schema: dict | None = None):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{source}: {exc.msg}", line=exc.lineno, column=exc.colno) from exc
    if schema is not None:
        validate(doc, schema, source)
    return doc


def validate(doc, schema: dict, source: str = "<document>", error=InputError) -> None:
    errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path)
        raise error(f"{source}: {err.message}" + (f" at /{where}" if where else ""), path="/" + where)


def read_json(path, schema: dict | None = None):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    return parse_json(text, str(path), schema)


# networks


def network_from_dict(doc: dict, source: str = "<network>"):
    """Returns ``(network, gateway)``; ``gateway`` is None when the file has none."""
    validate(doc, NETWORK_SCHEMA, source)
    ids = [node["id"] for node in doc["nodes"]]
    if sorted(ids) != list(range(1, len(ids) + 1)):
        raise InputError(f"{source}: node ids must be exactly 1..{len(ids)} without repeats", path="/nodes")
    n = len(ids)
    for k, edge in enumerate(doc["edges"]):
        if edge["m"] > n or edge["n"] > n:
            raise InputError(f"{source}: edge references an unknown node id", path=f"/edges/{k}")
    topology = GraphTopology.from_edges(n, [(e["m"] - 1, e["n"] - 1) for e in doc["edges"]])
    topology.require_connected()
    couplings = {(e["m"] - 1, e["n"] - 1): e["c"] for e in doc["edges"]}
    fields = {node["id"] - 1: node.get("b", 0.0) for node in doc["nodes"]}
    network = SpinNetwork(
        topology, couplings, fields, doc.get("delta", 0.0), doc.get("convention", FERROMAGNETIC)
    )
    gateway = None
    if "gateway" in doc:
        gateway = GatewaySet.of(g - 1 for g in doc["gateway"]).validate(topology)
    return network, gateway


def network_to_dict(network: SpinNetwork, gateway: GatewaySet | None = None) -> dict:
    doc = {
        "version": FORMAT_VERSION,
        "delta": network.delta,
        "convention": network.convention,
        "nodes": [{"id": n + 1, "b": network.fields[n]} for n in range(network.node_count)],
        "edges": [{"m": m + 1, "n": n + 1, "c": network.couplings[(m, n)]} for m, n in network.topology.sorted_edges()],
    }
    if gateway is not None:
        doc["gateway"] = [n + 1 for n in gateway.sorted()]
    return doc


def read_network(path):
    return network_from_dict(read_json(path), str(path))


def write_network(path, network, gateway=None) -> None:
    write_json(path, network_to_dict(network, gateway))


# datasets


def sidecar_path(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".meta.json")


def write_dataset(path, dataset: TomographyDataset, *, bound=None, gateway=None, node_count=None) -> Path:
    """CSV rows (n0, n, t, re, im) plus a JSON sidecar; returns the sidecar path."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n0", "n", "t", "re", "im"])
        for (n0, n), row in zip(dataset.pairs, dataset.values):
            for t, s in zip(dataset.times, row):
                writer.writerow([n0 + 1, n + 1, repr(float(t)), repr(float(s.real)), repr(float(s.imag))])
    meta = {
        "version": FORMAT_VERSION,
        "shots": dataset.metadata.get("shots", EXACT),
        "seed": dataset.metadata.get("seed"),
        "dt": dataset.dt,
        "bound": bound,
        "gateway": [n + 1 for n in sorted(gateway)] if gateway is not None else sorted({n + 1 for n, _ in dataset.pairs}),
        "node_count": node_count,
    }
    meta.update({k: v for k, v in dataset.metadata.items() if k not in meta})
    side = sidecar_path(path)
    write_json(side, meta)
    return side


def read_dataset(path):
    """Returns ``(dataset, metadata)``."""
    meta = read_json(sidecar_path(path), DATASET_META_SCHEMA)
    series = {}
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["n0", "n", "t", "re", "im"]:
                raise InputError(f"{path}: expected header n0,n,t,re,im", line=1, column=1)
            for lineno, row in enumerate(reader, start=2):
                try:
                    n0, n, t, re, im = row
                    key = (int(n0) - 1, int(n) - 1)
                    series.setdefault(key, []).append((float(t), complex(float(re), float(im))))
                except ValueError as exc:
                    raise InputError(f"{path}: bad row ({exc})", line=lineno, column=1) from exc
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    if not series:
        raise InputError(f"{path}: no samples")
    pairs = sorted(series)
    times = np.array([t for t, _ in series[pairs[0]]])
    values = np.empty((len(pairs), len(times)), complex)
    for k, pair in enumerate(pairs):
        ts = np.array([t for t, _ in series[pair]])
        if ts.shape != times.shape or np.any(ts != times):
            raise InputError(f"{path}: signal {pair[0] + 1}->{pair[1] + 1} uses a different time grid")
        values[k] = [s for _, s in series[pair]]
    dataset = TomographyDataset(times, pairs, values, {"shots": meta["shots"], "seed": meta.get("seed"), "dt": meta["dt"]})
    return dataset, meta


# eigendata and results


def eigendata_to_dict(est: EigendataEstimate) -> dict:
    return {
        "version": FORMAT_VERSION,
        "frequencies": est.frequencies,
        "gateway_components": {str(n + 1): est.components[i] for i, n in enumerate(est.gateway)},
        "diagnostics": est.diagnostics,
    }


def eigendata_from_dict(doc: dict, source: str = "<eigendata>") -> EigendataEstimate:
    validate(doc, EIGENDATA_SCHEMA, source)
    freqs = np.asarray(doc["frequencies"], float)
    nodes = sorted(int(k) for k in doc["gateway_components"])
    rows = [doc["gateway_components"][str(n)] for n in nodes]
    if any(len(row) != len(freqs) for row in rows):
        raise InputError(f"{source}: every component row needs one value per frequency", path="/gateway_components")
    comps = np.array(rows, float).reshape(len(nodes), len(freqs))
    return EigendataEstimate(freqs, [n - 1 for n in nodes], comps, doc.get("diagnostics", {}))


def read_eigendata(path) -> EigendataEstimate:
    return eigendata_from_dict(read_json(path), str(path))


def tolerance_overrides(environ=None) -> dict:
    """Tolerance defaults from the SPINGATE_TOLERANCES environment variable (a JSON object)."""
    env = os.environ if environ is None else environ
    text = env.get(TOLERANCE_ENV)
    if not text:
        return {}
    doc = parse_json(text, TOLERANCE_ENV)
    if not isinstance(doc, dict):
        raise InputError(f"{TOLERANCE_ENV} must hold a JSON object")
    return doc
