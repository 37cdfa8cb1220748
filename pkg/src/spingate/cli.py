"""Command line interface.

Exit codes: 0 success, 1 the gateway does not infect (or nothing found),
2 bad input, 3 numerical failure.  Errors are also written to stderr as a
JSON object.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import io
from .degeneracy import constructive_lift, lift_report, random_field_lift
from .dynamics import EXACT, ExperimentConfig, nyquist_times, simulate_tomography
from .errors import InputError, SpinGateError
from .model import build_single_excitation, eigendecompose, spectral_radius_bound
from .network import GatewaySet, forcing_sequence, infected_closure, standard_gateway
from .pipeline import GeneratorSpec, RunConfig, Tolerances, compare, generate_network, run_pipeline
from .reconstruct import full_reconstruct
from .spectral import SpectralOptions, eigendata_from_signals

RANGE_OPTIONS = ("--c-range", "--b-range")


def _ids(text):
    try:
        ids = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated node ids, got {text!r}")
    if not ids or min(ids) < 1:
        raise argparse.ArgumentTypeError("node ids are 1-based")
    return ids


def _pair(text):
    try:
        lo, hi = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}")
    return lo, hi


def _dims(text):
    try:
        return tuple(int(x) for x in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected dims like 4 or 4x4 or 3x3x3, got {text!r}")


def _seeds(text):
    lo, sep, hi = text.partition("..")
    try:
        return list(range(int(lo), int(hi) + 1)) if sep else [int(lo)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A..B, got {text!r}")


def _gateway(args, network, file_gateway):
    if args.gateway is not None:
        return GatewaySet.of(g - 1 for g in args.gateway).validate(network.topology)
    if file_gateway is None:
        raise InputError("no gateway: pass --gateway or add one to the network file")
    return file_gateway


def _emit(args, doc, text=None):
    if getattr(args, "output", None):
        io.write_json(args.output, doc)
    if args.json:
        sys.stdout.write(io.dumps(doc))
    elif text:
        print(text)


def cmd_infect(args):
    network, file_gateway = io.read_network(args.network)
    gateway = _gateway(args, network, file_gateway)
    closure = infected_closure(network.topology, gateway.members)
    if len(closure) < network.node_count:
        if not args.json:
            print(f"not infecting: closure {sorted(n + 1 for n in closure)}")
    sequence = forcing_sequence(network.topology, gateway)
    steps = [[mu + 1, nu + 1] for mu, nu in sequence]
    doc = {"version": io.FORMAT_VERSION, "gateway": [g + 1 for g in gateway], "infecting": True, "steps": steps}
    _emit(args, doc, "\n".join([f"infecting: {len(steps)} steps"] + [f"{mu} -> {nu}" for mu, nu in steps]))


def cmd_gen(args):
    spec = GeneratorSpec(args.kind, args.dims, args.c_range, args.b_range, args.delta, args.seed)
    network = generate_network(spec)
    gateway = standard_gateway(args.kind, spec.dims)
    doc = io.network_to_dict(network, gateway)
    _emit(args, doc, f"{network.node_count} nodes, {len(network.topology.edges)} edges -> {args.output}")


def cmd_simulate(args):
    network, file_gateway = io.read_network(args.network)
    gateway = _gateway(args, network, file_gateway)
    mode = args.mode
    if mode == ["exact"]:
        shots = EXACT
    elif len(mode) == 2 and mode[0] == "shots":
        try:
            shots = int(mode[1])
        except ValueError:
            raise InputError(f"shot count must be an integer, got {mode[1]!r}")
    else:
        raise InputError("--mode takes 'exact' or 'shots N'")
    bound = args.bound
    if bound is None:
        bound = spectral_radius_bound(
            max((abs(c) for c in network.couplings.values()), default=0.0),
            max(abs(b) for b in network.fields.values()),
            network.topology,
            network.delta,
        ) or 1.0
    eig = eigendecompose(build_single_excitation(network))
    times = nyquist_times(bound, network.node_count, args.oversample, args.samples_per_line)
    nodes = tuple(gateway.sorted())
    dataset = simulate_tomography(eig, ExperimentConfig(nodes, nodes, times, shots, args.seed), gateway)
    dataset.metadata["oversample"] = args.oversample
    side = io.write_dataset(args.output, dataset, bound=bound, gateway=nodes, node_count=network.node_count)
    doc = {"version": io.FORMAT_VERSION, "dataset": args.output, "metadata": str(side), "signals": len(dataset.pairs), "samples": len(times)}
    if args.json:
        sys.stdout.write(io.dumps(doc))
    else:
        print(f"{len(dataset.pairs)} signals x {len(times)} samples -> {args.output} (+ {side})")


def cmd_estimate(args):
    dataset, meta = io.read_dataset(args.dataset)
    tol = Tolerances.from_dict(io.tolerance_overrides()).for_shots(meta["shots"])
    gateway = [g - 1 for g in meta["gateway"]]
    expected = args.expected_lines or meta["node_count"]
    if meta["shots"] == EXACT:
        opts = SpectralOptions(
            rel_tol=tol.rel_tol,
            gap_ratio=tol.gap_ratio,
            merge_rel_tol=tol.merge_rel_tol,
            merge_abs_tol=tol.merge_abs_tol,
            cond_cap=tol.cond_cap,
            max_abs_frequency=meta.get("bound"),
        )
    else:
        band = meta.get("bound") * meta.get("oversample", 2.0) if meta.get("bound") else 3.141592653589793 / meta["dt"]
        opts = SpectralOptions.for_shots(dataset.times, expected, band)
        opts.noise_factor = tol.noise_factor
    est = eigendata_from_signals(dataset, gateway, opts, imag_tol=tol.imag_tol)
    est.diagnostics["expected_line_count"] = expected
    doc = io.eigendata_to_dict(est)
    _emit(args, doc, f"{est.line_count} lines (expected {expected}) -> {args.output}")


def cmd_reconstruct(args):
    est = io.read_eigendata(args.eigendata)
    network, _ = io.read_network(args.topology)
    gateway = GatewaySet.of(est.gateway).validate(network.topology)
    tol = Tolerances.from_dict(io.tolerance_overrides())
    if args.loose:
        tol = tol.for_shots(args.loose)
    block = None
    if args.lift:
        lift = io.read_json(args.lift)
        if [g - 1 for g in lift["gateway"]] != gateway.sorted():
            raise InputError("lift file acts on a different gateway")
        block = lift["total_block"]
    result = full_reconstruct(
        est, network.topology, gateway, network.delta, network.convention, tol.reconstruction(), block
    )
    doc = result.to_dict()
    if args.compare:
        doc["comparison"] = compare(network, result).to_dict()
    doc = io.plain(doc)
    text = f"{len(result.matrix_elements)} couplings, {len(result.fields)} fields, E0 = {result.ground_energy:.12g}"
    if args.compare:
        text += f"; max abs error {doc['comparison']['summary']['max_abs']:.3e}"
    _emit(args, doc, text)


def cmd_lift(args):
    network, file_gateway = io.read_network(args.network)
    gateway = _gateway(args, network, file_gateway)
    h = build_single_excitation(network)
    nodes = gateway.sorted()
    if args.policy == "constructive":
        ops, _ = constructive_lift(h, nodes, group_tol=args.group_tol)
    else:
        if args.strength is None:
            raise InputError("--policy random needs --strength")
        ops = [random_field_lift(h, nodes, args.strength, args.seed, group_tol=args.group_tol)]
    doc = lift_report(h, nodes, ops, args.group_tol)
    doc["policy"] = args.policy
    _emit(args, doc, f"{len(doc['groups_before'])} degenerate levels before, {len(doc['groups_after'])} after -> {args.output}")


def cmd_pipeline(args):
    config = RunConfig.from_file(args.config, io.tolerance_overrides())
    if args.seeds is None:
        reports = [run_pipeline(config)]
        doc = reports[0].to_dict()
    else:
        reports = [run_pipeline(config.with_seed(s)) for s in args.seeds]
        doc = {"version": io.FORMAT_VERSION, "seeds": args.seeds, "runs": [r.to_dict() for r in reports]}
    if args.plot:
        from .plotting import save_report_figure

        save_report_figure(reports[0], args.plot)
    _emit(args, doc, "\n".join(f"max abs error {r.max_error:.3e}" for r in reports))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spingate", description="Spin-network parameter estimation from a gateway.")
    parser.add_argument("--json", action="store_true", help="write the result document to stdout")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--json", action="store_true", default=argparse.SUPPRESS)
        p.set_defaults(func=fn)
        return p

    p = add("infect", cmd_infect, "check a gateway and print its forcing sequence")
    p.add_argument("--network", required=True)
    p.add_argument("--gateway", type=_ids)
    p.add_argument("-o", "--output")

    p = add("gen", cmd_gen, "generate a random lattice network")
    p.add_argument("--kind", required=True, choices=["chain", "cycle", "grid2d", "grid3d"])
    p.add_argument("--dims", required=True, type=_dims)
    p.add_argument("--c-range", type=_pair, default=(-2.0, -0.5))
    p.add_argument("--b-range", type=_pair, default=(-1.0, 1.0))
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)

    p = add("simulate", cmd_simulate, "simulate gateway tomography signals")
    p.add_argument("--network", required=True)
    p.add_argument("--gateway", type=_ids)
    p.add_argument("--mode", nargs="+", default=["exact"], metavar="exact|shots N")
    p.add_argument("--oversample", type=float, default=2.0)
    p.add_argument("--samples-per-line", type=int, default=8)
    p.add_argument("--bound", type=float, help="spectral radius bound (default: Gershgorin from the file)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)

    p = add("estimate", cmd_estimate, "estimate gateway eigendata from a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--expected-lines", type=int)
    p.add_argument("-o", "--output", required=True)

    p = add("reconstruct", cmd_reconstruct, "recover couplings and fields from eigendata")
    p.add_argument("--eigendata", required=True)
    p.add_argument("--topology", required=True, help="network file (its values are used only by --compare)")
    p.add_argument("--lift", help="lift report whose gateway block was applied during the experiments")
    p.add_argument("--compare", action="store_true", help="compare against the values in the network file")
    p.add_argument("--loose", type=int, metavar="SHOTS", help="scale consistency tolerances for this shot count")
    p.add_argument("-o", "--output")

    p = add("lift", cmd_lift, "compute a gateway perturbation that lifts degeneracies")
    p.add_argument("--network", required=True)
    p.add_argument("--gateway", type=_ids)
    p.add_argument("--policy", required=True, choices=["constructive", "random"])
    p.add_argument("--strength", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--group-tol", type=float)
    p.add_argument("-o", "--output", required=True)

    p = add("pipeline", cmd_pipeline, "run simulate -> estimate -> reconstruct -> compare")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", type=_seeds, metavar="A..B")
    p.add_argument("--plot", help="figure of signals and spectrum (any matplotlib format)")
    p.add_argument("-o", "--output")
    return parser


def _join_ranges(argv):
    # "--c-range -2,-0.5" would otherwise be read as an unknown option
    out, it = [], iter(argv)
    for tok in it:
        if tok in RANGE_OPTIONS:
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    argv = _join_ranges(sys.argv[1:] if argv is None else list(argv))
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except SpinGateError as exc:
        sys.stderr.write(json.dumps(io.plain(exc.to_dict())) + "\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
