"""Command-line pipeline driver.

Each subcommand consumes the previous stage's on-disk artifact and writes
its own plus a ``*.manifest.json`` recording input hashes and the exact
configuration, so any output can be traced back to its inputs.  Writes are
atomic (temp file + rename); reruns with unchanged inputs reproduce
byte-identical artifacts.

Exit codes: 0 success, 1 user error (bad arguments, bad input files),
2 internal error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__, binio, events, ir, lowering, network, partition, quantize, sim
from .errors import SnnDeployError
from .events import SpikeTrain


class CliError(SnnDeployError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


# ---------------------------------------------------------------------------
# artifact helpers


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _atomic_write(path: str, writer) -> None:
    """Run ``writer(tmp_path)`` then atomically rename onto ``path``."""
    d = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _write_json(path: str, doc) -> None:
    def w(tmp):
        with open(tmp, "w") as f:
            json.dump(doc, f, indent=1, sort_keys=True)
            f.write("\n")

    _atomic_write(path, w)


def _write_manifest(out_path: str, command: str, inputs: list[str], config: dict) -> None:
    manifest = {
        "tool": "snndeploy",
        "version": __version__,
        "command": command,
        "inputs": {os.path.basename(p): _sha256(p) for p in inputs},
        "config": config,
    }
    _write_json(out_path + ".manifest.json", manifest)


def _save_spiketrain(train: SpikeTrain, path: str) -> None:
    doc = {
        "format": "spiketrain-v1",
        "size": train.size,
        "times": {str(n): [int(t) for t in ts] for n, ts in enumerate(train.times) if len(ts)},
    }
    _write_json(path, doc)


def load_spiketrain(path: str) -> SpikeTrain:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") != "spiketrain-v1":
        raise CliError(f"{path}: unsupported spike-train format")
    size = int(doc["size"])
    times = [np.empty(0, dtype=np.int64) for _ in range(size)]
    for n, ts in doc["times"].items():
        times[int(n)] = np.asarray(sorted(ts), dtype=np.int64)
    return SpikeTrain(size=size, times=times)


def _require(path: str) -> str:
    if not os.path.exists(path):
        raise CliError(f"input file not found: {path}")
    return path


# ---------------------------------------------------------------------------
# subcommands


def cmd_convert(args) -> int:
    _require(args.events)
    evs = events.load_events(args.events, sensor_shape=(args.sensor_size, args.sensor_size))
    if not args.no_denoise:
        evs = events.denoise(evs, spatial_px=args.denoise_spatial, window_us=args.denoise_window_us)
    evs = events.downsample(evs, factor=args.downsample)
    side = args.sensor_size // args.downsample
    frames = events.bin_frames(evs, bin_ms=args.bin_ms, shape=(2, side, side))
    train = events.frames_to_spikes(frames, max_timesteps=args.max_timesteps)
    os.makedirs(args.out, exist_ok=True)
    frames_path = os.path.join(args.out, "frames.bin")

    def w(tmp):
        with open(tmp, "wb") as f:
            binio.write_tensor(f, frames.frames.astype(np.int32))

    _atomic_write(frames_path, w)
    spikes_path = os.path.join(args.out, "input_spikes.json")
    _save_spiketrain(train, spikes_path)
    _write_manifest(
        spikes_path,
        "convert",
        [args.events],
        {
            "denoise": not args.no_denoise,
            "denoise_spatial": args.denoise_spatial,
            "denoise_window_us": args.denoise_window_us,
            "downsample": args.downsample,
            "bin_ms": args.bin_ms,
            "max_timesteps": args.max_timesteps,
            "sensor_size": args.sensor_size,
        },
    )
    print(f"{len(evs)} events -> {frames.num_frames} frames, "
          f"{train.total_spikes()} input spikes -> {args.out}")
    return 0


def cmd_quantize(args) -> int:
    _require(args.graph)
    g = ir.load_graph(args.graph)
    if args.mode == "ptq":
        p = 100.0 if args.percentile is None else args.percentile
        qg = quantize.ptq_quantize_graph(g, quantize.PtqConfig(percentile=p))
    else:
        if args.percentile is not None:
            raise CliError("--percentile applies to --mode ptq only")
        qg = quantize.qat_finalize_graph(g)

    def w(tmp):
        ir.save_graph(qg, tmp, sidecar=args.sidecar)
        if args.sidecar:
            os.replace(ir.sidecar_path_for(tmp), ir.sidecar_path_for(args.out))
            # fix the sidecar reference written under the temp name
            with open(tmp) as f:
                doc = json.load(f)
            doc["sidecar"] = os.path.basename(ir.sidecar_path_for(args.out))
            with open(tmp, "w") as f:
                json.dump(doc, f, indent=1, sort_keys=True)
                f.write("\n")

    _atomic_write(args.out, w)
    _write_manifest(args.out, "quantize", [args.graph],
                    {"mode": args.mode, "percentile": args.percentile, "sidecar": args.sidecar})
    print(f"quantized graph -> {args.out}")
    return 0


def cmd_lower(args) -> int:
    _require(args.graph)
    g = ir.load_graph(args.graph)
    net = lowering.lower(g, max_timesteps=args.max_timesteps)

    def w(tmp):
        network.save_network(net, tmp)
        os.replace(os.path.splitext(tmp)[0] + ".synapses.bin",
                   os.path.splitext(args.out)[0] + ".synapses.bin")
        with open(tmp) as f:
            doc = json.load(f)
        doc["synapse_file"] = os.path.basename(os.path.splitext(args.out)[0] + ".synapses.bin")
        with open(tmp, "w") as f:
            json.dump(doc, f, indent=1, sort_keys=True)
            f.write("\n")

    _atomic_write(args.out, w)
    _write_manifest(args.out, "lower", [args.graph], {"max_timesteps": args.max_timesteps})
    total = sum(len(p.synapses) for p in net.projections)
    print(f"{len(net.populations)} populations, {len(net.projections)} projections, "
          f"{total} synapses -> {args.out}")
    return 0


def _load_overrides(path: str | None) -> dict[str, int]:
    if path is None:
        return {}
    with open(_require(path)) as f:
        return {k: int(v) for k, v in json.load(f).items()}


def cmd_partition(args) -> int:
    _require(args.network)
    net = network.load_network(args.network)
    overrides = _load_overrides(args.overrides)
    pl = partition.partition(net, overrides=overrides, chip_pes=args.chip_pes)

    def w(tmp):
        partition.save_placement(pl, tmp)

    _atomic_write(args.out, w)
    if args.csv:
        rows = partition.memory_report(pl)

        def wc(tmp):
            with open(tmp, "w", newline="") as f:
                wr = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
                wr.writeheader()
                wr.writerows(rows)

        _atomic_write(args.csv, wc)
    inputs = [args.network] + ([args.overrides] if args.overrides else [])
    _write_manifest(args.out, "partition", inputs,
                    {"chip_pes": args.chip_pes, "overrides": overrides})
    print(f"{pl.pes_used} PEs used (of {args.chip_pes}) -> {args.out}")
    return 0


def cmd_simulate(args) -> int:
    if args.max_timesteps is not None and args.max_timesteps <= 0:
        raise CliError(f"--max-timesteps must be positive, got {args.max_timesteps}")
    _require(args.network)
    _require(args.input)
    net = network.load_network(args.network)
    pl = partition.load_placement(_require(args.placement)) if args.placement else None
    train = load_spiketrain(args.input)
    result = sim.run(net, pl, train, engine=args.engine, max_timesteps=args.max_timesteps)
    energy = sim.estimate_energy(result)
    os.makedirs(args.out, exist_ok=True)
    summary_path = os.path.join(args.out, "result.json")
    out_counts = [len(ts) for ts in result.spikes[net.output_population.id].times]
    _write_json(
        summary_path,
        {
            "engine": result.engine,
            "timesteps": result.timesteps,
            "predicted_class": result.predicted_class,
            "no_output_spikes": result.no_output_spikes,
            "tie": result.tie,
            "output_spike_counts": out_counts,
            "total_spikes": result.total_spikes_recorded,
            "energy_mj": energy,
            "runtime_s": round(result.runtime_s, 3),
        },
    )
    if args.record:
        spikes_path = os.path.join(args.out, "spikes.csv")

        def w(tmp):
            with open(tmp, "w", newline="") as f:
                wr = csv.writer(f)
                wr.writerow(["population", "neuron", "timestep"])
                for pid, st in result.spikes.items():
                    for n, ts in enumerate(st.times):
                        for t in ts:
                            wr.writerow([pid, n, int(t)])

        _atomic_write(spikes_path, w)
    inputs = [args.network, args.input] + ([args.placement] if args.placement else [])
    _write_manifest(summary_path, "simulate", inputs,
                    {"engine": args.engine, "max_timesteps": args.max_timesteps,
                     "record": args.record})
    print(f"prediction {result.predicted_class} "
          f"({'no output spikes, ' if result.no_output_spikes else ''}"
          f"{result.timesteps} steps, {energy} mJ) -> {summary_path}")
    return 0


def cmd_evaluate(args) -> int:
    _require(args.graph)
    _require(args.input)
    g = ir.load_graph(args.graph)
    train = load_spiketrain(args.input)
    percentiles = [float(p) for p in args.percentiles.split(",")]
    rows = quantize.percentile_sweep(g, train, percentiles, max_timesteps=args.max_timesteps)

    def w(tmp):
        with open(tmp, "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(["percentile", "metric"])
            for r in rows:
                wr.writerow([r["percentile"], r["metric"]])

    _atomic_write(args.out, w)
    _write_manifest(args.out, "evaluate", [args.graph, args.input],
                    {"percentiles": percentiles, "max_timesteps": args.max_timesteps})
    best = max(rows, key=lambda r: r["metric"])
    print(f"best percentile {best['percentile']} (metric {best['metric']:.4f}) -> {args.out}")
    return 0


def cmd_report(args) -> int:
    _require(args.graph)
    g = ir.load_graph(args.graph)
    params = ir.count_parameters(g)
    quantized = all(
        n.quant is not None and n.quant.int_weights is not None
        for n in g.nodes.values()
        if isinstance(n, ir.WEIGHT_NODE_TYPES)
    ) and params > 0
    summary = {
        "parameters": params,
        "model_size_bytes_fp32": ir.model_size_bytes(g, quantized=False),
        "model_size_bytes_int8": params if quantized else None,
        "serialized_size_bytes": os.path.getsize(args.graph),
        "quantized": quantized,
    }
    inputs = [args.graph]
    if args.result:
        with open(_require(args.result)) as f:
            r = json.load(f)
        summary["predicted_class"] = r["predicted_class"]
        summary["timesteps"] = r["timesteps"]
        summary["energy_mj"] = r["energy_mj"]
        inputs.append(args.result)
    _write_json(args.out, summary)
    _write_manifest(args.out, "report", inputs, {})
    print(json.dumps(summary, indent=1, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    p = _Parser(prog="snndeploy", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("convert", help="events -> frames + input spike train")
    c.add_argument("--events", required=True)
    c.add_argument("--sensor-size", type=int, default=128)
    c.add_argument("--no-denoise", action="store_true")
    c.add_argument("--denoise-spatial", type=int, default=1)
    c.add_argument("--denoise-window-us", type=int, default=1_000_000)
    c.add_argument("--downsample", type=int, default=4)
    c.add_argument("--bin-ms", type=int, default=1)
    c.add_argument("--max-timesteps", type=int, default=600)
    c.add_argument("-o", "--out", required=True, help="output directory")
    c.set_defaults(func=cmd_convert)

    q = sub.add_parser("quantize", help="attach int8 weights + scaled thresholds")
    q.add_argument("--graph", required=True)
    q.add_argument("--mode", choices=["ptq", "qat"], required=True)
    q.add_argument("--percentile", type=float, default=None)
    q.add_argument("--sidecar", action="store_true", help="weights to .weights.bin")
    q.add_argument("-o", "--out", required=True)
    q.set_defaults(func=cmd_quantize)

    lo = sub.add_parser("lower", help="graph -> population/projection network")
    lo.add_argument("--graph", required=True)
    lo.add_argument("--max-timesteps", type=int, default=600)
    lo.add_argument("-o", "--out", required=True)
    lo.set_defaults(func=cmd_lower)

    pa = sub.add_parser("partition", help="assign population slices to PEs")
    pa.add_argument("--network", required=True)
    pa.add_argument("--overrides", default=None, help="JSON: population -> max neurons/PE")
    pa.add_argument("--chip-pes", type=int, default=partition.DEFAULT_CHIP_PES)
    pa.add_argument("--csv", default=None, help="also write the ledger as CSV")
    pa.add_argument("-o", "--out", required=True)
    pa.set_defaults(func=cmd_partition)

    si = sub.add_parser("simulate", help="run a placed network")
    si.add_argument("--network", required=True)
    si.add_argument("--placement", default=None)
    si.add_argument("--input", required=True, help="input spike train JSON")
    si.add_argument("--engine", choices=["placed_int8", "reference_dense"],
                    default="placed_int8")
    si.add_argument("--max-timesteps", type=int, default=None)
    si.add_argument("--record", action="store_true", help="write spikes.csv")
    si.add_argument("-o", "--out", required=True, help="output directory")
    si.set_defaults(func=cmd_simulate)

    ev = sub.add_parser("evaluate", help="percentile sweep against the float reference")
    ev.add_argument("--graph", required=True)
    ev.add_argument("--input", required=True)
    ev.add_argument("--percentiles", default="90,95,99,100", help="comma-separated")
    ev.add_argument("--max-timesteps", type=int, default=50)
    ev.add_argument("-o", "--out", required=True, help="output CSV")
    ev.set_defaults(func=cmd_evaluate)

    re = sub.add_parser("report", help="aggregate size/energy/prediction summary")
    re.add_argument("--graph", required=True)
    re.add_argument("--result", default=None, help="result.json from simulate")
    re.add_argument("-o", "--out", required=True)
    re.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (CliError, SnnDeployError, FileNotFoundError, json.JSONDecodeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # pragma: no cover - internal failure path
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
