"""Lowered network model: populations connected by synapse-list projections.

A :class:`Network` is what the partitioner and simulator consume.  It
serializes to a JSON descriptor plus a packed binary synapse table
(little-endian ``pre u32, post u32, weight i8|f32, delay u8`` records).
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import LoweringError

SPIKE_LIST_INPUT = "spike_list_input"
LIF_CONV2D = "lif_conv2d"
LIF_NEURON = "lif_neuron"

POPULATION_KINDS = (SPIKE_LIST_INPUT, LIF_CONV2D, LIF_NEURON)

SYNAPSE_DTYPE = np.dtype(
    [("pre", "<u4"), ("post", "<u4"), ("weight", "<f8"), ("delay", "u1")]
)


@dataclass
class Population:
    """A group of neurons sharing one neuron model (or the input source)."""

    id: str
    kind: str
    size: int
    alpha: np.ndarray | None = None  # per-neuron decay factor
    threshold: np.ndarray | None = None
    v_leak: np.ndarray | None = None
    coupling: np.ndarray | None = None  # input scaling (dt/tau)*r
    reset: str = "subtract"
    record_spikes: bool = True

    def __post_init__(self):
        if self.kind not in POPULATION_KINDS:
            raise LoweringError(f"unknown population kind {self.kind!r}")
        if self.size < 1:
            raise LoweringError(f"population {self.id!r} has size {self.size}")
        if self.kind != SPIKE_LIST_INPUT:
            for name in ("alpha", "threshold", "v_leak", "coupling"):
                v = getattr(self, name)
                if v is None:
                    raise LoweringError(f"population {self.id!r} missing {name}")
                v = np.broadcast_to(np.atleast_1d(np.asarray(v, dtype=np.float64)), (self.size,))
                setattr(self, name, np.ascontiguousarray(v))


@dataclass
class Projection:
    """Explicit synapse list between two populations.

    ``synapses`` is a structured array (pre, post, weight, delay) sorted by
    (pre, post).  ``quantized`` marks integer weights; ``weight_params`` is
    the parameter count of the originating weight node, used by the
    partitioner's kernel-form memory accounting for conv projections.
    """

    pre: str
    post: str
    synapses: np.ndarray
    quantized: bool = False
    kind: str = "dense"  # "conv" | "dense"
    weight_params: int = 0

    def __post_init__(self):
        self.synapses = np.asarray(self.synapses, dtype=SYNAPSE_DTYPE)

    def dense_matrix(self, n_pre: int, n_post: int) -> np.ndarray:
        m = np.zeros((n_post, n_pre), dtype=np.float64)
        np.add.at(m, (self.synapses["post"], self.synapses["pre"]), self.synapses["weight"])
        return m


@dataclass
class Network:
    populations: list[Population]
    projections: list[Projection]
    timestep_ms: float = 1.0
    max_timesteps: int = 600
    metadata: dict = field(default_factory=dict)

    def population(self, pid: str) -> Population:
        for p in self.populations:
            if p.id == pid:
                return p
        raise KeyError(pid)

    @property
    def input_population(self) -> Population:
        inputs = [p for p in self.populations if p.kind == SPIKE_LIST_INPUT]
        if len(inputs) != 1:
            raise LoweringError(f"network must have exactly one input population, has {len(inputs)}")
        return inputs[0]

    @property
    def output_population(self) -> Population:
        targets = {pr.post for pr in self.projections}
        sources = {pr.pre for pr in self.projections}
        sinks = [p for p in self.populations if p.id in targets and p.id not in sources]
        if len(sinks) != 1:
            raise LoweringError("network projection graph is not a chain with one sink")
        return sinks[0]

    def validate(self) -> "Network":
        ids = [p.id for p in self.populations]
        if len(set(ids)) != len(ids):
            raise LoweringError("duplicate population ids")
        self.input_population
        for pr in self.projections:
            npre = self.population(pr.pre).size
            npost = self.population(pr.post).size
            s = pr.synapses
            if len(s) and (s["pre"].max() >= npre or s["post"].max() >= npost):
                raise LoweringError(
                    f"projection {pr.pre}->{pr.post} has out-of-range synapse indices"
                )
            if np.any(s["delay"] != 1):
                raise LoweringError(f"projection {pr.pre}->{pr.post} has a delay != 1")
            pairs = s[["pre", "post"]]
            if len(np.unique(pairs)) != len(s):
                raise LoweringError(
                    f"projection {pr.pre}->{pr.post} has duplicate (pre, post) pairs"
                )
        return self


# ---------------------------------------------------------------------------
# serialization

_SYN_HEADER = struct.Struct("<4sBxxxQ")  # magic, weight dtype code, count
_SYN_MAGIC = b"SYNS"


def _pack_synapses(buf, syn: np.ndarray, quantized: bool) -> int:
    offset = buf.tell()
    wdtype = np.dtype("i1") if quantized else np.dtype("<f4")
    rec = np.dtype([("pre", "<u4"), ("post", "<u4"), ("weight", wdtype), ("delay", "u1")])
    packed = np.empty(len(syn), dtype=rec)
    for f in ("pre", "post", "delay"):
        packed[f] = syn[f]
    packed["weight"] = syn["weight"].astype(wdtype)
    buf.write(_SYN_HEADER.pack(_SYN_MAGIC, 1 if quantized else 0, len(syn)))
    buf.write(packed.tobytes())
    return offset


def _unpack_synapses(buf, offset: int) -> tuple[np.ndarray, bool]:
    buf.seek(offset)
    magic, code, count = _SYN_HEADER.unpack(buf.read(_SYN_HEADER.size))
    if magic != _SYN_MAGIC:
        raise LoweringError("bad synapse table magic")
    quantized = code == 1
    wdtype = np.dtype("i1") if quantized else np.dtype("<f4")
    rec = np.dtype([("pre", "<u4"), ("post", "<u4"), ("weight", wdtype), ("delay", "u1")])
    raw = buf.read(count * rec.itemsize)
    packed = np.frombuffer(raw, dtype=rec)
    syn = np.empty(count, dtype=SYNAPSE_DTYPE)
    for f in ("pre", "post", "delay"):
        syn[f] = packed[f]
    syn["weight"] = packed["weight"].astype(np.float64)
    return syn, quantized


def _pop_to_json(p: Population) -> dict:
    d = {"id": p.id, "kind": p.kind, "size": p.size, "reset": p.reset,
         "record_spikes": p.record_spikes}
    if p.kind != SPIKE_LIST_INPUT:
        for name in ("alpha", "threshold", "v_leak", "coupling"):
            d[name] = [float(x) for x in getattr(p, name)]
    return d


def save_network(net: Network, path: str) -> None:
    """Write ``path`` (JSON) plus an adjacent ``.synapses.bin`` table."""
    import io

    bin_path = os.path.splitext(path)[0] + ".synapses.bin"
    buf = io.BytesIO()
    projs = []
    for pr in net.projections:
        off = _pack_synapses(buf, pr.synapses, pr.quantized)
        projs.append(
            {
                "pre": pr.pre,
                "post": pr.post,
                "kind": pr.kind,
                "quantized": pr.quantized,
                "weight_params": pr.weight_params,
                "synapse_count": len(pr.synapses),
                "offset": off,
            }
        )
    doc = {
        "format": "snnnetwork-v1",
        "timestep_ms": net.timestep_ms,
        "max_timesteps": net.max_timesteps,
        "metadata": net.metadata,
        "populations": [_pop_to_json(p) for p in net.populations],
        "projections": projs,
        "synapse_file": os.path.basename(bin_path),
    }
    with open(bin_path, "wb") as f:
        f.write(buf.getvalue())
    with open(path, "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")


def load_network(path: str) -> Network:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") != "snnnetwork-v1":
        raise LoweringError(f"unsupported network format {doc.get('format')!r}")
    bin_path = os.path.join(os.path.dirname(os.path.abspath(path)), doc["synapse_file"])
    pops = []
    for d in doc["populations"]:
        pops.append(
            Population(
                id=d["id"],
                kind=d["kind"],
                size=d["size"],
                alpha=np.asarray(d["alpha"]) if "alpha" in d else None,
                threshold=np.asarray(d["threshold"]) if "threshold" in d else None,
                v_leak=np.asarray(d["v_leak"]) if "v_leak" in d else None,
                coupling=np.asarray(d["coupling"]) if "coupling" in d else None,
                reset=d.get("reset", "subtract"),
                record_spikes=d.get("record_spikes", True),
            )
        )
    projs = []
    with open(bin_path, "rb") as f:
        for d in doc["projections"]:
            syn, quantized = _unpack_synapses(f, d["offset"])
            projs.append(
                Projection(
                    pre=d["pre"],
                    post=d["post"],
                    synapses=syn,
                    quantized=quantized,
                    kind=d.get("kind", "dense"),
                    weight_params=d.get("weight_params", 0),
                )
            )
    net = Network(
        populations=pops,
        projections=projs,
        timestep_ms=doc.get("timestep_ms", 1.0),
        max_timesteps=doc.get("max_timesteps", 600),
        metadata=doc.get("metadata", {}),
    )
    return net.validate()
