"""NIR-subset graph IR: typed layer nodes, validation, shapes, serialization.

The IR is a DAG of layer nodes (in practice a chain) with a single input
and a single output.  Weight nodes (``Conv2d``, ``Linear``) optionally
carry a :class:`QuantRecord` holding a per-tensor scale and 8-bit integer
weights.  Graphs serialize to a documented ``.snngraph.json`` schema with
weight tensors inline as nested lists or in a ``.weights.bin`` sidecar
(see :mod:`snndeploy.binio`).
"""

from __future__ import annotations

import io
import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import GraphError, ShapeError

Shape = Union[tuple[int, int, int], int]

INT8_MIN, INT8_MAX = -128, 127


@dataclass(frozen=True)
class QuantRecord:
    """Per-tensor quantization data for one weight node.

    ``scale`` is the real step size S: real weights are approximately
    ``scale * int_weights``.  ``int_weights`` may be absent when only the
    scale is known (e.g. imported metadata without materialized integers).
    """

    scale: float
    int_weights: Optional[np.ndarray] = None
    bitwidth: int = 8

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise GraphError(f"quant scale must be positive and finite, got {self.scale}")
        if self.bitwidth != 8:
            raise GraphError(f"only 8-bit quantization is supported, got {self.bitwidth}")
        if self.int_weights is not None:
            object.__setattr__(
                self, "int_weights", np.asarray(self.int_weights, dtype=np.int8)
            )

    def validate_against(self, real_weights: np.ndarray, node_id: str) -> None:
        if self.int_weights is None:
            return
        iw = self.int_weights
        if iw.shape != real_weights.shape:
            raise GraphError(
                f"node {node_id!r}: int_weights shape {iw.shape} != weights shape "
                f"{real_weights.shape}"
            )
        # int8 dtype already enforces [-128, 127]; check the rounding relation.
        err = np.abs(real_weights - self.scale * iw.astype(np.float64))
        clamped = (iw == INT8_MIN) | (iw == INT8_MAX)
        tol = 0.5 * self.scale * (1 + 1e-9)
        if np.any(err[~clamped] > tol):
            raise GraphError(
                f"node {node_id!r}: int_weights deviate from round(w / scale) "
                f"by more than 0.5 * scale"
            )

    def __eq__(self, other):
        if not isinstance(other, QuantRecord):
            return NotImplemented
        if self.scale != other.scale or self.bitwidth != other.bitwidth:
            return False
        a, b = self.int_weights, other.int_weights
        if (a is None) != (b is None):
            return False
        return a is None or (a.shape == b.shape and bool(np.all(a == b)))


@dataclass(frozen=True)
class Input:
    shape: tuple[int, int, int]  # (channels, height, width)


@dataclass(frozen=True, eq=False)
class Conv2d:
    weights: np.ndarray  # (out_ch, in_ch, kh, kw)
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)
    dilation: tuple[int, int] = (1, 1)
    quant: Optional[QuantRecord] = None

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        if self.weights.ndim != 4:
            raise GraphError(f"conv weights must be rank 4, got {self.weights.ndim}")

    def __eq__(self, other):
        return (
            isinstance(other, Conv2d)
            and self.weights.shape == other.weights.shape
            and bool(np.all(self.weights == other.weights))
            and (self.stride, self.padding, self.dilation, self.quant)
            == (other.stride, other.padding, other.dilation, other.quant)
        )


@dataclass(frozen=True, eq=False)
class Linear:
    weights: np.ndarray  # (out, in)
    quant: Optional[QuantRecord] = None

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        if self.weights.ndim != 2:
            raise GraphError(f"linear weights must be rank 2, got {self.weights.ndim}")

    def __eq__(self, other):
        return (
            isinstance(other, Linear)
            and self.weights.shape == other.weights.shape
            and bool(np.all(self.weights == other.weights))
            and self.quant == other.quant
        )


@dataclass(frozen=True)
class SumPool2d:
    kernel: tuple[int, int]
    stride: tuple[int, int]
    padding: tuple[int, int] = (0, 0)


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True, eq=False)
class LIF:
    """Leaky integrate-and-fire parameters in continuous-time form.

    ``tau`` is the membrane time constant in timestep units; ``r`` the
    membrane resistance; ``v_leak`` the leak potential; ``threshold`` the
    firing threshold.  Each may be a scalar (broadcast over the
    population) or a vector of exactly the population size.
    """

    tau: np.ndarray
    r: np.ndarray
    v_leak: np.ndarray
    threshold: np.ndarray

    def __post_init__(self):
        for name in ("tau", "r", "v_leak", "threshold"):
            v = np.atleast_1d(np.asarray(getattr(self, name), dtype=np.float64))
            if v.ndim != 1:
                raise GraphError(f"LIF parameter {name} must be scalar or 1-D")
            object.__setattr__(self, name, v)
        if np.any(self.tau <= 0):
            raise GraphError("LIF tau must be positive")
        if np.any(self.threshold <= 0):
            raise GraphError("LIF threshold must be positive")

    def __eq__(self, other):
        return isinstance(other, LIF) and all(
            getattr(self, f).shape == getattr(other, f).shape
            and bool(np.all(getattr(self, f) == getattr(other, f)))
            for f in ("tau", "r", "v_leak", "threshold")
        )


@dataclass(frozen=True)
class Output:
    shape: int  # flat neuron count


Node = Union[Input, Conv2d, Linear, SumPool2d, Flatten, LIF, Output]

WEIGHT_NODE_TYPES = (Conv2d, Linear)


@dataclass
class Graph:
    """Validated layer graph.  Treat as immutable after :func:`validate`."""

    nodes: dict[str, Node]
    edges: list[tuple[str, str]]
    metadata: dict[str, str] = field(default_factory=dict)

    def predecessors(self, nid: str) -> list[str]:
        return [a for a, b in self.edges if b == nid]

    def successors(self, nid: str) -> list[str]:
        return [b for a, b in self.edges if a == nid]

    def topo_order(self) -> list[str]:
        indeg = {n: 0 for n in self.nodes}
        for a, b in self.edges:
            indeg[b] += 1
        ready = sorted(n for n, d in indeg.items() if d == 0)
        order = []
        while ready:
            n = ready.pop(0)
            order.append(n)
            for m in self.successors(n):
                indeg[m] -= 1
                if indeg[m] == 0:
                    ready.append(m)
        if len(order) != len(self.nodes):
            raise GraphError("graph contains a cycle")
        return order

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.nodes == other.nodes
            and self.edges == other.edges
            and self.metadata == other.metadata
        )


# ---------------------------------------------------------------------------
# shape inference


def _conv_out(dim: int, k: int, s: int, p: int, d: int) -> int:
    return (dim + 2 * p - d * (k - 1) - 1) // s + 1


def _pool_out(dim: int, k: int, s: int, p: int) -> int:
    return (dim + 2 * p - k) // s + 1


def node_output_shape(node: Node, in_shape: Optional[Shape], nid: str) -> Shape:
    """Output shape of one node given its (single) input shape."""
    if isinstance(node, Input):
        return node.shape
    if in_shape is None:
        raise GraphError(f"node {nid!r} has no input shape")
    if isinstance(node, Conv2d):
        if isinstance(in_shape, int):
            raise ShapeError(f"node {nid!r}: conv needs a (C,H,W) input, got flat {in_shape}")
        c, h, w = in_shape
        oc, ic, kh, kw = node.weights.shape
        if ic != c:
            raise ShapeError(
                f"node {nid!r}: conv expects {ic} input channels, producer gives {c}"
            )
        oh = _conv_out(h, kh, node.stride[0], node.padding[0], node.dilation[0])
        ow = _conv_out(w, kw, node.stride[1], node.padding[1], node.dilation[1])
        if oh <= 0 or ow <= 0:
            raise ShapeError(f"node {nid!r}: non-positive conv output {oh}x{ow}")
        return (oc, oh, ow)
    if isinstance(node, SumPool2d):
        if isinstance(in_shape, int):
            raise ShapeError(f"node {nid!r}: pool needs a (C,H,W) input")
        c, h, w = in_shape
        oh = _pool_out(h, node.kernel[0], node.stride[0], node.padding[0])
        ow = _pool_out(w, node.kernel[1], node.stride[1], node.padding[1])
        if oh <= 0 or ow <= 0:
            raise ShapeError(f"node {nid!r}: non-positive pool output {oh}x{ow}")
        return (c, oh, ow)
    if isinstance(node, Flatten):
        if isinstance(in_shape, int):
            return in_shape
        return int(np.prod(in_shape))
    if isinstance(node, Linear):
        n_in = in_shape if isinstance(in_shape, int) else int(np.prod(in_shape))
        out, inn = node.weights.shape
        if inn != n_in:
            raise ShapeError(
                f"node {nid!r}: linear expects {inn} inputs, producer gives {n_in}"
            )
        return out
    if isinstance(node, (LIF, Output)):
        return in_shape
    raise GraphError(f"node {nid!r}: unknown node type {type(node).__name__}")


def shape_size(s: Shape) -> int:
    return s if isinstance(s, int) else int(np.prod(s))


def infer_shapes(g: Graph) -> dict[str, Shape]:
    """Propagate shapes from the input node through the graph.

    Raises :class:`ShapeError` on any inconsistency, including a declared
    shape that disagrees with the inferred one.
    """
    shapes: dict[str, Shape] = {}
    for nid in g.topo_order():
        node = g.nodes[nid]
        preds = g.predecessors(nid)
        in_shape = shapes[preds[0]] if preds else None
        out = node_output_shape(node, in_shape, nid)
        if isinstance(node, Output) and shape_size(out) != node.shape:
            raise ShapeError(
                f"output node {nid!r} declares {node.shape} neurons but receives "
                f"{shape_size(out)}"
            )
        if isinstance(node, LIF):
            n = shape_size(out)
            for pname in ("tau", "r", "v_leak", "threshold"):
                v = getattr(node, pname)
                if v.size not in (1, n):
                    raise ShapeError(
                        f"node {nid!r}: LIF {pname} has {v.size} entries for a "
                        f"population of {n}"
                    )
        shapes[nid] = out
    return shapes


# ---------------------------------------------------------------------------
# validation


def validate(g: Graph) -> Graph:
    """Check all structural invariants; returns the graph for chaining."""
    for a, b in g.edges:
        for nid in (a, b):
            if nid not in g.nodes:
                raise GraphError(f"edge references unknown node {nid!r}")
    g.topo_order()  # raises on cycle

    inputs = [n for n, node in g.nodes.items() if isinstance(node, Input)]
    outputs = [n for n, node in g.nodes.items() if isinstance(node, Output)]
    if len(inputs) != 1:
        raise GraphError(f"graph must have exactly one Input node, found {len(inputs)}")
    if len(outputs) != 1:
        raise GraphError(f"graph must have exactly one Output node, found {len(outputs)}")
    if g.predecessors(inputs[0]):
        raise GraphError(f"input node {inputs[0]!r} has a predecessor")
    if g.successors(outputs[0]):
        raise GraphError(f"output node {outputs[0]!r} has a successor")

    for nid, node in g.nodes.items():
        np_, ns = len(g.predecessors(nid)), len(g.successors(nid))
        if isinstance(node, (Conv2d, Linear, SumPool2d, Flatten)):
            if np_ != 1 or ns != 1:
                raise GraphError(
                    f"node {nid!r} ({type(node).__name__}) must have exactly one "
                    f"predecessor and one successor, has {np_}/{ns}"
                )
        elif isinstance(node, LIF):
            if np_ != 1:
                raise GraphError(f"LIF node {nid!r} must have exactly one predecessor")
        elif isinstance(node, Output) and np_ != 1:
            raise GraphError(f"output node {nid!r} must have exactly one predecessor")
        if isinstance(node, WEIGHT_NODE_TYPES) and node.quant is not None:
            node.quant.validate_against(node.weights, nid)

    infer_shapes(g)
    return g


# ---------------------------------------------------------------------------
# counting


def count_parameters(g: Graph) -> int:
    """Total weight-tensor element count over Conv2d and Linear nodes."""
    return sum(
        node.weights.size for node in g.nodes.values() if isinstance(node, WEIGHT_NODE_TYPES)
    )


def model_size_bytes(g: Graph, quantized: bool = False) -> int:
    """Raw weight storage: 4 bytes/parameter full precision, 1 when 8-bit."""
    if quantized:
        for nid, node in g.nodes.items():
            if isinstance(node, WEIGHT_NODE_TYPES):
                if node.quant is None or node.quant.int_weights is None:
                    raise GraphError(
                        f"node {nid!r} has no int weights; quantize the graph first"
                    )
        return count_parameters(g)
    return count_parameters(g) * 4


# ---------------------------------------------------------------------------
# serialization (.snngraph.json, optional .weights.bin sidecar)

_TYPE_TAGS = {
    Input: "input",
    Conv2d: "conv2d",
    Linear: "linear",
    SumPool2d: "sumpool2d",
    Flatten: "flatten",
    LIF: "lif",
    Output: "output",
}
_TAG_TYPES = {v: k for k, v in _TYPE_TAGS.items()}

FORMAT_TAG = "snngraph-v1"


def _param_to_json(v: np.ndarray):
    return float(v[0]) if v.size == 1 else [float(x) for x in v]


def _tensor_to_json(arr: np.ndarray, sidecar: Optional[io.BytesIO], dtype) -> object:
    if sidecar is not None:
        return {"sidecar_offset": int(_write_sidecar(sidecar, arr, dtype))}
    return np.asarray(arr).tolist()


def _write_sidecar(buf, arr, dtype):
    from . import binio

    return binio.write_tensor(buf, np.asarray(arr, dtype=dtype))


def _tensor_from_json(obj, sidecar_path: Optional[str], what: str) -> np.ndarray:
    from . import binio

    if isinstance(obj, dict):
        if sidecar_path is None:
            raise GraphError(f"{what} references a sidecar but none is present")
        with open(sidecar_path, "rb") as f:
            return binio.read_tensor(f, obj["sidecar_offset"])
    return np.asarray(obj)


def graph_to_json(g: Graph, sidecar: Optional[io.BytesIO] = None) -> dict:
    nodes = {}
    for nid, node in g.nodes.items():
        d: dict = {"type": _TYPE_TAGS[type(node)]}
        if isinstance(node, Input):
            d["shape"] = list(node.shape)
        elif isinstance(node, Conv2d):
            d["weights"] = _tensor_to_json(node.weights, sidecar, np.float32)
            d["stride"] = list(node.stride)
            d["padding"] = list(node.padding)
            d["dilation"] = list(node.dilation)
        elif isinstance(node, Linear):
            d["weights"] = _tensor_to_json(node.weights, sidecar, np.float32)
        elif isinstance(node, SumPool2d):
            d["kernel"] = list(node.kernel)
            d["stride"] = list(node.stride)
            d["padding"] = list(node.padding)
        elif isinstance(node, LIF):
            d["tau"] = _param_to_json(node.tau)
            d["r"] = _param_to_json(node.r)
            d["v_leak"] = _param_to_json(node.v_leak)
            d["threshold"] = _param_to_json(node.threshold)
        elif isinstance(node, Output):
            d["shape"] = node.shape
        if isinstance(node, WEIGHT_NODE_TYPES) and node.quant is not None:
            q = {"scale": node.quant.scale, "bitwidth": node.quant.bitwidth}
            if node.quant.int_weights is not None:
                q["int_weights"] = _tensor_to_json(node.quant.int_weights, sidecar, np.int8)
            d["quant"] = q
        nodes[nid] = d
    return {
        "format": FORMAT_TAG,
        "metadata": dict(g.metadata),
        "nodes": nodes,
        "edges": [list(e) for e in g.edges],
    }


def graph_from_json(doc: dict, sidecar_path: Optional[str] = None) -> Graph:
    if doc.get("format") != FORMAT_TAG:
        raise GraphError(f"unsupported graph format {doc.get('format')!r}")
    nodes: dict[str, Node] = {}
    for nid, d in doc["nodes"].items():
        tag = d.get("type")
        if tag not in _TAG_TYPES:
            raise GraphError(f"node {nid!r}: unknown node type {tag!r}")
        quant = None
        if "quant" in d:
            q = d["quant"]
            iw = q.get("int_weights")
            quant = QuantRecord(
                scale=float(q["scale"]),
                int_weights=None
                if iw is None
                else _tensor_from_json(iw, sidecar_path, f"node {nid!r} int_weights"),
                bitwidth=int(q.get("bitwidth", 8)),
            )
        if tag == "input":
            nodes[nid] = Input(shape=tuple(d["shape"]))
        elif tag == "conv2d":
            nodes[nid] = Conv2d(
                weights=_tensor_from_json(d["weights"], sidecar_path, f"node {nid!r}"),
                stride=tuple(d.get("stride", (1, 1))),
                padding=tuple(d.get("padding", (0, 0))),
                dilation=tuple(d.get("dilation", (1, 1))),
                quant=quant,
            )
        elif tag == "linear":
            nodes[nid] = Linear(
                weights=_tensor_from_json(d["weights"], sidecar_path, f"node {nid!r}"),
                quant=quant,
            )
        elif tag == "sumpool2d":
            nodes[nid] = SumPool2d(
                kernel=tuple(d["kernel"]),
                stride=tuple(d["stride"]),
                padding=tuple(d.get("padding", (0, 0))),
            )
        elif tag == "flatten":
            nodes[nid] = Flatten()
        elif tag == "lif":
            nodes[nid] = LIF(
                tau=d["tau"], r=d["r"], v_leak=d["v_leak"], threshold=d["threshold"]
            )
        elif tag == "output":
            nodes[nid] = Output(shape=int(d["shape"]))
    edges = [tuple(e) for e in doc["edges"]]
    return Graph(nodes=nodes, edges=edges, metadata=dict(doc.get("metadata", {})))


def sidecar_path_for(path: str) -> str:
    base = path
    if base.endswith(".snngraph.json"):
        base = base[: -len(".snngraph.json")]
    elif base.endswith(".json"):
        base = base[: -len(".json")]
    return base + ".weights.bin"


def save_graph(g: Graph, path: str, sidecar: bool = False) -> None:
    """Write a graph to ``path``; with ``sidecar=True`` weight tensors go to
    the adjacent ``.weights.bin`` file instead of inline JSON."""
    buf = io.BytesIO() if sidecar else None
    doc = graph_to_json(g, sidecar=buf)
    if sidecar:
        sp = sidecar_path_for(path)
        doc["sidecar"] = os.path.basename(sp)
        with open(sp, "wb") as f:
            f.write(buf.getvalue())
    with open(path, "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")


def load_graph(path: str) -> Graph:
    """Load and validate a ``.snngraph.json`` file (plus optional sidecar)."""
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise GraphError(f"cannot parse {path}: {e}") from e
    sidecar_path = None
    if "sidecar" in doc:
        sidecar_path = os.path.join(os.path.dirname(os.path.abspath(path)), doc["sidecar"])
        if not os.path.exists(sidecar_path):
            raise GraphError(f"sidecar file {sidecar_path} not found")
    g = graph_from_json(doc, sidecar_path=sidecar_path)
    return validate(g)


def with_node(g: Graph, nid: str, node: Node) -> Graph:
    """Functional node replacement (graphs are treated as immutable)."""
    nodes = dict(g.nodes)
    nodes[nid] = node
    return Graph(nodes=nodes, edges=list(g.edges), metadata=dict(g.metadata))


__all__ = [
    "Graph",
    "Node",
    "Input",
    "Conv2d",
    "Linear",
    "SumPool2d",
    "Flatten",
    "LIF",
    "Output",
    "QuantRecord",
    "validate",
    "infer_shapes",
    "count_parameters",
    "model_size_bytes",
    "load_graph",
    "save_graph",
    "graph_to_json",
    "graph_from_json",
    "with_node",
    "shape_size",
    "node_output_shape",
    "sidecar_path_for",
]
