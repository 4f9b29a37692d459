"""Lowering: layer graph -> populations + explicit synapse-list projections.

Every maximal run of weightless (SumPool2d, Flatten) plus exactly one
weighted (Conv2d, Linear) node between consecutive spike anchors (the
input node or a LIF node) is fused into a single projection whose synapse
list realizes the composed linear map.  One population is created per LIF
node plus one spike-list input population.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.sparse as sp

from . import ir
from .errors import LoweringError
from .network import (
    LIF_CONV2D,
    LIF_NEURON,
    SPIKE_LIST_INPUT,
    SYNAPSE_DTYPE,
    Network,
    Population,
    Projection,
)
from .sim import derive_decay

INT8_MIN, INT8_MAX = -128, 127


def _spatial_taps(oh, ow, ih, iw, stride, padding, dilation, ky, kx):
    """In-bounds (out_spatial, in_spatial) flat index pairs for one kernel tap."""
    yo, xo = np.meshgrid(np.arange(oh), np.arange(ow), indexing="ij")
    yi = yo * stride[0] - padding[0] + ky * dilation[0]
    xi = xo * stride[1] - padding[1] + kx * dilation[1]
    valid = (yi >= 0) & (yi < ih) & (xi >= 0) & (xi < iw)
    out_flat = (yo[valid] * ow + xo[valid]).ravel()
    in_flat = (yi[valid] * iw + xi[valid]).ravel()
    return out_flat, in_flat


def conv_matrix(node: ir.Conv2d, in_shape, weights: np.ndarray | None = None) -> sp.csr_matrix:
    """Sparse linear map of a conv layer over flattened (C,H,W) activations."""
    c, ih, iw = in_shape
    oc, ic, kh, kw = node.weights.shape
    w = node.weights if weights is None else weights
    out_shape = ir.node_output_shape(node, in_shape, "<conv>")
    _, oh, ow = out_shape
    rows, cols, vals = [], [], []
    for ky in range(kh):
        for kx in range(kw):
            out_flat, in_flat = _spatial_taps(
                oh, ow, ih, iw, node.stride, node.padding, node.dilation, ky, kx
            )
            if len(out_flat) == 0:
                continue
            for co in range(oc):
                for ci in range(ic):
                    wv = w[co, ci, ky, kx]
                    if wv == 0:
                        continue
                    rows.append(co * oh * ow + out_flat)
                    cols.append(ci * ih * iw + in_flat)
                    vals.append(np.full(len(out_flat), wv, dtype=np.float64))
    n_out, n_in = oc * oh * ow, c * ih * iw
    if not rows:
        return sp.csr_matrix((n_out, n_in))
    m = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_out, n_in),
    )
    return m.tocsr()


def sumpool_matrix(node: ir.SumPool2d, in_shape) -> sp.csr_matrix:
    """0/1 linear map of a sum-pooling layer (sum over each window)."""
    c, ih, iw = in_shape
    _, oh, ow = ir.node_output_shape(node, in_shape, "<pool>")
    rows, cols = [], []
    for ky in range(node.kernel[0]):
        for kx in range(node.kernel[1]):
            out_flat, in_flat = _spatial_taps(
                oh, ow, ih, iw, node.stride, node.padding, (1, 1), ky, kx
            )
            for ch in range(c):
                rows.append(ch * oh * ow + out_flat)
                cols.append(ch * ih * iw + in_flat)
    m = sp.coo_matrix(
        (
            np.ones(sum(len(r) for r in rows)),
            (np.concatenate(rows), np.concatenate(cols)),
        ),
        shape=(c * oh * ow, c * ih * iw),
    )
    return m.tocsr()


def matrix_to_synapses(m: sp.spmatrix, quantized: bool) -> np.ndarray:
    """Nonzero entries of a composed map as a (pre, post, weight, delay=1)
    synapse table sorted by (pre, post).  Quantized values re-clamp to the
    8-bit range with a saturation warning."""
    coo = sp.coo_matrix(m)
    coo.sum_duplicates()
    coo.eliminate_zeros()
    w = coo.data.astype(np.float64)
    if quantized:
        if np.any((w < INT8_MIN) | (w > INT8_MAX)):
            warnings.warn(
                "composed integer weights saturate the 8-bit range; clamping",
                stacklevel=2,
            )
            w = np.clip(w, INT8_MIN, INT8_MAX)
        keep = w != 0
        coo_row, coo_col, w = coo.row[keep], coo.col[keep], w[keep]
    else:
        coo_row, coo_col = coo.row, coo.col
    syn = np.empty(len(w), dtype=SYNAPSE_DTYPE)
    syn["pre"] = coo_col
    syn["post"] = coo_row
    syn["weight"] = w
    syn["delay"] = 1
    return syn[np.lexsort((syn["post"], syn["pre"]))]


def conv_to_synapses(node: ir.Conv2d, in_shape, out_shape=None) -> np.ndarray:
    """Synapse list of a lone conv layer (used directly and by tests)."""
    quant = node.quant is not None and node.quant.int_weights is not None
    w = node.quant.int_weights.astype(np.float64) if quant else None
    return matrix_to_synapses(conv_matrix(node, in_shape, weights=w), quantized=quant)


def _segment_matrix(g: ir.Graph, seg_ids: list[str], shapes) -> tuple[sp.csr_matrix, bool, str, int]:
    """Compose one anchor-to-anchor segment into a sparse map.

    Returns (matrix, quantized, projection kind, weight parameter count).
    """
    weight_nodes = [nid for nid in seg_ids if isinstance(g.nodes[nid], ir.WEIGHT_NODE_TYPES)]
    if len(weight_nodes) == 0:
        raise LoweringError(f"segment {seg_ids} has no weight node feeding its LIF")
    if len(weight_nodes) > 1:
        raise LoweringError(
            f"segment {seg_ids} contains {len(weight_nodes)} weight nodes; "
            f"composing multiple scales is unsupported"
        )
    m = None
    quantized = False
    kind = "dense"
    weight_params = 0
    for nid in seg_ids:
        node = g.nodes[nid]
        in_shape = shapes[g.predecessors(nid)[0]]
        if isinstance(node, ir.Conv2d):
            q = node.quant is not None and node.quant.int_weights is not None
            w = node.quant.int_weights.astype(np.float64) if q else None
            step = conv_matrix(node, in_shape, weights=w)
            quantized, kind, weight_params = q, "conv", node.weights.size
        elif isinstance(node, ir.Linear):
            q = node.quant is not None and node.quant.int_weights is not None
            w = node.quant.int_weights.astype(np.float64) if q else node.weights
            step = sp.csr_matrix(w)
            quantized, kind, weight_params = q, "dense", node.weights.size
        elif isinstance(node, ir.SumPool2d):
            step = sumpool_matrix(node, in_shape)
        elif isinstance(node, ir.Flatten):
            continue  # row-major index bijection; identity map
        else:
            raise LoweringError(
                f"node {nid!r} ({type(node).__name__}) cannot appear inside a "
                f"projection segment"
            )
        m = step if m is None else step @ m
    return m, quantized, kind, weight_params


def _chain(g: ir.Graph) -> list[str]:
    order = []
    nid = next(n for n, node in g.nodes.items() if isinstance(node, ir.Input))
    while True:
        order.append(nid)
        succ = g.successors(nid)
        if not succ:
            return order
        if len(succ) > 1:
            raise LoweringError(f"node {nid!r} has multiple successors; only chains lower")
        nid = succ[0]


def lower(g: ir.Graph, max_timesteps: int = 600) -> Network:
    """Lower a validated graph to a population/projection network."""
    ir.validate(g)
    shapes = ir.infer_shapes(g)
    chain = _chain(g)
    timestep_ms = float(g.metadata.get("timestep_ms", 1.0))

    populations: list[Population] = []
    projections: list[Projection] = []
    input_id = chain[0]
    populations.append(
        Population(
            id="input", kind=SPIKE_LIST_INPUT, size=ir.shape_size(shapes[input_id])
        )
    )
    prev_pop = "input"
    segment: list[str] = []
    for nid in chain[1:]:
        node = g.nodes[nid]
        if isinstance(node, ir.LIF):
            m, quantized, kind, weight_params = _segment_matrix(g, segment, shapes)
            size = ir.shape_size(shapes[nid])
            alpha, coupling = derive_decay(node, dt=1.0)
            pop_id = f"lif_{nid}"
            populations.append(
                Population(
                    id=pop_id,
                    kind=LIF_CONV2D if kind == "conv" else LIF_NEURON,
                    size=size,
                    alpha=alpha,
                    threshold=node.threshold,
                    v_leak=node.v_leak,
                    coupling=coupling,
                )
            )
            projections.append(
                Projection(
                    pre=prev_pop,
                    post=pop_id,
                    synapses=matrix_to_synapses(m, quantized),
                    quantized=quantized,
                    kind=kind,
                    weight_params=weight_params,
                )
            )
            prev_pop = pop_id
            segment = []
        elif isinstance(node, ir.Output):
            if segment:
                raise LoweringError(
                    f"nodes {segment} between the last LIF and the output are not "
                    f"supported (weight nodes must feed a LIF)"
                )
        else:
            segment.append(nid)
    net = Network(
        populations=populations,
        projections=projections,
        timestep_ms=timestep_ms,
        max_timesteps=max_timesteps,
        metadata={"source": g.metadata.get("name", "")},
    )
    return net.validate()
